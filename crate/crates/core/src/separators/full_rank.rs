//! Separators with full-rank spatial covariances: MNMF and m-MNMF.

use ndarray::{s, Array3};

use super::init::{initialize_source_model, mean_channel_power};
use super::rank1::rescale_gamma;
use super::{multichannel_wiener_filter, FinalState, GammaSchedule, Progress, SeparationError, SeparationRun, SeparatorConfig};
use crate::signal::MultichannelSpectrogram;
use crate::source_model::{
    power_spectrogram, total_minvol_penalty, update_h_baseline_mnmf, update_h_m_mnmf, update_w_baseline_mnmf,
    update_w_m_mnmf, ModelError, SourceModel, VolumeBound,
};
use crate::spatial::{
    mnmf_statistics, normalize_covariances, update_g_baseline_mnmf, update_g_m_mnmf, SpatialCovariances,
};

/// Scale of the random Hermitian perturbation of the initial covariances.
const COVARIANCE_JITTER: f64 = 1e-2;

/// Log-posterior of m-MNMF up to constants:
/// `−Σ_ij [tr(X_ij X̂_ij⁻¹) + log|X̂_ij|] − γ Σ_n log|W_nᵀW_n + ηI|`.
pub fn objective_m_mnmf(
    x: &MultichannelSpectrogram,
    model: &SourceModel,
    g: &SpatialCovariances,
    gamma: f64,
    eta: f64,
) -> Result<f64, ModelError> {
    let stats = mnmf_statistics(x, g, &power_spectrogram(model), false)?;
    penalized(stats.data_term, model, gamma, eta)
}

fn penalized(data_term: f64, model: &SourceModel, gamma: f64, eta: f64) -> Result<f64, ModelError> {
    let mut value = -data_term;
    if gamma != 0.0 {
        value -= gamma * total_minvol_penalty(model, eta)?;
    }
    Ok(value)
}

/// Baseline MNMF (Riccati covariance update).
pub fn run_mnmf(x: &MultichannelSpectrogram, cfg: &SeparatorConfig) -> Result<SeparationRun, SeparationError> {
    run_full_rank(x, cfg, false)
}

/// MNMF with the minimum-volume basis prior (geometric-mean covariance update).
pub fn run_m_mnmf(x: &MultichannelSpectrogram, cfg: &SeparatorConfig) -> Result<SeparationRun, SeparationError> {
    run_full_rank(x, cfg, true)
}

fn run_full_rank(x: &MultichannelSpectrogram, cfg: &SeparatorConfig, minvol: bool) -> Result<SeparationRun, SeparationError> {
    cfg.check_input(x)?;
    let mut progress = Progress::new(cfg);
    let (bins, _, channels) = x.values.dim();
    let n_src = cfg.n_sources;
    let eta = cfg.eta;
    let mut model = initialize_source_model(mean_channel_power(x).view(), n_src, cfg.n_bases, cfg.init, cfg.seed);
    let mut g = SpatialCovariances::perturbed_identity(n_src, bins, channels, COVARIANCE_JITTER, cfg.seed);
    for (n, factor) in normalize_covariances(&mut g).into_iter().enumerate() {
        model.scale_activations(n, factor);
    }
    let mut stats = mnmf_statistics(x, &g, &power_spectrogram(&model), false).map_err(|e| progress.fail(e))?;

    let mut gamma = if minvol { cfg.gamma_init } else { 0.0 };
    if minvol && cfg.gamma_schedule == GammaSchedule::InitOnly {
        gamma = rescale_gamma(gamma, stats.data_term, &model, eta).map_err(|e| progress.fail(e))?;
    }
    let initial = penalized(stats.data_term, &model, gamma, eta).map_err(|e| progress.fail(e))?;

    for _ in 0..cfg.max_iterations {
        let step = (|| -> Result<f64, ModelError> {
            if minvol {
                update_h_m_mnmf(&mut model, &stats.mu)?;
            } else {
                update_h_baseline_mnmf(&mut model, &stats.mu)?;
            }
            stats = mnmf_statistics(x, &g, &power_spectrogram(&model), false)?;
            if minvol {
                let bounds = VolumeBound::for_model(&model, eta)?;
                update_w_m_mnmf(&mut model, &stats.mu, &bounds, gamma)?;
            } else {
                update_w_baseline_mnmf(&mut model, &stats.mu)?;
            }
            let full = mnmf_statistics(x, &g, &power_spectrogram(&model), true)?;
            if minvol && cfg.gamma_schedule == GammaSchedule::PerIteration {
                gamma = rescale_gamma(gamma, full.data_term, &model, eta)?;
            }
            for n in 0..n_src {
                for i in 0..bins {
                    let idx = n * bins + i;
                    let prev = g.get(n, i);
                    let next = if minvol {
                        update_g_m_mnmf(prev, &full.a_g[idx], &full.b_g[idx])?
                    } else {
                        update_g_baseline_mnmf(prev, &full.a_g[idx], &full.b_g[idx])?
                    };
                    g.set(n, i, next);
                }
            }
            for (n, factor) in normalize_covariances(&mut g).into_iter().enumerate() {
                model.scale_activations(n, factor);
            }
            stats = mnmf_statistics(x, &g, &power_spectrogram(&model), false)?;
            penalized(stats.data_term, &model, gamma, eta)
        })();
        let objective = step.map_err(|e| progress.fail(e))?;
        if progress.push(objective, gamma)? {
            break;
        }
    }
    let images = multichannel_wiener_filter(x, &power_spectrogram(&model), &g).map_err(|e| progress.fail(e))?;
    let reference = images.slice(s![.., .., .., cfg.reference_channel]);
    let frames = x.frames();
    let sources = Array3::from_shape_fn((bins, frames, n_src), |(i, j, n)| reference[[n, i, j]]);
    let state = FinalState { model: Some(model), demixing: None, covariances: Some(g), gamma };
    progress.finish(cfg, x, initial, sources, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn objective_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n_src, bins, frames, m, k) = (2, 3, 4, 2, 2);
        let model = SourceModel::new(
            Array3::from_shape_fn((n_src, bins, k), |_| rng.random_range(0.1..2.0)),
            Array3::from_shape_fn((n_src, k, frames), |_| rng.random_range(0.1..2.0)),
        )
        .unwrap();
        let g = SpatialCovariances::perturbed_identity(n_src, bins, m, 0.3, 9);
        let x = MultichannelSpectrogram {
            values: Array3::from_shape_fn((bins, frames, m), |_| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            }),
            frame_length: 4,
            frame_shift: 2,
            sample_rate: 8000,
            signal_length: 0,
        };
        let (gamma, eta) = (0.4, 0.5);
        let mut naive = 0.0;
        for i in 0..bins {
            for j in 0..frames {
                let mut xhat = DMatrix::<Complex64>::zeros(m, m);
                for n in 0..n_src {
                    let lam: f64 = (0..k).map(|q| model.w[[n, i, q]] * model.h[[n, q, j]]).sum();
                    xhat += g.get(n, i).as_matrix() * Complex64::new(lam, 0.0);
                }
                let xv = DVector::from_fn(m, |c, _| x.values[[i, j, c]]);
                let quad = (xv.adjoint() * xhat.clone().try_inverse().unwrap() * &xv)[(0, 0)].re;
                naive -= quad + xhat.determinant().re.ln();
            }
        }
        for n in 0..n_src {
            let w = DMatrix::from_fn(bins, k, |i, q| model.w[[n, i, q]]);
            naive -= gamma * (w.transpose() * &w + DMatrix::identity(k, k) * eta).determinant().ln();
        }
        let got = objective_m_mnmf(&x, &model, &g, gamma, eta).unwrap();
        assert!((got - naive).abs() < 1e-8 * naive.abs(), "{got} vs {naive}");
    }
}
