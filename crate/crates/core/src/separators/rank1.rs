//! Determined separators with rank-1 spatial models: AuxIVA, ILRMA and m-ILRMA.

use ndarray::{Array2, Array3};

use super::init::{initialize_source_model, mean_channel_power};
use super::{projection_back, FinalState, GammaSchedule, Progress, SeparationError, SeparationRun, SeparatorConfig};
use crate::signal::MultichannelSpectrogram;
use crate::source_model::{
    power_spectrogram, total_minvol_penalty, update_gamma, update_h_baseline_ilrma, update_h_m_ilrma,
    update_w_baseline_ilrma, update_w_m_ilrma, ModelError, SourceModel, VolumeBound, EPSILON_FLOOR,
};
use crate::spatial::{demix, demixed_power, ip_update_demixing, mixture_covariance_estimate, normalize_demixing, DemixingSystem};

/// `Σ_ijn (|y|²/λ + log λ) − J Σ_i log|det D_i|²`, the negative
/// log-likelihood of the rank-1 model.
pub(crate) fn rank1_data_term(power: &Array3<f64>, model: &SourceModel, system: &DemixingSystem) -> Result<f64, ModelError> {
    let lambda = power_spectrogram(model).lambda;
    let frames = power.dim().2 as f64;
    let fit: f64 = ndarray::Zip::from(power)
        .and(&lambda)
        .fold(0.0, |acc, p, l| acc + p / l + l.ln());
    Ok(fit - frames * system.log_det_sum()?)
}

/// Log-posterior of m-ILRMA up to constants:
/// `−Σ (|y|²/λ + log λ) + J Σ_i log|D_i D_iᴴ| − γ Σ_n log|W_nᵀW_n + ηI|`.
/// With `γ = 0` this is the ILRMA log-likelihood.
pub fn objective_m_ilrma(
    power: &Array3<f64>,
    model: &SourceModel,
    system: &DemixingSystem,
    gamma: f64,
    eta: f64,
) -> Result<f64, ModelError> {
    let mut value = -rank1_data_term(power, model, system)?;
    if gamma != 0.0 {
        value -= gamma * total_minvol_penalty(model, eta)?;
    }
    Ok(value)
}

/// Rescales `γ` by the data/prior ratio, holding it when the prior is degenerate.
pub(crate) fn rescale_gamma(gamma: f64, data_term: f64, model: &SourceModel, eta: f64) -> Result<f64, ModelError> {
    match update_gamma(gamma, data_term, model, eta) {
        Ok(g) => Ok(g),
        Err(ModelError::DegenerateDenominator { denominator, held }) => {
            log::warn!("prior term {denominator:e} too small to rescale gamma; keeping {held}");
            Ok(held)
        }
        Err(e) => Err(e),
    }
}

/// Baseline ILRMA.
pub fn run_ilrma(x: &MultichannelSpectrogram, cfg: &SeparatorConfig) -> Result<SeparationRun, SeparationError> {
    run_low_rank(x, cfg, false)
}

/// ILRMA with the minimum-volume basis prior.
pub fn run_m_ilrma(x: &MultichannelSpectrogram, cfg: &SeparatorConfig) -> Result<SeparationRun, SeparationError> {
    run_low_rank(x, cfg, true)
}

fn run_low_rank(x: &MultichannelSpectrogram, cfg: &SeparatorConfig, minvol: bool) -> Result<SeparationRun, SeparationError> {
    cfg.check_input(x)?;
    let mut progress = Progress::new(cfg);
    let (bins, _, channels) = x.values.dim();
    let n_src = cfg.n_sources;
    let eta = cfg.eta;
    let mut system = DemixingSystem::identity(bins, n_src, channels);
    let mut model = initialize_source_model(mean_channel_power(x).view(), n_src, cfg.n_bases, cfg.init, cfg.seed);
    let mut y = demix(&system, x).map_err(|e| progress.fail(e))?;
    let mut power = demixed_power(&y);

    let mut gamma = if minvol { cfg.gamma_init } else { 0.0 };
    if minvol && cfg.gamma_schedule == GammaSchedule::InitOnly {
        let data = rank1_data_term(&power, &model, &system).map_err(|e| progress.fail(e))?;
        gamma = rescale_gamma(gamma, data, &model, eta).map_err(|e| progress.fail(e))?;
    }
    let initial = objective_m_ilrma(&power, &model, &system, gamma, eta).map_err(|e| progress.fail(e))?;

    for _ in 0..cfg.max_iterations {
        let step = (|| -> Result<(), ModelError> {
            for n in 0..n_src {
                if minvol {
                    update_h_m_ilrma(&mut model, &power, n)?;
                } else {
                    update_h_baseline_ilrma(&mut model, &power, n)?;
                }
            }
            if minvol {
                let bounds = VolumeBound::for_model(&model, eta)?;
                for (n, bound) in bounds.iter().enumerate() {
                    update_w_m_ilrma(&mut model, &power, bound, gamma, n)?;
                }
                if cfg.gamma_schedule == GammaSchedule::PerIteration {
                    let data = rank1_data_term(&power, &model, &system)?;
                    gamma = rescale_gamma(gamma, data, &model, eta)?;
                }
            } else {
                for n in 0..n_src {
                    update_w_baseline_ilrma(&mut model, &power, n)?;
                }
            }
            let lambda = power_spectrogram(&model).lambda;
            for (i, d) in system.d.iter_mut().enumerate() {
                for n in 0..n_src {
                    let v = mixture_covariance_estimate(x, &lambda, n, i);
                    ip_update_demixing(d, &v, n)?;
                }
            }
            let scales = normalize_demixing(&mut system, n_src);
            for (n, mu2) in scales.iter().enumerate() {
                model.scale_activations(n, 1.0 / mu2);
            }
            y = demix(&system, x)?;
            power = demixed_power(&y);
            Ok(())
        })();
        step.map_err(|e| progress.fail(e))?;
        let objective = objective_m_ilrma(&power, &model, &system, gamma, eta).map_err(|e| progress.fail(e))?;
        if progress.push(objective, gamma)? {
            break;
        }
    }
    let sources = projection_back(&y, &system, cfg.reference_channel).map_err(|e| progress.fail(e))?;
    let state = FinalState { model: Some(model), demixing: Some(system), covariances: None, gamma };
    progress.finish(cfg, x, initial, sources, state)
}

/// Per-source frame norms `r_jn = sqrt(Σ_i |y_ijn|²)`, shape N×J.
fn frame_norms(y: &Array3<num_complex::Complex64>) -> Array2<f64> {
    let (bins, frames, n_src) = y.dim();
    Array2::from_shape_fn((n_src, frames), |(n, j)| {
        (0..bins).map(|i| y[[i, j, n]].norm_sqr()).sum::<f64>().sqrt().max(EPSILON_FLOOR)
    })
}

/// AuxIVA objective with the spherical Laplace contrast:
/// `−Σ_jn r_jn + J Σ_i log|det D_i|²`.
pub fn objective_auxiva(y: &Array3<num_complex::Complex64>, system: &DemixingSystem) -> Result<f64, ModelError> {
    let frames = y.dim().1 as f64;
    Ok(-frame_norms(y).sum() + frames * system.log_det_sum()?)
}

/// AuxIVA with iterative-projection updates.
///
/// The contrast `r` is majorized by `r₀/2 + r²/(2r₀)`, so the weighted
/// covariance uses `2 r_jn` in place of the source power.
pub fn run_auxiva(x: &MultichannelSpectrogram, cfg: &SeparatorConfig) -> Result<SeparationRun, SeparationError> {
    cfg.check_input(x)?;
    let mut progress = Progress::new(cfg);
    let (bins, _, channels) = x.values.dim();
    let n_src = cfg.n_sources;
    let mut system = DemixingSystem::identity(bins, n_src, channels);
    let mut y = demix(&system, x).map_err(|e| progress.fail(e))?;
    let initial = objective_auxiva(&y, &system).map_err(|e| progress.fail(e))?;
    for _ in 0..cfg.max_iterations {
        let step = (|| -> Result<f64, ModelError> {
            let r = frame_norms(&y);
            let proxy = Array3::from_shape_fn((n_src, bins, r.ncols()), |(n, _, j)| 2.0 * r[[n, j]]);
            for (i, d) in system.d.iter_mut().enumerate() {
                for n in 0..n_src {
                    let v = mixture_covariance_estimate(x, &proxy, n, i);
                    ip_update_demixing(d, &v, n)?;
                }
            }
            y = demix(&system, x)?;
            objective_auxiva(&y, &system)
        })();
        let objective = step.map_err(|e| progress.fail(e))?;
        if progress.push(objective, 0.0)? {
            break;
        }
    }
    let sources = projection_back(&y, &system, cfg.reference_channel).map_err(|e| progress.fail(e))?;
    let state = FinalState { model: None, demixing: Some(system), covariances: None, gamma: 0.0 };
    progress.finish(cfg, x, initial, sources, state)
}
