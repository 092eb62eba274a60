//! Spatial models: full-rank covariances `G_ni` (MNMF family) and rank-1
//! demixing matrices `D_i` (IVA / ILRMA family).
//!
//! Spectrograms use the `(bin, frame, channel)` layout of
//! [`MultichannelSpectrogram`]; demixed signals use `(bin, frame, source)`.

use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{
    geometric_mean, hermitian_inverse, CholeskyWorkspace, solve_riccati, HermitianMatrix, LinalgError,
};
use crate::signal::MultichannelSpectrogram;
use crate::source_model::{ModelError, MuStatistics, PowerSpectrograms, EPSILON_FLOOR};

/// Ridge added before inverting `G` or `D G`, relative to `tr/M`.
pub const RIDGE_RTOL: f64 = 1e-10;

type Result<T> = std::result::Result<T, ModelError>;

fn ridge_for(a: &HermitianMatrix) -> f64 {
    RIDGE_RTOL * a.trace().abs().max(f64::MIN_POSITIVE) / a.dim() as f64
}

/// Full-rank spatial covariances `G_ni`, stored source-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCovariances {
    n_sources: usize,
    freq_bins: usize,
    g: Vec<HermitianMatrix>,
}

impl SpatialCovariances {
    pub fn identity(n_sources: usize, freq_bins: usize, channels: usize) -> Self {
        Self {
            n_sources,
            freq_bins,
            g: vec![HermitianMatrix::identity(channels); n_sources * freq_bins],
        }
    }

    /// Identity plus a seeded Hermitian perturbation of the given scale.
    pub fn perturbed_identity(
        n_sources: usize,
        freq_bins: usize,
        channels: usize,
        scale: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = (0..n_sources * freq_bins)
            .map(|_| {
                let noise = DMatrix::from_fn(channels, channels, |_, _| {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                });
                let base = DMatrix::<Complex64>::identity(channels, channels);
                HermitianMatrix::from_matrix(base + noise * Complex64::new(scale, 0.0))
                    .hermitized()
                    .enforce_psd()
            })
            .collect();
        Self { n_sources, freq_bins, g }
    }

    pub fn n_sources(&self) -> usize {
        self.n_sources
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    pub fn get(&self, n: usize, i: usize) -> &HermitianMatrix {
        &self.g[n * self.freq_bins + i]
    }

    pub fn set(&mut self, n: usize, i: usize, value: HermitianMatrix) {
        self.g[n * self.freq_bins + i] = value;
    }

    pub fn check_psd(&self, rtol: f64) -> bool {
        self.g.iter().all(|g| {
            let ev = g.eigenvalues();
            let max = ev.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            g.is_hermitian(1e-10) && ev[0] >= -rtol * max
        })
    }
}

/// Per-bin demixing matrices `D_i` (N×M). Row `n` of `D_i` is `d_inᴴ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemixingSystem {
    pub d: Vec<DMatrix<Complex64>>,
}

impl DemixingSystem {
    pub fn identity(freq_bins: usize, n_sources: usize, channels: usize) -> Self {
        Self { d: vec![DMatrix::identity(n_sources, channels); freq_bins] }
    }

    pub fn freq_bins(&self) -> usize {
        self.d.len()
    }

    /// `d_in` as a column vector.
    pub fn filter(&self, i: usize, n: usize) -> DVector<Complex64> {
        self.d[i].row(n).adjoint()
    }

    pub fn set_filter(&mut self, i: usize, n: usize, d: &DVector<Complex64>) {
        self.d[i].set_row(n, &d.adjoint());
    }

    /// Smallest over largest singular value, minimized over bins.
    pub fn worst_conditioning(&self) -> f64 {
        self.d
            .iter()
            .map(|d| {
                let sv = d.singular_values();
                let max = sv.max();
                if max > 0.0 { sv.min() / max } else { 0.0 }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// `Σ_i log |det D_i|²` for square systems.
    pub fn log_det_sum(&self) -> Result<f64> {
        let mut total = 0.0;
        for d in &self.d {
            if !d.is_square() {
                return Err(ModelError::DimensionMismatch("demixing matrices must be square".into()));
            }
            let det = d.determinant().norm_sqr();
            if !(det > 0.0) {
                return Err(LinalgError::SingularMatrix.into());
            }
            total += det.ln();
        }
        Ok(total)
    }
}

/// `G_ni = (1/J) Σ_j x_ij x_ijᴴ / λ_ijn`.
pub fn mixture_covariance_estimate(
    x: &MultichannelSpectrogram,
    lambda: &Array3<f64>,
    n: usize,
    i: usize,
) -> HermitianMatrix {
    let m = x.channels();
    let frames = x.frames();
    let mut acc = DMatrix::<Complex64>::zeros(m, m);
    for j in 0..frames {
        let weight = 1.0 / lambda[[n, i, j]].max(EPSILON_FLOOR);
        for p in 0..m {
            let xp = x.values[[i, j, p]] * weight;
            for q in 0..m {
                acc[(p, q)] += xp * x.values[[i, j, q]].conj();
            }
        }
    }
    HermitianMatrix::from_matrix(acc / Complex64::new(frames as f64, 0.0)).hermitized()
}

/// Iterative-projection update of `d_in`:
/// `d ← (D_i G_ni)⁻¹ e_n`, then `d ← d / sqrt(dᴴ G_ni d)`.
pub fn ip_update_demixing(d_i: &mut DMatrix<Complex64>, g_ni: &HermitianMatrix, n: usize) -> Result<()> {
    let m = g_ni.dim();
    if d_i.ncols() != m || d_i.nrows() != m || n >= m {
        return Err(ModelError::DimensionMismatch(format!(
            "IP needs a square demixing matrix matching G ({m}×{m}), got {}×{}",
            d_i.nrows(),
            d_i.ncols()
        )));
    }
    let g = g_ni.add_ridge(ridge_for(g_ni));
    let dg = &*d_i * g.as_matrix();
    let mut e = DVector::<Complex64>::zeros(m);
    e[n] = Complex64::new(1.0, 0.0);
    let d = dg.lu().solve(&e).ok_or(LinalgError::SingularMatrix)?;
    let quad = (d.adjoint() * g_ni.as_matrix() * &d)[(0, 0)].re;
    if !(quad > 0.0) || !quad.is_finite() {
        return Err(LinalgError::SingularMatrix.into());
    }
    let d = d / Complex64::new(quad.sqrt(), 0.0);
    d_i.set_row(n, &d.adjoint());
    Ok(())
}

/// `y_ij = D_i x_ij`, returned as `(bin, frame, source)`.
pub fn demix(system: &DemixingSystem, x: &MultichannelSpectrogram) -> Result<Array3<Complex64>> {
    let (bins, frames, m) = x.values.dim();
    if system.freq_bins() != bins || system.d.iter().any(|d| d.ncols() != m) {
        return Err(ModelError::DimensionMismatch("demixing system does not match spectrogram".into()));
    }
    let n_src = system.d.first().map_or(0, |d| d.nrows());
    let mut y = Array3::zeros((bins, frames, n_src));
    for (i, d) in system.d.iter().enumerate() {
        for j in 0..frames {
            for n in 0..n_src {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..m {
                    acc += d[(n, c)] * x.values[[i, j, c]];
                }
                y[[i, j, n]] = acc;
            }
        }
    }
    Ok(y)
}

/// `|y_ijn|²` rearranged to the source model's N×I×J layout.
pub fn demixed_power(y: &Array3<Complex64>) -> Array3<f64> {
    let (bins, frames, n_src) = y.dim();
    Array3::from_shape_fn((n_src, bins, frames), |(n, i, j)| y[[i, j, n]].norm_sqr().max(EPSILON_FLOOR))
}

/// Rescales every `d_in` by `1/μ_n` with `μ_n² = mean_i ‖d_in‖²`.
///
/// Returns `μ_n²`; the caller divides `H_n` by it so that `|y|²/λ` stays
/// unchanged and the objective is exactly invariant.
pub fn normalize_demixing(system: &mut DemixingSystem, n_sources: usize) -> Vec<f64> {
    let bins = system.freq_bins() as f64;
    (0..n_sources)
        .map(|n| {
            let mean_sq = system.d.iter().map(|d| d.row(n).norm_squared()).sum::<f64>() / bins;
            let mu = mean_sq.sqrt();
            if mu > 0.0 && mu.is_finite() {
                for d in system.d.iter_mut() {
                    let scaled = d.row(n) / Complex64::new(mu, 0.0);
                    d.set_row(n, &scaled);
                }
            }
            mean_sq
        })
        .collect()
}

/// Everything the MNMF-family updates need from one pass over the data.
#[derive(Debug, Clone)]
pub struct MnmfStatistics {
    /// `numerator = tr(X̂⁻¹ X X̂⁻¹ G)`, `denominator = tr(X̂⁻¹ G)`.
    pub mu: MuStatistics,
    /// `Σ_j λ_ijn X̂_ij⁻¹ X_ij X̂_ij⁻¹`, source-major.
    pub a_g: Vec<HermitianMatrix>,
    /// `Σ_j λ_ijn X̂_ij⁻¹`, source-major.
    pub b_g: Vec<HermitianMatrix>,
    /// `Σ_ij [tr(X_ij X̂_ij⁻¹) + log|X̂_ij|]`.
    pub data_term: f64,
}

/// Model covariance `X̂_ij = Σ_n λ_ijn G_ni`, ridge-regularized.
pub fn model_covariance(g: &SpatialCovariances, lambda: &Array3<f64>, i: usize, j: usize) -> HermitianMatrix {
    let m = g.get(0, i).dim();
    let mut acc = DMatrix::<Complex64>::zeros(m, m);
    for n in 0..g.n_sources() {
        acc += g.get(n, i).as_matrix() * Complex64::new(lambda[[n, i, j]], 0.0);
    }
    let xhat = HermitianMatrix::from_matrix(acc).hermitized();
    let ridge = ridge_for(&xhat);
    xhat.add_ridge(ridge)
}

/// Statistics of the full-rank model with observations `X_ij = x_ij x_ijᴴ`.
///
/// `with_covariance_terms` skips `A_G`/`B_G` when only `W`/`H` are updated.
pub fn mnmf_statistics(
    x: &MultichannelSpectrogram,
    g: &SpatialCovariances,
    lambda: &PowerSpectrograms,
    with_covariance_terms: bool,
) -> Result<MnmfStatistics> {
    let (bins, frames, m) = x.values.dim();
    let n_src = g.n_sources();
    if g.freq_bins() != bins || lambda.lambda.dim() != (n_src, bins, frames) {
        return Err(ModelError::DimensionMismatch("MNMF state does not match spectrogram".into()));
    }
    let mut numerator = Array3::zeros((n_src, bins, frames));
    let mut denominator = Array3::zeros((n_src, bins, frames));
    let zero = DMatrix::<Complex64>::zeros(m, m);
    let mut a_g = vec![zero.clone(); if with_covariance_terms { n_src * bins } else { 0 }];
    let mut b_g = a_g.clone();
    let mut data_term = 0.0;
    let czero = Complex64::new(0.0, 0.0);
    let mut ws = CholeskyWorkspace::new(m);
    let mut xhat = vec![czero; m * m];
    let mut inv = vec![czero; m * m];
    let mut xv = vec![czero; m];
    let mut u = vec![czero; m];
    for i in 0..bins {
        let gs: Vec<&DMatrix<Complex64>> = (0..n_src).map(|n| g.get(n, i).as_matrix()).collect();
        for j in 0..frames {
            xhat.fill(czero);
            for (n, gn) in gs.iter().enumerate() {
                let l = lambda.lambda[[n, i, j]];
                for r in 0..m {
                    for c in 0..=r {
                        xhat[r * m + c] += gn[(r, c)] * l;
                    }
                }
            }
            let trace: f64 = (0..m).map(|r| xhat[r * m + r].re).sum();
            let ridge = RIDGE_RTOL * trace.abs().max(f64::MIN_POSITIVE) / m as f64;
            for r in 0..m {
                xhat[r * m + r] = Complex64::new(xhat[r * m + r].re + ridge, 0.0);
                for c in 0..r {
                    xhat[c * m + r] = xhat[r * m + c].conj();
                }
            }
            let logdet = ws.factor(&xhat)?;
            ws.inverse_into(&mut inv);
            for c in 0..m {
                xv[c] = x.values[[i, j, c]];
            }
            for r in 0..m {
                u[r] = (0..m).map(|c| inv[r * m + c] * xv[c]).sum();
            }
            data_term += (0..m).map(|r| (xv[r].conj() * u[r]).re).sum::<f64>() + logdet;
            for (n, gn) in gs.iter().enumerate() {
                let mut quad = 0.0;
                let mut tr = 0.0;
                for r in 0..m {
                    for c in 0..m {
                        quad += (u[r].conj() * gn[(r, c)] * u[c]).re;
                        tr += (gn[(r, c)] * inv[c * m + r]).re;
                    }
                }
                numerator[[n, i, j]] = quad.max(0.0);
                denominator[[n, i, j]] = tr.max(EPSILON_FLOOR);
                if with_covariance_terms {
                    let l = lambda.lambda[[n, i, j]];
                    let a = &mut a_g[n * bins + i];
                    let b = &mut b_g[n * bins + i];
                    for r in 0..m {
                        for c in 0..m {
                            a[(r, c)] += u[r] * u[c].conj() * l;
                            b[(r, c)] += inv[r * m + c] * l;
                        }
                    }
                }
            }
        }
    }
    if !data_term.is_finite() {
        return Err(ModelError::NumericalBreakdown("MNMF data term is not finite".into()));
    }
    let wrap = |v: Vec<DMatrix<Complex64>>| v.into_iter().map(|a| HermitianMatrix::from_matrix(a).hermitized()).collect();
    Ok(MnmfStatistics {
        mu: MuStatistics { numerator, denominator },
        a_g: wrap(a_g),
        b_g: wrap(b_g),
        data_term,
    })
}

/// Full-rank covariance update through the geometric mean:
/// `G = B_G⁻¹ ♯ (G* A_G G*)`, the PSD solution of `G B_G G = G* A_G G*`.
pub fn update_g_m_mnmf(
    g_prev: &HermitianMatrix,
    a_g: &HermitianMatrix,
    b_g: &HermitianMatrix,
) -> Result<HermitianMatrix> {
    let b_inv = hermitian_inverse(b_g, ridge_for(b_g))?;
    let target = a_g.congruence(g_prev);
    if target.frobenius_norm() == 0.0 {
        return Ok(g_prev.enforce_psd());
    }
    Ok(geometric_mean(&b_inv, &target)?.enforce_psd())
}

/// Baseline covariance update: the Riccati equation `G B_G G = G* A_G G*`.
pub fn update_g_baseline_mnmf(
    g_prev: &HermitianMatrix,
    a_g: &HermitianMatrix,
    b_g: &HermitianMatrix,
) -> Result<HermitianMatrix> {
    let b = b_g.add_ridge(ridge_for(b_g));
    Ok(solve_riccati(&b, &a_g.congruence(g_prev), g_prev)?)
}

/// `‖G B G − G* A G*‖_F / ‖G* A G*‖_F`, the stationarity residual of the
/// covariance update.
pub fn g_stationarity_residual(
    g: &HermitianMatrix,
    g_prev: &HermitianMatrix,
    a_g: &HermitianMatrix,
    b_g: &HermitianMatrix,
) -> f64 {
    let lhs = b_g.congruence(g);
    let rhs = a_g.congruence(g_prev);
    (lhs.as_matrix() - rhs.as_matrix()).norm() / rhs.frobenius_norm().max(f64::MIN_POSITIVE)
}

/// Divides `G_ni` by `mean_i tr(G_ni)` for every source and returns the
/// factors, which the caller multiplies into `H_n` to keep `X̂` unchanged.
pub fn normalize_covariances(g: &mut SpatialCovariances) -> Vec<f64> {
    let bins = g.freq_bins();
    (0..g.n_sources())
        .map(|n| {
            let mean_trace = (0..bins).map(|i| g.get(n, i).trace()).sum::<f64>() / bins as f64;
            if mean_trace > 0.0 && mean_trace.is_finite() {
                for i in 0..bins {
                    let scaled = g.get(n, i).scaled(1.0 / mean_trace);
                    g.set(n, i, scaled);
                }
                mean_trace
            } else {
                1.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source_model::MuStatistics;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_spectrogram(rng: &mut ChaCha8Rng, bins: usize, frames: usize, m: usize) -> MultichannelSpectrogram {
        let values = Array3::from_shape_fn((bins, frames, m), |_| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        MultichannelSpectrogram {
            values,
            frame_length: 2 * (bins - 1),
            frame_shift: bins - 1,
            sample_rate: 16000,
            signal_length: 0,
        }
    }

    fn random_pd(rng: &mut ChaCha8Rng, m: usize) -> HermitianMatrix {
        let a = DMatrix::from_fn(m, m, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        HermitianMatrix::from_matrix(&a * a.adjoint() + DMatrix::identity(m, m) * c(0.1, 0.0))
    }

    #[test]
    fn covariance_estimate_cases() {
        let mut x = MultichannelSpectrogram {
            values: Array3::zeros((1, 4, 2)),
            frame_length: 2,
            frame_shift: 1,
            sample_rate: 1,
            signal_length: 0,
        };
        for j in 0..4 {
            x.values[[0, j, 0]] = c(1.0, 0.0);
        }
        let lam = Array3::ones((1, 1, 4));
        let g = mixture_covariance_estimate(&x, &lam, 0, 0);
        let mut expected = DMatrix::zeros(2, 2);
        expected[(0, 0)] = c(1.0, 0.0);
        assert!((g.as_matrix() - expected).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_spectrogram(&mut rng, 3, 9, 3);
        let lam = Array3::from_shape_fn((2, 3, 9), |_| rng.random_range(0.1..2.0));
        let g = mixture_covariance_estimate(&x, &lam, 1, 2);
        let g3 = mixture_covariance_estimate(&x, &lam.mapv(|v| 3.0 * v), 1, 2);
        assert!((g.as_matrix() / c(3.0, 0.0) - g3.as_matrix()).norm() < 1e-14);
        for p in 0..3 {
            for q in 0..3 {
                let mut s = c(0.0, 0.0);
                for j in 0..9 {
                    s += x.values[[2, j, p]] * x.values[[2, j, q]].conj() / lam[[1, 2, j]];
                }
                assert!((g.as_matrix()[(p, q)] - s / 9.0).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn ip_scalar_and_identity() {
        let mut d = DMatrix::from_element(1, 1, c(1.0, 0.0));
        ip_update_demixing(&mut d, &HermitianMatrix::from_real_diagonal(&[4.0]), 0).unwrap();
        assert!((d[(0, 0)] - c(0.5, 0.0)).norm() < 1e-9);
        let mut d = DMatrix::identity(2, 2);
        ip_update_demixing(&mut d, &HermitianMatrix::identity(2), 1).unwrap();
        assert!((d - DMatrix::identity(2, 2)).norm() < 1e-9);
    }

    fn iva_surrogate(d: &DMatrix<Complex64>, g: &[HermitianMatrix]) -> f64 {
        let quad: f64 = (0..d.nrows())
            .map(|n| {
                let v = d.row(n).adjoint();
                (v.adjoint() * g[n].as_matrix() * &v)[(0, 0)].re
            })
            .sum();
        quad - d.determinant().norm_sqr().ln()
    }

    #[test]
    fn ip_normalizes_and_decreases_surrogate() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let g = vec![random_pd(&mut rng, 2), random_pd(&mut rng, 2)];
            let mut d = DMatrix::from_fn(2, 2, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let mut prev = iva_surrogate(&d, &g);
            for n in 0..2 {
                ip_update_demixing(&mut d, &g[n], n).unwrap();
                let v = d.row(n).adjoint();
                let q = (v.adjoint() * g[n].as_matrix() * &v)[(0, 0)].re;
                assert!((q - 1.0).abs() < 1e-10);
                let cur = iva_surrogate(&d, &g);
                assert!(cur <= prev + 1e-10);
                prev = cur;
            }
        }
    }

    #[test]
    fn demix_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_spectrogram(&mut rng, 4, 6, 2);
        let y = demix(&DemixingSystem::identity(4, 2, 2), &x).unwrap();
        assert_eq!(y, x.values);

        let a: Vec<DMatrix<Complex64>> = (0..4)
            .map(|_| DMatrix::from_fn(2, 2, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
            .collect();
        let s = random_spectrogram(&mut rng, 4, 6, 2);
        let mut mixed = s.clone();
        for i in 0..4 {
            for j in 0..6 {
                let v = &a[i] * DVector::from_vec(vec![s.values[[i, j, 0]], s.values[[i, j, 1]]]);
                mixed.values[[i, j, 0]] = v[0];
                mixed.values[[i, j, 1]] = v[1];
            }
        }
        let inv = DemixingSystem { d: a.iter().map(|m| m.clone().try_inverse().unwrap()).collect() };
        let y = demix(&inv, &mixed).unwrap();
        assert!((&y - &s.values).iter().all(|z| z.norm() < 1e-10));

        let x2 = random_spectrogram(&mut rng, 4, 6, 2);
        let mut combo = x.clone();
        combo.values = &x.values * c(2.0, 0.0) + &x2.values * c(-0.5, 0.0);
        let lhs = demix(&inv, &combo).unwrap();
        let rhs = demix(&inv, &x).unwrap() * c(2.0, 0.0) + demix(&inv, &x2).unwrap() * c(-0.5, 0.0);
        assert!((&lhs - &rhs).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn g_update_fixed_point_and_scalar() {
        let g = HermitianMatrix::identity(2);
        let a = HermitianMatrix::from_real_diagonal(&[2.0, 3.0]);
        let out = update_g_m_mnmf(&g, &a, &a).unwrap();
        // G B G = A with B = A has the solution G = I.
        assert!((out.as_matrix() - g.as_matrix()).norm() < 1e-8);
        let g1 = HermitianMatrix::from_real_diagonal(&[2.0]);
        let out = update_g_m_mnmf(&g1, &HermitianMatrix::from_real_diagonal(&[9.0]), &HermitianMatrix::from_real_diagonal(&[4.0]))
            .unwrap();
        assert!((out.as_matrix()[(0, 0)].re - 2.0 * 1.5).abs() < 1e-9);
        let out = update_g_baseline_mnmf(&HermitianMatrix::identity(2), &HermitianMatrix::identity(2), &HermitianMatrix::identity(2))
            .unwrap();
        assert!((out.as_matrix() - DMatrix::identity(2, 2)).norm() < 1e-8);
        let out = update_g_baseline_mnmf(&g1, &HermitianMatrix::from_real_diagonal(&[9.0]), &HermitianMatrix::from_real_diagonal(&[4.0]))
            .unwrap();
        assert!((out.as_matrix()[(0, 0)].re - 3.0).abs() < 1e-9);
    }

    #[test]
    fn g_updates_solve_stationarity_and_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let g_prev = random_pd(&mut rng, 3);
            let a = random_pd(&mut rng, 3);
            let b = random_pd(&mut rng, 3);
            let before = g_stationarity_residual(&g_prev, &g_prev, &a, &b);
            let gm = update_g_m_mnmf(&g_prev, &a, &b).unwrap();
            let ric = update_g_baseline_mnmf(&g_prev, &a, &b).unwrap();
            let after = g_stationarity_residual(&gm, &g_prev, &a, &b);
            assert!(after < 1e-6 && after <= before);
            assert!((gm.as_matrix() - ric.as_matrix()).norm() < 1e-8 * gm.frobenius_norm());
            assert!(gm.eigenvalues()[0] > 0.0 && gm.is_hermitian(1e-12));
        }
    }

    #[test]
    fn mnmf_statistics_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_spectrogram(&mut rng, 3, 5, 2);
        let g = SpatialCovariances::perturbed_identity(2, 3, 2, 0.2, 3);
        let lambda = PowerSpectrograms { lambda: Array3::from_shape_fn((2, 3, 5), |_| rng.random_range(0.1..2.0)) };
        let st = mnmf_statistics(&x, &g, &lambda, true).unwrap();
        let mut data = 0.0;
        for i in 0..3 {
            for j in 0..5 {
                let mut xh = DMatrix::<Complex64>::zeros(2, 2);
                for n in 0..2 {
                    xh += g.get(n, i).as_matrix() * c(lambda.lambda[[n, i, j]], 0.0);
                }
                let inv = xh.clone().try_inverse().unwrap();
                let xv = DVector::from_vec(vec![x.values[[i, j, 0]], x.values[[i, j, 1]]]);
                let obs = &xv * xv.adjoint();
                data += (&obs * &inv).trace().re + xh.determinant().re.ln();
                for n in 0..2 {
                    let e = (&inv * &obs * &inv * g.get(n, i).as_matrix()).trace().re;
                    let cc = (g.get(n, i).as_matrix() * &inv).trace().re;
                    assert!((st.mu.numerator[[n, i, j]] - e).abs() < 1e-9 * e.abs().max(1.0));
                    assert!((st.mu.denominator[[n, i, j]] - cc).abs() < 1e-9 * cc.abs().max(1.0));
                }
            }
        }
        assert!((st.data_term - data).abs() < 1e-8 * data.abs());
        let _: &MuStatistics = &st.mu;
    }

    #[test]
    fn normalization_keeps_products() {
        let mut sys = DemixingSystem::identity(3, 2, 2);
        sys.d[1] *= c(4.0, 0.0);
        let mu2 = normalize_demixing(&mut sys, 2);
        assert!((mu2[0] - 6.0).abs() < 1e-12);
        let mean: f64 = sys.d.iter().map(|d| d.row(0).norm_squared()).sum::<f64>() / 3.0;
        assert!((mean - 1.0).abs() < 1e-12);
        let mut g = SpatialCovariances::identity(1, 2, 2);
        let f = normalize_covariances(&mut g);
        assert!((f[0] - 2.0).abs() < 1e-12);
        assert!((g.get(0, 1).trace() - 1.0).abs() < 1e-12);
    }
}
