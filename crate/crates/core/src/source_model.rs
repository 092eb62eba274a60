//! Low-rank NMF source model with the minimum-volume basis prior.
//!
//! Power spectrograms are modelled as `λ_ijn = Σ_k w_nik h_nkj`. The data
//! term of every separator reduces, for the purpose of the source-model
//! updates, to two nonnegative statistics per time-frequency unit (see
//! [`MuStatistics`]), so the same update kernels serve the MNMF and ILRMA
//! families.

use nalgebra::DMatrix;
use ndarray::{Array2, Array3, ArrayView2, Axis};
use thiserror::Error;

use crate::linalg::{largest_positive_cubic_root, LinalgError};

/// Lower bound applied to every `w`, `h` and `λ` after each update.
pub const EPSILON_FLOOR: f64 = 1e-12;
pub const DEFAULT_ETA: f64 = 0.5;
pub const DEFAULT_GAMMA_INIT: f64 = 1e-2;
pub const GAMMA_MIN: f64 = 1e-6;
pub const GAMMA_MAX: f64 = 1e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("gamma update denominator {denominator:e} is degenerate; gamma held at {held}")]
    DegenerateDenominator { denominator: f64, held: f64 },
    #[error("data has fewer than {requested} distinct nonzero columns")]
    RankDeficientData { requested: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Basis `W` (N×I×K) and activations `H` (N×K×J).
#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel {
    pub w: Array3<f64>,
    pub h: Array3<f64>,
}

impl SourceModel {
    pub fn new(w: Array3<f64>, h: Array3<f64>) -> Result<Self> {
        let (n, _, k) = w.dim();
        let (n2, k2, _) = h.dim();
        if n != n2 || k != k2 {
            return Err(ModelError::DimensionMismatch(format!(
                "W is {:?} but H is {:?}",
                w.dim(),
                h.dim()
            )));
        }
        let model = Self { w, h };
        model.check_finite()?;
        Ok(model)
    }

    pub fn n_sources(&self) -> usize {
        self.w.dim().0
    }

    pub fn freq_bins(&self) -> usize {
        self.w.dim().1
    }

    pub fn n_bases(&self) -> usize {
        self.w.dim().2
    }

    pub fn frames(&self) -> usize {
        self.h.dim().2
    }

    pub fn basis(&self, n: usize) -> ArrayView2<'_, f64> {
        self.w.index_axis(Axis(0), n)
    }

    pub fn activations(&self, n: usize) -> ArrayView2<'_, f64> {
        self.h.index_axis(Axis(0), n)
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.w.iter().chain(self.h.iter()).any(|v| !v.is_finite()) {
            return Err(ModelError::NumericalBreakdown("non-finite entry in W or H".into()));
        }
        Ok(())
    }

    /// Multiplies `H_n` by `factor` (used for scale exchange with the spatial model).
    pub fn scale_activations(&mut self, n: usize, factor: f64) {
        self.h.index_axis_mut(Axis(0), n).mapv_inplace(|v| (v * factor).max(EPSILON_FLOOR));
    }
}

/// Minimum-volume prior settings.
///
/// One shift parameter `eta` is used both in the prior and in the `γ`
/// update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinVolConfig {
    pub eta: f64,
    pub gamma: f64,
    pub gamma_init: f64,
}

impl Default for MinVolConfig {
    fn default() -> Self {
        Self { eta: DEFAULT_ETA, gamma: DEFAULT_GAMMA_INIT, gamma_init: DEFAULT_GAMMA_INIT }
    }
}

/// Source power spectrograms `λ`, shape N×I×J.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrograms {
    pub lambda: Array3<f64>,
}

/// `λ_ijn = Σ_k w_nik h_nkj`, floored at [`EPSILON_FLOOR`].
pub fn power_spectrogram(m: &SourceModel) -> PowerSpectrograms {
    let n_src = m.n_sources();
    let mut lambda = Array3::zeros((n_src, m.freq_bins(), m.frames()));
    for n in 0..n_src {
        let prod = m.basis(n).dot(&m.activations(n));
        lambda
            .index_axis_mut(Axis(0), n)
            .assign(&prod.mapv(|v| v.max(EPSILON_FLOOR)));
    }
    PowerSpectrograms { lambda }
}

fn gram_shifted(w_n: ArrayView2<f64>, eta: f64) -> DMatrix<f64> {
    let k = w_n.ncols();
    let gram = w_n.t().dot(&w_n);
    DMatrix::from_fn(k, k, |p, q| gram[[p, q]] + if p == q { eta } else { 0.0 })
}

/// `log |W_nᵀ W_n + η I|`; the caller applies `γ`.
pub fn minvol_penalty(w_n: ArrayView2<f64>, eta: f64) -> Result<f64> {
    let chol = gram_shifted(w_n, eta).cholesky().ok_or(LinalgError::SingularMatrix)?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if logdet.is_finite() {
        Ok(logdet)
    } else {
        Err(LinalgError::SingularMatrix.into())
    }
}

/// Sum of [`minvol_penalty`] over all sources.
pub fn total_minvol_penalty(m: &SourceModel, eta: f64) -> Result<f64> {
    (0..m.n_sources()).map(|n| minvol_penalty(m.basis(n), eta)).sum()
}

/// `V = (W_nᵀ W_n + η I)⁻¹`, the tight point of the log-det bound.
pub fn compute_v(w_n: ArrayView2<f64>, eta: f64) -> Result<DMatrix<f64>> {
    let chol = gram_shifted(w_n, eta).cholesky().ok_or(LinalgError::SingularMatrix)?;
    let inv = chol.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Elementwise split `V = V⁺ − V⁻` into nonnegative parts.
pub fn split_pos_neg(v: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    (v.map(|x| x.max(0.0)), v.map(|x| (-x).max(0.0)))
}

/// `2 [(V⁺ + V⁻) w] / w` componentwise, for a basis row `w`.
pub fn omega_diagonal(w_row: &[f64], v_plus: &DMatrix<f64>, v_minus: &DMatrix<f64>) -> Vec<f64> {
    let k = w_row.len();
    (0..k)
        .map(|p| {
            let s: f64 = (0..k).map(|q| (v_plus[(p, q)] + v_minus[(p, q)]) * w_row[q]).sum();
            2.0 * s / w_row[p].max(EPSILON_FLOOR)
        })
        .collect()
}

/// Per-source pieces of the minimum-volume majorizer, computed from the
/// pre-sweep basis.
#[derive(Debug, Clone)]
pub struct VolumeBound {
    pub v: DMatrix<f64>,
    pub v_plus: DMatrix<f64>,
    pub v_minus: DMatrix<f64>,
}

impl VolumeBound {
    pub fn new(w_n: ArrayView2<f64>, eta: f64) -> Result<Self> {
        let v = compute_v(w_n, eta)?;
        let (v_plus, v_minus) = split_pos_neg(&v);
        Ok(Self { v, v_plus, v_minus })
    }

    pub fn for_model(m: &SourceModel, eta: f64) -> Result<Vec<Self>> {
        (0..m.n_sources()).map(|n| Self::new(m.basis(n), eta)).collect()
    }
}

/// Data-term statistics driving the multiplicative updates, shape N×I×J.
///
/// For the Gaussian likelihood the partial derivative of the negative
/// log-likelihood w.r.t. `λ_ijn` is `denominator − numerator`, where
/// `numerator` is the "observed" curvature term (`|y|²/λ²` for rank-1
/// spatial models, `tr(X̂⁻¹ X X̂⁻¹ G)` for full-rank ones) and `denominator`
/// is `1/λ` or `tr(X̂⁻¹ G)` respectively.
#[derive(Debug, Clone, PartialEq)]
pub struct MuStatistics {
    pub numerator: Array3<f64>,
    pub denominator: Array3<f64>,
}

impl MuStatistics {
    /// Statistics of the rank-1 (ILRMA-family) model for demixed power `|y|²`.
    pub fn from_demixed_power(power: &Array3<f64>, lambda: &PowerSpectrograms) -> Self {
        let numerator = ndarray::Zip::from(power)
            .and(&lambda.lambda)
            .map_collect(|p, l| p / (l * l));
        let denominator = lambda.lambda.mapv(|l| 1.0 / l);
        Self { numerator, denominator }
    }

    fn check_shape(&self, m: &SourceModel) -> Result<()> {
        let expected = (m.n_sources(), m.freq_bins(), m.frames());
        if self.numerator.dim() != expected || self.denominator.dim() != expected {
            return Err(ModelError::DimensionMismatch(format!(
                "statistics {:?} vs model {:?}",
                self.numerator.dim(),
                expected
            )));
        }
        Ok(())
    }
}

fn checked_ratio(num: f64, den: f64) -> Result<f64> {
    let r = num / den;
    if r.is_nan() {
        return Err(ModelError::NumericalBreakdown(format!("ratio {num}/{den} is NaN")));
    }
    Ok(r)
}

/// `h ← h · sqrt(Σ_i w num / Σ_i w den)` for every `(n, k, j)`.
fn mu_update_h(model: &mut SourceModel, stats: &MuStatistics) -> Result<()> {
    stats.check_shape(model)?;
    for n in 0..model.n_sources() {
        let w = model.w.index_axis(Axis(0), n).to_owned();
        let a = w.t().dot(&stats.numerator.index_axis(Axis(0), n));
        let b = w.t().dot(&stats.denominator.index_axis(Axis(0), n));
        let mut h = model.h.index_axis_mut(Axis(0), n);
        for ((hv, av), bv) in h.iter_mut().zip(a.iter()).zip(b.iter()) {
            *hv = (*hv * checked_ratio(*av, *bv)?.sqrt()).max(EPSILON_FLOOR);
        }
    }
    model.check_finite()
}

/// `w ← w · sqrt(Σ_j h num / Σ_j h den)` for every `(n, i, k)`.
fn mu_update_w(model: &mut SourceModel, stats: &MuStatistics) -> Result<()> {
    stats.check_shape(model)?;
    for n in 0..model.n_sources() {
        let h = model.h.index_axis(Axis(0), n).to_owned();
        let a = stats.numerator.index_axis(Axis(0), n).dot(&h.t());
        let b = stats.denominator.index_axis(Axis(0), n).dot(&h.t());
        let mut w = model.w.index_axis_mut(Axis(0), n);
        for ((wv, av), bv) in w.iter_mut().zip(a.iter()).zip(b.iter()) {
            *wv = (*wv * checked_ratio(*av, *bv)?.sqrt()).max(EPSILON_FLOOR);
        }
    }
    model.check_finite()
}

/// Coefficients `(a, b, d)` of `a w³ + b w² + d = 0` for one basis entry.
///
/// `sum_h_den = Σ_j h den`, `sum_h_num = Σ_j h num`, both evaluated at the
/// pre-sweep basis `ŵ`. The constant term is negative, so the cubic has
/// exactly one positive root whenever `sum_h_num > 0`.
pub fn minvol_cubic_coefficients(
    w_hat_row: &[f64],
    k: usize,
    bound: &VolumeBound,
    gamma: f64,
    sum_h_num: f64,
    sum_h_den: f64,
) -> (f64, f64, f64) {
    let kk = w_hat_row.len();
    let w_hat = w_hat_row[k];
    let abs_vw: f64 = (0..kk)
        .map(|q| (bound.v_plus[(k, q)] + bound.v_minus[(k, q)]) * w_hat_row[q])
        .sum();
    let vw: f64 = (0..kk).map(|q| bound.v[(k, q)] * w_hat_row[q]).sum();
    let a = 2.0 * gamma * abs_vw / w_hat.max(EPSILON_FLOOR);
    let b = sum_h_den + 2.0 * gamma * vw - a * w_hat;
    let d = -w_hat * w_hat * sum_h_num;
    (a, b, d)
}

/// One minimum-volume basis sweep driven by generic MU statistics.
fn minvol_update_w(
    model: &mut SourceModel,
    stats: &MuStatistics,
    bounds: &[VolumeBound],
    gamma: f64,
) -> Result<()> {
    stats.check_shape(model)?;
    if bounds.len() != model.n_sources() {
        return Err(ModelError::DimensionMismatch("one volume bound per source required".into()));
    }
    for (n, bound) in bounds.iter().enumerate() {
        let h = model.h.index_axis(Axis(0), n).to_owned();
        let sum_num = stats.numerator.index_axis(Axis(0), n).dot(&h.t());
        let sum_den = stats.denominator.index_axis(Axis(0), n).dot(&h.t());
        let w_hat = model.w.index_axis(Axis(0), n).to_owned();
        let mut w = model.w.index_axis_mut(Axis(0), n);
        for i in 0..w_hat.nrows() {
            let row = w_hat.row(i).to_vec();
            for k in 0..row.len() {
                let (a, b, d) =
                    minvol_cubic_coefficients(&row, k, bound, gamma, sum_num[[i, k]], sum_den[[i, k]]);
                if a.is_nan() || b.is_nan() || d.is_nan() {
                    return Err(ModelError::NumericalBreakdown(format!(
                        "cubic coefficients ({a}, {b}, {d}) at n={n} i={i} k={k}"
                    )));
                }
                w[[i, k]] = largest_positive_cubic_root(a, b, d)
                    .unwrap_or(EPSILON_FLOOR)
                    .max(EPSILON_FLOOR);
            }
        }
    }
    model.check_finite()
}

/// Baseline MNMF activation update.
pub fn update_h_baseline_mnmf(model: &mut SourceModel, stats: &MuStatistics) -> Result<()> {
    mu_update_h(model, stats)
}

/// Baseline MNMF basis update.
pub fn update_w_baseline_mnmf(model: &mut SourceModel, stats: &MuStatistics) -> Result<()> {
    mu_update_w(model, stats)
}

/// m-MNMF activation update; the prior does not involve `H`, so this is the
/// same square-root MU as the baseline.
pub fn update_h_m_mnmf(model: &mut SourceModel, stats: &MuStatistics) -> Result<()> {
    mu_update_h(model, stats)
}

/// m-MNMF basis update: every `w_nik` becomes the positive root of the
/// stationarity cubic of the separable majorizer.
pub fn update_w_m_mnmf(
    model: &mut SourceModel,
    stats: &MuStatistics,
    bounds: &[VolumeBound],
    gamma: f64,
) -> Result<()> {
    minvol_update_w(model, stats, bounds, gamma)
}

/// m-ILRMA activation update for source `n`. The prior does not involve
/// `H`, so this is the baseline ILRMA update.
pub fn update_h_m_ilrma(model: &mut SourceModel, demixed_power: &Array3<f64>, n: usize) -> Result<()> {
    update_h_baseline_ilrma(model, demixed_power, n)
}

/// `(Σ_j |y|² h λ⁻², Σ_j h λ⁻¹)` for every basis entry of source `n`, at the current `W`.
fn ilrma_w_statistics(model: &SourceModel, demixed_power: &Array3<f64>, n: usize) -> (Array2<f64>, Array2<f64>) {
    let h = model.activations(n);
    let lambda = model.basis(n).dot(&h).mapv(|v| v.max(EPSILON_FLOOR));
    let power = demixed_power.index_axis(Axis(0), n);
    let ratio = ndarray::Zip::from(&power).and(&lambda).map_collect(|p, l| p / (l * l));
    let inv = lambda.mapv(|l| 1.0 / l);
    (ratio.dot(&h.t()), inv.dot(&h.t()))
}

/// m-ILRMA basis update for source `n` (cubic root per entry).
///
/// With `γ = 0` the cubic degenerates to `b w² + d = 0`, whose root
/// `ŵ·sqrt(num/den)` is the baseline multiplicative update.
pub fn update_w_m_ilrma(
    model: &mut SourceModel,
    demixed_power: &Array3<f64>,
    bound: &VolumeBound,
    gamma: f64,
    n: usize,
) -> Result<()> {
    check_power_shape(model, demixed_power)?;
    let (num, den) = ilrma_w_statistics(model, demixed_power, n);
    let w_hat = model.basis(n).to_owned();
    let (n_bins, n_bases) = w_hat.dim();
    for i in 0..n_bins {
        let row = w_hat.row(i).to_vec();
        for k in 0..n_bases {
            let (sum_h_num, sum_h_den) = (num[[i, k]], den[[i, k]]);
            model.w[[n, i, k]] = if gamma == 0.0 {
                (row[k] * checked_ratio(sum_h_num, sum_h_den)?.sqrt()).max(EPSILON_FLOOR)
            } else {
                let (a, b, d) = minvol_cubic_coefficients(&row, k, bound, gamma, sum_h_num, sum_h_den);
                if a.is_nan() || b.is_nan() || d.is_nan() {
                    return Err(ModelError::NumericalBreakdown(format!(
                        "cubic coefficients ({a}, {b}, {d}) at n={n} i={i} k={k}"
                    )));
                }
                largest_positive_cubic_root(a, b, d).unwrap_or(EPSILON_FLOOR).max(EPSILON_FLOOR)
            };
        }
    }
    model.check_finite()
}

/// Baseline ILRMA basis update for source `n`:
/// `w ← w · sqrt(Σ_j |y|² h λ⁻² / Σ_j h λ⁻¹)`.
pub fn update_w_baseline_ilrma(model: &mut SourceModel, demixed_power: &Array3<f64>, n: usize) -> Result<()> {
    check_power_shape(model, demixed_power)?;
    let (num, den) = ilrma_w_statistics(model, demixed_power, n);
    let mut w = model.w.index_axis_mut(Axis(0), n);
    for ((wv, a), b) in w.iter_mut().zip(num.iter()).zip(den.iter()) {
        *wv = (*wv * checked_ratio(*a, *b)?.sqrt()).max(EPSILON_FLOOR);
    }
    model.check_finite()
}

/// Baseline ILRMA activation update for source `n`.
pub fn update_h_baseline_ilrma(model: &mut SourceModel, demixed_power: &Array3<f64>, n: usize) -> Result<()> {
    check_power_shape(model, demixed_power)?;
    let w = model.basis(n).to_owned();
    let lambda = w.dot(&model.activations(n)).mapv(|v| v.max(EPSILON_FLOOR));
    let power = demixed_power.index_axis(Axis(0), n);
    let ratio = ndarray::Zip::from(&power).and(&lambda).map_collect(|p, l| p / (l * l));
    let inv = lambda.mapv(|l| 1.0 / l);
    let num = w.t().dot(&ratio);
    let den = w.t().dot(&inv);
    let mut h = model.h.index_axis_mut(Axis(0), n);
    for ((hv, a), b) in h.iter_mut().zip(num.iter()).zip(den.iter()) {
        *hv = (*hv * checked_ratio(*a, *b)?.sqrt()).max(EPSILON_FLOOR);
    }
    model.check_finite()
}

fn check_power_shape(model: &SourceModel, power: &Array3<f64>) -> Result<()> {
    let expected = (model.n_sources(), model.freq_bins(), model.frames());
    if power.dim() != expected {
        return Err(ModelError::DimensionMismatch(format!(
            "demixed power {:?} vs model {:?}",
            power.dim(),
            expected
        )));
    }
    Ok(())
}

/// Rescales `γ` so the prior keeps pace with the data term:
/// `γ ← γ* · |data_term| / |Σ_n log|W_nᵀW_n + ηI||`, clamped to
/// `[GAMMA_MIN, GAMMA_MAX]`.
///
/// `data_term` is `Σ_ij [tr(X X̂⁻¹) + log|X̂|]`. Both sums can be negative
/// at small signal scales, so only their magnitudes enter the ratio.
pub fn update_gamma(gamma_prev: f64, data_term: f64, model: &SourceModel, eta: f64) -> Result<f64> {
    let denominator = total_minvol_penalty(model, eta)?;
    if denominator.abs() < 1e-12 || !denominator.is_finite() {
        return Err(ModelError::DegenerateDenominator { denominator, held: gamma_prev });
    }
    let gamma = gamma_prev * (data_term / denominator).abs();
    if gamma.is_nan() {
        return Err(ModelError::NumericalBreakdown("gamma update produced NaN".into()));
    }
    Ok(gamma.clamp(GAMMA_MIN, GAMMA_MAX))
}

/// Output of [`snpa_initialize`].
#[derive(Debug, Clone, PartialEq)]
pub struct SnpaResult {
    /// Selected columns of the data, I×K.
    pub w: Array2<f64>,
    /// Simplex coefficients of every data column, K×J.
    pub h: Array2<f64>,
    /// Data column index of each selected basis vector.
    pub indices: Vec<usize>,
}

/// Successive nonnegative projection: greedily picks the column with the
/// largest residual, then re-projects all columns onto the convex hull of
/// the selected ones and the origin.
pub fn snpa_initialize(x_power: ArrayView2<f64>, k: usize) -> Result<SnpaResult> {
    let (n_rows, n_cols) = x_power.dim();
    if k == 0 || k > n_rows.min(n_cols) {
        return Err(ModelError::DimensionMismatch(format!(
            "cannot select {k} columns from a {n_rows}×{n_cols} matrix"
        )));
    }
    if x_power.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(ModelError::DimensionMismatch("data must be finite and nonnegative".into()));
    }
    let col_norm2: Vec<f64> = (0..n_cols).map(|j| x_power.column(j).dot(&x_power.column(j))).collect();
    let max_norm2 = col_norm2.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-9 * max_norm2;
    let mut indices = Vec::with_capacity(k);
    let mut residual2 = col_norm2.clone();
    let mut coeffs = Array2::<f64>::zeros((0, n_cols));
    while indices.len() < k {
        let (best, best_val) = residual2
            .iter()
            .enumerate()
            .filter(|(j, _)| !indices.contains(j))
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
        if best == usize::MAX || !(best_val > tol) {
            return Err(ModelError::RankDeficientData { requested: k });
        }
        indices.push(best);
        let basis = select_columns(x_power, &indices);
        coeffs = simplex_least_squares(&basis, x_power, &coeffs);
        let approx = basis.dot(&coeffs);
        for (j, r) in residual2.iter_mut().enumerate() {
            let diff = &x_power.column(j) - &approx.column(j);
            *r = diff.dot(&diff);
        }
    }
    Ok(SnpaResult { w: select_columns(x_power, &indices), h: coeffs, indices })
}

fn select_columns(x: ArrayView2<f64>, indices: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows(), indices.len()));
    for (c, &j) in indices.iter().enumerate() {
        out.column_mut(c).assign(&x.column(j));
    }
    out
}

/// Column-wise `argmin_{h ≥ 0, Σh ≤ 1} ‖x − W h‖²` by accelerated projected
/// gradient, warm-started from `previous` (which has one row fewer).
fn simplex_least_squares(w: &Array2<f64>, x: ArrayView2<f64>, previous: &Array2<f64>) -> Array2<f64> {
    let k = w.ncols();
    let n_cols = x.ncols();
    let gram = w.t().dot(w);
    let wtx = w.t().dot(&x);
    let lipschitz = DMatrix::from_fn(k, k, |p, q| gram[[p, q]])
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let step = 1.0 / lipschitz;
    let mut h = Array2::<f64>::zeros((k, n_cols));
    for j in 0..n_cols {
        let mut current: Vec<f64> = (0..k)
            .map(|r| if r < previous.nrows() { previous[[r, j]] } else { 0.0 })
            .collect();
        let mut momentum = current.clone();
        let mut t = 1.0_f64;
        for _ in 0..500 {
            let grad: Vec<f64> = (0..k)
                .map(|p| (0..k).map(|q| gram[[p, q]] * momentum[q]).sum::<f64>() - wtx[[p, j]])
                .collect();
            let mut next: Vec<f64> = (0..k).map(|p| momentum[p] - step * grad[p]).collect();
            project_capped_simplex(&mut next);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            let mut change = 0.0_f64;
            for p in 0..k {
                momentum[p] = next[p] + beta * (next[p] - current[p]);
                change = change.max((next[p] - current[p]).abs());
            }
            current = next;
            t = t_next;
            if change < 1e-12 {
                break;
            }
        }
        for (p, v) in current.into_iter().enumerate() {
            h[[p, j]] = v;
        }
    }
    h
}

/// Euclidean projection onto `{h ≥ 0, Σ h ≤ 1}`.
fn project_capped_simplex(v: &mut [f64]) {
    let clipped_sum: f64 = v.iter().map(|x| x.max(0.0)).sum();
    if clipped_sum <= 1.0 {
        v.iter_mut().for_each(|x| *x = x.max(0.0));
        return;
    }
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (r, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (r + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}
