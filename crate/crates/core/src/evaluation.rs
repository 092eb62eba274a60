//! Separation metrics and basis-matrix diagnostics.

use std::io::Write;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound reported for SDR and SIR.
pub const METRIC_CAP_DB: f64 = 300.0;
/// Largest source count handled by the exhaustive permutation search.
pub const MAX_ALIGN_SOURCES: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("reference signal is all zeros")]
    ZeroReference,
    #[error("expected {expected} signals, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("signal lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("basis column {0} is all zeros")]
    ZeroColumn(usize),
    #[error("activation matrix does not have full row rank")]
    RankDeficientH,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        return -METRIC_CAP_DB;
    }
    let den = den.max(num * 10f64.powf(-METRIC_CAP_DB / 10.0));
    (10.0 * (num / den).log10()).clamp(-METRIC_CAP_DB, METRIC_CAP_DB)
}

/// Energies of the zero-lag decomposition `est = s_target + e_interf + e_artif`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub target: f64,
    pub interference: f64,
    pub distortion: f64,
}

impl Decomposition {
    pub fn sdr(&self) -> f64 {
        ratio_db(self.target, self.distortion)
    }

    pub fn sir(&self) -> f64 {
        ratio_db(self.target, self.interference)
    }
}

/// Projects `estimate` onto the reference (target) and onto the span of all
/// sources (target plus interference).
pub fn decompose(estimate: &[f64], reference: &[f64], interferers: &[&[f64]]) -> Result<Decomposition> {
    let len = estimate.len();
    for s in std::iter::once(&reference).chain(interferers.iter()) {
        if s.len() != len {
            return Err(EvalError::LengthMismatch(len, s.len()));
        }
    }
    let ref_energy = dot(reference, reference);
    if ref_energy == 0.0 {
        return Err(EvalError::ZeroReference);
    }
    let alpha = dot(estimate, reference) / ref_energy;
    let target: Vec<f64> = reference.iter().map(|r| alpha * r).collect();

    let basis: Vec<&[f64]> = std::iter::once(reference).chain(interferers.iter().copied()).collect();
    let k = basis.len();
    let gram = DMatrix::from_fn(k, k, |p, q| dot(basis[p], basis[q]));
    let rhs = DVector::from_fn(k, |p, _| dot(basis[p], estimate));
    let coef = gram.clone().pseudo_inverse(1e-12 * gram.amax()).map_err(|_| EvalError::ZeroReference)? * rhs;
    let mut projected = vec![0.0; len];
    for (p, b) in basis.iter().enumerate() {
        for (slot, v) in projected.iter_mut().zip(b.iter()) {
            *slot += coef[p] * v;
        }
    }
    let mut interference = 0.0;
    let mut distortion = 0.0;
    for t in 0..len {
        let e_interf = projected[t] - target[t];
        let e_artif = estimate[t] - projected[t];
        interference += e_interf * e_interf;
        distortion += (e_interf + e_artif) * (e_interf + e_artif);
    }
    Ok(Decomposition { target: dot(&target, &target), interference, distortion })
}

/// Source-to-distortion ratio in dB.
pub fn sdr(estimate: &[f64], reference: &[f64], interferers: &[&[f64]]) -> Result<f64> {
    decompose(estimate, reference, interferers).map(|d| d.sdr())
}

/// Source-to-interference ratio in dB, capped at [`METRIC_CAP_DB`].
pub fn sir(estimate: &[f64], reference: &[f64], interferers: &[&[f64]]) -> Result<f64> {
    decompose(estimate, reference, interferers).map(|d| d.sir())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `permutation[r]` is the estimate matched to reference `r`.
    pub permutation: Vec<usize>,
    pub sdr: Vec<f64>,
    pub sir: Vec<f64>,
    pub sdr_improvement: Option<Vec<f64>>,
    pub sir_improvement: Option<Vec<f64>>,
}

impl EvalReport {
    pub fn mean_sdr_improvement(&self) -> Option<f64> {
        self.sdr_improvement.as_ref().map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn metrics_against(estimate: &[f64], references: &[Vec<f64>], r: usize) -> Result<Decomposition> {
    let others: Vec<&[f64]> = references
        .iter()
        .enumerate()
        .filter(|(q, _)| *q != r)
        .map(|(_, s)| s.as_slice())
        .collect();
    decompose(estimate, &references[r], &others)
}

/// Picks the estimate-to-reference assignment with the largest total SIR.
pub fn align_permutation(estimates: &[Vec<f64>], references: &[Vec<f64>]) -> Result<EvalReport> {
    let n = references.len();
    if estimates.len() != n {
        return Err(EvalError::CountMismatch { expected: n, got: estimates.len() });
    }
    if n == 0 || n > MAX_ALIGN_SOURCES {
        return Err(EvalError::DimensionMismatch(format!("alignment supports 1..={MAX_ALIGN_SOURCES} sources, got {n}")));
    }
    let mut table = Vec::with_capacity(n * n);
    for est in estimates {
        for r in 0..n {
            table.push(metrics_against(est, references, r)?);
        }
    }
    let best = (0..n)
        .permutations(n)
        .map(|perm| {
            let total: f64 = (0..n).map(|r| table[perm[r] * n + r].sir()).sum();
            (perm, total)
        })
        .fold(None::<(Vec<usize>, f64)>, |acc, cand| match acc {
            Some(a) if a.1 >= cand.1 => Some(a),
            _ => Some(cand),
        })
        .expect("at least one permutation");
    let perm = best.0;
    Ok(EvalReport {
        sdr: (0..n).map(|r| table[perm[r] * n + r].sdr()).collect(),
        sir: (0..n).map(|r| table[perm[r] * n + r].sir()).collect(),
        permutation: perm,
        sdr_improvement: None,
        sir_improvement: None,
    })
}

/// Aligned metrics plus improvements over using `mixture` itself as every estimate.
pub fn evaluate(estimates: &[Vec<f64>], references: &[Vec<f64>], mixture: &[f64]) -> Result<EvalReport> {
    let mut report = align_permutation(estimates, references)?;
    let mut sdr_imp = Vec::with_capacity(references.len());
    let mut sir_imp = Vec::with_capacity(references.len());
    for r in 0..references.len() {
        let base = metrics_against(mixture, references, r)?;
        sdr_imp.push(report.sdr[r] - base.sdr());
        sir_imp.push(report.sir[r] - base.sir());
    }
    report.sdr_improvement = Some(sdr_imp);
    report.sir_improvement = Some(sir_imp);
    Ok(report)
}

/// Mean column sparseness `(√n − ‖w‖₁/‖w‖₂)/(√n − 1)`.
pub fn sparseness(w: ArrayView2<f64>) -> Result<f64> {
    let (rows, cols) = w.dim();
    if rows < 2 || cols == 0 {
        return Err(EvalError::DimensionMismatch(format!("sparseness needs ≥ 2 rows and ≥ 1 column, got {rows}×{cols}")));
    }
    let sqrt_n = (rows as f64).sqrt();
    let mut total = 0.0;
    for (k, col) in w.columns().into_iter().enumerate() {
        let l1: f64 = col.iter().map(|v| v.abs()).sum();
        let l2 = col.dot(&col).sqrt();
        if l2 == 0.0 {
            return Err(EvalError::ZeroColumn(k));
        }
        total += ((sqrt_n - l1 / l2) / (sqrt_n - 1.0)).clamp(0.0, 1.0);
    }
    Ok(total / cols as f64)
}

/// `‖WᵀW − I‖_F`.
pub fn orthogonality_score(w: ArrayView2<f64>) -> f64 {
    let gram = w.t().dot(&w);
    gram.indexed_iter()
        .map(|((p, q), v)| {
            let d = if p == q { v - 1.0 } else { *v };
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Rescales every column to unit Euclidean norm (zero columns are left alone).
pub fn normalize_columns(w: ArrayView2<f64>) -> ndarray::Array2<f64> {
    let mut out = w.to_owned();
    for mut col in out.columns_mut() {
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col.mapv_inplace(|v| v / norm);
        }
    }
    out
}

/// `‖W − T H⁺‖²_F` with `H⁺` the Moore–Penrose pseudo-inverse.
pub fn uniqueness_score(w: ArrayView2<f64>, t: ArrayView2<f64>, h: ArrayView2<f64>) -> Result<f64> {
    let (i, k) = w.dim();
    let (k2, j) = h.dim();
    if k != k2 || t.dim() != (i, j) {
        return Err(EvalError::DimensionMismatch(format!(
            "W {:?}, T {:?}, H {:?}",
            w.dim(),
            t.dim(),
            h.dim()
        )));
    }
    let hm = DMatrix::from_fn(k, j, |p, q| h[[p, q]]);
    let sv = hm.singular_values();
    let max = sv.max();
    if !(max > 0.0) || sv.len() < k || sv.min() <= 1e-12 * max {
        return Err(EvalError::RankDeficientH);
    }
    let pinv = hm.pseudo_inverse(1e-15 * max).map_err(|_| EvalError::RankDeficientH)?;
    let tm = DMatrix::from_fn(i, j, |p, q| t[[p, q]]);
    let w_prime = tm * pinv;
    let wm = DMatrix::from_fn(i, k, |p, q| w[[p, q]]);
    Ok((wm - w_prime).norm_squared())
}

/// One row of the per-source evaluation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub mixture: String,
    pub method: String,
    pub source: usize,
    pub sdr: f64,
    pub sir: f64,
    pub sdr_improvement: Option<f64>,
    pub sir_improvement: Option<f64>,
    pub runtime_s: Option<f64>,
    pub seed: Option<u64>,
}

impl EvalRow {
    pub fn from_report(
        report: &EvalReport,
        mixture: &str,
        method: &str,
        runtime_s: Option<f64>,
        seed: Option<u64>,
    ) -> Vec<Self> {
        (0..report.sdr.len())
            .map(|r| EvalRow {
                mixture: mixture.to_string(),
                method: method.to_string(),
                source: r,
                sdr: report.sdr[r],
                sir: report.sir[r],
                sdr_improvement: report.sdr_improvement.as_ref().map(|v| v[r]),
                sir_improvement: report.sir_improvement.as_ref().map(|v| v[r]),
                runtime_s,
                seed,
            })
            .collect()
    }
}

/// Writes rows as CSV with a header and LF line endings.
pub fn write_eval_csv<W: Write>(rows: &[EvalRow], out: W) -> std::result::Result<(), csv::Error> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}
