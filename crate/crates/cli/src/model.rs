use std::path::Path;

use bss_core::separators::Method;
use bss_core::source_model::SourceModel;
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Learned NMF factors and the per-source power they were fit to.
///
/// `w[n]` is `bins × bases`, `h[n]` is `bases × frames` and `power[n]` is
/// `bins × frames`, all stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub method: Method,
    pub w: Vec<Vec<Vec<f64>>>,
    pub h: Vec<Vec<Vec<f64>>>,
    pub power: Vec<Vec<Vec<f64>>>,
}

fn nested(a: &Array3<f64>) -> Vec<Vec<Vec<f64>>> {
    a.outer_iter().map(|m| m.rows().into_iter().map(|r| r.to_vec()).collect()).collect()
}

fn matrix(rows: &[Vec<f64>], what: &str) -> CliResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::invalid(format!("model {what} has ragged rows")));
    }
    Array2::from_shape_vec((rows.len(), cols), rows.concat()).map_err(|e| CliError::invalid(format!("model {what}: {e}")))
}

impl SavedModel {
    pub fn from_parts(method: Method, model: &SourceModel, power: &Array3<f64>) -> Self {
        Self { method, w: nested(&model.w), h: nested(&model.h), power: nested(power) }
    }

    pub fn n_sources(&self) -> usize {
        self.w.len()
    }

    /// `(W, H, power)` of source `n`.
    pub fn factors(&self, n: usize) -> CliResult<(Array2<f64>, Array2<f64>, Array2<f64>)> {
        let get = |v: &[Vec<Vec<f64>>], what: &str| {
            v.get(n).ok_or_else(|| CliError::invalid(format!("model has no {what} for source {n}"))).and_then(|m| matrix(m, what))
        };
        Ok((get(&self.w, "W")?, get(&self.h, "H")?, get(&self.power, "power")?))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string(self).map_err(|e| CliError::io("serializing model", e))?;
        std::fs::write(path, text).map_err(|e| CliError::io(path.display(), e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_keeps_shapes_and_values() {
        let w = Array3::from_shape_fn((2, 3, 2), |(n, i, k)| (n * 100 + i * 10 + k) as f64 + 0.5);
        let h = Array3::from_shape_fn((2, 2, 4), |(n, k, j)| (n + k) as f64 / (j + 1) as f64);
        let power = Array3::from_shape_fn((2, 3, 4), |(n, i, j)| (n * i * j) as f64);
        let model = SourceModel::new(w.clone(), h.clone()).unwrap();
        let saved = SavedModel::from_parts(Method::MIlrma, &model, &power);
        let back: SavedModel = serde_json::from_str(&serde_json::to_string(&saved).unwrap()).unwrap();
        assert_eq!(back, saved);
        let (w1, h1, p1) = back.factors(1).unwrap();
        assert_eq!(w1, w.index_axis(ndarray::Axis(0), 1));
        assert_eq!(h1, h.index_axis(ndarray::Axis(0), 1));
        assert_eq!(p1, power.index_axis(ndarray::Axis(0), 1));
        assert!(back.factors(2).is_err());
    }
}
