use nalgebra::{DMatrix, DVector};
use ndarray::{Array3, Array4};
use num_complex::Complex64;

use crate::linalg::{pd_inverse_logdet, HermitianMatrix, LinalgError};
use crate::signal::MultichannelSpectrogram;
use crate::source_model::{ModelError, PowerSpectrograms};
use crate::spatial::{model_covariance, DemixingSystem, SpatialCovariances};

/// Source images `ŝ_ijn = λ_ijn G_ni X̂_ij⁻¹ x_ij`, shape `(source, bin, frame, channel)`.
///
/// `X̂` is inverted without regularization when it is numerically positive
/// definite, so the images add up to the mixture to rounding accuracy.
pub fn multichannel_wiener_filter(
    x: &MultichannelSpectrogram,
    lambda: &PowerSpectrograms,
    g: &SpatialCovariances,
) -> Result<Array4<Complex64>, ModelError> {
    let (bins, frames, m) = x.values.dim();
    let n_src = g.n_sources();
    if lambda.lambda.dim() != (n_src, bins, frames) || g.freq_bins() != bins {
        return Err(ModelError::DimensionMismatch("Wiener filter inputs disagree in shape".into()));
    }
    let mut out = Array4::zeros((n_src, bins, frames, m));
    for i in 0..bins {
        for j in 0..frames {
            let mut acc = DMatrix::<Complex64>::zeros(m, m);
            for n in 0..n_src {
                acc += g.get(n, i).as_matrix() * Complex64::new(lambda.lambda[[n, i, j]], 0.0);
            }
            let exact = HermitianMatrix::from_matrix(acc).hermitized();
            let inv = match pd_inverse_logdet(&exact) {
                Ok((inv, _)) => inv,
                Err(_) => pd_inverse_logdet(&model_covariance(g, &lambda.lambda, i, j))?.0,
            };
            let xv = DVector::from_iterator(m, (0..m).map(|c| x.values[[i, j, c]]));
            let u = inv.as_matrix() * xv;
            for n in 0..n_src {
                let img = g.get(n, i).as_matrix() * &u * Complex64::new(lambda.lambda[[n, i, j]], 0.0);
                for c in 0..m {
                    out[[n, i, j, c]] = img[c];
                }
            }
        }
    }
    Ok(out)
}

/// Rescales demixed signals `(bin, frame, source)` to the reference channel:
/// source `n` in bin `i` is multiplied by `(D_i⁻¹)[reference, n]`.
pub fn projection_back(
    y: &Array3<Complex64>,
    system: &DemixingSystem,
    reference_channel: usize,
) -> Result<Array3<Complex64>, ModelError> {
    let (bins, frames, n_src) = y.dim();
    if system.freq_bins() != bins {
        return Err(ModelError::DimensionMismatch("demixing system does not match signal".into()));
    }
    let mut out = y.clone();
    for (i, d) in system.d.iter().enumerate() {
        if !d.is_square() || d.nrows() != n_src || reference_channel >= d.ncols() {
            return Err(ModelError::DimensionMismatch("projection back needs square demixing".into()));
        }
        let a = d.clone().try_inverse().ok_or(LinalgError::SingularMatrix)?;
        for n in 0..n_src {
            let scale = a[(reference_channel, n)];
            for j in 0..frames {
                out[[i, j, n]] *= scale;
            }
        }
    }
    Ok(out)
}
