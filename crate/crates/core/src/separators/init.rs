use std::str::FromStr;

use ndarray::{s, Array2, Array3, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use serde::{Deserialize, Serialize};

use super::SeparationError;
use crate::source_model::{snpa_initialize, SourceModel, EPSILON_FLOOR};

/// Relative size of the seeded positive offset added to the SNPA activations.
const ACTIVATION_JITTER: f64 = 1e-2;

/// How the NMF source model is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Seeded uniform `W` and `H` at the scale of the mixture power.
    #[default]
    Random,
    /// SNPA columns of the mixture power, with the simplex coefficients as activations.
    Snpa,
}

impl FromStr for InitStrategy {
    type Err = SeparationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(Self::Random),
            "snpa" => Ok(Self::Snpa),
            other => Err(SeparationError::InvalidConfig(format!("unknown init strategy '{other}'"))),
        }
    }
}

/// Initial `(W, H)` for `n_sources` sources from a mixture power spectrogram.
///
/// With [`InitStrategy::Snpa`], SNPA picks `n_sources × k` columns of
/// `power`; source `n` receives the `n`-th block of `k` of them as its
/// basis and the matching simplex coefficients, plus a small seeded offset,
/// as activations. If the data has too few distinct columns the random
/// model is used instead.
pub fn initialize_source_model(
    power: ArrayView2<f64>,
    n_sources: usize,
    k: usize,
    strategy: InitStrategy,
    seed: u64,
) -> SourceModel {
    let (bins, frames) = power.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_1417);
    let mut w = Array3::<f64>::zeros((n_sources, bins, k));
    let mut h = Array3::<f64>::zeros((n_sources, k, frames));
    let snpa = match strategy {
        InitStrategy::Snpa => snpa_initialize(power, n_sources * k).ok(),
        InitStrategy::Random => None,
    };
    match snpa {
        Some(snpa) => {
            for n in 0..n_sources {
                w.slice_mut(s![n, .., ..]).assign(&snpa.w.slice(s![.., n * k..(n + 1) * k]));
                let block = snpa.h.slice(s![n * k..(n + 1) * k, ..]);
                let scale = block.iter().cloned().fold(0.0, f64::max).max(1.0);
                for ((kk, j), v) in block.indexed_iter() {
                    h[[n, kk, j]] = v + ACTIVATION_JITTER * scale * rng.random::<f64>();
                }
            }
        }
        None => {
            let mean = power.mean().unwrap_or(1.0).max(EPSILON_FLOOR);
            let scale = (mean / k as f64).sqrt();
            w.mapv_inplace(|_| scale * rng.random_range(0.1..1.0));
            h.mapv_inplace(|_| scale * rng.random_range(0.1..1.0));
        }
    }
    w.mapv_inplace(|v| v.max(EPSILON_FLOOR));
    h.mapv_inplace(|v| v.max(EPSILON_FLOOR));
    SourceModel::new(w, h).expect("initial model has consistent shapes")
}

/// Mean over channels of `|x_ijm|²`.
pub(crate) fn mean_channel_power(x: &crate::signal::MultichannelSpectrogram) -> Array2<f64> {
    let m = x.channels() as f64;
    let mut p = Array2::zeros((x.freq_bins(), x.frames()));
    for ((i, j, _), z) in x.values.indexed_iter() {
        p[[i, j]] += z.norm_sqr() / m;
    }
    p
}
