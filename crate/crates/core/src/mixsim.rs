//! Synthetic mixtures with known ground truth: instantaneous per-bin mixing,
//! shoebox-room convolutive mixing, and low-rank / AR source generators.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::DMatrix;
use ndarray::{Array2, Array3, ArrayView2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{istft, stft, MultichannelSpectrogram, MultichannelWaveform, SignalError};

pub const SPEED_OF_SOUND: f64 = 343.0;
/// Energy decay of 60 dB in nepers, `ln 10⁶`.
const DECAY_60DB: f64 = 13.815510557964274;
/// Length of the windowed-sinc fractional-delay kernel.
pub const SINC_TAPS: usize = 16;
/// Largest condition number accepted for a square mixing matrix.
pub const MAX_CONDITION: f64 = 1e6;

#[derive(Debug, Error)]
pub enum MixError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("mixing matrix for bin {bin} is ill-conditioned (condition number {condition:e})")]
    IllConditionedMixing { bin: usize, condition: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

pub type Result<T> = std::result::Result<T, MixError>;

/// Shoebox room with point sources and microphones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomScenario {
    pub room: [f64; 3],
    pub sources: Vec<[f64; 3]>,
    pub mics: Vec<[f64; 3]>,
    pub rt60: f64,
    /// Maximum number of wall reflections per image; `None` derives it from `rt60`.
    pub max_order: Option<usize>,
    pub sample_rate: u32,
}

impl RoomScenario {
    /// 6×6×3 m room, two mics 5.66 cm apart at the center, sources 2 m away
    /// at ±45° in the horizontal plane.
    pub fn default_condition(rt60: f64, sample_rate: u32) -> Self {
        let center = [3.0, 3.0, 1.5];
        let mics = linear_array(center, 2, 0.0566);
        let sources = polar_sources(center, 2.0, &[-45.0, 45.0]);
        Self { room: [6.0, 6.0, 3.0], sources, mics, rt60, max_order: None, sample_rate }
    }

    pub fn validate(&self) -> Result<()> {
        if self.room.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(MixError::InvalidGeometry(format!("room dimensions {:?} must be positive", self.room)));
        }
        if !(self.rt60 >= 0.0) || !self.rt60.is_finite() {
            return Err(MixError::InvalidGeometry(format!("rt60 {} must be nonnegative", self.rt60)));
        }
        if self.sample_rate == 0 {
            return Err(MixError::InvalidGeometry("sample rate must be positive".into()));
        }
        if self.sources.is_empty() || self.mics.is_empty() {
            return Err(MixError::InvalidGeometry("need at least one source and one mic".into()));
        }
        for p in self.sources.iter().chain(&self.mics) {
            if (0..3).any(|a| !(p[a] > 0.0 && p[a] < self.room[a])) {
                return Err(MixError::InvalidGeometry(format!("position {p:?} is not strictly inside the room")));
            }
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.room.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.room;
        2.0 * (x * y + x * z + y * z)
    }

    /// Uniform wall reflection coefficient from the mean-free-path argument:
    /// a ray meets a wall `cS/(4V)` times per second, so the energy decays as
    /// `β^(cSt/(2V))` and a 60 dB decay in `rt60` needs
    /// `ln β = −ln(10⁶)·2V/(c S rt60)`.
    pub fn diffuse_reflection_coefficient(&self) -> f64 {
        if self.rt60 == 0.0 {
            return 0.0;
        }
        (-DECAY_60DB * 2.0 * self.volume() / (SPEED_OF_SOUND * self.surface() * self.rt60)).exp()
    }

    /// Uniform wall reflection coefficient whose image-source response has
    /// a Schroeder decay time of `rt60`.
    ///
    /// Shoebox image responses decay more slowly than the diffuse-field
    /// estimate predicts (paths along the long axes meet few walls, and the
    /// all-positive image gains add up coherently), so `β` is found by
    /// bisection on a whole-sample version of the first source–mic response,
    /// starting from the diffuse estimate.
    pub fn reflection_coefficient(&self) -> f64 {
        if self.rt60 == 0.0 || self.sources.is_empty() || self.mics.is_empty() {
            return 0.0;
        }
        let start = self.diffuse_reflection_coefficient().ln();
        let images = image_list(self, &self.sources[0], &self.mics[0]);
        let len = self.rir_length();
        let measure = |log_beta: f64| {
            let mut pressure = vec![0.0; len];
            for im in &images {
                let slot = im.delay.round() as usize;
                if slot < len {
                    pressure[slot] += (log_beta * im.reflections as f64).exp() / (4.0 * PI * im.distance);
                }
            }
            schroeder_t60(&pressure, self.sample_rate)
        };
        let (mut lo, mut hi) = (4.0 * start, 0.25 * start);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            match measure(mid) {
                Some(t60) if t60 > self.rt60 => hi = mid,
                Some(_) => lo = mid,
                None => lo = mid,
            }
            if (hi - lo).abs() < 1e-4 * start.abs() {
                break;
            }
        }
        (0.5 * (lo + hi)).exp()
    }

    pub fn reflection_order(&self) -> usize {
        if let Some(order) = self.max_order {
            return order;
        }
        if self.rt60 == 0.0 {
            return 0;
        }
        let shortest = self.room.iter().cloned().fold(f64::INFINITY, f64::min);
        ((SPEED_OF_SOUND * self.rt60 * 1.2) / shortest).ceil() as usize + 1
    }

    /// Impulse response length in samples.
    pub fn rir_length(&self) -> usize {
        let far = self
            .sources
            .iter()
            .flat_map(|s| self.mics.iter().map(move |m| distance(s, m)))
            .fold(0.0, f64::max);
        let direct = far / SPEED_OF_SOUND;
        ((direct + 1.2 * self.rt60) * self.sample_rate as f64).ceil() as usize + SINC_TAPS
    }

    /// Serializes to the `key = value` format read by [`FromStr`].
    pub fn to_config_string(&self) -> String {
        let fmt = |p: &[f64; 3]| format!("{} {} {}", p[0], p[1], p[2]);
        let mut out = format!("room = {}\nrt60 = {}\nsample_rate = {}\n", fmt(&self.room), self.rt60, self.sample_rate);
        if let Some(order) = self.max_order {
            out.push_str(&format!("order = {order}\n"));
        }
        for m in &self.mics {
            out.push_str(&format!("mic = {}\n", fmt(m)));
        }
        for s in &self.sources {
            out.push_str(&format!("source = {}\n", fmt(s)));
        }
        out
    }
}

fn linear_array(center: [f64; 3], count: usize, spacing: f64) -> Vec<[f64; 3]> {
    (0..count)
        .map(|c| {
            let offset = (c as f64 - (count as f64 - 1.0) / 2.0) * spacing;
            [center[0] + offset, center[1], center[2]]
        })
        .collect()
}

/// Sources at `distance` from `center`; 0° is broadside to the mic axis.
fn polar_sources(center: [f64; 3], distance: f64, angles_deg: &[f64]) -> Vec<[f64; 3]> {
    angles_deg
        .iter()
        .map(|a| {
            let t = a.to_radians();
            [center[0] + distance * t.sin(), center[1] + distance * t.cos(), center[2]]
        })
        .collect()
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Parses a scenario from `key = value` lines (`#` starts a comment).
///
/// Keys: `room`, `rt60`, `sample_rate`, `order`, repeated `mic` and
/// `source` positions, or instead of explicit positions `mic_count`,
/// `mic_spacing`, `source_distance` and `source_angles` (degrees) around
/// `center` (default: room center).
impl FromStr for RoomScenario {
    type Err = MixError;

    fn from_str(text: &str) -> Result<Self> {
        let mut room = None;
        let mut rt60 = 0.0;
        let mut sample_rate = 16000;
        let mut order = None;
        let mut mics = Vec::new();
        let mut sources = Vec::new();
        let mut center = None;
        let mut mic_count = 2usize;
        let mut mic_spacing = None;
        let mut source_distance = 2.0;
        let mut source_angles = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| MixError::InvalidScenario(format!("line {}: {msg}", lineno + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
            let value = value.trim();
            let numbers = || -> Result<Vec<f64>> {
                value
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<f64>().map_err(|_| bad(&format!("'{s}' is not a number"))))
                    .collect()
            };
            let triple = || -> Result<[f64; 3]> {
                let v = numbers()?;
                <[f64; 3]>::try_from(v.as_slice()).map_err(|_| bad("expected three numbers"))
            };
            let scalar = || -> Result<f64> {
                let v = numbers()?;
                if v.len() == 1 { Ok(v[0]) } else { Err(bad("expected one number")) }
            };
            match key.trim() {
                "room" => room = Some(triple()?),
                "rt60" => rt60 = scalar()?,
                "sample_rate" => sample_rate = value.parse().map_err(|_| bad("invalid sample rate"))?,
                "order" => order = Some(value.parse().map_err(|_| bad("invalid reflection order"))?),
                "mic" => mics.push(triple()?),
                "source" => sources.push(triple()?),
                "center" => center = Some(triple()?),
                "mic_count" => mic_count = value.parse().map_err(|_| bad("invalid mic count"))?,
                "mic_spacing" => mic_spacing = Some(scalar()?),
                "source_distance" => source_distance = scalar()?,
                "source_angles" => source_angles = Some(numbers()?),
                other => return Err(bad(&format!("unknown key '{other}'"))),
            }
        }
        let room = room.ok_or_else(|| MixError::InvalidScenario("missing 'room'".into()))?;
        let center = center.unwrap_or([room[0] / 2.0, room[1] / 2.0, room[2] / 2.0]);
        if mics.is_empty() {
            mics = linear_array(center, mic_count, mic_spacing.unwrap_or(0.0566));
        }
        if sources.is_empty() {
            let angles = source_angles.unwrap_or_else(|| vec![-45.0, 45.0]);
            sources = polar_sources(center, source_distance, &angles);
        }
        let scenario = RoomScenario { room, sources, mics, rt60, max_order: order, sample_rate };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Adds a Hann-windowed sinc centered at fractional sample `delay`, scaled by `gain`.
fn add_fractional_impulse(out: &mut [f64], delay: f64, gain: f64) {
    let base = delay.floor() as isize;
    let frac = delay - base as f64;
    if frac.abs() < 1e-12 {
        if let Some(slot) = out.get_mut(base as usize) {
            *slot += gain;
        }
        return;
    }
    let half = (SINC_TAPS / 2) as isize;
    for t in (base - half + 1)..=(base + half) {
        if t < 0 || t as usize >= out.len() {
            continue;
        }
        let x = t as f64 - delay;
        let sinc = (PI * x).sin() / (PI * x);
        let window = 0.5 * (1.0 + (PI * x / (half as f64)).cos());
        out[t as usize] += gain * sinc * window;
    }
}

struct Image {
    delay: f64,
    reflections: i64,
    distance: f64,
}

/// Images of `src` seen from `mic` up to the scenario's reflection order
/// that arrive within the response length.
fn image_list(scenario: &RoomScenario, src: &[f64; 3], mic: &[f64; 3]) -> Vec<Image> {
    let order = scenario.reflection_order() as i64;
    let limit = (scenario.rir_length() - SINC_TAPS / 2) as f64;
    let fs = scenario.sample_rate as f64;
    let room = scenario.room;
    let mut out = Vec::new();
    for nx in -order..=order {
        for ny in -order..=order {
            for nz in -order..=order {
                if nx.abs() + ny.abs() + nz.abs() > order + 1 {
                    continue;
                }
                for q in 0..8u8 {
                    let qs = [(q & 1) as i64, ((q >> 1) & 1) as i64, ((q >> 2) & 1) as i64];
                    let ns = [nx, ny, nz];
                    let mut reflections = 0i64;
                    let mut image = [0.0; 3];
                    for a in 0..3 {
                        image[a] = (1 - 2 * qs[a]) as f64 * src[a] + 2.0 * ns[a] as f64 * room[a];
                        reflections += (ns[a] - qs[a]).abs() + ns[a].abs();
                    }
                    if reflections > order {
                        continue;
                    }
                    let distance = distance(&image, mic);
                    let delay = distance / SPEED_OF_SOUND * fs;
                    if delay < limit {
                        out.push(Image { delay, reflections, distance });
                    }
                }
            }
        }
    }
    out
}

/// Image-source impulse responses indexed `[source][mic]`.
pub fn image_source_rir(scenario: &RoomScenario) -> Result<Vec<Vec<Vec<f64>>>> {
    scenario.validate()?;
    let beta = scenario.reflection_coefficient();
    let len = scenario.rir_length();
    let mut out = Vec::with_capacity(scenario.sources.len());
    for src in &scenario.sources {
        let mut per_mic = Vec::with_capacity(scenario.mics.len());
        for mic in &scenario.mics {
            let mut h = vec![0.0; len];
            for im in image_list(scenario, src, mic) {
                let gain = if im.reflections == 0 { 1.0 } else { beta.powi(im.reflections as i32) };
                if gain != 0.0 {
                    add_fractional_impulse(&mut h, im.delay, gain / (4.0 * PI * im.distance));
                }
            }
            per_mic.push(h);
        }
        out.push(per_mic);
    }
    Ok(out)
}

/// Reverberation time from the Schroeder backward integral, extrapolated
/// from a straight-line fit of the −5 dB to −25 dB range.
pub fn schroeder_t60(h: &[f64], sample_rate: u32) -> Option<f64> {
    let mut edc: Vec<f64> = h.iter().map(|v| v * v).collect();
    for t in (0..edc.len().saturating_sub(1)).rev() {
        edc[t] += edc[t + 1];
    }
    let total = *edc.first()?;
    if !(total > 0.0) {
        return None;
    }
    let db: Vec<f64> = edc.iter().map(|e| 10.0 * (e / total).max(1e-300).log10()).collect();
    let start = db.iter().position(|v| *v <= -5.0)?;
    let stop = db.iter().position(|v| *v <= -25.0)?;
    if stop <= start + 1 {
        return None;
    }
    let n = (stop - start) as f64;
    let ts: Vec<f64> = (start..stop).map(|t| t as f64 / sample_rate as f64).collect();
    let mean_t = ts.iter().sum::<f64>() / n;
    let mean_d = db[start..stop].iter().sum::<f64>() / n;
    let cov: f64 = ts.iter().zip(&db[start..stop]).map(|(t, d)| (t - mean_t) * (d - mean_d)).sum();
    let var: f64 = ts.iter().map(|t| (t - mean_t).powi(2)).sum();
    let slope = cov / var;
    if slope < 0.0 { Some(-60.0 / slope) } else { None }
}

/// Full linear convolution by FFT.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |x: &[f64]| {
        let mut v: Vec<Complex64> = x.iter().map(|r| Complex64::new(*r, 0.0)).collect();
        v.resize(n, Complex64::new(0.0, 0.0));
        v
    };
    let mut fa = pad(a);
    let mut fb = pad(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    fa.iter().take(out_len).map(|z| z.re / n as f64).collect()
}

/// `x_m = Σ_n s_n ⊛ rir[n][m]`, truncated to the source length.
pub fn convolve_mix(sources: &MultichannelWaveform, rirs: &[Vec<Vec<f64>>]) -> Result<MultichannelWaveform> {
    Ok(convolve_images(sources, rirs)?.0)
}

/// Mixture plus per-source images `[source] → (mics)`.
fn convolve_images(
    sources: &MultichannelWaveform,
    rirs: &[Vec<Vec<f64>>],
) -> Result<(MultichannelWaveform, Vec<MultichannelWaveform>)> {
    let n_src = sources.num_channels();
    if rirs.len() != n_src {
        return Err(MixError::DimensionMismatch(format!("{} RIR sets for {n_src} sources", rirs.len())));
    }
    let n_mics = rirs.first().map_or(0, |r| r.len());
    if n_mics == 0 || rirs.iter().any(|r| r.len() != n_mics) {
        return Err(MixError::DimensionMismatch("every source needs one RIR per mic".into()));
    }
    let len = sources.len();
    let mut mix = vec![vec![0.0; len]; n_mics];
    let mut images = Vec::with_capacity(n_src);
    for (n, per_mic) in rirs.iter().enumerate() {
        let mut img = Vec::with_capacity(n_mics);
        for (m, rir) in per_mic.iter().enumerate() {
            let mut y = fft_convolve(sources.channel(n), rir);
            y.resize(len, 0.0);
            for (acc, v) in mix[m].iter_mut().zip(&y) {
                *acc += v;
            }
            img.push(y);
        }
        images.push(MultichannelWaveform::new(sources.sample_rate(), img)?);
    }
    Ok((MultichannelWaveform::new(sources.sample_rate(), mix)?, images))
}

/// How the ground-truth mixture was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Mixing {
    /// Per-bin `M×N` matrices.
    Instantaneous(Vec<DMatrix<Complex64>>),
    /// Impulse responses `[source][mic]`.
    Convolutive(Vec<Vec<Vec<f64>>>),
}

/// Known truth behind a synthetic mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Dry sources, one channel each.
    pub sources: MultichannelWaveform,
    /// Contribution of each source at every mic.
    pub images: Vec<MultichannelWaveform>,
    pub mixing: Mixing,
    /// Generating `(W, H)` per source when the sources were synthesized.
    pub factors: Option<Vec<(Array2<f64>, Array2<f64>)>>,
}

impl GroundTruth {
    /// Source images at one mic, as separation references.
    pub fn references(&self, mic: usize) -> Vec<Vec<f64>> {
        self.images.iter().map(|img| img.channel(mic).to_vec()).collect()
    }
}

/// `x_ij = A_i s_ij` in the STFT domain, resynthesized to the time domain.
///
/// The DC and Nyquist matrices must be real, since those bins of a real
/// signal cannot carry a phase.
pub fn instantaneous_mix(
    sources: &MultichannelWaveform,
    mixing: &[DMatrix<Complex64>],
    frame_length: usize,
    frame_shift: usize,
) -> Result<(MultichannelWaveform, GroundTruth)> {
    let s = stft(sources, frame_length, frame_shift)?;
    let (bins, frames, n_src) = s.values.dim();
    if mixing.len() != bins {
        return Err(MixError::DimensionMismatch(format!("{} mixing matrices for {bins} bins", mixing.len())));
    }
    let n_mics = mixing[0].nrows();
    for (i, a) in mixing.iter().enumerate() {
        if a.ncols() != n_src || a.nrows() != n_mics {
            return Err(MixError::DimensionMismatch(format!("mixing matrix {i} is {}×{}", a.nrows(), a.ncols())));
        }
        let edge = i == 0 || (frame_length % 2 == 0 && i == bins - 1);
        if edge && a.iter().any(|z| z.im.abs() > 1e-12 * z.norm().max(f64::MIN_POSITIVE)) {
            return Err(MixError::InvalidScenario(format!("mixing matrix {i} must be real at DC and Nyquist")));
        }
        if a.is_square() {
            let sv = a.singular_values();
            let condition = sv.max() / sv.min();
            if !(condition < MAX_CONDITION) {
                return Err(MixError::IllConditionedMixing { bin: i, condition });
            }
        }
    }
    let mut mixed = Array3::zeros((bins, frames, n_mics));
    let mut image_specs = vec![Array3::<Complex64>::zeros((bins, frames, n_mics)); n_src];
    for i in 0..bins {
        for j in 0..frames {
            for n in 0..n_src {
                let sv = s.values[[i, j, n]];
                for m in 0..n_mics {
                    let contribution = mixing[i][(m, n)] * sv;
                    mixed[[i, j, m]] += contribution;
                    image_specs[n][[i, j, m]] = contribution;
                }
            }
        }
    }
    let len = sources.len();
    let mixture = istft(&s.with_values(mixed), len)?;
    let images = image_specs
        .into_iter()
        .map(|v| istft(&s.with_values(v), len))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let truth = GroundTruth { sources: sources.clone(), images, mixing: Mixing::Instantaneous(mixing.to_vec()), factors: None };
    Ok((mixture, truth))
}

/// Convolutive mixture of `sources` in `scenario`.
pub fn room_mix(sources: &MultichannelWaveform, scenario: &RoomScenario) -> Result<(MultichannelWaveform, GroundTruth)> {
    if scenario.sources.len() != sources.num_channels() {
        return Err(MixError::DimensionMismatch(format!(
            "scenario has {} sources, got {} signals",
            scenario.sources.len(),
            sources.num_channels()
        )));
    }
    let rirs = image_source_rir(scenario)?;
    let (mixture, images) = convolve_images(sources, &rirs)?;
    let truth = GroundTruth { sources: sources.clone(), images, mixing: Mixing::Convolutive(rirs), factors: None };
    Ok((mixture, truth))
}

/// Draws `s_ij ~ CN(0, Σ_k w_ik h_kj)` and synthesizes it.
///
/// Overlap-add keeps only the consistent part of a random spectrogram, a
/// fraction `frame_shift / frame_length` of its energy, so the draw is
/// scaled up to make the re-analyzed power match `λ` on average.
pub fn synth_lowrank_source(
    w: ArrayView2<f64>,
    h: ArrayView2<f64>,
    seed: u64,
    frame_length: usize,
    frame_shift: usize,
    sample_rate: u32,
) -> Result<MultichannelWaveform> {
    let bins = frame_length / 2 + 1;
    if w.nrows() != bins || w.ncols() != h.nrows() {
        return Err(MixError::DimensionMismatch(format!(
            "W {:?} and H {:?} do not fit {bins} bins",
            w.dim(),
            h.dim()
        )));
    }
    let lambda = w.dot(&h);
    let frames = h.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let redundancy = frame_length as f64 / frame_shift as f64;
    let values = Array3::from_shape_fn((bins, frames, 1), |(i, j, _)| {
        let sd = (lambda[[i, j]].max(0.0) * redundancy / 2.0).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(sd * re, sd * im)
    });
    let length = (frames - 1) * frame_shift;
    let spec = MultichannelSpectrogram { values, frame_length, frame_shift, sample_rate, signal_length: length };
    Ok(istft(&spec, length)?)
}

/// Random nonnegative factors with peaky spectra and bursty activations.
pub fn random_lowrank_factors(bins: usize, k: usize, frames: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spectral = Gamma::new(0.3, 1.0).expect("valid gamma shape");
    let mut w = Array2::from_shape_fn((bins, k), |_| spectral.sample(&mut rng));
    for mut col in w.columns_mut() {
        // Spectral tilt similar to speech and music.
        for (i, v) in col.iter_mut().enumerate() {
            *v /= 1.0 + i as f64 / 32.0;
        }
        let norm = col.sum();
        col.mapv_inplace(|v| v / norm);
    }
    let temporal = Gamma::new(0.5, 1.0).expect("valid gamma shape");
    let h = Array2::from_shape_fn((k, frames), |_| {
        if rng.random::<f64>() < 0.3 { 0.0 } else { temporal.sample(&mut rng) }
    });
    (w, h)
}

/// White noise through a random stable all-pole filter of the given order.
pub fn ar_noise_source(length: usize, order: usize, seed: u64, sample_rate: u32) -> Result<MultichannelWaveform> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Poles inside the unit circle, in conjugate pairs.
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    let mut remaining = order;
    while remaining > 0 {
        let r = rng.random_range(0.5..0.95);
        if remaining >= 2 {
            let theta = rng.random_range(0.05..PI - 0.05);
            for p in [Complex64::from_polar(r, theta), Complex64::from_polar(r, -theta)] {
                poly = multiply_root(&poly, p);
            }
            remaining -= 2;
        } else {
            poly = multiply_root(&poly, Complex64::new(r, 0.0));
            remaining -= 1;
        }
    }
    let a: Vec<f64> = poly.iter().map(|c| c.re).collect();
    let mut y = vec![0.0; length];
    for t in 0..length {
        let e: f64 = rng.sample(StandardNormal);
        let mut acc = e;
        for (k, ak) in a.iter().enumerate().skip(1) {
            if t >= k {
                acc -= ak * y[t - k];
            }
        }
        y[t] = acc;
    }
    let peak = y.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    y.iter_mut().for_each(|v| *v *= 0.5 / peak);
    Ok(MultichannelWaveform::mono(sample_rate, y)?)
}

fn multiply_root(poly: &[Complex64], root: Complex64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
    for (k, c) in poly.iter().enumerate() {
        out[k] += c;
        out[k + 1] -= c * root;
    }
    out
}

/// Frequency-independent random real `M×N` mixing with condition number below `max_condition`.
///
/// Real gains are what a true instantaneous (delay-free) mixture applies in
/// the time domain, so the STFT of the mixture is exactly `A s_ij`.
pub fn random_mixing(n_mics: usize, n_src: usize, bins: usize, max_condition: f64, seed: u64) -> Vec<DMatrix<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let a = DMatrix::from_fn(n_mics, n_src, |_, _| Complex64::new(rng.random_range(-1.0..1.0), 0.0));
        let sv = a.singular_values();
        if sv.min() > 0.0 && sv.max() / sv.min() < max_condition {
            return vec![a; bins];
        }
    }
}

/// Kinds of synthetic benchmark mixtures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SyntheticKind {
    Instantaneous,
    Room { rt60: f64 },
}

/// Settings for [`synthetic_case`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n_sources: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub frame_length: usize,
    pub frame_shift: usize,
    /// Rank of each generated source.
    pub rank: usize,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind) -> Self {
        Self {
            kind,
            n_sources: 2,
            duration_s: 2.0,
            sample_rate: 16000,
            frame_length: crate::signal::DEFAULT_FRAME_LENGTH,
            frame_shift: crate::signal::DEFAULT_FRAME_SHIFT,
            rank: 5,
        }
    }
}

/// Dry low-rank sources, one channel each, peak-normalized to 0.5, with their generating factors.
pub fn lowrank_sources(spec: &SyntheticSpec, seed: u64) -> Result<(MultichannelWaveform, Vec<(Array2<f64>, Array2<f64>)>)> {
    let bins = spec.frame_length / 2 + 1;
    let frames = (spec.duration_s * spec.sample_rate as f64 / spec.frame_shift as f64).round() as usize + 1;
    let mut channels = Vec::with_capacity(spec.n_sources);
    let mut factors = Vec::with_capacity(spec.n_sources);
    for n in 0..spec.n_sources {
        let sub = seed.wrapping_mul(1_000_003).wrapping_add(n as u64);
        let (w, h) = random_lowrank_factors(bins, spec.rank, frames, sub);
        let s = synth_lowrank_source(w.view(), h.view(), sub ^ 0xa5a5, spec.frame_length, spec.frame_shift, spec.sample_rate)?;
        let peak = s.peak().max(f64::MIN_POSITIVE);
        channels.push(s.channel(0).iter().map(|v| v * 0.5 / peak).collect::<Vec<_>>());
        factors.push((w, h));
    }
    Ok((MultichannelWaveform::new(spec.sample_rate, channels)?, factors))
}

/// Low-rank sources mixed as requested, peak-normalized to 0.5.
pub fn synthetic_case(spec: &SyntheticSpec, seed: u64) -> Result<(MultichannelWaveform, GroundTruth)> {
    let bins = spec.frame_length / 2 + 1;
    let (sources, factors) = lowrank_sources(spec, seed)?;
    let (mixture, mut truth) = match spec.kind {
        SyntheticKind::Instantaneous => {
            let a = random_mixing(spec.n_sources, spec.n_sources, bins, 10.0, seed ^ 0x0ddba11);
            instantaneous_mix(&sources, &a, spec.frame_length, spec.frame_shift)?
        }
        SyntheticKind::Room { rt60 } => {
            let mut scenario = RoomScenario::default_condition(rt60, spec.sample_rate);
            if spec.n_sources != 2 {
                let angles: Vec<f64> = (0..spec.n_sources)
                    .map(|n| -60.0 + 120.0 * n as f64 / (spec.n_sources as f64 - 1.0).max(1.0))
                    .collect();
                scenario.sources = polar_sources([3.0, 3.0, 1.5], 2.0, &angles);
                scenario.mics = linear_array([3.0, 3.0, 1.5], spec.n_sources, 0.0566);
            }
            room_mix(&sources, &scenario)?
        }
    };
    truth.factors = Some(factors);
    Ok((mixture, truth))
}
