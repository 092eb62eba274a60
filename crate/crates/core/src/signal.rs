//! Short-time Fourier analysis/synthesis and WAV file I/O.

use std::path::Path;
use std::sync::Arc;

use ndarray::{Array3, ArrayView2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

pub const DEFAULT_FRAME_LENGTH: usize = 1024;
pub const DEFAULT_FRAME_SHIFT: usize = 512;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("invalid framing: {0}")]
    InvalidFraming(String),
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("I/O failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SignalError>;

/// Equal-length real channels sharing one sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelWaveform {
    sample_rate: u32,
    channels: Vec<Vec<f64>>,
}

impl MultichannelWaveform {
    pub fn new(sample_rate: u32, channels: Vec<Vec<f64>>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(SignalError::InvalidWaveform("sample rate must be positive".into()));
        }
        if channels.is_empty() {
            return Err(SignalError::InvalidWaveform("at least one channel required".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(SignalError::InvalidWaveform("channels differ in length".into()));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SignalError::InvalidWaveform("non-finite sample".into()));
        }
        Ok(Self { sample_rate, channels })
    }

    pub fn mono(sample_rate: u32, samples: Vec<f64>) -> Result<Self> {
        Self::new(sample_rate, vec![samples])
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        &self.channels[m]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn peak(&self) -> f64 {
        self.channels.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// One-sided complex STFT of a multichannel signal, indexed `(bin, frame, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSpectrogram {
    pub values: Array3<Complex64>,
    pub frame_length: usize,
    pub frame_shift: usize,
    pub sample_rate: u32,
    /// Length of the time-domain signal the frames were computed from.
    pub signal_length: usize,
}

impl MultichannelSpectrogram {
    pub fn freq_bins(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[2]
    }

    /// Same framing metadata, new values.
    pub fn with_values(&self, values: Array3<Complex64>) -> Self {
        Self {
            values,
            frame_length: self.frame_length,
            frame_shift: self.frame_shift,
            sample_rate: self.sample_rate,
            signal_length: self.signal_length,
        }
    }

    /// `|x_ijm|²` for one channel as an `I×J` matrix.
    pub fn channel_power(&self, m: usize) -> ndarray::Array2<f64> {
        self.values.index_axis(ndarray::Axis(2), m).map(|z| z.norm_sqr())
    }
}

/// Periodic square-root Hann window.
pub fn sqrt_hann(frame_length: usize) -> Vec<f64> {
    (0..frame_length)
        .map(|n| {
            let phase = std::f64::consts::PI * n as f64 / frame_length as f64;
            phase.sin()
        })
        .collect()
}

/// Frame layout shared by analysis and synthesis.
#[derive(Debug, Clone, Copy)]
struct Framing {
    pad: usize,
    frames: usize,
    padded_length: usize,
}

impl Framing {
    fn new(signal_length: usize, frame_length: usize, frame_shift: usize) -> Result<Self> {
        if frame_length < 2 || frame_length % 2 != 0 {
            return Err(SignalError::InvalidFraming(format!(
                "frame length {frame_length} must be even and ≥ 2"
            )));
        }
        if frame_shift == 0 || frame_length % frame_shift != 0 {
            return Err(SignalError::InvalidFraming(format!(
                "frame shift {frame_shift} must divide frame length {frame_length}"
            )));
        }
        if frame_shift > frame_length / 2 {
            return Err(SignalError::InvalidFraming(
                "frame shift must be at most half the frame length for overlap-add".into(),
            ));
        }
        if signal_length < frame_length {
            return Err(SignalError::InvalidFraming(format!(
                "signal length {signal_length} shorter than frame length {frame_length}"
            )));
        }
        let pad = frame_length / 2;
        let reflected = signal_length + 2 * pad;
        let frames = (reflected - frame_length).div_ceil(frame_shift) + 1;
        let padded_length = (frames - 1) * frame_shift + frame_length;
        Ok(Self { pad, frames, padded_length })
    }
}

/// Reflect-pads `x` by `pad` on the left and to `total` samples on the right
/// (reflection first, zeros after).
fn reflect_pad(x: &[f64], pad: usize, total: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; total];
    for (k, slot) in out.iter_mut().enumerate() {
        let pos = k as isize - pad as isize;
        let idx = if pos < 0 {
            Some((-pos) as usize)
        } else if (pos as usize) < n {
            Some(pos as usize)
        } else {
            let over = pos as usize - (n - 1);
            if over < n && over <= pad {
                Some(n - 1 - over)
            } else {
                None
            }
        };
        if let Some(i) = idx {
            *slot = x[i.min(n - 1)];
        }
    }
    out
}

fn plan(frame_length: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(frame_length)
    } else {
        planner.plan_fft_forward(frame_length)
    }
}

/// One-sided STFT with a square-root Hann analysis window and centered frames.
pub fn stft(
    w: &MultichannelWaveform,
    frame_length: usize,
    frame_shift: usize,
) -> Result<MultichannelSpectrogram> {
    let framing = Framing::new(w.len(), frame_length, frame_shift)?;
    let window = sqrt_hann(frame_length);
    let fft = plan(frame_length, false);
    let bins = frame_length / 2 + 1;
    let mut values = Array3::zeros((bins, framing.frames, w.num_channels()));
    let mut buf = vec![Complex64::new(0.0, 0.0); frame_length];
    for (m, channel) in w.channels().iter().enumerate() {
        let padded = reflect_pad(channel, framing.pad, framing.padded_length);
        for j in 0..framing.frames {
            let start = j * frame_shift;
            for (n, slot) in buf.iter_mut().enumerate() {
                *slot = Complex64::new(padded[start + n] * window[n], 0.0);
            }
            fft.process(&mut buf);
            for i in 0..bins {
                values[[i, j, m]] = buf[i];
            }
        }
    }
    Ok(MultichannelSpectrogram {
        values,
        frame_length,
        frame_shift,
        sample_rate: w.sample_rate(),
        signal_length: w.len(),
    })
}

/// Weighted overlap-add inverse of [`stft`].
///
/// Each synthesized frame is windowed again and the sum is divided by the
/// accumulated squared window, which makes the round trip exact wherever
/// that sum is nonzero.
pub fn istft(s: &MultichannelSpectrogram, output_length: usize) -> Result<MultichannelWaveform> {
    let frame_length = s.frame_length;
    if s.freq_bins() != frame_length / 2 + 1 {
        return Err(SignalError::InvalidFraming(format!(
            "{} bins inconsistent with frame length {frame_length}",
            s.freq_bins()
        )));
    }
    if s.frame_shift == 0 || frame_length % s.frame_shift != 0 {
        return Err(SignalError::InvalidFraming("frame shift must divide frame length".into()));
    }
    let pad = frame_length / 2;
    let frames = s.frames();
    let padded_length = (frames.max(1) - 1) * s.frame_shift + frame_length;
    if output_length + pad > padded_length {
        return Err(SignalError::InvalidFraming(format!(
            "{frames} frames cannot cover {output_length} samples"
        )));
    }
    let window = sqrt_hann(frame_length);
    let ifft = plan(frame_length, true);
    let mut norm = vec![0.0; padded_length];
    for j in 0..frames {
        let start = j * s.frame_shift;
        for n in 0..frame_length {
            norm[start + n] += window[n] * window[n];
        }
    }
    let mut channels = Vec::with_capacity(s.channels());
    let mut buf = vec![Complex64::new(0.0, 0.0); frame_length];
    for m in 0..s.channels() {
        let mut acc = vec![0.0; padded_length];
        for j in 0..frames {
            fill_full_spectrum(&mut buf, s.values.index_axis(ndarray::Axis(2), m), j);
            ifft.process(&mut buf);
            let start = j * s.frame_shift;
            for n in 0..frame_length {
                acc[start + n] += buf[n].re / frame_length as f64 * window[n];
            }
        }
        let out: Vec<f64> = (0..output_length)
            .map(|t| {
                let k = t + pad;
                if norm[k] > 1e-12 {
                    acc[k] / norm[k]
                } else {
                    0.0
                }
            })
            .collect();
        channels.push(out);
    }
    MultichannelWaveform::new(s.sample_rate, channels)
}

/// Rebuilds the full conjugate-symmetric spectrum of frame `j`.
fn fill_full_spectrum(buf: &mut [Complex64], spec: ArrayView2<Complex64>, j: usize) {
    let len = buf.len();
    let half = len / 2;
    for i in 0..=half {
        buf[i] = spec[[i, j]];
    }
    buf[0].im = 0.0;
    buf[half].im = 0.0;
    for i in 1..half {
        buf[len - i] = spec[[i, j]].conj();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Pcm16,
    Float32,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<MultichannelWaveform> {
    // Open failures are I/O problems; anything hound rejects afterwards is a
    // format problem.
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let reader = hound::WavReader::new(file).map_err(format_error)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(SignalError::UnsupportedFormat("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(format_error)?,
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(format_error)?,
        (fmt, bits) => {
            return Err(SignalError::UnsupportedFormat(format!("{fmt:?} with {bits} bits")));
        }
    };
    let frames = interleaved.len() / channels;
    let mut out = vec![Vec::with_capacity(frames); channels];
    for frame in interleaved.chunks_exact(channels) {
        for (m, v) in frame.iter().enumerate() {
            out[m].push(*v);
        }
    }
    MultichannelWaveform::new(spec.sample_rate, out)
}

pub fn write_wav(path: impl AsRef<Path>, w: &MultichannelWaveform, bit_depth: BitDepth) -> Result<()> {
    let channels = u16::try_from(w.num_channels())
        .map_err(|_| SignalError::UnsupportedFormat("too many channels".into()))?;
    let spec = hound::WavSpec {
        channels,
        sample_rate: w.sample_rate(),
        bits_per_sample: match bit_depth {
            BitDepth::Pcm16 => 16,
            BitDepth::Float32 => 32,
        },
        sample_format: match bit_depth {
            BitDepth::Pcm16 => hound::SampleFormat::Int,
            BitDepth::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(map_hound)?;
    for t in 0..w.len() {
        for m in 0..w.num_channels() {
            let v = w.channel(m)[t];
            match bit_depth {
                BitDepth::Float32 => writer.write_sample(v as f32),
                BitDepth::Pcm16 => {
                    let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(q)
                }
            }
            .map_err(map_hound)?;
        }
    }
    writer.finalize().map_err(map_hound)
}

fn map_hound(e: hound::Error) -> SignalError {
    match e {
        hound::Error::IoError(io) => SignalError::IoFailure(io),
        other => SignalError::UnsupportedFormat(other.to_string()),
    }
}

fn format_error(e: hound::Error) -> SignalError {
    SignalError::UnsupportedFormat(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn interior_rel_error(x: &[f64], y: &[f64], edge: usize) -> f64 {
        let range = edge..x.len() - edge;
        let num: f64 = range.clone().map(|t| (x[t] - y[t]).powi(2)).sum();
        let den: f64 = range.map(|t| x[t].powi(2)).sum();
        (num / den).sqrt()
    }

    #[test]
    fn zeros_map_to_zeros() {
        let w = MultichannelWaveform::mono(16000, vec![0.0; 4096]).unwrap();
        let s = stft(&w, 1024, 512).unwrap();
        assert_eq!(s.freq_bins(), 513);
        assert!(s.values.iter().all(|z| z.norm() == 0.0));
        let back = istft(&s, 4096).unwrap();
        assert!(back.channel(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn framing_errors() {
        let w = MultichannelWaveform::mono(16000, vec![0.0; 4096]).unwrap();
        assert!(matches!(stft(&w, 1024, 300), Err(SignalError::InvalidFraming(_))));
        let short = MultichannelWaveform::mono(16000, vec![0.0; 100]).unwrap();
        assert!(matches!(stft(&short, 1024, 512), Err(SignalError::InvalidFraming(_))));
    }

    #[test]
    fn round_trip_noise_is_exact_on_interior() {
        for (len, shift) in [(32000, 512), (5000, 256), (4096, 128)] {
            let x = noise(len, 7);
            let w = MultichannelWaveform::new(16000, vec![x.clone(), noise(len, 8)]).unwrap();
            let s = stft(&w, 1024, shift).unwrap();
            let back = istft(&s, len).unwrap();
            assert!(interior_rel_error(&x, back.channel(0), 1024) < 1e-10);
            // Reflect padding makes the edges exact too.
            assert!(interior_rel_error(&x, back.channel(0), 0) < 1e-10);
        }
    }

    #[test]
    fn bin_centered_sinusoid_concentrates_energy() {
        let len = 8192;
        let bin = 37;
        let x: Vec<f64> = (0..len)
            .map(|t| (2.0 * std::f64::consts::PI * bin as f64 * t as f64 / 1024.0).cos())
            .collect();
        let s = stft(&MultichannelWaveform::mono(16000, x).unwrap(), 1024, 512).unwrap();
        for j in 2..s.frames() - 2 {
            let total: f64 = (0..s.freq_bins()).map(|i| s.values[[i, j, 0]].norm_sqr()).sum();
            let near: f64 = (bin - 1..=bin + 1).map(|i| s.values[[i, j, 0]].norm_sqr()).sum();
            assert!(near / total >= 0.99, "frame {j}: {}", near / total);
        }
    }

    #[test]
    fn centered_impulse_gives_window_dft() {
        let len = 4096;
        let frame = 3;
        let mut x = vec![0.0; len];
        // Frame j covers padded samples [j·R, j·R + L); its center maps to
        // original sample j·R.
        let center = frame * 512;
        x[center] = 1.0;
        let s = stft(&MultichannelWaveform::mono(16000, x).unwrap(), 1024, 512).unwrap();
        let window = sqrt_hann(1024);
        for i in 0..s.freq_bins() {
            // Direct DFT of a unit impulse at n = L/2 weighted by w[L/2].
            let angle = -2.0 * std::f64::consts::PI * i as f64 * 512.0 / 1024.0;
            let expected = Complex64::from_polar(window[512], angle);
            assert!((s.values[[i, frame, 0]] - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn parseval_per_frame() {
        let x = noise(6000, 3);
        let s = stft(&MultichannelWaveform::mono(16000, x.clone()).unwrap(), 1024, 512).unwrap();
        let window = sqrt_hann(1024);
        let padded = reflect_pad(&x, 512, (s.frames() - 1) * 512 + 1024);
        for j in 0..s.frames() {
            let time: f64 = (0..1024).map(|n| (padded[j * 512 + n] * window[n]).powi(2)).sum();
            let mut freq = s.values[[0, j, 0]].norm_sqr() + s.values[[512, j, 0]].norm_sqr();
            freq += 2.0 * (1..512).map(|i| s.values[[i, j, 0]].norm_sqr()).sum::<f64>();
            freq /= 1024.0;
            assert!((time - freq).abs() <= 1e-8 * time.max(1e-300));
        }
    }

    #[test]
    fn wav_float_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let x: Vec<f64> = noise(1000, 4).into_iter().map(|v| f64::from(v as f32)).collect();
        let w = MultichannelWaveform::new(16000, vec![x.clone(), x.iter().map(|v| -v).collect()]).unwrap();
        write_wav(&path, &w, BitDepth::Float32).unwrap();
        assert_eq!(read_wav(&path).unwrap(), w);
    }

    #[test]
    fn wav_pcm16_quantization_bound() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.wav");
        let x: Vec<f64> = (0..2000).map(|t| (t as f64 * 0.05).sin()).collect();
        let w = MultichannelWaveform::mono(8000, x.clone()).unwrap();
        write_wav(&path, &w, BitDepth::Pcm16).unwrap();
        let back = read_wav(&path).unwrap();
        let err = x.iter().zip(back.channel(0)).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1.0 / 32768.0);
    }

    #[test]
    fn malformed_header_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"RIFF\x10\x00\x00\x00WAVEjunkjunkjunk").unwrap();
        let err = read_wav(&path);
        assert!(matches!(err, Err(SignalError::UnsupportedFormat(_))), "{err:?}");
        assert!(matches!(read_wav(dir.path().join("missing.wav")), Err(SignalError::IoFailure(_))));
    }
}
