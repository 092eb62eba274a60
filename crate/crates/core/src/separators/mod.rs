//! End-to-end separation drivers.
//!
//! Every driver takes the mixture STFT and a [`SeparatorConfig`], iterates
//! the model updates for a fixed number of outer iterations and returns a
//! [`SeparationRun`] holding the per-iteration objective (a log-posterior
//! up to constants, so larger is better), the separated sources at the
//! reference channel and the final parameters.

mod full_rank;
mod init;
mod rank1;
mod reconstruct;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use ndarray::Array3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{istft, stft, MultichannelSpectrogram, MultichannelWaveform, SignalError};
use crate::source_model::{ModelError, SourceModel, DEFAULT_ETA, DEFAULT_GAMMA_INIT};
use crate::spatial::{DemixingSystem, SpatialCovariances};

pub use full_rank::{objective_m_mnmf, run_m_mnmf, run_mnmf};
pub use init::{initialize_source_model, InitStrategy};
pub use rank1::{objective_auxiva, objective_m_ilrma, run_auxiva, run_ilrma, run_m_ilrma};
pub use reconstruct::{multichannel_wiener_filter, projection_back};

pub const DEFAULT_BASES: usize = 10;
pub const DEFAULT_ITERATIONS: usize = 100;
/// Number of trailing iterations the early-stopping test looks at.
pub const CONVERGENCE_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Auxiva,
    Mnmf,
    Ilrma,
    MMnmf,
    MIlrma,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Auxiva, Method::Mnmf, Method::Ilrma, Method::MMnmf, Method::MIlrma];

    pub fn name(self) -> &'static str {
        match self {
            Method::Auxiva => "auxiva",
            Method::Mnmf => "mnmf",
            Method::Ilrma => "ilrma",
            Method::MMnmf => "m-mnmf",
            Method::MIlrma => "m-ilrma",
        }
    }

    pub fn uses_minvol(self) -> bool {
        matches!(self, Method::MMnmf | Method::MIlrma)
    }

    pub fn uses_source_model(self) -> bool {
        self != Method::Auxiva
    }

    /// Rank-1 spatial models need as many channels as sources.
    pub fn requires_determined(self) -> bool {
        matches!(self, Method::Auxiva | Method::Ilrma | Method::MIlrma)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = SeparationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| SeparationError::InvalidConfig(format!("unknown method '{s}'")))
    }
}

/// How the MinVol weight evolves over a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaSchedule {
    /// `γ = gamma_init` throughout.
    Fixed,
    /// `γ` is rescaled once from `gamma_init` by the data/prior ratio right
    /// after initialization, then held.
    InitOnly,
    /// The ratio update is applied after every basis sweep. The objective
    /// changes with `γ`, so the trace is not monotone in this mode.
    PerIteration,
}

impl FromStr for GammaSchedule {
    type Err = SeparationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "fixed" => Ok(Self::Fixed),
            "init-only" => Ok(Self::InitOnly),
            "per-iteration" => Ok(Self::PerIteration),
            other => Err(SeparationError::InvalidConfig(format!("unknown gamma schedule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatorConfig {
    pub method: Method,
    pub n_sources: usize,
    pub n_bases: usize,
    pub max_iterations: usize,
    pub eta: f64,
    pub gamma_init: f64,
    pub gamma_schedule: GammaSchedule,
    #[serde(default)]
    pub init: InitStrategy,
    pub seed: u64,
    pub frame_length: usize,
    pub frame_shift: usize,
    pub convergence_rel_tol: Option<f64>,
    pub reference_channel: usize,
}

impl SeparatorConfig {
    pub fn new(method: Method, n_sources: usize) -> Self {
        Self {
            method,
            n_sources,
            n_bases: DEFAULT_BASES,
            max_iterations: DEFAULT_ITERATIONS,
            eta: DEFAULT_ETA,
            gamma_init: DEFAULT_GAMMA_INIT,
            gamma_schedule: GammaSchedule::InitOnly,
            init: InitStrategy::Random,
            seed: 0,
            frame_length: crate::signal::DEFAULT_FRAME_LENGTH,
            frame_shift: crate::signal::DEFAULT_FRAME_SHIFT,
            convergence_rel_tol: None,
            reference_channel: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SeparationError> {
        let bad = |msg: String| Err(SeparationError::InvalidConfig(msg));
        if self.n_sources == 0 {
            return bad("number of sources must be positive".into());
        }
        if self.method.uses_source_model() && self.n_bases == 0 {
            return bad("number of bases must be positive".into());
        }
        if self.max_iterations == 0 {
            return bad("number of iterations must be positive".into());
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.gamma_init >= 0.0) || !self.gamma_init.is_finite() {
            return bad(format!("gamma must be nonnegative, got {}", self.gamma_init));
        }
        if self.gamma_init == 0.0 && self.gamma_schedule != GammaSchedule::Fixed {
            return bad("gamma = 0 requires the fixed gamma schedule".into());
        }
        if let Some(tol) = self.convergence_rel_tol {
            if !(tol > 0.0) {
                return bad(format!("convergence tolerance must be positive, got {tol}"));
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &MultichannelSpectrogram) -> Result<(), SeparationError> {
        self.validate()?;
        let m = x.channels();
        if self.method.requires_determined() && m != self.n_sources {
            return Err(SeparationError::DimensionMismatch(format!(
                "{} needs as many channels as sources (got {m} channels, {} sources)",
                self.method, self.n_sources
            )));
        }
        if self.reference_channel >= m {
            return Err(SeparationError::DimensionMismatch(format!(
                "reference channel {} out of range for {m} channels",
                self.reference_channel
            )));
        }
        if x.frames() == 0 || x.values.iter().all(|z| z.norm_sqr() == 0.0) {
            return Err(SeparationError::DimensionMismatch("mixture is empty or silent".into()));
        }
        if x.values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(SeparationError::NumericalBreakdown {
                message: "mixture contains non-finite values".into(),
                trace: Vec::new(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SeparationError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("numerical breakdown after {} iterations: {message}", trace.len())]
    NumericalBreakdown { message: String, trace: Vec<f64> },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

impl SeparationError {
    fn breakdown(err: ModelError, trace: &[f64]) -> Self {
        match err {
            ModelError::DimensionMismatch(msg) => SeparationError::DimensionMismatch(msg),
            other => SeparationError::NumericalBreakdown { message: other.to_string(), trace: trace.to_vec() },
        }
    }

    /// Objective values recorded before a breakdown.
    pub fn partial_trace(&self) -> Option<&[f64]> {
        match self {
            SeparationError::NumericalBreakdown { trace, .. } => Some(trace),
            _ => None,
        }
    }
}

/// Parameters at the end of a run. Which fields are set depends on the method.
#[derive(Debug, Clone, Default)]
pub struct FinalState {
    pub model: Option<SourceModel>,
    pub demixing: Option<DemixingSystem>,
    pub covariances: Option<SpatialCovariances>,
    pub gamma: f64,
}

#[derive(Debug, Clone)]
pub struct SeparationRun {
    pub config: SeparatorConfig,
    /// Objective before the first iteration.
    pub initial_objective: f64,
    /// Objective after each iteration.
    pub objective_trace: Vec<f64>,
    /// `γ` in effect during each iteration (zero for methods without the prior).
    pub gamma_trace: Vec<f64>,
    /// Source estimates at the reference channel, `(bin, frame, source)`.
    pub source_spectrograms: Array3<Complex64>,
    /// Time-domain estimates, one channel per source.
    pub separated: MultichannelWaveform,
    pub wall_time: Duration,
    pub iteration_count: usize,
    pub state: FinalState,
}

/// Runs the configured method on a spectrogram.
pub fn run(x: &MultichannelSpectrogram, cfg: &SeparatorConfig) -> Result<SeparationRun, SeparationError> {
    match cfg.method {
        Method::Auxiva => run_auxiva(x, cfg),
        Method::Mnmf => run_mnmf(x, cfg),
        Method::Ilrma => run_ilrma(x, cfg),
        Method::MMnmf => run_m_mnmf(x, cfg),
        Method::MIlrma => run_m_ilrma(x, cfg),
    }
}

/// STFT, separation and resynthesis of a time-domain mixture.
pub fn separate(mixture: &MultichannelWaveform, cfg: &SeparatorConfig) -> Result<SeparationRun, SeparationError> {
    cfg.validate()?;
    let x = stft(mixture, cfg.frame_length, cfg.frame_shift)?;
    run(&x, cfg)
}

/// Bookkeeping shared by all drivers.
struct Progress {
    start: Instant,
    trace: Vec<f64>,
    gamma_trace: Vec<f64>,
    tol: Option<f64>,
}

impl Progress {
    fn new(cfg: &SeparatorConfig) -> Self {
        Self {
            start: Instant::now(),
            trace: Vec::with_capacity(cfg.max_iterations),
            gamma_trace: Vec::with_capacity(cfg.max_iterations),
            tol: cfg.convergence_rel_tol,
        }
    }

    /// Records one iteration; returns `true` when early stopping triggers.
    fn push(&mut self, objective: f64, gamma: f64) -> Result<bool, SeparationError> {
        if !objective.is_finite() {
            return Err(SeparationError::NumericalBreakdown {
                message: format!("objective became {objective}"),
                trace: self.trace.clone(),
            });
        }
        self.trace.push(objective);
        self.gamma_trace.push(gamma);
        let Some(tol) = self.tol else { return Ok(false) };
        let n = self.trace.len();
        if n <= CONVERGENCE_WINDOW {
            return Ok(false);
        }
        let recent = &self.trace[n - CONVERGENCE_WINDOW - 1..];
        Ok(recent.windows(2).all(|w| (w[1] - w[0]).abs() <= tol * w[0].abs().max(1.0)))
    }

    fn fail(&self, err: ModelError) -> SeparationError {
        SeparationError::breakdown(err, &self.trace)
    }

    fn finish(
        self,
        cfg: &SeparatorConfig,
        x: &MultichannelSpectrogram,
        initial_objective: f64,
        sources: Array3<Complex64>,
        state: FinalState,
    ) -> Result<SeparationRun, SeparationError> {
        if sources.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(SeparationError::NumericalBreakdown {
                message: "non-finite source estimate".into(),
                trace: self.trace,
            });
        }
        let separated = istft(&x.with_values(sources.clone()), x.signal_length)?;
        Ok(SeparationRun {
            config: cfg.clone(),
            initial_objective,
            iteration_count: self.trace.len(),
            objective_trace: self.trace,
            gamma_trace: self.gamma_trace,
            source_spectrograms: sources,
            separated,
            wall_time: self.start.elapsed(),
            state,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("M_ILRMA".parse::<Method>().unwrap(), Method::MIlrma);
        assert!(matches!("nmf".parse::<Method>(), Err(SeparationError::InvalidConfig(_))));
        assert!(Method::MMnmf.uses_minvol() && !Method::Mnmf.uses_minvol());
        assert!(Method::Ilrma.requires_determined() && !Method::MMnmf.requires_determined());
        assert!(!Method::Auxiva.uses_source_model());
    }

    #[test]
    fn gamma_schedule_parsing() {
        assert_eq!("fixed".parse::<GammaSchedule>().unwrap(), GammaSchedule::Fixed);
        assert_eq!("Init_Only".parse::<GammaSchedule>().unwrap(), GammaSchedule::InitOnly);
        assert_eq!("per-iteration".parse::<GammaSchedule>().unwrap(), GammaSchedule::PerIteration);
        assert!("sometimes".parse::<GammaSchedule>().is_err());
        assert_eq!("snpa".parse::<InitStrategy>().unwrap(), InitStrategy::Snpa);
        assert!("zeros".parse::<InitStrategy>().is_err());
    }

    #[test]
    fn config_validation() {
        let ok = SeparatorConfig::new(Method::MIlrma, 2);
        assert!(ok.validate().is_ok());
        assert_eq!((ok.n_bases, ok.max_iterations, ok.eta, ok.gamma_init), (10, 100, 0.5, 1e-2));
        let cases: Vec<fn(&mut SeparatorConfig)> = vec![
            |c| c.n_sources = 0,
            |c| c.n_bases = 0,
            |c| c.max_iterations = 0,
            |c| c.eta = 0.0,
            |c| c.eta = f64::NAN,
            |c| c.gamma_init = -1.0,
            |c| c.gamma_init = 0.0,
            |c| c.convergence_rel_tol = Some(0.0),
        ];
        for f in cases {
            let mut c = ok.clone();
            f(&mut c);
            assert!(matches!(c.validate(), Err(SeparationError::InvalidConfig(_))), "{c:?}");
        }
        let mut zero = ok.clone();
        zero.gamma_init = 0.0;
        zero.gamma_schedule = GammaSchedule::Fixed;
        assert!(zero.validate().is_ok());
        let mut aux = SeparatorConfig::new(Method::Auxiva, 2);
        aux.n_bases = 0;
        assert!(aux.validate().is_ok());
    }

    #[test]
    fn early_stopping_window() {
        let mut cfg = SeparatorConfig::new(Method::Ilrma, 2);
        cfg.convergence_rel_tol = Some(1e-3);
        let mut p = Progress::new(&cfg);
        for v in [1.0, 2.0, 3.0, 3.0, 3.0, 3.0] {
            assert!(!p.push(v, 0.0).unwrap());
        }
        assert!(!p.push(3.0, 0.0).unwrap());
        assert!(p.push(3.0, 0.0).unwrap());

        let mut never = Progress::new(&SeparatorConfig::new(Method::Ilrma, 2));
        for _ in 0..20 {
            assert!(!never.push(1.0, 0.0).unwrap());
        }
        let err = never.push(f64::NAN, 0.0).unwrap_err();
        assert_eq!(err.partial_trace().unwrap().len(), 20);
    }
}
