use std::path::{Path, PathBuf};
use std::time::Instant;

use bss_core::separators::{self, GammaSchedule, InitStrategy, Method, SeparationRun, SeparatorConfig};
use bss_core::signal::{read_wav, stft, MultichannelSpectrogram};
use bss_core::spatial::{demix, demixed_power};
use clap::Args;
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::manifest::{resolve_seed, RunManifest};
use crate::model::SavedModel;
use crate::output::{create_dir, save_wav, trace_rows, write_csv};

#[derive(Debug, Args)]
pub struct SeparateArgs {
    /// Multichannel mixture WAV.
    #[arg(long)]
    pub input: PathBuf,
    /// auxiva, mnmf, ilrma, m-mnmf or m-ilrma.
    #[arg(long)]
    pub method: Option<Method>,
    /// Number of sources to extract.
    #[arg(long)]
    pub sources: Option<usize>,
    /// NMF bases per source.
    #[arg(long)]
    pub bases: Option<usize>,
    /// Outer iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Log-determinant ridge of the volume penalty.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Initial volume penalty weight.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// fixed, init-only or per-iteration.
    #[arg(long)]
    pub gamma_schedule: Option<GammaSchedule>,
    /// random or snpa.
    #[arg(long)]
    pub init: Option<InitStrategy>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub frame_length: Option<usize>,
    #[arg(long)]
    pub frame_shift: Option<usize>,
    /// Channel the separated images are projected onto.
    #[arg(long)]
    pub reference: Option<usize>,
    /// Stop early once the relative objective change stays below this.
    #[arg(long)]
    pub tol: Option<f64>,
    /// JSON file with defaults for any of the options above.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "separated")]
    pub out: PathBuf,
    /// Also write the per-iteration objective to trace.csv.
    #[arg(long)]
    pub trace: bool,
}

/// Config file contents; field names follow [`SeparatorConfig`] with the
/// flag names accepted as aliases, so a manifest's `config` can be reused.
#[derive(Debug, Default, Deserialize)]
struct ConfigFile {
    method: Option<Method>,
    #[serde(alias = "sources")]
    n_sources: Option<usize>,
    #[serde(alias = "bases")]
    n_bases: Option<usize>,
    #[serde(alias = "iters")]
    max_iterations: Option<usize>,
    eta: Option<f64>,
    #[serde(alias = "gamma")]
    gamma_init: Option<f64>,
    gamma_schedule: Option<GammaSchedule>,
    init: Option<InitStrategy>,
    seed: Option<u64>,
    frame_length: Option<usize>,
    frame_shift: Option<usize>,
    #[serde(alias = "reference")]
    reference_channel: Option<usize>,
    #[serde(alias = "tol")]
    convergence_rel_tol: Option<f64>,
}

fn load_config_file(path: &Path) -> CliResult<ConfigFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn build_config(args: &SeparateArgs) -> CliResult<SeparatorConfig> {
    let file = match &args.config {
        Some(path) => load_config_file(path)?,
        None => ConfigFile::default(),
    };
    let method = args.method.or(file.method).ok_or_else(|| CliError::invalid("--method is required"))?;
    let n_sources = args.sources.or(file.n_sources).ok_or_else(|| CliError::invalid("--sources is required"))?;
    let mut cfg = SeparatorConfig::new(method, n_sources);
    macro_rules! layer {
        ($field:ident, $flag:expr, $file:expr) => {
            if let Some(v) = $flag.or($file) {
                cfg.$field = v;
            }
        };
    }
    layer!(n_bases, args.bases, file.n_bases);
    layer!(max_iterations, args.iters, file.max_iterations);
    layer!(eta, args.eta, file.eta);
    layer!(gamma_init, args.gamma, file.gamma_init);
    layer!(gamma_schedule, args.gamma_schedule, file.gamma_schedule);
    layer!(init, args.init, file.init);
    layer!(frame_length, args.frame_length, file.frame_length);
    layer!(frame_shift, args.frame_shift, file.frame_shift);
    layer!(reference_channel, args.reference, file.reference_channel);
    cfg.convergence_rel_tol = args.tol.or(file.convergence_rel_tol);
    cfg.seed = resolve_seed(args.seed, file.seed.unwrap_or(0))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Per-source power the source model was fit to.
pub fn model_power(result: &SeparationRun, x: &MultichannelSpectrogram) -> CliResult<ndarray::Array3<f64>> {
    if let Some(system) = &result.state.demixing {
        let y = demix(system, x).map_err(CliError::numerical)?;
        return Ok(demixed_power(&y));
    }
    let (bins, frames, n) = result.source_spectrograms.dim();
    Ok(ndarray::Array3::from_shape_fn((n, bins, frames), |(s, i, j)| {
        result.source_spectrograms[[i, j, s]].norm_sqr()
    }))
}

pub fn run(args: SeparateArgs, argv: &[String]) -> CliResult<()> {
    let start = Instant::now();
    let cfg = build_config(&args)?;
    let mixture = read_wav(&args.input)?;
    let mut manifest = RunManifest::new(
        "separate",
        argv,
        serde_json::to_value(&cfg).map_err(|e| CliError::io("serializing config", e))?,
        Some(cfg.seed),
    );
    manifest.hash_input(&args.input)?;
    if let Some(path) = &args.config {
        manifest.hash_input(path)?;
    }
    let x = stft(&mixture, cfg.frame_length, cfg.frame_shift)?;
    create_dir(&args.out)?;
    let trace_path = args.out.join("trace.csv");
    let result = match separators::run(&x, &cfg) {
        Ok(r) => r,
        Err(err) => {
            if let Some(trace) = err.partial_trace() {
                if args.trace {
                    write_csv(&trace_path, &trace_rows(None, trace, &[]))?;
                    manifest.outputs.push(trace_path);
                }
                manifest.wall_time_s = start.elapsed().as_secs_f64();
                manifest.extra = serde_json::json!({ "status": "numerical-breakdown", "error": err.to_string() });
                manifest.write(&args.out.join("manifest.json"))?;
            }
            return Err(err.into());
        }
    };

    for n in 0..result.separated.num_channels() {
        let path = args.out.join(format!("source_{n}.wav"));
        let mono = bss_core::signal::MultichannelWaveform::mono(mixture.sample_rate(), result.separated.channel(n).to_vec())?;
        save_wav(&path, &mono)?;
        manifest.outputs.push(path);
    }
    if args.trace {
        write_csv(&trace_path, &trace_rows(Some(result.initial_objective), &result.objective_trace, &result.gamma_trace))?;
        manifest.outputs.push(trace_path);
    }
    if let Some(model) = &result.state.model {
        let path = args.out.join("model.json");
        SavedModel::from_parts(cfg.method, model, &model_power(&result, &x)?).write(&path)?;
        manifest.outputs.push(path);
    }
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.extra = serde_json::json!({
        "status": "ok",
        "iterations": result.iteration_count,
        "initial_objective": result.initial_objective,
        "final_objective": result.objective_trace.last(),
        "final_gamma": result.state.gamma,
        "separation_time_s": result.wall_time.as_secs_f64(),
    });
    manifest.write(&args.out.join("manifest.json"))
}
