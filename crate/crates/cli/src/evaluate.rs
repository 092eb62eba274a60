use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bss_core::evaluation::{align_permutation, evaluate, orthogonality_score, sparseness, uniqueness_score, EvalReport};
use bss_core::signal::read_wav;
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::model::SavedModel;
use crate::output::csv_writer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Sdr,
    Sir,
    Sparseness,
    Orthogonality,
    Uniqueness,
}

impl Metric {
    fn needs_signals(self) -> bool {
        matches!(self, Metric::Sdr | Metric::Sir)
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Estimated sources; every channel of every file counts as one estimate.
    #[arg(long, num_args = 1..)]
    pub est: Vec<PathBuf>,
    /// Reference signals, flattened the same way.
    #[arg(long = "ref", num_args = 1..)]
    pub reference: Vec<PathBuf>,
    /// Mixture channel used as the baseline for improvements.
    #[arg(long, alias = "mix")]
    pub mixture: Option<PathBuf>,
    /// Channel of the mixture file to use as baseline.
    #[arg(long, default_value_t = 0)]
    pub mixture_channel: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "sdr,sir")]
    pub metrics: Vec<Metric>,
    /// model.json written by `bss separate`; needed for basis metrics.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One reference (or, without references, one model source) per row.
#[derive(Debug, Default, Serialize)]
pub struct ReportRow {
    pub source: usize,
    /// Estimate matched to this reference.
    pub estimate: usize,
    pub sdr: Option<f64>,
    pub sir: Option<f64>,
    pub sdr_improvement: Option<f64>,
    pub sir_improvement: Option<f64>,
    pub sparseness: Option<f64>,
    pub orthogonality: Option<f64>,
    pub uniqueness: Option<f64>,
}

fn load_signals(paths: &[PathBuf]) -> CliResult<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_wav(p)?.into_channels());
    }
    Ok(out)
}

fn signal_report(args: &EvaluateArgs) -> CliResult<EvalReport> {
    if args.est.is_empty() || args.reference.is_empty() {
        return Err(CliError::invalid("sdr and sir need both --est and --ref"));
    }
    let est = load_signals(&args.est)?;
    let refs = load_signals(&args.reference)?;
    if est.len() != refs.len() {
        return Err(CliError::invalid(format!("{} estimates but {} references", est.len(), refs.len())));
    }
    Ok(match &args.mixture {
        Some(path) => {
            let mix = read_wav(path)?;
            if args.mixture_channel >= mix.num_channels() {
                return Err(CliError::invalid(format!("mixture has no channel {}", args.mixture_channel)));
            }
            evaluate(&est, &refs, mix.channel(args.mixture_channel))?
        }
        None => align_permutation(&est, &refs)?,
    })
}

pub fn build_rows(args: &EvaluateArgs) -> CliResult<Vec<ReportRow>> {
    let wants = |m: Metric| args.metrics.contains(&m);
    let signal = if args.metrics.iter().any(|m| m.needs_signals()) { Some(signal_report(args)?) } else { None };
    let model = if args.metrics.iter().any(|m| !m.needs_signals()) {
        let path = args.model.as_ref().ok_or_else(|| CliError::invalid("basis metrics need --model"))?;
        Some(SavedModel::read(path)?)
    } else {
        None
    };
    let mut rows: Vec<ReportRow> = match (&signal, &model) {
        (Some(report), _) => (0..report.sdr.len())
            .map(|r| ReportRow {
                source: r,
                estimate: report.permutation[r],
                sdr: wants(Metric::Sdr).then(|| report.sdr[r]),
                sir: wants(Metric::Sir).then(|| report.sir[r]),
                sdr_improvement: report.sdr_improvement.as_ref().filter(|_| wants(Metric::Sdr)).map(|v| v[r]),
                sir_improvement: report.sir_improvement.as_ref().filter(|_| wants(Metric::Sir)).map(|v| v[r]),
                ..ReportRow::default()
            })
            .collect(),
        (None, Some(m)) => (0..m.n_sources()).map(|n| ReportRow { source: n, estimate: n, ..ReportRow::default() }).collect(),
        (None, None) => Vec::new(),
    };
    if let Some(model) = &model {
        if model.n_sources() != rows.len() {
            return Err(CliError::invalid(format!("model has {} sources, report has {}", model.n_sources(), rows.len())));
        }
        for row in &mut rows {
            let (w, h, power) = model.factors(row.estimate)?;
            if wants(Metric::Sparseness) {
                row.sparseness = Some(sparseness(w.view())?);
            }
            if wants(Metric::Orthogonality) {
                row.orthogonality = Some(orthogonality_score(w.view()));
            }
            if wants(Metric::Uniqueness) {
                row.uniqueness = Some(uniqueness_score(w.view(), power.view(), h.view())?);
            }
        }
    }
    Ok(rows)
}

fn write_rows<W: Write>(rows: &[ReportRow], out: W, label: &Path) -> CliResult<()> {
    let mut writer = csv_writer(out);
    for row in rows {
        writer.serialize(row).map_err(|e| CliError::io(label.display(), e))?;
    }
    writer.flush().map_err(|e| CliError::io(label.display(), e))
}

pub fn run(args: EvaluateArgs, argv: &[String]) -> CliResult<()> {
    let start = Instant::now();
    let rows = build_rows(&args)?;
    match &args.out {
        None => write_rows(&rows, std::io::stdout().lock(), Path::new("stdout")),
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| CliError::io(path.display(), e))?;
            write_rows(&rows, file, path)?;
            let mut manifest = RunManifest::new("evaluate", argv, serde_json::json!({ "metrics": args.metrics }), None);
            for p in args.est.iter().chain(&args.reference).chain(&args.mixture).chain(&args.model) {
                manifest.hash_input(p)?;
            }
            manifest.outputs.push(path.clone());
            manifest.wall_time_s = start.elapsed().as_secs_f64();
            manifest.write(&path.with_extension("manifest.json"))
        }
    }
}
