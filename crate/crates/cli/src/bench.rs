use std::path::PathBuf;
use std::time::Instant;

use bss_core::evaluation::evaluate;
use bss_core::mixsim::{synthetic_case, GroundTruth, SyntheticKind, SyntheticSpec};
use bss_core::separators::{separate, Method, SeparatorConfig, DEFAULT_BASES, DEFAULT_ITERATIONS};
use bss_core::signal::MultichannelWaveform;
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult, EXIT_NUMERICAL};
use crate::manifest::RunManifest;
use crate::output::{create_dir, trace_rows, write_csv};

/// Smallest fraction of completed runs for a zero exit code.
const MIN_COMPLETED: f64 = 0.9;

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// default (instantaneous + rt60 0.13 s), instantaneous, convolutive or rt60-sweep.
    #[arg(long, default_value = "default")]
    pub suite: String,
    /// Comma list and/or inclusive ranges, e.g. `0..9` or `1,4,7`.
    #[arg(long, default_value = "0..1")]
    pub seeds: String,
    #[arg(long, value_delimiter = ',', default_value = "auxiva,mnmf,ilrma,m-mnmf,m-ilrma")]
    pub methods: Vec<Method>,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iters: usize,
    #[arg(long, default_value_t = DEFAULT_BASES)]
    pub bases: usize,
    /// Mixture length in seconds.
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub name: &'static str,
    pub kind: SyntheticKind,
}

pub fn suite(name: &str) -> CliResult<Vec<Scenario>> {
    let inst = Scenario { name: "instantaneous", kind: SyntheticKind::Instantaneous };
    let room = |name, rt60| Scenario { name, kind: SyntheticKind::Room { rt60 } };
    match name {
        "default" => Ok(vec![inst, room("rt60-0.13", 0.13)]),
        "instantaneous" => Ok(vec![inst]),
        "convolutive" => Ok(vec![room("rt60-0.13", 0.13)]),
        "rt60-sweep" => Ok(vec![room("rt60-0.13", 0.13), room("rt60-0.25", 0.25), room("rt60-0.40", 0.4)]),
        other => Err(CliError::invalid(format!("unknown suite '{other}'"))),
    }
}

pub fn parse_seeds(text: &str) -> CliResult<Vec<u64>> {
    let bad = || CliError::invalid(format!("invalid seed list '{text}'"));
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
                if b < a {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub scenario: String,
    pub method: String,
    pub seed: u64,
    pub source: Option<usize>,
    pub status: String,
    pub sdr: Option<f64>,
    pub sir: Option<f64>,
    pub sdr_improvement: Option<f64>,
    pub sir_improvement: Option<f64>,
    pub runtime_s: Option<f64>,
    pub iterations: Option<usize>,
    pub final_objective: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub method: String,
    pub runs: usize,
    pub failed: usize,
    pub mean_sdr_improvement: Option<f64>,
    pub median_sdr_improvement: Option<f64>,
    pub mean_sir_improvement: Option<f64>,
    pub median_sir_improvement: Option<f64>,
    pub mean_runtime_s: Option<f64>,
}

struct Outcome {
    rows: Vec<RunRow>,
    trace: Option<(f64, Vec<f64>, Vec<f64>)>,
    /// Mean SDRi and SIRi over sources.
    means: Option<(f64, f64)>,
    runtime: f64,
}

fn failure(scenario: &Scenario, method: Method, seed: u64, err: String) -> Outcome {
    let row = RunRow {
        scenario: scenario.name.into(),
        method: method.name().into(),
        seed,
        source: None,
        status: "failed".into(),
        sdr: None,
        sir: None,
        sdr_improvement: None,
        sir_improvement: None,
        runtime_s: None,
        iterations: None,
        final_objective: None,
        error: Some(err),
    };
    Outcome { rows: vec![row], trace: None, means: None, runtime: 0.0 }
}

fn one_run(
    scenario: &Scenario,
    method: Method,
    seed: u64,
    case: &Result<(MultichannelWaveform, GroundTruth), String>,
    args: &BenchArgs,
) -> Outcome {
    let (mixture, truth) = match case {
        Ok(c) => c,
        Err(e) => return failure(scenario, method, seed, e.clone()),
    };
    let mut cfg = SeparatorConfig::new(method, truth.sources.num_channels());
    cfg.seed = seed;
    cfg.max_iterations = args.iters;
    cfg.n_bases = args.bases;
    let run = match separate(mixture, &cfg) {
        Ok(r) => r,
        Err(e) => {
            let mut out = failure(scenario, method, seed, e.to_string());
            out.trace = e.partial_trace().map(|t| (f64::NAN, t.to_vec(), Vec::new()));
            return out;
        }
    };
    let est = run.separated.channels().to_vec();
    let report = match evaluate(&est, &truth.references(0), mixture.channel(0)) {
        Ok(r) => r,
        Err(e) => return failure(scenario, method, seed, e.to_string()),
    };
    let runtime = run.wall_time.as_secs_f64();
    let sdri = report.sdr_improvement.clone().unwrap_or_default();
    let siri = report.sir_improvement.clone().unwrap_or_default();
    let rows = (0..report.sdr.len())
        .map(|r| RunRow {
            scenario: scenario.name.into(),
            method: method.name().into(),
            seed,
            source: Some(r),
            status: "ok".into(),
            sdr: Some(report.sdr[r]),
            sir: Some(report.sir[r]),
            sdr_improvement: sdri.get(r).copied(),
            sir_improvement: siri.get(r).copied(),
            runtime_s: Some(runtime),
            iterations: Some(run.iteration_count),
            final_objective: run.objective_trace.last().copied(),
            error: None,
        })
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Outcome {
        rows,
        trace: Some((run.initial_objective, run.objective_trace, run.gamma_trace)),
        means: Some((mean(&sdri), mean(&siri))),
        runtime,
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn run(args: BenchArgs, argv: &[String]) -> CliResult<()> {
    let start = Instant::now();
    let scenarios = suite(&args.suite)?;
    let seeds = parse_seeds(&args.seeds)?;
    if args.methods.is_empty() {
        return Err(CliError::invalid("--methods is empty"));
    }
    if !(args.duration > 0.0) || args.iters == 0 || args.bases == 0 {
        return Err(CliError::invalid("duration, iterations and bases must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::invalid(format!("cannot start worker pool: {e}")))?;
    let workers = pool.current_num_threads();

    let n_seeds = seeds.len();
    let cases: Vec<(usize, u64)> = (0..scenarios.len()).flat_map(|s| seeds.iter().map(move |&seed| (s, seed))).collect();
    let (mixtures, outcomes) = pool.install(|| {
        let mixtures: Vec<_> = cases
            .par_iter()
            .map(|&(s, seed)| {
                let mut spec = SyntheticSpec::new(scenarios[s].kind);
                spec.duration_s = args.duration;
                synthetic_case(&spec, seed).map_err(|e| e.to_string())
            })
            .collect();
        let tasks: Vec<(usize, Method, usize)> = (0..scenarios.len())
            .flat_map(|s| args.methods.iter().flat_map(move |&m| (0..n_seeds).map(move |k| (s, m, k))))
            .collect();
        let outcomes: Vec<_> = tasks
            .par_iter()
            .map(|&(s, m, k)| {
                let case = &mixtures[s * seeds.len() + k];
                ((s, m, seeds[k]), one_run(&scenarios[s], m, seeds[k], case, &args))
            })
            .collect();
        (mixtures.len(), outcomes)
    });
    debug_assert_eq!(mixtures, cases.len());

    create_dir(&args.out)?;
    let trace_dir = args.out.join("traces");
    create_dir(&trace_dir)?;
    let mut manifest = RunManifest::new(
        "bench",
        argv,
        serde_json::json!({
            "suite": args.suite,
            "seeds": seeds,
            "methods": args.methods,
            "iterations": args.iters,
            "bases": args.bases,
            "duration_s": args.duration,
            "jobs": workers,
        }),
        None,
    );
    let mut run_rows = Vec::new();
    for ((s, m, seed), outcome) in &outcomes {
        run_rows.extend(outcome.rows.iter().cloned());
        if let Some((initial, trace, gammas)) = &outcome.trace {
            let path = trace_dir.join(format!("{}_{}_seed{seed}.csv", scenarios[*s].name, m.name()));
            let initial = initial.is_finite().then_some(*initial);
            write_csv(&path, &trace_rows(initial, trace, gammas))?;
            manifest.outputs.push(path);
        }
    }
    let runs_path = args.out.join("runs.csv");
    write_csv(&runs_path, &run_rows)?;
    manifest.outputs.push(runs_path);

    let mut aggregate = Vec::new();
    for (s, scenario) in scenarios.iter().enumerate() {
        for &m in &args.methods {
            let group: Vec<&Outcome> = outcomes.iter().filter(|((si, mi, _), _)| *si == s && *mi == m).map(|(_, o)| o).collect();
            let sdri: Vec<f64> = group.iter().filter_map(|o| o.means.map(|v| v.0)).collect();
            let siri: Vec<f64> = group.iter().filter_map(|o| o.means.map(|v| v.1)).collect();
            let times: Vec<f64> = group.iter().filter(|o| o.means.is_some()).map(|o| o.runtime).collect();
            aggregate.push(AggregateRow {
                scenario: scenario.name.into(),
                method: m.name().into(),
                runs: group.len(),
                failed: group.len() - sdri.len(),
                mean_sdr_improvement: mean(&sdri),
                median_sdr_improvement: median(sdri),
                mean_sir_improvement: mean(&siri),
                median_sir_improvement: median(siri),
                mean_runtime_s: mean(&times),
            });
        }
    }
    let agg_path = args.out.join("aggregate.csv");
    write_csv(&agg_path, &aggregate)?;
    manifest.outputs.push(agg_path);

    let total = outcomes.len();
    let completed = outcomes.iter().filter(|(_, o)| o.means.is_some()).count();
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.extra = serde_json::json!({ "runs": total, "completed": completed });
    manifest.write(&args.out.join("manifest.json"))?;
    if (completed as f64) < MIN_COMPLETED * total as f64 {
        return Err(CliError { code: EXIT_NUMERICAL, message: format!("only {completed} of {total} runs completed") });
    }
    Ok(())
}
