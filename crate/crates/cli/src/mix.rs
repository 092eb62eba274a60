use std::path::PathBuf;
use std::time::Instant;

use bss_core::mixsim::{lowrank_sources, room_mix, schroeder_t60, Mixing, RoomScenario, SyntheticKind, SyntheticSpec};
use bss_core::signal::{read_wav, MultichannelWaveform};
use clap::Args;

use crate::error::{CliError, CliResult};
use crate::manifest::{resolve_seed, RunManifest};
use crate::output::{create_dir, save_wav};

#[derive(Debug, Args)]
pub struct MixArgs {
    /// Room description in `key = value` form.
    #[arg(long)]
    pub scenario: PathBuf,
    /// One mono WAV per scenario source, or the single word `synthetic`.
    #[arg(long, num_args = 1.., required = true)]
    pub sources: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Length of synthetic sources in seconds.
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
    /// NMF rank of synthetic sources.
    #[arg(long, default_value_t = 5)]
    pub rank: usize,
}

fn load_sources(paths: &[String], sample_rate: u32) -> CliResult<MultichannelWaveform> {
    let mut channels = Vec::with_capacity(paths.len());
    for p in paths {
        let w = read_wav(p)?;
        if w.sample_rate() != sample_rate {
            return Err(CliError::invalid(format!("{p} is at {} Hz, scenario expects {sample_rate} Hz", w.sample_rate())));
        }
        if w.num_channels() != 1 {
            return Err(CliError::invalid(format!("{p} has {} channels, sources must be mono", w.num_channels())));
        }
        channels.extend(w.into_channels());
    }
    let len = channels.iter().map(Vec::len).max().unwrap_or(0);
    channels.iter_mut().for_each(|c| c.resize(len, 0.0));
    Ok(MultichannelWaveform::new(sample_rate, channels)?)
}

pub fn run(args: MixArgs, argv: &[String]) -> CliResult<()> {
    let start = Instant::now();
    let text = std::fs::read_to_string(&args.scenario)
        .map_err(|e| CliError::invalid(format!("cannot read {}: {e}", args.scenario.display())))?;
    let scenario: RoomScenario = text.parse()?;
    scenario.validate()?;
    let seed = resolve_seed(args.seed, 0)?;
    let synthetic = args.sources.len() == 1 && args.sources[0] == "synthetic";
    let mut manifest = RunManifest::new(
        "mix",
        argv,
        serde_json::json!({
            "scenario": scenario,
            "synthetic": synthetic,
            "duration_s": args.duration,
            "rank": args.rank,
        }),
        Some(seed),
    );
    manifest.hash_input(&args.scenario)?;
    let sources = if synthetic {
        if !(args.duration > 0.0) || args.rank == 0 {
            return Err(CliError::invalid("synthetic sources need a positive duration and rank"));
        }
        let mut spec = SyntheticSpec::new(SyntheticKind::Room { rt60: scenario.rt60 });
        spec.n_sources = scenario.sources.len();
        spec.duration_s = args.duration;
        spec.sample_rate = scenario.sample_rate;
        spec.rank = args.rank;
        lowrank_sources(&spec, seed)?.0
    } else {
        if args.sources.len() != scenario.sources.len() {
            return Err(CliError::invalid(format!(
                "scenario has {} sources, got {} files",
                scenario.sources.len(),
                args.sources.len()
            )));
        }
        for p in &args.sources {
            manifest.hash_input(p.as_ref())?;
        }
        load_sources(&args.sources, scenario.sample_rate)?
    };

    let (mixture, truth) = room_mix(&sources, &scenario)?;
    create_dir(&args.out)?;
    let path = args.out.join("mixture.wav");
    save_wav(&path, &mixture)?;
    manifest.outputs.push(path);
    for n in 0..sources.num_channels() {
        let path = args.out.join(format!("source_{n}.wav"));
        save_wav(&path, &MultichannelWaveform::mono(sources.sample_rate(), sources.channel(n).to_vec())?)?;
        manifest.outputs.push(path);
        let path = args.out.join(format!("image_{n}.wav"));
        save_wav(&path, &truth.images[n])?;
        manifest.outputs.push(path);
    }
    let path = args.out.join("scenario.cfg");
    std::fs::write(&path, scenario.to_config_string()).map_err(|e| CliError::io(path.display(), e))?;
    manifest.outputs.push(path);

    // Schroeder decay time of every source–mic response, `[source][mic]`.
    let mut t60: Vec<Vec<Option<f64>>> = Vec::new();
    if let Mixing::Convolutive(rirs) = &truth.mixing {
        for (n, per_mic) in rirs.iter().enumerate() {
            let path = args.out.join(format!("rir_{n}.wav"));
            save_wav(&path, &MultichannelWaveform::new(scenario.sample_rate, per_mic.clone())?)?;
            manifest.outputs.push(path);
            t60.push(per_mic.iter().map(|h| schroeder_t60(h, scenario.sample_rate)).collect());
        }
    }
    manifest.extra = serde_json::json!({
        "reflection_coefficient": scenario.reflection_coefficient(),
        "reflection_order": scenario.reflection_order(),
        "rir_length": scenario.rir_length(),
        "target_rt60": scenario.rt60,
        "measured_t60": t60,
        "samples": mixture.len(),
    });
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.write(&args.out.join("manifest.json"))
}
