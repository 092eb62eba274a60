use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bss_core::mixsim::{synthetic_case, SyntheticKind, SyntheticSpec};
use bss_core::signal::{read_wav, write_wav, BitDepth, MultichannelWaveform};
use tempfile::TempDir;

fn bss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bss")).args(args).env_remove("BSS_SEED").output().expect("bss runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// One-second 2×2 instantaneous mixture plus its references at mic 0.
fn mixture(dir: &Path) -> (PathBuf, Vec<PathBuf>) {
    let mut spec = SyntheticSpec::new(SyntheticKind::Instantaneous);
    spec.duration_s = 1.0;
    let (mix, truth) = synthetic_case(&spec, 3).unwrap();
    let path = dir.join("mix.wav");
    write_wav(&path, &mix, BitDepth::Float32).unwrap();
    let refs = truth
        .references(0)
        .into_iter()
        .enumerate()
        .map(|(n, r)| {
            let path = dir.join(format!("ref_{n}.wav"));
            write_wav(&path, &MultichannelWaveform::mono(16000, r).unwrap(), BitDepth::Float32).unwrap();
            path
        })
        .collect();
    (path, refs)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn separate_writes_sources_trace_model_and_manifest() {
    let dir = TempDir::new().unwrap();
    let (mix, _) = mixture(dir.path());
    let out = dir.path().join("out");
    let res = bss(&["separate", "--input", p(&mix), "--method", "m-ilrma", "--sources", "2", "--iters", "5", "--out", p(&out), "--trace"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["source_0.wav", "source_1.wav", "trace.csv", "model.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let est = read_wav(out.join("source_0.wav")).unwrap();
    assert_eq!(est.len(), read_wav(&mix).unwrap().len());

    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(!trace.contains('\r'));
    let (header, rows) = csv_rows(&trace);
    assert_eq!(header, ["iteration", "objective", "gamma"]);
    assert_eq!(rows.len(), 6);
    let objective: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(objective.windows(2).all(|w| w[1] >= w[0] - 1e-6 * w[0].abs()));

    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "separate");
    assert_eq!(manifest["config"]["method"], "m-ilrma");
    assert_eq!(manifest["config"]["max_iterations"], 5);
    assert_eq!(manifest["input_hashes"].as_object().unwrap().len(), 1);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 4);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn separate_rejects_bad_requests() {
    let dir = TempDir::new().unwrap();
    let (mix, _) = mixture(dir.path());
    let out = dir.path().join("out");
    let three = dir.path().join("three.wav");
    let w = read_wav(&mix).unwrap();
    let mut chans = w.channels().to_vec();
    chans.push(w.channel(0).iter().map(|v| 0.5 * v).collect());
    write_wav(&three, &MultichannelWaveform::new(16000, chans).unwrap(), BitDepth::Float32).unwrap();

    let res = bss(&["separate", "--input", p(&three), "--method", "m-ilrma", "--sources", "2", "--out", p(&out)]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("as many channels as sources"));

    assert_eq!(code(&bss(&["separate", "--input", p(&mix), "--method", "nmf", "--sources", "2"])), 2);
    assert_eq!(code(&bss(&["separate", "--input", p(&mix), "--method", "ilrma", "--sources", "2", "--bogus"])), 2);
    assert_eq!(code(&bss(&["separate", "--input", p(&mix), "--method", "ilrma", "--sources", "0"])), 2);
    let missing = dir.path().join("nope.wav");
    assert_eq!(code(&bss(&["separate", "--input", p(&missing), "--method", "ilrma", "--sources", "2"])), 2);
}

#[test]
fn environment_seed_overrides_flag() {
    let dir = TempDir::new().unwrap();
    let (mix, _) = mixture(dir.path());
    let out = dir.path().join("out");
    let res = Command::new(env!("CARGO_BIN_EXE_bss"))
        .args(["separate", "--input", p(&mix), "--method", "auxiva", "--sources", "2", "--iters", "2", "--seed", "5", "--out", p(&out)])
        .env("BSS_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(code(&res), 0);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config"]["seed"], 11);
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let dir = TempDir::new().unwrap();
    let (mix, _) = mixture(dir.path());
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"method": "ilrma", "sources": 2, "iters": 3, "bases": 4, "seed": 9}"#).unwrap();
    let out = dir.path().join("out");
    let res = bss(&["separate", "--input", p(&mix), "--config", p(&cfg), "--bases", "6", "--out", p(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["config"]["max_iterations"], 3);
    assert_eq!(manifest["config"]["n_bases"], 6);
    assert_eq!(manifest["config"]["seed"], 9);
    assert_eq!(manifest["config"]["eta"], 0.5);
}

#[test]
fn evaluate_reports_aligned_metrics() {
    let dir = TempDir::new().unwrap();
    let (mix, refs) = mixture(dir.path());
    let identical = bss(&["evaluate", "--est", p(&refs[0]), p(&refs[1]), "--ref", p(&refs[0]), p(&refs[1])]);
    assert_eq!(code(&identical), 0);
    let (header, rows) = csv_rows(&String::from_utf8(identical.stdout).unwrap());
    assert_eq!(
        header,
        ["source", "estimate", "sdr", "sir", "sdr_improvement", "sir_improvement", "sparseness", "orthogonality", "uniqueness"]
    );
    for (r, row) in rows.iter().enumerate() {
        assert_eq!(row[1], r.to_string());
        assert!(row[2].parse::<f64>().unwrap() > 100.0);
    }

    let out = dir.path().join("report.csv");
    let swapped = bss(&["evaluate", "--est", p(&refs[1]), p(&refs[0]), "--ref", p(&refs[0]), p(&refs[1]), "--mix", p(&mix), "--out", p(&out)]);
    assert_eq!(code(&swapped), 0);
    let (_, rows) = csv_rows(&fs::read_to_string(&out).unwrap());
    assert_eq!(rows[0][1], "1");
    assert_eq!(rows[1][1], "0");
    assert!(rows[0][4].parse::<f64>().unwrap() > 0.0);
    assert!(dir.path().join("report.manifest.json").exists());

    assert_eq!(code(&bss(&["evaluate", "--est", p(&refs[0]), "--ref", p(&refs[0]), p(&refs[1])])), 2);
    let missing = dir.path().join("missing.wav");
    assert_eq!(code(&bss(&["evaluate", "--est", p(&missing), p(&refs[1]), "--ref", p(&refs[0]), p(&refs[1])])), 2);
    assert_eq!(code(&bss(&["evaluate", "--metrics", "sparseness"])), 2);
}

#[test]
fn evaluate_scores_saved_bases() {
    let dir = TempDir::new().unwrap();
    let (mix, refs) = mixture(dir.path());
    let out = dir.path().join("sep");
    let res = bss(&["separate", "--input", p(&mix), "--method", "ilrma", "--sources", "2", "--iters", "5", "--out", p(&out)]);
    assert_eq!(code(&res), 0);
    let s0 = out.join("source_0.wav");
    let s1 = out.join("source_1.wav");
    let model = out.join("model.json");
    let res = bss(&[
        "evaluate", "--est", p(&s0), p(&s1), "--ref", p(&refs[0]), p(&refs[1]),
        "--metrics", "sdr,sparseness,orthogonality,uniqueness", "--model", p(&model),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let (_, rows) = csv_rows(&String::from_utf8(res.stdout).unwrap());
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert!(row[3].is_empty(), "sir was not requested");
        let sparse: f64 = row[6].parse().unwrap();
        assert!((0.0..=1.0).contains(&sparse));
        assert!(row[7].parse::<f64>().unwrap() >= 0.0);
        assert!(row[8].parse::<f64>().unwrap() >= 0.0);
    }
}

/// Reverberation time by backward integration and a −5…−25 dB line fit.
fn schroeder_oracle(h: &[f64], sr: f64) -> f64 {
    let energy: f64 = h.iter().map(|v| v * v).sum();
    let mut remaining = energy;
    let mut points = Vec::new();
    for (t, v) in h.iter().enumerate() {
        let level = 10.0 * (remaining / energy).log10();
        if level <= -5.0 && level > -25.0 {
            points.push((t as f64 / sr, level));
        }
        remaining -= v * v;
    }
    let n = points.len() as f64;
    let (st, sl) = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mt, ml) = (st / n, sl / n);
    let num: f64 = points.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let den: f64 = points.iter().map(|p| (p.0 - mt).powi(2)).sum();
    -60.0 / (num / den)
}

#[test]
fn mix_reports_decay_time_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let scenario = dir.path().join("room.cfg");
    fs::write(&scenario, "room = 6 6 3\nrt60 = 0.25\nmic_spacing = 0.0566\nsource_angles = -45, 45\n").unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let res = bss(&["mix", "--scenario", p(&scenario), "--sources", "synthetic", "--out", p(out), "--seed", "4", "--duration", "0.5"]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    }
    for f in ["mixture.wav", "source_0.wav", "source_1.wav", "image_0.wav", "image_1.wav", "rir_0.wav", "rir_1.wav"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let manifest = json(&a.join("manifest.json"));
    assert_eq!(manifest["seed"], 4);
    let reported = manifest["extra"]["measured_t60"][0][0].as_f64().unwrap();
    let rir = read_wav(a.join("rir_0.wav")).unwrap();
    let oracle = schroeder_oracle(rir.channel(0), 16000.0);
    assert!((reported - oracle).abs() < 0.01 * oracle, "manifest {reported} vs oracle {oracle}");
    assert!((oracle - 0.25).abs() < 0.05 * 0.25, "oracle T60 {oracle}");

    let mixture = read_wav(a.join("mixture.wav")).unwrap();
    let images: Vec<_> = (0..2).map(|n| read_wav(a.join(format!("image_{n}.wav"))).unwrap()).collect();
    for m in 0..2 {
        for t in (0..mixture.len()).step_by(97) {
            let sum = images[0].channel(m)[t] + images[1].channel(m)[t];
            assert!((mixture.channel(m)[t] - sum).abs() < 1e-6);
        }
    }
}

#[test]
fn mix_anechoic_and_invalid_scenarios() {
    let dir = TempDir::new().unwrap();
    let scenario = dir.path().join("anechoic.cfg");
    fs::write(&scenario, "room = 6 6 3\nrt60 = 0\n").unwrap();
    let out = dir.path().join("out");
    let res = bss(&["mix", "--scenario", p(&scenario), "--sources", "synthetic", "--out", p(&out), "--duration", "0.25"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(read_wav(out.join("mixture.wav")).unwrap().num_channels(), 2);
    assert_eq!(json(&out.join("manifest.json"))["extra"]["reflection_coefficient"], 0.0);

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "room = 6 6 3\nsource = 9 1 1\n").unwrap();
    let res = bss(&["mix", "--scenario", p(&bad), "--sources", "synthetic", "--out", p(&out)]);
    assert_eq!(code(&res), 2);
    fs::write(&bad, "room = 6 6\n").unwrap();
    assert_eq!(code(&bss(&["mix", "--scenario", p(&bad), "--sources", "synthetic", "--out", p(&out)])), 2);
    let one = dir.path().join("one.wav");
    write_wav(&one, &MultichannelWaveform::mono(16000, vec![0.1; 800]).unwrap(), BitDepth::Pcm16).unwrap();
    assert_eq!(code(&bss(&["mix", "--scenario", p(&scenario), "--sources", p(&one), "--out", p(&out)])), 2);
}

#[test]
fn bench_writes_runs_aggregate_and_traces() {
    let dir = TempDir::new().unwrap();
    let run = |out: &Path| {
        bss(&[
            "bench", "--suite", "instantaneous", "--seeds", "0..1", "--methods", "auxiva,ilrma", "--iters", "3",
            "--duration", "0.5", "--jobs", "2", "--out", p(out),
        ])
    };
    let a = dir.path().join("a");
    let res = run(&a);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let (header, rows) = csv_rows(&fs::read_to_string(a.join("runs.csv")).unwrap());
    assert_eq!(
        header,
        [
            "scenario", "method", "seed", "source", "status", "sdr", "sir", "sdr_improvement", "sir_improvement",
            "runtime_s", "iterations", "final_objective", "error"
        ]
    );
    assert_eq!(rows.len(), 2 * 2 * 2);
    assert!(rows.iter().all(|r| r[4] == "ok"));
    let aggregate = fs::read_to_string(a.join("aggregate.csv")).unwrap();
    let (header, rows) = csv_rows(&aggregate);
    assert_eq!(
        header,
        [
            "scenario", "method", "runs", "failed", "mean_sdr_improvement", "median_sdr_improvement",
            "mean_sir_improvement", "median_sir_improvement", "mean_runtime_s"
        ]
    );
    assert_eq!(rows.len(), 2);
    assert!(a.join("traces/instantaneous_ilrma_seed1.csv").exists());

    let b = dir.path().join("b");
    assert_eq!(code(&run(&b)), 0);
    let medians = |text: &str| csv_rows(text).1.iter().map(|r| (r[4].clone(), r[5].clone())).collect::<Vec<_>>();
    assert_eq!(medians(&aggregate), medians(&fs::read_to_string(b.join("aggregate.csv")).unwrap()));
    assert_eq!(code(&bss(&["bench", "--suite", "nope", "--out", p(&b)])), 2);
}
