#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_tidalflow");

pub fn tidalflow(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn tidalflow")
}

pub fn run_ok(command: &str, config: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec![
        command,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = tidalflow(&args);
    assert!(
        o.status.success(),
        "{command} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

/// Small two-archetype corpus: 6 stations, 24 epochs, 60 users each.
pub fn small_spec(noise: f64, jitter: f64) -> String {
    let archetype = |label: &str, home: usize, work: usize, am: usize, pm: usize| {
        format!(
            r#"{{"label": "{label}", "home": [[{home}, 0.5], [{}, 0.5]], "work": [[{work}, 0.5], [{}, 0.5]],
               "morning_peak": {am}, "evening_peak": {pm}, "peak_jitter": {jitter},
               "trips_per_week": [[2, 0.5], [4, 0.5]], "noise_rate": {noise}}}"#,
            home + 1,
            work + 1
        )
    };
    format!(
        r#"{{"station_count": 6, "epoch_count": 24, "users_per_archetype": 60, "seed": 42,
            "archetypes": [{}, {}]}}"#,
        archetype("early", 0, 2, 7, 16),
        archetype("late", 4, 0, 9, 18)
    )
}

pub fn small_config(dir: &Path, spec: &str) -> PathBuf {
    let spec_path = dir.join("spec.json");
    fs::write(&spec_path, spec).unwrap();
    let config = dir.join("run.conf");
    fs::write(
        &config,
        format!(
            "# small pipeline\nseed = 5\ninput.synth_spec = {}\ntrain.components = 4\ntrain.max_iters = 150\n\
             train.warmup_iters = 40\nnmf.max_iters = 60\ncluster.clusters = 2\n\
             stability.training_sets = 2\nstability.train_size = 30\nstability.test_size = 30\nstability.repetitions = 2\n",
            spec_path.display()
        ),
    )
    .unwrap();
    config
}

pub const PIPELINE: [&str; 6] = ["synth", "ingest", "train", "project", "cluster", "benchmark"];

/// Every file in `dir`, sorted by name, with contents.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}
