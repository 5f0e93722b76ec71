#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use depthloss::dataio::{load_manifest, read_disparity, write_pfm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn depthloss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depthloss"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs the binary and insists on success.
pub fn ok(args: &[&str]) -> Output {
    let out = depthloss(args);
    assert!(
        out.status.success(),
        "depthloss {args:?} exited with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// A small synthetic dataset written by the `synth` subcommand.
pub fn synth(dir: &Path, preset: &str, n: usize, seed: u64, size: (usize, usize)) -> PathBuf {
    ok(&[
        "synth",
        "--preset",
        preset,
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--height",
        &size.0.to_string(),
        "--width",
        &size.1.to_string(),
        "--out",
        s(dir),
    ]);
    dir.join("manifest.json")
}

/// Writes `pred.pfm` next to each ground truth, perturbed by uniform noise
/// of half-width `noise`, and returns the manifest `name` listing them.
pub fn with_predictions(manifest: &Path, name: &str, noise: f64, seed: u64) -> PathBuf {
    let mut m = load_manifest(manifest).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for sample in &mut m.samples {
        let mut field = read_disparity(&sample.gt_disparity).unwrap();
        for i in 0..field.len() {
            if let Some(d) = field.value_at(i) {
                let p = if noise > 0.0 { d + rng.random_range(-noise..noise) } else { d };
                field.set(i, p.max(0.01));
            }
        }
        let path = sample.gt_disparity.with_file_name(format!("{name}.pfm"));
        write_pfm(&path, &field).unwrap();
        sample.pred_disparity = Some(path);
    }
    m.write(&format!("{name}.json")).unwrap()
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&read(path)).unwrap()
}

/// Rows of a CSV file as header-keyed maps.
pub fn csv_rows(path: &Path) -> Vec<std::collections::BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.deserialize().map(|row| row.unwrap()).collect()
}
