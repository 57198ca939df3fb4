//! Helpers for driving the `ugac` binary from tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Config for 16×16 toy images that trains in well under a second per epoch.
pub const TINY_CONFIG: &str = r#"
epochs = 2
batch_size = 2
seed = 1

[generator]
base_width = 4
depth = 1
cascade_len = 1

[discriminator]
base_width = 4
n_layers = 1
"#;

pub fn ugac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ugac")).args(args).output().expect("spawn ugac")
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Run and require exit 0, echoing stderr on failure.
pub fn ok(args: &[&str]) -> Output {
    let out = ugac(args);
    assert!(out.status.success(), "ugac {args:?} failed ({:?}):\n{}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    out
}

pub fn write_tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY_CONFIG).unwrap();
    path
}

/// Sorted files in `dir` with extension `ext`.
pub fn files_with_ext(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}
