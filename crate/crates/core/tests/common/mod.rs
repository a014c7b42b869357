//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod oracles;
pub mod quad;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use skyline_evt::catalog::{write_catalog, Catalog, ColumnMap};
use skyline_evt::simulate::{synth_catalog, SynthSpec};

/// Calibrated synthetic catalog over `n_cities` cities.
pub fn calibrated_catalog(n_cities: usize, seed: u64) -> Catalog {
    let cities = (0..n_cities).map(|i| format!("city{i}")).collect();
    synth_catalog(&SynthSpec::calibrated(cities), seed).unwrap()
}

pub fn write_csv(catalog: &Catalog, path: &Path) {
    let schema = ColumnMap {
        id: Some("id".into()),
        ..ColumnMap::default()
    };
    write_catalog(
        catalog,
        BufWriter::new(File::create(path).unwrap()),
        &schema,
    )
    .unwrap();
}

/// Writes a calibrated catalog into `dir` and returns its path.
pub fn calibrated_csv(dir: &Path, n_cities: usize, seed: u64) -> PathBuf {
    let p = dir.join(format!("catalog_{n_cities}_{seed}.csv"));
    write_csv(&calibrated_catalog(n_cities, seed), &p);
    p
}

/// Runs the binary with `args`.
pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skyline-evt"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs the binary and panics with its stderr unless it exits 0.
pub fn cli_ok(args: &[&str]) {
    let o = cli(args);
    assert!(
        o.status.success(),
        "{args:?} exited {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Data rows of a CSV file, header excluded.
pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

pub fn csv_header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

/// Every file in `dir`, sorted by name, with its bytes.
pub fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
