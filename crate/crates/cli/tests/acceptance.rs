//! Acceptance criteria. Each test prints one PASS/FAIL line.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use levygreen_cli::output::strip_timestamps;
use levygreen_cli::suite::{run_criterion, Outcome, Scale, NAMES};

const SEED: u64 = 2;

fn check(o: Outcome) {
    println!("{}", o.line());
    assert!(o.passed(), "{}", o.line());
}

#[test]
fn c01_stable_baseline_exactness() {
    check(run_criterion(1, Scale::Full, SEED));
}

#[test]
fn c02_occupation_identity() {
    check(run_criterion(2, Scale::Full, SEED));
}

#[test]
fn c03_density_series_vs_sampler() {
    check(run_criterion(3, Scale::Full, SEED));
}

#[test]
fn c04_domination() {
    check(run_criterion(4, Scale::Full, SEED));
}

#[test]
fn c05_green_ratio_disk() {
    check(run_criterion(5, Scale::Full, SEED));
}

#[test]
fn c06_green_ratio_interval() {
    check(run_criterion(6, Scale::Full, SEED));
}

#[test]
fn c07_convolution_exponents() {
    check(run_criterion(7, Scale::Full, SEED));
}

#[test]
fn c08_contraction() {
    check(run_criterion(8, Scale::Full, SEED));
}

#[test]
fn c09_potential_comparison() {
    check(run_criterion(9, Scale::Full, SEED));
}

#[test]
fn c10_exit_law() {
    check(run_criterion(10, Scale::Full, SEED));
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let bytes = std::fs::read(&path).unwrap();
        let bytes = if name == "manifest.json" {
            let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
            serde_json::to_vec(&strip_timestamps(&v)).unwrap()
        } else {
            bytes
        };
        files.insert(name, bytes);
    }
    files
}

fn quick_suite(out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_levygreen"))
        .args(["suite", "--quick", "--seed", "1", "--workers", "2", "--out"])
        .arg(out)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap_or(-1)
}

#[test]
fn c11_reproducibility() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let codes = (quick_suite(a.path()), quick_suite(b.path()));
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    let reports = ta.keys().filter(|k| k.starts_with("criterion_")).count();
    let identical = ta == tb;
    let passed = codes == (0, 0) && identical && reports >= 6;
    let detail = format!("exit codes {codes:?}, {} files, {reports} reports, identical = {identical}", ta.len());
    println!("{} [11] {}: {detail}", if passed { "PASS" } else { "FAIL" }, NAMES[10]);
    assert!(passed, "{detail}");
}
