mod common;

use std::path::Path;
use std::process::{Command, Output};
use jablab::variation::GridFunction;

use common::{config_path, grid_for, spec};

fn jablab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jablab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn with_config(name: &str, rest: &[&str], out: &Path) -> Output {
    let cfg = config_path(name);
    let mut args = vec!["--config", cfg.to_str().unwrap()];
    args.extend_from_slice(rest);
    jablab(&args, out)
}

fn scratch() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn non_admissible_config_is_rejected() {
    let dir = scratch();
    let o = with_config("non_admissible", &["validate"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Γ ="));
}

#[test]
fn bounds_exit_codes() {
    let dir = scratch();
    let o = with_config("example53", &["bounds"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert!(csv.starts_with("gamma_product,bound_buzzi,bound_gbp"));
    let o = with_config("two_halves", &["bounds"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn example53_table_written() {
    let dir = scratch();
    let o = jablab(&["example53", "--step", "0.25"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 59);
    let o = jablab(&["example53", "--step", "0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn density_file_is_a_probability_density() {
    let dir = scratch();
    let o = with_config("doubling_tripling", &["--grid", "32", "density", "--tol", "1e-6"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let grid = grid_for(&spec("doubling_tripling").driving, 32);
    let file = std::fs::File::open(dir.path().join("density.csv")).unwrap();
    let h = GridFunction::read_csv(grid, std::io::BufReader::new(file)).unwrap();
    assert!((h.integral() - 1.0).abs() < 1e-9);
    assert!(h.values().iter().all(|&v| v >= 0.0));
}

#[test]
fn usage_errors_exit_one() {
    let dir = scratch();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"spec_version": 1, "dimension": 2, "law": {"iid": [1.0]}, "grid": 8}"#).unwrap();
    let o = jablab(&["--config", bad.to_str().unwrap(), "validate"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("maps"));
    assert_eq!(jablab(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(jablab(&["validate"], dir.path()).status.code(), Some(1));
}

#[test]
fn every_subcommand_runs_headless() {
    let dir = scratch();
    let small = ["--grid", "16"];
    let runs: Vec<(Vec<&str>, Vec<&str>)> = vec![
        (vec!["validate"], vec![]),
        (vec!["ulam"], vec!["ulam_0.csv", "ulam_1.csv"]),
        (vec!["ly", "--densities", "5", "--windows", "3"], vec!["ly_report.json"]),
        (vec!["density"], vec!["density.csv", "density_next.csv", "density.json"]),
        (vec!["lyapunov", "--k", "40", "--trials", "2"], vec!["lyapunov.json"]),
        (vec!["count", "--k-settle", "60"], vec!["count.json", "representative_0.csv"]),
        (vec!["basins", "--k-settle", "60", "--points", "50", "--steps", "50"], vec!["basins.json"]),
        (vec!["bounds"], vec!["bounds.json", "bounds.csv"]),
    ];
    for (cmd, files) in runs {
        let mut args = small.to_vec();
        args.extend(cmd.iter());
        let o = with_config("doubling_tripling", &args, dir.path());
        assert_eq!(o.status.code(), Some(0), "{cmd:?}: {}", String::from_utf8_lossy(&o.stderr));
        for f in files {
            assert!(dir.path().join(f).is_file(), "{cmd:?} did not write {f}");
        }
    }
}
