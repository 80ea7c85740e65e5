use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use wavephase::grid::white_noise;
use wavephase::io::{decode_pgm, read_table, save_field, sidecar_path, PgmSidecar};
use wavephase::{ComplexField, Seed};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wavephase"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const SMALL_A: &str = r#"{"model": {"preset": {"name": "A", "scales": 2, "angles": 4}}, "restarts": 2,
  "eval": {"window": {"delta_n": 1}, "structure_j": [1, 2], "structure_q": [1.0, 2.0, 3.0], "profile_j": [1], "profile_a_max": 2}}"#;

const SMALL_B: &str = r#"{"model": {"spec": {"name": "B", "scales": 2, "angles": 4, "k_min": 0, "k_max": 1,
  "delta_n": 2, "delta_j": 0, "delta_l": 1, "pairs": "all", "optimizer": {"max_iter": 15}}}, "restarts": 2}"#;

fn field(dir: &Path, name: &str, seed: u64) -> PathBuf {
    let p = dir.join(name);
    let x = white_noise(16, 1.0, Seed(seed)).unwrap();
    let v: Vec<f64> = x.real_part().iter().map(|v| v + 0.2 * v * v).collect();
    save_field(&p, &ComplexField::from_real(16, &v).unwrap()).unwrap();
    p
}

#[test]
fn cov_writes_deterministic_table_and_summary() {
    let t = TempDir::new().unwrap();
    let input = field(t.path(), "x.phkf", 1);
    let cfg = write_config(t.path(), "a.json", SMALL_A);
    let (o1, o2) = (t.path().join("o1"), t.path().join("o2"));
    for o in [&o1, &o2] {
        let r = run(&["cov", s(&input), "--config", s(&cfg), "--out", s(o)]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        assert!(String::from_utf8_lossy(&r.stdout).contains("model size / d"));
    }
    let a = fs::read(o1.join("table.phkt")).unwrap();
    assert_eq!(a, fs::read(o2.join("table.phkt")).unwrap());
    let table = read_table(&o1.join("table.phkt")).unwrap();
    assert_eq!(table.side, 16);
    assert!(o1.join("summary.txt").exists());
}

#[test]
fn errors_map_to_exit_codes() {
    let t = TempDir::new().unwrap();
    let input = field(t.path(), "x.phkf", 2);
    let bad = write_config(t.path(), "bad.json", r#"{"model": {"preset": {"name": "A", "scales": 2, "angles": 4}}, "colour": 1}"#);
    let out = t.path().join("o");
    assert_eq!(run(&["cov", s(&input), "--config", s(&bad), "--out", s(&out)]).status.code(), Some(2));
    let cfg = write_config(t.path(), "a.json", SMALL_A);
    let missing = t.path().join("none.phkf");
    assert_eq!(run(&["cov", s(&missing), "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(4));
    assert_eq!(run(&["synth", s(&input), "--config", s(&cfg), "--restarts", "0", "--out", s(&out)]).status.code(), Some(2));
    let junk = t.path().join("junk.phkf");
    fs::write(&junk, b"not a field").unwrap();
    assert_eq!(run(&["gauss-test", s(&junk), "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(4));
    assert_eq!(run(&["eval", s(&t.path().join("nodir")), s(&input), "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(4));
}

#[test]
fn gaussian_synthesis_is_seeded() {
    let t = TempDir::new().unwrap();
    let input = field(t.path(), "x.phkf", 3);
    let cfg = write_config(t.path(), "a.json", SMALL_A);
    let (o1, o2, o3) = (t.path().join("o1"), t.path().join("o2"), t.path().join("o3"));
    for (o, seed) in [(&o1, "5"), (&o2, "5"), (&o3, "6")] {
        let r = run(&["synth", s(&input), "--config", s(&cfg), "--seed", seed, "--out", s(o)]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let a = fs::read(o1.join("sample_000.phkf")).unwrap();
    assert_eq!(a, fs::read(o2.join("sample_000.phkf")).unwrap());
    assert_ne!(a, fs::read(o3.join("sample_000.phkf")).unwrap());
    assert!(o1.join("sample_001.phkf").exists());
    assert!(o1.join("gauss_state.json").exists());
    assert!(o1.join("spectrum.phkf").exists());
}

#[test]
fn microcanonical_synthesis_writes_losses() {
    let t = TempDir::new().unwrap();
    let input = field(t.path(), "x.phkf", 4);
    let cfg = write_config(t.path(), "b.json", SMALL_B);
    let o = t.path().join("o");
    let r = run(&["synth", s(&input), "--config", s(&cfg), "--seed", "9", "--out", s(&o)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let loss = fs::read_to_string(o.join("loss.csv")).unwrap();
    assert!(loss.starts_with("restart,iteration,loss\n"));
    let summary = fs::read_to_string(o.join("restarts.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert_eq!(summary.lines().filter(|l| l.ends_with(",true")).count(), 1);
}

#[test]
fn fit_sample_eval_pipeline() {
    let t = TempDir::new().unwrap();
    let refs = t.path().join("refs");
    fs::create_dir(&refs).unwrap();
    for i in 0..3 {
        field(&refs, &format!("r{i}.phkf"), 10 + i);
    }
    let cfg = write_config(t.path(), "a.json", SMALL_A);
    let fit = t.path().join("fit");
    let r = run(&["gauss-fit", s(&refs.join("r0.phkf")), "--config", s(&cfg), "--out", s(&fit)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let models = t.path().join("models");
    let r = run(&["gauss-sample", s(&fit.join("gauss_state.json")), "--count", "3", "--seed", "2", "--out", s(&models)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let ev = t.path().join("ev");
    let r = run(&["eval", s(&refs), s(&models), "--config", s(&cfg), "--out", s(&ev)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let errors = fs::read_to_string(ev.join("errors.csv")).unwrap();
    let lines: Vec<&str> = errors.lines().collect();
    assert_eq!(lines[0], "metric,j,q,mean,std");
    // two window errors plus the 2 × 3 structure grid
    assert_eq!(lines.len() - 1, 2 + 6);
    let profile = fs::read_to_string(ev.join("profile_model.csv")).unwrap();
    assert!(profile.starts_with("k,j,a,value\n"));
    // a = 0 is exactly one
    let first: Vec<&str> = profile.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[3].parse::<f64>().unwrap(), 1.0);
    // the reference against itself gives a zero model error
    let self_ev = t.path().join("self");
    assert!(run(&["eval", s(&refs), s(&refs), "--config", s(&cfg), "--out", s(&self_ev)]).status.success());
    let row = fs::read_to_string(self_ev.join("errors.csv")).unwrap();
    let eps: f64 = row.lines().nth(2).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert_eq!(eps, 0.0);
}

#[test]
fn gauss_test_spectrum_and_export() {
    let t = TempDir::new().unwrap();
    let p = t.path().join("w.phkf");
    save_field(&p, &white_noise(256, 1.0, Seed(1)).unwrap()).unwrap();
    let cfg = write_config(t.path(), "g.json", r#"{"model": {"preset": {"name": "A", "scales": 3, "angles": 4}}}"#);
    let o = t.path().join("o");
    let r = run(&["gauss-test", s(&p), "--config", s(&cfg), "--out", s(&o)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = String::from_utf8_lossy(&r.stdout);
    assert!(text.contains("consistent with Gaussian"));
    assert!(!text.contains("non-Gaussian (sparse)"));
    let r = run(&["spectrum", s(&p), "--out", s(&o)]);
    assert!(r.status.success());
    assert!(fs::read_to_string(o.join("spectrum.csv")).unwrap().starts_with("radius,power,log10_power,count\n"));
    let r = run(&["export", s(&p), "--out", s(&o)]);
    assert!(r.status.success());
    let img = fs::read(o.join("w.pgm")).unwrap();
    assert_eq!(img.len(), b"P5\n256 256\n65535\n".len() + 131072);
    let (w, h, _) = decode_pgm(&img).unwrap();
    assert_eq!((w, h), (256, 256));
    let side: PgmSidecar = serde_json::from_slice(&fs::read(sidecar_path(&o.join("w.pgm"))).unwrap()).unwrap();
    assert!(side.min < side.max);
}

#[test]
fn spikes_are_flagged_non_gaussian() {
    let t = TempDir::new().unwrap();
    let mut v = vec![0.0; 32 * 32];
    for i in [37, 300, 777] {
        v[i] = 5.0;
    }
    let p = t.path().join("spikes.phkf");
    save_field(&p, &ComplexField::from_real(32, &v).unwrap()).unwrap();
    let cfg = write_config(t.path(), "g.json", r#"{"model": {"preset": {"name": "A", "scales": 3, "angles": 4}}}"#);
    let r = run(&["gauss-test", s(&p), "--config", s(&cfg), "--out", s(&t.path().join("o"))]);
    assert!(r.status.success());
    assert!(String::from_utf8_lossy(&r.stdout).contains("overall: non-Gaussian"));
}
