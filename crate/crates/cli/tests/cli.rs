use std::path::Path;
use std::process::{Command, Output};

use kochergin_cli::pipeline::{sha256_file, Manifest, MANIFEST, WIENER_CSV_HEADER, WINDOWS_CSV_HEADER};
use kochergin_cli::ExperimentConfig;
use kochergin_core::correlation::CorrelationSeries;

fn kochergin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kochergin")).args(args).env("KOCHERGIN_WORKERS", "2").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn cf_prints_fibonacci_denominators() {
    let o = kochergin(&["cf", "--alpha", "golden", "--depth", "10"]);
    assert!(o.status.success());
    let q: Vec<u64> = stdout(&o).lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(q, vec![1, 1, 2, 3, 5, 8, 13, 21, 34, 55, 89]);
}

#[test]
fn bad_exponent_is_a_config_error() {
    let o = kochergin(&["checks", "--eta", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eta"));
}

#[test]
fn bad_worker_count_is_a_config_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_kochergin")).args(["cf"]).env("KOCHERGIN_WORKERS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn correlate_emits_documented_schema() {
    let o = kochergin(&["correlate", "--t-max", "500"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let s = CorrelationSeries::read_csv(text.as_bytes()).unwrap();
    assert_eq!(s.t.first(), Some(&0.0));
    assert!((s.t.last().unwrap() - 500.0).abs() < 1e-9);
    // 17 significant digits per field
    let row = text.lines().nth(1).unwrap();
    assert!(row.split(',').all(|f| f.split('e').next().unwrap().trim_start_matches('-').len() == 18), "{row}");
}

fn check_manifest(dir: &Path) -> Manifest {
    let m: Manifest = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST)).unwrap()).unwrap();
    let mut on_disk: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != MANIFEST)
        .collect();
    on_disk.sort();
    let mut listed: Vec<String> = m.files.iter().map(|f| f.path.clone()).collect();
    listed.sort();
    assert_eq!(listed, on_disk);
    for f in &m.files {
        assert_eq!(sha256_file(&dir.join(&f.path)).unwrap(), f.sha256, "{}", f.path);
    }
    m
}

#[test]
fn minimal_run_is_reproducible_and_hashed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = kochergin(&["run", "--preset", "minimal", "--output", d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ma = check_manifest(&a);
    let mb = check_manifest(&b);
    assert_eq!(ma.status, "ok");
    assert!(ma.hard_ok);
    // config.toml records the output directory; every data file is byte-identical
    let data = |m: &Manifest| m.files.iter().filter(|f| f.path != "config.toml").cloned().collect::<Vec<_>>();
    assert_eq!(data(&ma), data(&mb));
    for name in ["correlation.csv", "windows.csv", "spectrum.csv", "wiener.csv", "checks.json", "badset_q144.json"] {
        assert!(ma.files.iter().any(|f| f.path == name), "{name}");
    }
    let w = std::fs::read_to_string(a.join("windows.csv")).unwrap();
    assert_eq!(w.lines().next(), Some(WINDOWS_CSV_HEADER));
    let w = std::fs::read_to_string(a.join("wiener.csv")).unwrap();
    assert_eq!(w.lines().next(), Some(WIENER_CSV_HEADER));
    let cfg = ExperimentConfig::from_toml(&std::fs::read_to_string(a.join("config.toml")).unwrap()).unwrap();
    assert_eq!(cfg.to_toml(), ma.config);

    // the spectrum subcommand reproduces the pipeline's spectrum.csv
    let out = tmp.path().join("s.csv");
    let o = kochergin(&[
        "spectrum",
        "--preset",
        "minimal",
        "--input",
        a.join("correlation.csv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(a.join("spectrum.csv")).unwrap());
}

#[test]
fn failing_stage_keeps_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset("minimal").unwrap();
    // a flow box whose base straddles the singular fibre
    cfg.observable.theta0 = 1e-4;
    cfg.observable.box_index = 5;
    cfg.output = tmp.path().join("run");
    let path = tmp.path().join("c.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    let o = kochergin(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("observables"));
    let m = check_manifest(&cfg.output);
    assert_eq!(m.status, "FAILED");
    assert!(m.error.unwrap().contains("theta0"));
    assert_eq!(m.files.len(), 1);
}

#[test]
fn badset_subcommand_writes_json() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("b.json");
    let o = kochergin(&["badset", "--q", "144", "--out", out.to_str().unwrap(), "--check"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["q_n"], 144.0);
    let towers = v["towers"].as_array().unwrap();
    assert!(!towers.is_empty());
    for t in towers {
        for key in ["center", "half_width", "s", "height", "t_i"] {
            assert!(t[key].is_f64(), "{key}");
        }
        assert!(t["half_width"].as_f64().unwrap() <= v["half_width"].as_f64().unwrap());
    }
    assert!(String::from_utf8_lossy(&o.stderr).contains("b1_disjoint"));
}
