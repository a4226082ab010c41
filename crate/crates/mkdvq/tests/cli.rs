//! End-to-end runs of the `mkdvq` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mkdvq(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mkdvq"))
        .args(args)
        .current_dir(dir)
        .env_remove("MKDVQ_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

const PAINLEVE: &str = r#"{
  "command": "painleve",
  "painleve": { "s": [0.0, 0.3], "y": [-1.0, 0.0, 1.0], "method": "rh" }
}"#;

#[test]
fn empty_grid_exits_with_config_error() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "c.json", r#"{ "command": "rhsolve", "reflection": { "kind": "zero" }, "grid": { "x": [], "t": [1.0] } }"#);
    let o = mkdvq(&["rhsolve", "--config", &cfg], d.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    let unknown = write(d.path(), "u.json", r#"{ "command": "painleve", "bogus": 1 }"#);
    let mismatch = write(d.path(), "p.json", PAINLEVE);
    let missing = d.path().join("nope.json").display().to_string();
    for args in [
        vec!["painleve", "--config", unknown.as_str()],
        vec!["simulate", "--config", mismatch.as_str()],
        vec!["painleve", "--config", missing.as_str()],
        vec!["painleve", "--config", mismatch.as_str(), "--threads", "0"],
    ] {
        let o = mkdvq(&args, d.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn painleve_run_succeeds_and_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "p.json", PAINLEVE);
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let out = d.path().join(format!("run{i}"));
        let o = mkdvq(&["painleve", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads], d.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read(out.join("painleve.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn trivial_rhsolve_gives_zero_field() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "z.json", r#"{ "command": "rhsolve", "reflection": { "kind": "zero" }, "grid": { "x": [1.0, 2.0], "t": [0.5] } }"#);
    let o = mkdvq(&["rhsolve", "--config", &cfg, "--out", "o"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(d.path().join("o/rhsolve.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let hdr = rdr.headers().unwrap().clone();
    let ui = hdr.iter().position(|h| h == "u").expect("u column");
    let rows: Vec<_> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!(r[ui].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        let cfg = mkdvq::cli::JobConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        let ok = cfg.validate(cfg.command.expect("command set")).is_ok();
        let bad = p.file_name().unwrap().to_str().unwrap().starts_with("bad_");
        assert_eq!(ok, !bad, "{}", p.display());
        n += 1;
    }
    assert!(n >= 9);
}

#[test]
fn out_of_sector_asymptote_point_is_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "a.json",
        r#"{ "command": "asymptote", "reflection": { "kind": "gaussian", "c0": 0.0, "c1": 1.0, "w": 1.0 }, "points": [ { "x": 5.0, "t": 1.0 } ] }"#,
    );
    let o = mkdvq(&["asymptote", "--config", &cfg], d.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
