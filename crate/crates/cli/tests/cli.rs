use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ergosearch"));
    c.env_remove("ERGOSEARCH_OUT");
    c
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// The shipped cavity scenario cut down to `duration` seconds.
fn short_cavity(dir: &Path, duration: f64) -> PathBuf {
    let text = std::fs::read_to_string(shipped("cavity.cfg")).unwrap();
    let text = text.replace("duration = 900.0", &format!("duration = {duration:.1}"));
    assert!(text.contains(&format!("duration = {duration:.1}")));
    let path = dir.join("short.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn validate_accepts_shipped_configs() {
    for name in ["cavity.cfg", "unije.cfg"] {
        let out = bin().arg("validate").arg(shipped(name)).output().unwrap();
        ok(&out);
    }
}

#[test]
fn config_and_usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.cfg");
    let text = std::fs::read_to_string(shipped("cavity.cfg")).unwrap().replace("speed = 0.015", "speed = -1.0");
    std::fs::write(&bad, text).unwrap();
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = bin().arg("validate").arg(tmp.path().join("missing.cfg")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = bin().args(["run", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn runtime_failure_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_cavity(tmp.path(), 2.0);
    // An iteration cap of one cannot reach the solver tolerance.
    let text = std::fs::read_to_string(&cfg).unwrap().replace(
        "footprint = {",
        "solver = { method = \"cg\", max_iterations = 1 }\nfootprint = {",
    );
    std::fs::write(&cfg, text).unwrap();
    ok(&bin().arg("validate").arg(&cfg).output().unwrap());
    let out = bin().arg("run").arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_cavity(tmp.path(), 20.0);
    let before = std::fs::read(&cfg).unwrap();
    let mut metrics = Vec::new();
    for k in 0..2 {
        let dir = tmp.path().join(format!("run{k}"));
        ok(&bin().arg("run").arg(&cfg).args(["--seed", "7", "--out"]).arg(&dir).output().unwrap());
        metrics.push(std::fs::read(dir.join("metrics.csv")).unwrap());
    }
    assert!(!metrics[0].is_empty());
    assert_eq!(metrics[0], metrics[1]);
    assert_eq!(std::fs::read(&cfg).unwrap(), before, "config must not be modified");
}

#[test]
fn output_root_comes_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_cavity(tmp.path(), 1.0);
    let root = tmp.path().join("root");
    let out = bin().env("ERGOSEARCH_OUT", &root).arg("run").arg(&cfg).output().unwrap();
    ok(&out);
    for f in ["metrics.csv", "agents.csv", "targets.csv", "summary.json", "fields/m_000005.bin"] {
        assert!(root.join("out/cavity").join(f).exists(), "missing {f}");
    }
}

#[test]
fn sweep_tabulates_every_ratio_mode_and_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_cavity(tmp.path(), 3.0);
    let out = bin()
        .arg("sweep")
        .arg(&cfg)
        .args(["--lambdas", "0.25,1,10,50,1000", "--horizons", "1,2,3", "--jobs", "2", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    ok(&out);
    let mut rd = csv::Reader::from_path(tmp.path().join("sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 5 * 2 * 3);
    assert_eq!(&rows[0][0], "0.25");
    assert_eq!(&rows[0][1], "dynamic");
    assert_eq!(&rows[29][0], "1000.0");
    assert_eq!(&rows[29][1], "static");
    assert_eq!(&rows[29][2], "3.0");
}

#[test]
fn render_writes_png_and_pgm() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_cavity(tmp.path(), 1.0);
    let dir = tmp.path().join("o");
    ok(&bin().arg("run").arg(&cfg).arg("--out").arg(&dir).output().unwrap());
    let field = dir.join("fields/m_000000.bin");
    ok(&bin().arg("render").arg(&field).output().unwrap());
    let png = std::fs::read(field.with_extension("png")).unwrap();
    assert_eq!(&png[1..4], b"PNG");
    ok(&bin().arg("render").arg("--pgm").arg(&field).output().unwrap());
    let pgm = std::fs::read(field.with_extension("pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n100 100\n255\n"));
    assert_eq!(pgm.len(), b"P5\n100 100\n255\n".len() + 100 * 100);
}
