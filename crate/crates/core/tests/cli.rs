use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_neutral-spde"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn variant(dir: &Path, name: &str, from: &str, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = std::fs::read_to_string(config(from)).unwrap();
    for (a, b) in edits {
        assert!(text.contains(a), "{a} not in {from}");
        text = text.replace(a, b);
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn shipped_configs_validate() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["reference.toml", "ou.toml", "linear.toml", "impulsive.toml"] {
        let o = run(&["validate"], &config(name), tmp.path());
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok "));
    }
}

#[test]
fn broken_config_lists_every_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = variant(
        tmp.path(),
        "broken.toml",
        "reference.toml",
        &[("scale = [0.3]", "scale = [0.9]"), ("times = [0.5]", "times = [0.5001]"), ("alpha = 0.75", "alpha = 0.4")],
    );
    let o = run(&["validate"], &cfg, tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    for key in ["wellposedness", "impulses.times[0]", "coeffs.alpha"] {
        assert!(err.contains(key), "{key} missing from:\n{err}");
    }
    assert!(err.contains("1.1"), "gate value missing:\n{err}");
}

#[test]
fn tk_report_has_one_row_per_index() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["tk", "--paths", "20", "--seed", "3", "--config"])
        .arg(config("reference.toml"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("tk.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for (row, n) in rows.iter().zip(["2", "8", "32", "128"]) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 8);
        assert_eq!((cols[0], cols[1], cols[5], cols[6]), ("n", n, "20", "3"));
    }
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("tk.json")).unwrap()).unwrap();
    assert_eq!(json["metadata"]["n"], 8);
    assert_eq!(json["metadata"]["j"], 8);
    assert!(csv.contains(json["metadata"]["config_hash"].as_str().unwrap()));
    let dat = std::fs::read_to_string(tmp.path().join("tk.dat")).unwrap();
    assert_eq!(dat.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn deterministic_simulation_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = variant(
        tmp.path(),
        "quiet.toml",
        "reference.toml",
        &[("kind = \"diagonal\"\nadditive = 0.5\nsigma = 0.2", "kind = \"zero\"")],
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run(&["simulate"], &cfg, &a).status.success());
    assert!(run(&["simulate", "--seed", "12345"], &cfg, &b).status.success());
    let (x, y) = (
        std::fs::read(a.join("trajectory.csv")).unwrap(),
        std::fs::read(b.join("trajectory.csv")).unwrap(),
    );
    // the seed is part of the hash line only
    let body = |v: &[u8]| String::from_utf8_lossy(v).lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&x), body(&y));
    assert!(!run(&["simulate"], &cfg, &b).status.success());
    assert!(run(&["simulate"], &cfg, &a).status.success());
    assert_eq!(std::fs::read(a.join("trajectory.csv")).unwrap(), x);
    let text = String::from_utf8(x).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("t,mode_1,"));
    assert_eq!(text.lines().filter(|l| l.ends_with(",1")).count(), 1);
}

#[test]
fn mismatched_outputs_need_force() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = config("impulsive.toml");
    assert!(run(&["simulate"], &cfg, &out).status.success());
    let before = std::fs::read(out.join("trajectory.csv")).unwrap();
    let o = run(&["simulate", "--seed", "1"], &cfg, &out);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
    assert_eq!(std::fs::read(out.join("trajectory.csv")).unwrap(), before);
    assert!(run(&["simulate", "--seed", "1", "--force"], &cfg, &out).status.success());
    assert_ne!(std::fs::read(out.join("trajectory.csv")).unwrap(), before);
}

#[test]
fn exit_codes_name_the_failing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin().args(["tk", "--bogus"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["simulate"], &tmp.path().join("missing.toml"), tmp.path());
    assert_eq!(o.status.code(), Some(1));

    let cfg = variant(tmp.path(), "picard.toml", "reference.toml", &[("picard_max_iter = 50", "picard_max_iter = 1")]);
    let o = run(&["simulate"], &cfg, &tmp.path().join("p"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Picard"));

    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = run(&["simulate"], &config("ou.toml"), &blocker);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn probe_flags_understated_constants() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = run(&["probe"], &config("reference.toml"), &tmp.path().join("ok"));
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let cfg = variant(
        tmp.path(),
        "understated.toml",
        "reference.toml",
        &[("# [coeffs.constants]\n# c1 = 0.64\n# c2 = 0.04\n# c3 = 0.75\n# c4 = 0.2\n# c5 = 0.2",
           "[coeffs.constants]\nc1 = 0.1\nc2 = 0.04\nc3 = 0.75\nc4 = 0.2\nc5 = 0.2")],
    );
    let o = run(&["probe"], &cfg, &tmp.path().join("bad"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("C1"));
    let csv = std::fs::read_to_string(tmp.path().join("bad/probe.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("C1,") && l.ends_with(",true")));
}
