use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn chainrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chainrec"))
        .args(args)
        .env_remove("CHAINREC_WORKERS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// z^n at 32² with optional edits, written next to the outputs.
fn small_zn(dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(configs().join("zn_example.json")).unwrap()).unwrap();
    v["subdivisions"] = serde_json::json!([32, 32]);
    v.as_object_mut().unwrap().remove("output_dir");
    edit(&mut v);
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    p
}

fn halving() -> String {
    configs().join("halving.json").display().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn cr_writes_both_modes_and_stamps_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = chainrec(&["cr", "--config", &halving(), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["cr_outer.json", "cr_inner.json", "meta.json", "timing.json", "cr.pgm", "cr_inner.pgm"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let outer: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("cr_outer.json")).unwrap()).unwrap();
    let hash = outer["config_hash"].as_str().unwrap().to_owned();
    assert_eq!(hash.len(), 64);
    for f in ["cr_inner.json", "meta.json", "timing.json"] {
        let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join(f)).unwrap()).unwrap();
        assert_eq!(v["config_hash"], hash.as_str(), "{f}");
    }
    let pgm = fs::read_to_string(dir.path().join("cr.pgm")).unwrap();
    assert!(pgm.contains(&format!("# config_hash {hash}")));
}

#[test]
fn mode_flag_limits_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = chainrec(&["cr", "--config", &halving(), "--out", s(dir.path()), "--mode", "outer"]);
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("cr_outer.json").exists());
    assert!(!dir.path().join("cr_inner.json").exists());
}

#[test]
fn bad_config_exits_4_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_zn(dir.path(), |v| v["connector_max_len"] = serde_json::json!(-1));
    let o = chainrec(&["cr", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("connector_max_len"), "{}", stderr(&o));

    let o = chainrec(&["cr", "--config", s(&dir.path().join("nope.json")), "--out", s(dir.path())]);
    assert_eq!(code(&o), 4);
    let o = chainrec(&["cr", "--config", &halving(), "--out", s(dir.path()), "--mode", "sideways"]);
    assert_eq!(code(&o), 4);
    assert_eq!(code(&chainrec(&["--help"])), 0);
}

#[test]
fn conley_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_zn(dir.path(), |_| {});
    let out = dir.path().join("ok");
    let o = chainrec(&["conley", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("conley_report.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], "CONSISTENT");

    let o = chainrec(&["conley", "--config", s(&cfg), "--out", s(&dir.path().join("bad")), "--corrupt-record"]);
    assert_eq!(code(&o), 2, "{}", stdout(&o));

    // without the unbounded flag the exterior region cannot be verified
    let cfg = small_zn(dir.path(), |v| {
        for r in v["attractors"]["regions"].as_array_mut().unwrap() {
            r["unbounded"] = Value::Bool(false);
        }
    });
    let o = chainrec(&["conley", "--config", s(&cfg), "--out", s(&dir.path().join("inc"))]);
    assert_eq!(code(&o), 3, "{}", stdout(&o));
}

#[test]
fn chain_present_and_absent() {
    let dir = tempfile::tempdir().unwrap();
    let o = chainrec(&["chain", "--config", &halving(), "--out", s(dir.path()), "--from", "0.01", "--to", "0.0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("chain.json")).unwrap()).unwrap();
    assert!(v["config_hash"].is_string());

    let o = chainrec(&["chain", "--config", &halving(), "--out", s(dir.path()), "--from", "0.9", "--to", "0.9"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("ABSENT"));

    let o = chainrec(&["chain", "--config", &halving(), "--out", s(dir.path()), "--from", "-0.2", "--to", "0,1"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn verify_pass_and_refusal() {
    let dir = tempfile::tempdir().unwrap();
    let o = chainrec(&["verify", "--config", &halving(), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(v["pass"], true);

    let bad = configs().join("not_conjugate.json");
    let o = chainrec(&["verify", "--config", s(&bad), "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn worker_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_zn(dir.path(), |v| v["workers"] = serde_json::json!(0));
    // the config asks for zero workers, which is an error unless overridden
    let o = chainrec(&["cr", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&o), 4);
    let o = Command::new(env!("CARGO_BIN_EXE_chainrec"))
        .args(["cr", "--config", s(&cfg), "--out", s(dir.path())])
        .env("CHAINREC_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = Command::new(env!("CARGO_BIN_EXE_chainrec"))
        .args(["cr", "--config", s(&cfg), "--out", s(dir.path()), "--workers", "0"])
        .env("CHAINREC_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 4);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_zn(dir.path(), |_| {});
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&chainrec(&["conley", "--config", s(&cfg), "--out", s(&a), "--workers", "1"])), 0);
    assert_eq!(code(&chainrec(&["conley", "--config", s(&cfg), "--out", s(&b), "--workers", "3"])), 0);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 10);
    for n in names {
        if n == "timing.json" {
            continue;
        }
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}
