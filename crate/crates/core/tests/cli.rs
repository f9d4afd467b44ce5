use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use icann::checkpoint::Checkpoint;
use icann::datasets::{ingest_csv, ExperimentKind};

fn icann(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icann"))
        .args(args)
        .current_dir(dir)
        .env("ICANN_THREADS", "1")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn generate_train_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = icann(&["generate", "--example", "1", "--out-dir", "data"], d);
    assert!(o.status.success(), "{o:?}");
    let train = ingest_csv(&d.join("data/example1_train.csv")).unwrap();
    assert_eq!(train.len(), 341);
    assert_eq!(train.kind, ExperimentKind::Multiaxial);
    let test = ingest_csv(&d.join("data/example1_test.csv")).unwrap();
    assert_eq!(test.kind, ExperimentKind::Multiaxial);

    fs::write(d.join("cfg.json"), r#"{"epochs": 4, "stagger_schedule": [20, "all"]}"#).unwrap();
    let o = icann(
        &["train", "--data", "data/example1_train.csv", "--out", "ck.json", "--config", "cfg.json", "--epochs", "99"],
        d,
    );
    assert!(o.status.success(), "{o:?}");
    let out = stdout(&o);
    assert!(out.contains("1w_omega") && out.contains("2w_omega"));
    let loss = fs::read_to_string(d.join("ck.loss.csv")).unwrap();
    // header plus two stages of four epochs; the config file wins over the flag
    assert_eq!(loss.lines().count(), 1 + 8);
    let ck = Checkpoint::load(&d.join("ck.json")).unwrap();
    assert_eq!(ck.branch_count, 2);
    assert!(ck.params().unwrap().is_feasible());

    let o = icann(&["evaluate", "--checkpoint", "ck.json", "--data", "data/example1_train.csv", "--out", "ev.csv"], d);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).starts_with("mse "));
    let ev = fs::read_to_string(d.join("ev.csv")).unwrap();
    assert_eq!(ev.lines().count(), 342);
    assert!(ev.starts_with("t,S11_pred"));

    let o = icann(&["evaluate", "--checkpoint", "ck.json", "--out", "uni.csv"], d);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(fs::read_to_string(d.join("uni.csv")).unwrap().lines().count(), 268);
}

#[test]
fn noisy_example2_is_normalized() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = icann(&["generate", "--example", "2", "--out-dir", ".", "--noise-sigma", "0.02", "--seed", "5"], d);
    assert!(o.status.success(), "{o:?}");
    let e = ingest_csv(&d.join("example2_train.csv")).unwrap();
    assert!(e.s_max > 1.0);
    // noise can push a component slightly past the normalized maximum
    let m = e.max_abs_stress();
    assert!(m > 0.9 && m < 1.2, "{m}");
}

#[test]
fn fixture_trains_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    for f in ["vhb_uniaxial.csv", "vhb_uniaxial.json"] {
        fs::copy(src.join(f), d.join(f)).unwrap();
    }
    let o = icann(&["train", "--data", "vhb_uniaxial.csv", "--out", "vhb.json", "--epochs", "3"], d);
    assert!(o.status.success(), "{o:?}");
    let ck = Checkpoint::load(&d.join("vhb.json")).unwrap();
    assert_eq!(ck.stress_unit, "kPa");
    let o = icann(&["evaluate", "--checkpoint", "vhb.json", "--data", "vhb_uniaxial.csv", "--out", "ev.csv"], d);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(fs::read_to_string(d.join("ev.csv")).unwrap().lines().count(), 162);
}

#[test]
fn export_classical_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = icann(&["export-classical", "--kind", "bresler-pister", "--zeta1", "-0.2", "--zeta2", "0.1", "--out", "bp.json"], d);
    assert!(o.status.success(), "{o:?}");
    let ck = Checkpoint::load(&d.join("bp.json")).unwrap();
    assert_eq!(ck.branch_count, 1);
    let p = ck.params().unwrap().potential(0);
    assert_eq!(p.w0[0][0], -0.2);
    assert_eq!(p.p1, 1.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = icann(&["evaluate", "--checkpoint", "missing.json", "--out", "x.csv"], d);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.json"));

    let o = icann(&["export-classical", "--kind", "bresler-pister", "--zeta1", "1", "--zeta2", "-1", "--out", "x.json"], d);
    assert_eq!(o.status.code(), Some(2));
    let o = icann(&["export-classical", "--kind", "stassi", "--out", "x.json"], d);
    assert_eq!(o.status.code(), Some(2));

    fs::write(d.join("bad.csv"), "t,F11,S11\n0,1,0\n1,1.1,0.5\n1,1.2,0.7\n").unwrap();
    fs::write(d.join("cfg.json"), r#"{"epochs": 1, "momentum": 0.5}"#).unwrap();
    let o = icann(&["train", "--data", "bad.csv", "--out", "c.json", "--config", "cfg.json"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("momentum"));
    let o = icann(&["train", "--data", "bad.csv", "--out", "c.json", "--epochs", "1"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));

    fs::write(d.join("good.csv"), "t,F11,S11\n0,1,0\n1,1.1,0.5\n").unwrap();
    let o = icann(&["train", "--data", "good.csv", "--out", "c.json", "--stagger", "70,30"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("strictly increasing"));
}
