use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pks(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pks")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const FIRST_ORDER: &str = "[scenario]\nname = fo\nrecipe = first_order\n[initial]\nkind = shifted_gaussian\nmass = 1.3\nshift = 0.8, -0.5\n[grid]\nkind = cartesian\nn = 64\nhalf_width = 12\n[params]\ntau_to = 5\n[check.first_order_exponent]\ntolerance = 0.05\n";

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn malformed_config_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", &FIRST_ORDER.replace("half_width = 12", "half_width = twelve"));
    let o = pks(&["run", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("grid.half_width"), "{}", stderr(&o));

    let cfg = write(dir.path(), "syntax.cfg", "[scenario\nname = x\n");
    let o = pks(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1"), "{}", stderr(&o));
}

#[test]
fn zero_tolerance_is_rejected_at_parse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "zero.cfg", &FIRST_ORDER.replace("tolerance = 0.05", "tolerance = 0"));
    let o = pks(&["run", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("check.first_order_exponent.tolerance"), "{}", stderr(&o));
    assert!(!dir.path().join("fo").exists());
}

#[test]
fn failing_check_exits_1_and_still_writes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "strict.cfg", &FIRST_ORDER.replace("tolerance = 0.05", "tolerance = 0.05\nexpected = 3"));
    let o = pks(&["run", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("fo/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["first_order_exponent"]["result"], "fail");
    assert_eq!(summary["first_order_exponent"]["expected"], 3.0);
}

#[test]
fn list_names_the_bundled_recipes() {
    let o = pks(&["list"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    for n in ["virial_2d", "profile_gm", "rate_n3", "c2_constant", "blowup_sweep", "phi_monotone", "wstar_moments"] {
        assert!(text.contains(n), "{n} missing from\n{text}");
    }
}

#[test]
fn constants_in_two_dimensions_exit_1() {
    let o = pks(&["constants", "--n", "2", "--mass", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("profile"), "{}", stderr(&o));
}

#[test]
fn c2_export_carries_the_oracle_gap() {
    let o = pks(&["constants", "--n", "4", "--mass", "1", "--b0", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["oracle_disagreement"].as_f64().unwrap() <= 1e-3);
    let c2 = v["c2"].as_f64().unwrap();
    assert!((c2 * 256.0 * std::f64::consts::PI.powi(4) - 1.0).abs() < 1e-3, "{c2}");
}

#[test]
fn reruns_are_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = write(a.path(), "fo.cfg", FIRST_ORDER);
    for d in [&a, &b] {
        let o = pks(&["run", &cfg, "--out", d.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["first_order.csv", "summary.json"] {
        assert_eq!(fs::read(a.path().join("fo").join(f)).unwrap(), fs::read(b.path().join("fo").join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.path().join("fo/first_order.csv")).unwrap();
    assert!(!csv.contains('\r'));
}

#[test]
fn parallel_runs_use_separate_directories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "fo.cfg", FIRST_ORDER);
    let o = pks(&["run", &cfg, &cfg, "--parallel", "2", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let a = fs::read(dir.path().join("fo/first_order.csv")).unwrap();
    let b = fs::read(dir.path().join("fo-2/first_order.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn worst_exit_code_wins() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "fo.cfg", FIRST_ORDER);
    let bad = write(dir.path(), "bad.cfg", "[scenario]\nname = x\n");
    let o = pks(&["run", &good, &bad, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
