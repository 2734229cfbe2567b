use std::path::Path;
use std::process::{Command, Output};

fn bmodes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bmodes"))
        .args(args)
        .output()
        .expect("binary runs")
}

const SMALL: &str = r#"
[grid]
r_max = 3.0
z_max = 3.0
nr = 12
nz = 17

[modes]
n = 4
k = 2

[time]
t_final = 0.01
diag_every = 2

[[initial.psi_a]]
amplitude = 0.3
r0 = 1.2
z0 = 0.0
width = 0.4

[[initial.c]]
amplitude = 0.2
r0 = 1.2
z0 = 0.1
width = 0.4
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn single_run_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let o = bmodes(&[&cfg, "--out", out_dir.to_str().unwrap(), "--dump-fields"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "diagnostics.csv",
        "record.json",
        "status.json",
        "manifest.json",
        "fields.bin",
    ] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["n"], 4);
    assert_eq!(m["k"], 2);
    assert_eq!(m["complete"], true);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    let csv = std::fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    assert!(csv.starts_with(
        "t,E_p,calE_p,D,lead_L3_U,lead_L3_xi,div_max,u_L2,eta_L2,u_L5_acc,varpi_1,varpi_2\n"
    ));
}

#[test]
fn overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("o");
    let o = bmodes(&[
        &cfg,
        "-o",
        out_dir.to_str().unwrap(),
        "--n",
        "6",
        "--k",
        "3",
        "--nr",
        "10",
        "--t-final",
        "0.005",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["n"], 6);
    assert_eq!(m["k"], 3);
    assert_eq!(m["grid"]["nr"], 10);
    assert!((m["t_reached"].as_f64().unwrap() - 0.005).abs() < 1e-12);
}

#[test]
fn invalid_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[grid]\nnr = 12\nnz = 0\n");
    let o = bmodes(&[&cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
    let cfg = write_config(dir.path(), "[modes]\nbogus = 1\n");
    let o = bmodes(&[&cfg]);
    assert!(!o.status.success());
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("sw");
    let o = bmodes(&[&cfg, "--out", out_dir.to_str().unwrap(), "--sweep", "N=4,8"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out_dir.join("N8").join("manifest.json").exists());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("slope u_L5"), "{stdout}");
}

#[test]
fn bad_sweep_list_rejected() {
    let o = bmodes(&["--sweep", "8,16"]);
    assert!(!o.status.success());
}

#[test]
fn check_suite_passes() {
    let o = bmodes(&["--check"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
}
