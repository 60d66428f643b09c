use std::path::Path;
use std::process::{Command, Output};

fn vscstab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vscstab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn no_arguments_prints_help_and_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let o = vscstab(&[], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn help_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let o = vscstab(&["--help"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("cct-sweep"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(vscstab(&["frobnicate"], tmp.path()).status.code(), Some(1));
    assert_eq!(vscstab(&["repro", "fig99"], tmp.path()).status.code(), Some(1));
}

#[test]
fn malformed_config_reports_line_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.json"), "{\n  \"op\": {\"p_ref\": 1,}\n}\n").unwrap();
    let o = vscstab(&["cca", "--config", "bad.json"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("bad.json:2:"), "{err}");
}

#[test]
fn invalid_values_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("neg.json"), r#"{"grid": {"scr": -1}}"#).unwrap();
    let o = vscstab(&["cca", "--config", "neg.json"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let o = vscstab(&["scenario", "--dt", "-1"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_oracle_bracket_is_numerical() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("o.json"),
        r#"{"oracle": {"t_lo": 0.001, "t_hi": 0.15}}"#,
    )
    .unwrap();
    let o = vscstab(&["cca", "--oracle", "--config", "o.json"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("bracket"));
}

#[test]
fn cca_headline_from_preset() {
    let tmp = tempfile::tempdir().unwrap();
    let o = vscstab(&["cca", "--config", "paper_default.json"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["outcome"], "CRITICAL");
    let t = v["t_cct_estimate"].as_f64().unwrap();
    assert!((t - 0.175).abs() < 1e-3, "{t}");
    assert!((v["delta_a"].as_f64().unwrap() - 0.253).abs() < 1e-3);
}

#[test]
fn repro_fig6b_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    let o = vscstab(&["repro", "fig6b"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("100 ms fault: SYNCHRONIZED"), "{text}");
    assert!(text.contains("300 ms fault: LOST_SYNC"), "{text}");
}

#[test]
fn scenario_writes_outputs_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let o = vscstab(&["scenario", "--config", "fig4b", "--out", "run"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let run = tmp.path().join("run");
    for f in ["trajectory.csv", "verdict.json", "manifest.json"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let verdict: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["classification"], "SYNCHRONIZED");
    let head = std::fs::read_to_string(run.join("trajectory.csv")).unwrap();
    assert!(head.starts_with("t,delta,d_omega,i_cd_ref,i_cq_ref,p,q,u_pcc,limiter_active\n"));

    // the resolved config in the manifest reproduces the run byte for byte
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "scenario");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
    std::fs::write(tmp.path().join("resolved.json"), manifest["resolved"].to_string()).unwrap();
    let o = vscstab(&["scenario", "--config", "resolved.json", "--out", "again"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(run.join("trajectory.csv")).unwrap(),
        std::fs::read(tmp.path().join("again/trajectory.csv")).unwrap()
    );
}

#[test]
fn seeded_portrait_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("p.json"), r#"{"op": {"p_ref": 0.5}, "portrait": {"n": 5}}"#).unwrap();
    let run = |out: &str| {
        let o = vscstab(&["portrait", "--config", "p.json", "--seed", "7", "--out", out], tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(tmp.path().join(out).join("portrait.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 26);
}

#[test]
fn sweep_prints_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let o = vscstab(&["cct-sweep"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("bandwidth_hz,k_f,delta_a,delta_cca,s_accel,t_cct_est,t_cct_oracle,verdict")
    );
    assert_eq!(lines.count(), 15);
}
