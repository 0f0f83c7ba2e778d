//! End-to-end checks of the command-line surface: subcommands, artifact
//! layout, and exit codes (0 pass, 1 failed check, 2 usage error).

use std::process::Command;

fn eoslab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eoslab"))
}

#[test]
fn simulate_writes_trajectory_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    let report = dir.path().join("phenomena.json");
    let out = eoslab()
        .args([
            "simulate",
            "--spec",
            r#"{"kind":"good","a":1.0}"#,
            "--x0",
            "0.2",
            "--y0",
            "10",
            "--C",
            "4",
            "--out",
        ])
        .arg(&csv)
        .arg("--report")
        .arg(&report)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("k,x,y,loss,delta,ell,q,r,uu,sharpness"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("Converged"), "{stdout}");
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed["catapult"], true);
    assert_eq!(parsed["eos"]["limiting"], true);
}

#[test]
fn simulate_usage_errors_exit_2() {
    // Unknown objective kind.
    let out = eoslab()
        .args([
            "simulate", "--spec", r#"{"kind":"odd"}"#, "--x0", "1", "--y0", "2", "--h", "0.1",
            "--out", "/tmp/unused.csv",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // Neither --h nor --C.
    let out = eoslab()
        .args([
            "simulate",
            "--spec",
            r#"{"kind":"bad","b":3}"#,
            "--x0",
            "1",
            "--y0",
            "2",
            "--out",
            "/tmp/unused.csv",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // Unknown flag (clap usage error).
    let out = eoslab().args(["simulate", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    // Unknown subcommand.
    let out = eoslab().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_grid_writes_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    std::fs::write(
        &grid,
        r#"[
            {"spec": {"kind": "bad", "b": 3}, "x0": 6.0, "y0": 1.0, "c": 2.0},
            {"spec": {"kind": "bad", "b": 3}, "x0": 6.0, "y0": 1.0, "c": 8.0}
        ]"#,
    )
    .unwrap();
    let out = eoslab()
        .env("EOSLAB_THREADS", "2")
        .args(["verify", "--theorem", "no_eos_bad", "--grid"])
        .arg(&grid)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let checks = std::fs::read_to_string(dir.path().join("checks.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> =
        checks.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["hypotheses"], "satisfied");
    assert_eq!(lines[0]["verdict"], true);
    // Out-of-window cell reported, not dropped.
    assert_eq!(lines[1]["hypotheses"], "violated");
    assert_eq!(lines[1]["verdict"], serde_json::Value::Null);
}

#[test]
fn verify_rejects_bad_inputs() {
    let out = eoslab()
        .args(["verify", "--theorem", "not_a_theorem", "--grid", "/tmp/nonexistent.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    std::fs::write(&grid, "[]").unwrap();
    let out = eoslab().args(["verify", "--theorem", "conv_bad", "--grid"]).arg(&grid).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn figure_data_fig2() {
    let dir = tempfile::tempdir().unwrap();
    let out = eoslab().args(["figure-data", "fig2", "--out"]).arg(dir.path()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["fig2_loss.csv", "fig2_balancing_gap.csv", "fig2_sharpness.csv", "fig2.json"] {
        assert!(dir.path().join(name).exists(), "missing {name}");
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fig2.json")).unwrap())
            .unwrap();
    assert_eq!(meta["figure"], "fig2");
    assert!(meta["parameters"]["one_over_h"].as_f64().unwrap() > 0.0);
    let out = eoslab().args(["figure-data", "fig99", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn props_subcommand_passes() {
    let out = eoslab().args(["props", "--a", "0.5", "--b", "3"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("q_envelope [a=0.5]: pass"), "{stdout}");
}

#[test]
fn sweep_and_nn_train_configs() {
    let dir = tempfile::tempdir().unwrap();
    let sweep_cfg = dir.path().join("sweep.json");
    std::fs::write(
        &sweep_cfg,
        format!(
            r#"{{"mode":"sweep","theorem":"conv_bad",
                "grid":[{{"spec":{{"kind":"bad","b":3}},"x0":6.0,"y0":1.0,"c":2.5}}],
                "output_dir":{:?},"format":"jsonl"}}"#,
            dir.path().join("sweep_out")
        ),
    )
    .unwrap();
    let out = eoslab().args(["sweep", "--config"]).arg(&sweep_cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("sweep_out/checks.jsonl").exists());

    let nn_cfg = dir.path().join("nn.json");
    std::fs::write(
        &nn_cfg,
        format!(
            r#"{{"mode":"nn_train",
                "train":{{
                    "network":{{"dims":[5,6,3],"depth":2,"loss":{{"kind":"l2"}},
                                "activation":{{"kind":"tanh"}},"batch_norm":false,
                                "init":{{"seed":3,"frob_w1":2.0,"frob_w2":4.0}}}},
                    "data":{{"kind":"synthetic","seed":11,"samples":16}},
                    "lr":{{"kind":"c_over_s0","c":1.5}},
                    "epochs":60,"record_stride":20,"lanczos_iters":15,"lanczos_seed":5}},
                "output_dir":{:?},"format":"csv"}}"#,
            dir.path().join("nn_out")
        ),
    )
    .unwrap();
    let out = eoslab().args(["nn-train", "--config"]).arg(&nn_cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("nn_out/nn_trajectory.csv")).unwrap();
    assert!(csv.starts_with("epoch,loss,sharpness,balancing_gap_sq"));
    assert!(csv.lines().count() >= 4);

    // Wrong mode for the subcommand is a usage error.
    let out = eoslab().args(["nn-train", "--config"]).arg(&sweep_cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
