//! End-to-end checks of the `wavepinn` binary on tiny runs.

use std::path::Path;
use std::process::{Command, Output};

use wavepinn_harness::{RunConfig, TrainReport};

fn wavepinn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavepinn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tiny_train(dir: &Path, problem: &str, activation: &str, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec![
        "train",
        "--problem",
        problem,
        "--activation",
        activation,
        "--hidden-layers",
        "2",
        "--hidden-width",
        "6",
        "--iterations",
        "8",
        "--nx",
        "7",
        "--nt",
        "5",
        "--eval-nx",
        "9",
        "--eval-nt",
        "4",
        "--output-dir",
        out,
        "--log-every",
        "0",
    ];
    args.extend_from_slice(extra);
    wavepinn(&args)
}

fn without_wall_time(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("wall_s");
    v
}

#[test]
fn train_writes_artifacts_and_echoes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("a");
    let out = tiny_train(&run, "reaction", "softgabortanh", &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "report.json",
        "loss_history.csv",
        "prediction_grid.csv",
        "checkpoint.json",
    ] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let grid = std::fs::read_to_string(run.join("prediction_grid.csv")).unwrap();
    let mut lines = grid.lines();
    assert_eq!(lines.next(), Some("x,t,u_pred,u_exact,abs_err"));
    assert_eq!(lines.count(), 9 * 4);
    let history = std::fs::read_to_string(run.join("loss_history.csv")).unwrap();
    assert!(history.starts_with("iter,loss,grad_norm,step,evals\n"));

    let report = TrainReport::load(run.join("report.json")).unwrap();
    let text = serde_json::to_string(&report.config).unwrap();
    assert_eq!(RunConfig::from_json(&text).unwrap(), report.config);
    assert_eq!(report.config.seed, 5);
    assert!(report.eval.unwrap().rrmse.is_finite());
    assert_eq!(report.coefficients[0].effective.len(), 3);
}

#[test]
fn same_config_gives_same_report() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    assert!(tiny_train(&first, "wave", "softher2tanh", &[])
        .status
        .success());
    // replay the echoed config through --config
    let mut cfg = TrainReport::load(first.join("report.json")).unwrap().config;
    let second = tmp.path().join("second");
    cfg.output_dir = second.clone();
    let cfg_path = tmp.path().join("run.json");
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let out = wavepinn(&[
        "train",
        "--config",
        cfg_path.to_str().unwrap(),
        "--log-every",
        "0",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let mut a = without_wall_time(&first.join("report.json"));
    let b = without_wall_time(&second.join("report.json"));
    a["config"]["output_dir"] = b["config"]["output_dir"].clone();
    assert_eq!(a, b);
    assert_eq!(
        std::fs::read(first.join("prediction_grid.csv")).unwrap(),
        std::fs::read(second.join("prediction_grid.csv")).unwrap()
    );
}

#[test]
fn evaluate_reproduces_report_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("c");
    let beta = ["--convection-beta", "10"];
    assert!(tiny_train(&run, "convection", "softmextanhw", &beta)
        .status
        .success());
    let report = TrainReport::load(run.join("report.json")).unwrap();
    let ckpt = run.join("checkpoint.json");
    let out = wavepinn(&[
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--problem",
        "convection",
        "--convection-beta",
        "10",
        "--eval-nx",
        "9",
        "--eval-nt",
        "4",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let eval: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(eval["rrmse"].as_f64().unwrap(), report.eval.unwrap().rrmse);
    assert_eq!(eval["n_points"].as_u64().unwrap(), 36);

    // navier-stokes scoring needs reference data
    let out = wavepinn(&[
        "evaluate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--problem",
        "ns",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn aggregate_sorts_flags_and_skips() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs: Vec<_> = ["r1", "r2", "w1"]
        .iter()
        .map(|d| tmp.path().join(d))
        .collect();
    assert!(tiny_train(&dirs[0], "reaction", "tanh", &[])
        .status
        .success());
    assert!(tiny_train(&dirs[1], "reaction", "tanh", &["--seed", "6"])
        .status
        .success());
    assert!(tiny_train(&dirs[2], "wave", "softgausstanh", &[])
        .status
        .success());
    let junk = tmp.path().join("junk");
    std::fs::create_dir(&junk).unwrap();
    std::fs::write(junk.join("report.json"), "{not json").unwrap();

    let mut args = vec!["aggregate"];
    args.extend(dirs.iter().chain([&junk]).map(|d| d.to_str().unwrap()));
    let out = wavepinn(&args);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = stdout.lines().collect();
    assert_eq!(rows[0], "problem,activation,loss,rmae,rrmse,wall_s");
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("reaction,tanh,") && rows[2].starts_with("reaction,tanh,"));
    assert!(rows[3].starts_with("wave,softgausstanh,"));
    let rrmse = |r: &str| r.split(',').nth(4).unwrap().parse::<f64>().unwrap();
    assert!(rrmse(rows[1]) <= rrmse(rows[2]));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(
        stderr.contains("skipped") && stderr.contains("junk"),
        "{stderr}"
    );
    assert_eq!(
        stderr.matches("duplicate reaction/tanh").count(),
        2,
        "{stderr}"
    );

    let out = wavepinn(&["aggregate"]);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "problem,activation,loss,rmae,rrmse,wall_s\n"
    );
}

#[test]
fn navier_stokes_on_synthetic_field() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("tg.csv");
    let out = wavepinn(&[
        "synth-ns",
        "--out",
        csv.to_str().unwrap(),
        "--nx",
        "5",
        "--ny",
        "5",
        "--nt",
        "3",
    ]);
    assert!(out.status.success());
    let run = tmp.path().join("ns");
    let out = wavepinn(&[
        "train",
        "--problem",
        "navierstokes",
        "--activation",
        "softmortanh",
        "--hidden-layers",
        "2",
        "--hidden-width",
        "6",
        "--iterations",
        "5",
        "--n-random",
        "30",
        "--reference-data",
        csv.to_str().unwrap(),
        "--output-dir",
        run.to_str().unwrap(),
        "--log-every",
        "0",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let grid = std::fs::read_to_string(run.join("prediction_grid.csv")).unwrap();
    assert!(grid.starts_with("x,y,p_pred,p_ref,abs_err\n"));
    // held-out final snapshot
    assert_eq!(grid.lines().count(), 1 + 25);
    let report = TrainReport::load(run.join("report.json")).unwrap();
    assert_eq!(report.eval.unwrap().n_points, 25);
    assert_eq!(report.breakdown.unwrap().boundary_mse, 0.0);
}

#[test]
fn config_errors_exit_2() {
    let cases: [&[&str]; 5] = [
        &["train", "--problem", "reaction", "--activation", "relu"],
        &["train", "--problem", "reaction"],
        &["train", "--problem", "navierstokes", "--activation", "tanh"],
        &[
            "train",
            "--problem",
            "reaction",
            "--activation",
            "tanh",
            "--bogus-flag",
        ],
        &[
            "train",
            "--problem",
            "wave",
            "--activation",
            "tanh",
            "--gabor-omega-init",
            "4",
        ],
    ];
    for args in cases {
        let out = wavepinn(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"problem":"reaction","activation":"tanh","hidden_widht":8}"#,
    )
    .unwrap();
    let out = wavepinn(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hidden_widht"));
}

#[test]
fn divergence_exits_3_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("div");
    let huge = "1.7e308";
    let out = tiny_train(
        &run,
        "convection",
        "tanh",
        &["--lambda-r", huge, "--lambda-b", huge, "--lambda-i", huge],
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = TrainReport::load(run.join("report.json")).unwrap();
    assert_eq!(report.status, wavepinn_harness::RunStatus::Diverged);
    assert!(report.eval.is_none() && report.breakdown.is_none());
}
