use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mvlstm::synth::ArxSpec;
use mvlstm::{generate, make_windows, SeriesFrame, SplitFractions};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn mvlstm(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mvlstm"));
    cmd.args(args).env_remove("MVLSTM_THREADS");
    if let Some(t) = threads {
        cmd.env("MVLSTM_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_single_error_line(o: &Output, code: i32) -> String {
    assert_eq!(o.status.code(), Some(code), "stderr: {}", stderr(o));
    let err = stderr(o);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with("error["), "{err}");
    lines[0].to_string()
}

fn train_fixture(out: &Path, threads: Option<&str>) -> Output {
    let cfg = fixture("synth_run.toml");
    mvlstm(
        &["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        threads,
    )
}

#[test]
fn train_is_deterministic_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = train_fixture(&a, None);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(train_fixture(&b, None).status.success());
    for name in ["model.bin", "metrics.json", "loss_curve.csv", "predictions.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let metrics: serde_json::Value = serde_json::from_slice(&fs::read(a.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["test_rmse"].as_f64().unwrap().is_finite());
    assert_eq!(metrics["seed"], 7);
    let curve = fs::read_to_string(a.join("loss_curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("epoch,train_loss,val_loss"));
    assert_eq!(curve.lines().count(), 1 + metrics["epochs_run"].as_u64().unwrap() as usize);
}

#[test]
fn missing_target_column_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = fixture("synth_run.toml");
    let o = mvlstm(
        &[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--target",
            "pm10",
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    let line = assert_single_error_line(&o, 1);
    assert!(line.contains("pm10"), "{line}");
    assert!(!out.join("model.bin").exists());
}

#[test]
fn unknown_config_key_and_bad_flags_are_user_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "input = \"x.csv\"\ntarget = \"y\"\nlearning_rate = 0.1\n").unwrap();
    let o = mvlstm(&["train", "--config", cfg.to_str().unwrap()], None);
    let line = assert_single_error_line(&o, 1);
    assert!(line.starts_with("error[config]"), "{line}");
    assert!(line.contains("learning_rate"), "{line}");

    let o = mvlstm(&["train", "--window", "many"], None);
    assert_single_error_line(&o, 1);
    let o = mvlstm(&["frobnicate"], None);
    assert_single_error_line(&o, 1);
}

#[test]
fn interpret_pretrained_fixture_recovers_ground_truth_rank() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("synth_run.toml");
    let model = fixture("synth_model.bin");
    let o = mvlstm(
        &[
            "interpret",
            "--config",
            cfg.to_str().unwrap(),
            "--model",
            model.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("interpret.json")).unwrap()).unwrap();
    let order: Vec<&str> = report["agreement"]["attention_order"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(order, ["x1", "x3", "x2"]);
    let n = report["n_instances"].as_u64().unwrap();
    for v in report["variables"].as_array().unwrap() {
        let total: u64 = v["histogram"]["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
        assert_eq!(total, n);
    }

    // k equal to the number of exogenous variables overlaps fully
    let o = mvlstm(
        &[
            "interpret",
            "--config",
            cfg.to_str().unwrap(),
            "--model",
            model.to_str().unwrap(),
            "--top-k",
            "3",
            "--format",
            "csv",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("attention_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(dir.path().join("attention_histograms.csv").exists());
}

#[test]
fn interpret_rejects_schema_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("renamed.csv");
    let text = fs::read_to_string(fixture("synth.csv")).unwrap().replacen("t,x1,x2,x3,y", "t,x1,x3,x2,y", 1);
    fs::write(&data, text).unwrap();
    let model = fixture("synth_model.bin");
    let o = mvlstm(
        &[
            "interpret",
            "--input",
            data.to_str().unwrap(),
            "--model",
            model.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    let line = assert_single_error_line(&o, 1);
    assert!(line.starts_with("error[schema]"), "{line}");
    assert!(line.contains("x1, x2, x3, y") && line.contains("x1, x3, x2, y"), "{line}");
}

#[test]
fn eval_reports_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("synth_run.toml");
    let model = fixture("synth_model.bin");
    for baseline in ["persistence", "linear"] {
        let o = mvlstm(
            &[
                "eval",
                "--config",
                cfg.to_str().unwrap(),
                "--model",
                model.to_str().unwrap(),
                "--baseline",
                baseline,
                "--out",
                dir.path().to_str().unwrap(),
            ],
            None,
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let report: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join("eval.json")).unwrap()).unwrap();
        let scores = report["scores"].as_array().unwrap();
        assert_eq!(scores.len(), 2);
        assert!(scores.iter().all(|s| s["rmse"].as_f64().unwrap().is_finite()));
    }
}

#[test]
fn granger_writes_ranking_with_error_markers() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("with_const.csv");
    let mut text = String::new();
    for (k, line) in fs::read_to_string(fixture("synth.csv")).unwrap().lines().enumerate() {
        let (idx, rest) = line.split_once(',').unwrap();
        let extra = if k == 0 { "flat" } else { "1.5" };
        text.push_str(&format!("{idx},{extra},{rest}\n"));
    }
    fs::write(&data, text).unwrap();
    let o = mvlstm(
        &[
            "granger",
            "--input",
            data.to_str().unwrap(),
            "--target",
            "y",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("granger.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variable,F,p_value,verdict,error");
    assert!(lines[1].starts_with("x1,") && lines[1].contains(",causal,"));
    assert!(lines.iter().any(|l| l.starts_with("flat,") && l.contains("constant")));

    let only_const = dir.path().join("only_const.csv");
    fs::write(&only_const, "t,a,y\n".to_string() + &(0..40).map(|i| format!("{i},2,{}\n", (i as f64).sin())).collect::<String>()).unwrap();
    let o = mvlstm(&["granger", "--input", only_const.to_str().unwrap(), "--target", "y", "--out", dir.path().to_str().unwrap()], None);
    assert_single_error_line(&o, 1);
}

#[test]
fn synth_csv_round_trips_into_identical_windows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("synth.csv");
    let spec_path = fixture("synth_spec.toml");
    let o = mvlstm(&["synth", "--spec", spec_path.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    // the bundled data set is this very output
    assert_eq!(fs::read(&out).unwrap(), fs::read(fixture("synth.csv")).unwrap());

    let spec: ArxSpec = toml::from_str(&fs::read_to_string(&spec_path).unwrap()).unwrap();
    let memory = make_windows(&generate(&spec).unwrap(), 10, SplitFractions::default()).unwrap();
    let disk = make_windows(&SeriesFrame::from_csv_path(&out, "y").unwrap(), 10, SplitFractions::default()).unwrap();
    assert_eq!(memory, disk);
}

#[test]
fn synth_rejects_unstable_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    fs::write(&spec, "n_exo = 1\nexo_coefs = [[0.5]]\nself_coefs = [1.1]\nnoise_std = 0.1\nlength = 100\nseed = 1\n").unwrap();
    let out = dir.path().join("x.csv");
    let o = mvlstm(&["synth", "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    let line = assert_single_error_line(&o, 1);
    assert!(line.contains("1.1"), "{line}");
    assert!(!out.exists());
}

#[test]
fn beijing_schema_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("beijing_pm25_sample.csv");
    let common = ["--input", data.to_str().unwrap(), "--target", "pm2.5", "--out", dir.path().to_str().unwrap()];
    let mut args = vec!["train", "--window", "6", "--dim", "2"];
    args.extend(common);
    let o = mvlstm(&args, None);
    assert!(o.status.success(), "{}", stderr(&o));
    let model = dir.path().join("model.bin");
    let mut args = vec!["interpret", "--model", model.to_str().unwrap(), "--lag", "2"];
    args.extend(common);
    let o = mvlstm(&args, None);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("interpret.json")).unwrap()).unwrap();
    let vars = report["variables"].as_array().unwrap();
    assert_eq!(vars.len(), 8);
    assert_eq!(report["target"], "pm2.5");
    let mut names: Vec<&str> = vars.iter().map(|v| v["name"].as_str().unwrap()).collect();
    names.sort_unstable();
    assert_eq!(names, ["DEWP", "Ir", "Is", "Iws", "PRES", "TEMP", "cbwd", "pm2.5"]);
}

#[test]
fn gradcheck_passes() {
    let o = mvlstm(&["gradcheck"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("N=")).count(), 27);
    assert!(text.lines().last().unwrap().starts_with("max relative error"));
}
