use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_feedback-learn"));
    c.env_remove("FEEDBACK_LEARN_SEED");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

fn csv(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

fn sample_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-sample")
}

#[test]
fn invert_tanh_approaches_atanh() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["invert", "--fn", "tanh", "--input", "0.5", "--gain", "100"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let s = summary(dir.path());
    let x = s["results"]["x_output"].as_f64().unwrap();
    // finite gain: B(x_o) misses the input by at most |x_o|/A
    assert!((x.tanh() - 0.5).abs() <= x.abs() / 100.0 + 1e-9, "{x}");
    assert!((x - 0.5f64.atanh()).abs() < 0.01, "{x}");
    assert!((0.5 - x / 100.0 - x.tanh()).abs() <= 1e-9);
    let (header, rows) = csv(&dir.path().join("trace.csv"));
    assert_eq!(header, "iteration,x_output,residual");
    assert_eq!(rows.last().unwrap()[1], x);
}

#[test]
fn invert_zero_input_stays_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["invert", "--fn", "identity", "--input", "0"], dir.path());
    assert!(o.status.success());
    assert_eq!(
        summary(dir.path())["results"]["x_output"].as_f64(),
        Some(0.0)
    );
}

#[test]
fn invert_rejects_negative_gain() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["invert", "--fn", "identity", "--input", "1", "--gain", "-5"],
        dir.path(),
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("gain must be positive"));
}

#[test]
fn invert_divergence_names_the_stability_rule() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "invert", "--fn", "identity", "--input", "1", "--rate", "0.5",
        ],
        dir.path(),
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("A·β > 0"), "{}", stderr(&o));
}

#[test]
fn invert_square_and_cubic() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "invert",
            "--fn",
            "square-positive-domain",
            "--input",
            "0.81",
            "--rate",
            "0.001",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let x = summary(dir.path())["results"]["x_output"].as_f64().unwrap();
    assert!((0.81 - x / 100.0 - x * x).abs() <= 1e-9);
    let o = run(
        &["invert", "--fn", "square-positive-domain", "--input", "-1"],
        dir.path(),
    );
    assert!(!o.status.success());
    let o = run(
        &["invert", "--fn", "cubic", "--input", "2", "--rate", "0.002"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let x = summary(dir.path())["results"]["x_output"].as_f64().unwrap();
    assert!((2.0 - x / 100.0 - (x * x * x + x)).abs() <= 1e-9);
}

#[test]
fn staircase_sgd_flat_feedback_improves() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["staircase-demo"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = csv(&dir.path().join("staircase.csv"));
    assert_eq!(header, "iteration,feedback_mse,sgd_mse");
    assert_eq!(rows.len(), 2001);
    assert!(rows.iter().all(|r| r[2] == rows[0][2]));
    assert!(rows.last().unwrap()[1] < rows[0][1]);
}

#[test]
fn staircase_zero_iterations_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["staircase-demo", "--iters", "0"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = csv(&dir.path().join("staircase.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1], rows[0][2]);
}

#[test]
fn compare_gd_identity_and_tanh() {
    let dir = tempfile::tempdir().unwrap();
    for (act, tol) in [("identity", 1e-12), ("tanh", 1e-10)] {
        for seed in ["0", "17", "123456"] {
            let o = run(
                &["compare-gd", "--activation", act, "--seed", seed],
                dir.path(),
            );
            assert!(o.status.success(), "{}", stderr(&o));
            let d = summary(dir.path())["results"]["max_relative_discrepancy"]
                .as_f64()
                .unwrap();
            assert!(d < tol, "{act} seed {seed}: {d}");
        }
    }
}

#[test]
fn compare_gd_rejects_staircase() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["compare-gd", "--activation", "staircase:1:1"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unsupported"), "{}", stderr(&o));
}

#[test]
fn mnist_missing_file_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let o = run(
        &["mnist", "--data-dir", missing.to_str().unwrap()],
        dir.path(),
    );
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nowhere"), "{}", stderr(&o));
}

#[test]
fn mnist_smoke_beats_chance() {
    let dir = tempfile::tempdir().unwrap();
    let data = sample_dir();
    let o = run(
        &[
            "mnist",
            "--data-dir",
            data.to_str().unwrap(),
            "--subset",
            "5000",
            "--epochs",
            "2",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let s = summary(dir.path());
    assert!(s["results"]["final_test_accuracy"].as_f64().unwrap() > 0.10);
    assert_eq!(s["config"]["dims"], "784,100,100,10");
    assert_eq!(s["config"]["subset"], 5000);
    let (header, rows) = csv(&dir.path().join("epochs.csv"));
    assert_eq!(header, "epoch,train_acc,test_acc,mean_sq_diff");
    assert_eq!(rows.len(), 2);
    assert!(dir.path().join("model.ckpt").exists());
    let back = feedback_learn::load_checkpoint(dir.path().join("model.ckpt")).unwrap();
    assert_eq!(back.specs().len(), 3);
}

#[test]
fn regress_fits_linear_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["regress", "--features", "3", "--outputs", "2"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r = &summary(dir.path())["results"];
    assert!(r["final_mse"].as_f64().unwrap() < 0.01 * r["initial_mse"].as_f64().unwrap());
}

#[test]
fn config_file_is_strict_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "experiment = regress\n# comment\nrate = 0.02\nsamples = 50\n",
    )
    .unwrap();
    let out = dir.path().join("a");
    let o = run(
        &[
            "regress",
            "--config",
            cfg.to_str().unwrap(),
            "--samples",
            "60",
        ],
        &out,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let c = &summary(&out)["config"];
    assert_eq!(c["rate"], 0.02);
    assert_eq!(c["samples"], 60);
    // defaults are echoed too
    assert_eq!(c["gain"], 100.0);
    assert_eq!(c["policy"], "sign");
    assert_eq!(c["seed"], 0);

    fs::write(&cfg, "rate = 0.02\nlearning-rate = 3\n").unwrap();
    let o = run(&["regress", "--config", cfg.to_str().unwrap()], &out);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("learning-rate"));

    fs::write(&cfg, "experiment = mnist\n").unwrap();
    let o = run(&["regress", "--config", cfg.to_str().unwrap()], &out);
    assert!(!o.status.success());
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["compare-gd", "--out"])
        .arg(dir.path())
        .env("FEEDBACK_LEARN_SEED", "99")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(summary(dir.path())["config"]["seed"], 99);
    let o = bin()
        .args(["compare-gd", "--seed", "5", "--out"])
        .arg(dir.path())
        .env("FEEDBACK_LEARN_SEED", "99")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(summary(dir.path())["config"]["seed"], 5);
}

#[test]
fn inapplicable_flags_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["invert", "--epochs", "3"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--epochs"));
}

#[test]
fn csv_floats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["regress", "--iters", "40"], dir.path());
    assert!(o.status.success());
    let (_, rows) = csv(&dir.path().join("metrics.csv"));
    let last = rows.last().unwrap()[1];
    assert_eq!(
        summary(dir.path())["results"]["final_mse"]
            .as_f64()
            .unwrap()
            .to_bits(),
        last.to_bits()
    );
}

#[test]
fn normalize_flag_takes_optional_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["regress", "--iters", "5", "--normalize-error", "false"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(summary(dir.path())["config"]["normalize-error"], false);
    let o = run(
        &["staircase-demo", "--iters", "5", "--normalize-error"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(summary(dir.path())["config"]["normalize-error"], true);
}
