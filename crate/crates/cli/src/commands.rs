use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use feedback_learn::data::{
    make_linear_dataset, make_staircase_dataset, prepare, LabelEncoding, RawDataset,
};
use feedback_learn::{
    compute_error_matrix, evaluate, fit, fit_deep, fit_gradient_descent, forward_predict,
    gd_baseline_error, run_feedback_loop, save_checkpoint, Activation, DeepConfig, DeepModel,
    FeedbackConfig, LayerSpec, Matrix, RateAdaptation, SignPolicy, SingleLayerModel, TrainConfig,
};
use serde_json::{json, Map, Value};

use crate::config::{Dims, Resolver};
use crate::Common;

pub struct Failure {
    pub code: u8,
    pub message: String,
}

const USAGE: u8 = 2;
const RUNTIME: u8 = 1;
const GATE: u8 = 3;

impl From<String> for Failure {
    fn from(message: String) -> Self {
        Failure {
            code: USAGE,
            message,
        }
    }
}

impl From<feedback_learn::Error> for Failure {
    fn from(e: feedback_learn::Error) -> Self {
        Failure {
            code: RUNTIME,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: USAGE,
        message: message.into(),
    }
}

/// Rejects shared flags that `experiment` has no use for.
fn reject_flags(common: &Common, experiment: &str, allowed: &[&str]) -> Result<(), Failure> {
    let given = [
        ("seed", common.seed.is_some()),
        ("gain", common.gain.is_some()),
        ("rate", common.rate.is_some()),
        ("epochs", common.epochs.is_some()),
        ("batch", common.batch.is_some()),
        ("policy", common.policy.is_some()),
        ("activation", common.activation.is_some()),
        ("subset", common.subset.is_some()),
        ("normalize-error", common.normalize_error.is_some()),
    ];
    for (flag, present) in given {
        if present && !allowed.contains(&flag) {
            return Err(usage(format!("--{flag} does not apply to {experiment}")));
        }
    }
    Ok(())
}

fn create_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure {
        code: RUNTIME,
        message: format!("{}: {e}", dir.display()),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure {
        code: RUNTIME,
        message: format!("{}: {e}", path.display()),
    })
}

fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    text.push('\n');
    write_file(path, &text)
}

/// Shortest decimal that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn summary(config: Map<String, Value>, results: Value) -> Value {
    json!({ "config": Value::Object(config), "results": results })
}

fn matrix_json(m: &Matrix) -> Value {
    json!((0..m.rows())
        .map(|r| m.row_slice(r).to_vec())
        .collect::<Vec<_>>())
}

#[derive(Args, Debug)]
pub struct InvertArgs {
    /// identity | tanh | square-positive-domain | cubic
    #[arg(long = "fn", value_name = "NAME")]
    pub function: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub input: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

/// Increasing backward functions, all with backward sign +1. The square
/// is extended oddly below zero so transient negative iterates still feed
/// back with the right sign.
fn backward_function(name: &str) -> Result<fn(f64) -> f64, Failure> {
    Ok(match name {
        "identity" => |x| x,
        "tanh" => f64::tanh,
        "square-positive-domain" => |x: f64| x * x.abs(),
        "cubic" => |x: f64| x * x * x + x,
        other => return Err(usage(format!(
            "unknown function {other:?}; expected identity, tanh, square-positive-domain or cubic"
        ))),
    })
}

pub fn invert(common: &Common, a: &InvertArgs) -> CmdResult {
    reject_flags(common, "invert", &["gain", "rate"])?;
    let mut r = Resolver::new("invert", common.config.as_deref())?;
    let defaults = FeedbackConfig::default();
    let function = r.get("fn", a.function.clone(), "tanh".to_string())?;
    let input = r.get("input", a.input, 0.5)?;
    let cfg = FeedbackConfig {
        forward_gain: r.get("gain", common.gain, defaults.forward_gain)?,
        rate: r.get("rate", common.rate, defaults.rate)?,
        max_iters: r.get("iters", a.iters, defaults.max_iters)?,
        tolerance: r.get("tolerance", a.tolerance, defaults.tolerance)?,
    };
    let out = r.get("out", common.out.clone(), PathBuf::from("runs/invert"))?;
    let config = r.finish()?;

    let backward = backward_function(&function)?;
    if function == "square-positive-domain" && input < 0.0 {
        return Err(usage("square-positive-domain needs a non-negative input"));
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let (x_output, trace) = run_feedback_loop(backward, 1.0, input, &cfg)?;
    let last = trace.last();

    create_out(&out)?;
    let mut csv = String::from("iteration,x_output,residual\n");
    for it in &trace.iterates {
        let _ = writeln!(
            csv,
            "{},{},{}",
            it.iteration,
            num(it.output),
            num(it.residual)
        );
    }
    write_file(&out.join("trace.csv"), &csv)?;
    write_json(
        &out.join("summary.json"),
        &summary(
            config,
            json!({
                "x_output": x_output,
                "residual": last.residual,
                "loop_residual": last.loop_residual,
                "iterations": last.iteration,
                "converged": trace.converged,
            }),
        ),
    )?;
    println!("x_output = {}", num(x_output));
    println!("residual = {}", num(last.residual));
    println!("iterations = {}", last.iteration);
    println!("converged = {}", trace.converged);
    Ok(())
}

#[derive(Args, Debug)]
pub struct StaircaseArgs {
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub w_true: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x_max: Option<f64>,
    /// Learning rate of the gradient-descent baseline.
    #[arg(long)]
    pub sgd_rate: Option<f64>,
}

pub fn staircase(common: &Common, a: &StaircaseArgs) -> CmdResult {
    reject_flags(
        common,
        "staircase-demo",
        &[
            "seed",
            "gain",
            "rate",
            "batch",
            "policy",
            "activation",
            "normalize-error",
        ],
    )?;
    let mut r = Resolver::new("staircase-demo", common.config.as_deref())?;
    let seed = r.seed(common.seed)?;
    let samples = r.get("samples", a.samples, 200)?;
    let w_true = r.get("w-true", a.w_true, 2.0)?;
    let x_min = r.get("x-min", a.x_min, -5.0)?;
    let x_max = r.get("x-max", a.x_max, 5.0)?;
    let activation = r.get(
        "activation",
        common.activation,
        Activation::unit_staircase(),
    )?;
    let cfg = TrainConfig {
        forward_gain: r.get("gain", common.gain, 100.0)?,
        rate: r.get("rate", common.rate, 1e-5)?,
        max_iters: r.get("iters", a.iters, 2000)?,
        batch_size: r.get_opt("batch", common.batch)?,
        policy: r.get("policy", common.policy, SignPolicy::SignOnly)?,
        seed,
        normalize_error_by_batch: r.get("normalize-error", common.normalize_error, false)?,
    };
    let sgd_rate = r.get("sgd-rate", a.sgd_rate, 0.01)?;
    let out = r.get(
        "out",
        common.out.clone(),
        PathBuf::from("runs/staircase-demo"),
    )?;
    let config = r.finish()?;
    if !matches!(activation, Activation::Staircase { .. }) {
        return Err(usage(format!(
            "staircase-demo needs a staircase activation, got {activation}"
        )));
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let (x, y) = make_staircase_dataset(samples, w_true, &activation, (x_min, x_max), seed)?;
    let start = SingleLayerModel::zeros(1, 1, activation);
    let (initial_mse, _) = evaluate(&start, &x, &y)?;
    let (fb_model, fb_trace) = fit(&start, &x, &y, &cfg)?;
    let (gd_model, gd_trace) = fit_gradient_descent(&start, &x, &y, &cfg, sgd_rate)?;

    let mut csv = String::from("iteration,feedback_mse,sgd_mse\n");
    let _ = writeln!(csv, "0,{},{}", num(initial_mse), num(initial_mse));
    for (f, g) in fb_trace.records.iter().zip(&gd_trace.records) {
        let _ = writeln!(csv, "{},{},{}", f.iteration, num(f.mse), num(g.mse));
    }
    let fb_final = fb_trace.records.last().map_or(initial_mse, |m| m.mse);
    let gd_final = gd_trace.records.last().map_or(initial_mse, |m| m.mse);
    create_out(&out)?;
    write_file(&out.join("staircase.csv"), &csv)?;
    write_json(
        &out.join("summary.json"),
        &summary(
            config,
            json!({
                "initial_mse": initial_mse,
                "feedback_final_mse": fb_final,
                "sgd_final_mse": gd_final,
                "feedback_weights": matrix_json(&fb_model.weights),
                "sgd_weights": matrix_json(&gd_model.weights),
            }),
        ),
    )?;
    println!("initial mse = {}", num(initial_mse));
    println!("feedback final mse = {}", num(fb_final));
    println!("sgd final mse = {}", num(gd_final));
    Ok(())
}

#[derive(Args, Debug)]
pub struct MnistArgs {
    /// Directory holding the four standard IDX files (optionally gzipped).
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub train_images: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub train_labels: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub test_images: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub test_labels: Option<PathBuf>,
    /// Layer widths, input first, e.g. 784,100,100,10.
    #[arg(long)]
    pub dims: Option<String>,
    /// Activation of the last layer.
    #[arg(long)]
    pub output_activation: Option<Activation>,
    /// Policy for layers after the first (defaults to --policy).
    #[arg(long)]
    pub hidden_policy: Option<SignPolicy>,
    /// Enable per-weight rate adaptation.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub adapt: Option<bool>,
    #[arg(long)]
    pub eta_plus: Option<f64>,
    #[arg(long)]
    pub eta_minus: Option<f64>,
    #[arg(long)]
    pub rate_min: Option<f64>,
    #[arg(long)]
    pub rate_max: Option<f64>,
}

fn idx_path(dir: &Path, stem: &str) -> PathBuf {
    let plain = dir.join(stem);
    if plain.exists() {
        return plain;
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        gz
    } else {
        plain
    }
}

pub fn mnist(common: &Common, a: &MnistArgs) -> CmdResult {
    reject_flags(
        common,
        "mnist",
        &[
            "seed",
            "gain",
            "rate",
            "epochs",
            "batch",
            "policy",
            "activation",
            "subset",
            "normalize-error",
        ],
    )?;
    let mut r = Resolver::new("mnist", common.config.as_deref())?;
    let defaults = DeepConfig::default();
    let adapt_defaults = defaults.adaptation.expect("default config adapts rates");
    let seed = r.seed(common.seed)?;
    let data_dir = r.get(
        "data-dir",
        a.data_dir.clone(),
        PathBuf::from("data/mnist-sample"),
    )?;
    let paths = [
        ("train-images", &a.train_images, "train-images-idx3-ubyte"),
        ("train-labels", &a.train_labels, "train-labels-idx1-ubyte"),
        ("test-images", &a.test_images, "t10k-images-idx3-ubyte"),
        ("test-labels", &a.test_labels, "t10k-labels-idx1-ubyte"),
    ];
    let mut files = Vec::new();
    for (key, flag, stem) in paths {
        files.push(r.get(key, flag.clone(), idx_path(&data_dir, stem))?);
    }
    let dims_flag = a
        .dims
        .as_deref()
        .map(<Dims as crate::config::ConfigValue>::parse_value)
        .transpose()?;
    let dims = r.get("dims", dims_flag, Dims(vec![784, 100, 100, 10]))?;
    let hidden = r.get("activation", common.activation, Activation::leaky_relu())?;
    let output = r.get(
        "output-activation",
        a.output_activation,
        Activation::Softmax,
    )?;
    let input_policy = r.get("policy", common.policy, defaults.input_policy)?;
    let hidden_policy = r.get("hidden-policy", a.hidden_policy, input_policy)?;
    let adapt = r.get("adapt", a.adapt, true)?;
    let adaptation = RateAdaptation {
        eta_plus: r.get("eta-plus", a.eta_plus, adapt_defaults.eta_plus)?,
        eta_minus: r.get("eta-minus", a.eta_minus, adapt_defaults.eta_minus)?,
        rate_min: r.get("rate-min", a.rate_min, adapt_defaults.rate_min)?,
        rate_max: r.get("rate-max", a.rate_max, adapt_defaults.rate_max)?,
    };
    let cfg = DeepConfig {
        forward_gain: r.get("gain", common.gain, defaults.forward_gain)?,
        rate: r.get("rate", common.rate, defaults.rate)?,
        input_policy,
        hidden_policy,
        normalize_error_by_batch: r.get(
            "normalize-error",
            common.normalize_error,
            defaults.normalize_error_by_batch,
        )?,
        adaptation: adapt.then_some(adaptation),
        batch_size: r.get("batch", common.batch, defaults.batch_size)?,
        epochs: r.get("epochs", common.epochs, defaults.epochs)?,
        seed,
    };
    let subset = r.get_opt("subset", common.subset)?;
    let out = r.get("out", common.out.clone(), PathBuf::from("runs/mnist"))?;
    let config = r.finish()?;
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let started = Instant::now();
    let mut train_raw = RawDataset::load_idx(&files[0], &files[1])?;
    if let Some(n) = subset {
        train_raw = train_raw.subset(n);
    }
    let test_raw = RawDataset::load_idx(&files[2], &files[3])?;
    let dims = dims.0;
    let classes = *dims.last().expect("dims has at least two entries");
    if dims[0] != train_raw.images.rows() {
        return Err(usage(format!(
            "input width {} does not match {} features per image",
            dims[0],
            train_raw.images.rows()
        )));
    }
    let encoding = if output == Activation::Tanh {
        LabelEncoding::PlusMinusOne
    } else {
        LabelEncoding::ZeroOne
    };
    let train = prepare(&train_raw, encoding, classes, None)?;
    let test = prepare(&test_raw, encoding, classes, Some(&train.feature_mean))?;

    let specs = LayerSpec::stack(&dims, hidden, output);
    let mut model = DeepModel::new(&specs, cfg.rate, seed)?;
    println!(
        "training {} on {} samples, testing on {}",
        dims.iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("-"),
        train.len(),
        test.len()
    );
    let history = fit_deep(&mut model, &train, Some(&test), &cfg, |m| {
        println!(
            "epoch {:>3}  train_acc {:.4}  test_acc {:.4}  mean_sq_diff {:.6}",
            m.epoch,
            m.train_accuracy,
            m.test_accuracy.unwrap_or(f64::NAN),
            m.mean_sq_diff
        );
    })?;
    let wall = started.elapsed().as_secs_f64();

    create_out(&out)?;
    let mut csv = String::from("epoch,train_acc,test_acc,mean_sq_diff\n");
    for m in &history {
        let test_acc = m.test_accuracy.map_or_else(String::new, num);
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            m.epoch,
            num(m.train_accuracy),
            test_acc,
            num(m.mean_sq_diff)
        );
    }
    write_file(&out.join("epochs.csv"), &csv)?;
    let last = history.last();
    write_json(
        &out.join("summary.json"),
        &summary(
            config,
            json!({
                "train_samples": train.len(),
                "test_samples": test.len(),
                "parameters": model.parameter_count(),
                "final_train_accuracy": last.map(|m| m.train_accuracy),
                "final_test_accuracy": last.and_then(|m| m.test_accuracy),
            }),
        ),
    )?;
    write_json(&out.join("timing.json"), &json!({ "wall_seconds": wall }))?;
    save_checkpoint(&model, out.join("model.ckpt"))?;
    if let Some(acc) = last.and_then(|m| m.test_accuracy) {
        println!("test accuracy = {}", num(acc));
    }
    println!("wall time = {wall:.1} s");
    Ok(())
}

#[derive(Args, Debug)]
pub struct CompareGdArgs {
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub outputs: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
}

pub const COMPARE_GD_TOLERANCE: f64 = 1e-8;

/// Largest entrywise relative gap. Entries are compared against the larger
/// of their own magnitude and a `1e-12` fraction of the largest entry, so
/// sums that cancel to nearly zero do not dominate.
pub fn max_relative_discrepancy(a: &Matrix, b: &Matrix) -> f64 {
    let floor = 1e-12 * a.max_abs().max(b.max_abs());
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let scale = x.abs().max(y.abs()).max(floor);
            if scale == 0.0 {
                0.0
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

pub fn compare_gd(common: &Common, a: &CompareGdArgs) -> CmdResult {
    reject_flags(common, "compare-gd", &["seed", "activation"])?;
    let mut r = Resolver::new("compare-gd", common.config.as_deref())?;
    let seed = r.seed(common.seed)?;
    let activation = r.get("activation", common.activation, Activation::Tanh)?;
    let features = r.get("features", a.features, 5)?;
    let outputs = r.get("outputs", a.outputs, 3)?;
    let samples = r.get("samples", a.samples, 40)?;
    let out = r.get("out", common.out.clone(), PathBuf::from("runs/compare-gd"))?;
    let config = r.finish()?;
    if activation == Activation::Softmax {
        return Err(usage(
            "compare-gd needs an elementwise activation; softmax couples outputs within a sample",
        ));
    }

    let (x, y, _) = make_linear_dataset(samples, features, outputs, 0.5, seed)?;
    let model = SingleLayerModel::random(features, outputs, activation, seed.wrapping_add(1));
    let y_pred = forward_predict(&model, &x)?;
    let feedback = compute_error_matrix(&x, &y, &y_pred, SignPolicy::RawBeta, &activation, false)?;
    let gradient = gd_baseline_error(&x, &y, &y_pred, &activation)?.scale(samples as f64 / 2.0);
    let discrepancy = max_relative_discrepancy(&feedback, &gradient);
    let passed = discrepancy <= COMPARE_GD_TOLERANCE;

    create_out(&out)?;
    write_json(
        &out.join("summary.json"),
        &summary(
            config,
            json!({
                "max_relative_discrepancy": discrepancy,
                "tolerance": COMPARE_GD_TOLERANCE,
                "passed": passed,
            }),
        ),
    )?;
    println!("max relative discrepancy = {}", num(discrepancy));
    if passed {
        Ok(())
    } else {
        Err(Failure {
            code: GATE,
            message: format!("discrepancy {discrepancy:e} exceeds {COMPARE_GD_TOLERANCE:e}"),
        })
    }
}

#[derive(Args, Debug)]
pub struct RegressArgs {
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub outputs: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
}

pub fn regress(common: &Common, a: &RegressArgs) -> CmdResult {
    reject_flags(
        common,
        "regress",
        &[
            "seed",
            "gain",
            "rate",
            "batch",
            "policy",
            "activation",
            "normalize-error",
        ],
    )?;
    let mut r = Resolver::new("regress", common.config.as_deref())?;
    let seed = r.seed(common.seed)?;
    let features = r.get("features", a.features, 1)?;
    let outputs = r.get("outputs", a.outputs, 1)?;
    let samples = r.get("samples", a.samples, 100)?;
    let noise = r.get("noise", a.noise, 0.01)?;
    let activation = r.get("activation", common.activation, Activation::Identity)?;
    let cfg = TrainConfig {
        forward_gain: r.get("gain", common.gain, 100.0)?,
        rate: r.get("rate", common.rate, 0.01)?,
        max_iters: r.get("iters", a.iters, 500)?,
        batch_size: r.get_opt("batch", common.batch)?,
        policy: r.get("policy", common.policy, SignPolicy::SignOnly)?,
        seed,
        normalize_error_by_batch: r.get("normalize-error", common.normalize_error, true)?,
    };
    let out = r.get("out", common.out.clone(), PathBuf::from("runs/regress"))?;
    let config = r.finish()?;
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let (x, y, w_true) = make_linear_dataset(samples, features, outputs, noise, seed)?;
    let start = SingleLayerModel::zeros(features, outputs, activation);
    let (initial_mse, _) = evaluate(&start, &x, &y)?;
    let (model, trace) = fit(&start, &x, &y, &cfg)?;
    let final_mse = trace.records.last().map_or(initial_mse, |m| m.mse);
    let weight_error = model.weights.sub(&w_true)?.max_abs();

    let mut csv = String::from("iteration,mse\n");
    let _ = writeln!(csv, "0,{}", num(initial_mse));
    for m in &trace.records {
        let _ = writeln!(csv, "{},{}", m.iteration, num(m.mse));
    }
    create_out(&out)?;
    write_file(&out.join("metrics.csv"), &csv)?;
    write_json(
        &out.join("summary.json"),
        &summary(
            config,
            json!({
                "initial_mse": initial_mse,
                "final_mse": final_mse,
                "max_weight_error": weight_error,
                "weights": matrix_json(&model.weights),
                "true_weights": matrix_json(&w_true),
            }),
        ),
    )?;
    println!("initial mse = {}", num(initial_mse));
    println!("final mse = {}", num(final_mse));
    println!("max |W - W_true| = {}", num(weight_error));
    Ok(())
}
