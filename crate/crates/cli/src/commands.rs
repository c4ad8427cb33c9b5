use std::fs;
use std::path::{Path, PathBuf};

use dfdetect_core::data::{decode_image, load_manifest, resize};
use dfdetect_core::fixture::{write_fixture_tree, FixtureCounts};
use dfdetect_core::gradcheck::{check, GradcheckConfig, Target};
use dfdetect_core::metrics::{percent_string_f64, render_report, render_training_report, report, roc_csv};
use dfdetect_core::{
    evaluate, load_checkpoint, save_checkpoint, train, ConfusionMatrix, EvaluationReport, Label, ManifestSource,
    Metric, MetricsReport, Model, SampleSource, Split, Tensor,
};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{CliError, EXIT_GRADCHECK};

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

/// `<out>.report.json` next to the checkpoint.
pub fn default_report_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".report.json");
    out.with_file_name(name)
}

pub struct TrainArgs {
    pub config: RunConfig,
    pub out: PathBuf,
    pub report: Option<PathBuf>,
}

pub fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let config = args.config;
    let data = config
        .data
        .clone()
        .ok_or_else(|| CliError::config("no dataset given (use --data or `data = ...` in the config)"))?;
    let manifest = load_manifest(&data)?;
    for warning in manifest.summary().warnings {
        eprintln!("warning: {warning}");
    }
    let (h, w) = (config.height, config.width);
    let train_set = ManifestSource::new(&manifest, Split::Train, h, w);
    let valid_set = ManifestSource::new(&manifest, Split::Valid, h, w);
    if train_set.is_empty() {
        return Err(CliError::data(format!("{data}: training split is empty")));
    }
    let model = Model::build(config.model, config.input_shape(), &config.hyper(), config.seed)
        .map_err(|e| CliError::config(e.to_string()))?;
    let valid = (!valid_set.is_empty()).then_some(&valid_set);
    let outcome = train(model, &train_set, valid, config.train_config()).map_err(|abort| {
        for r in &abort.history {
            eprintln!("epoch {} loss {:.6}", r.epoch, r.train_loss);
        }
        CliError::from(abort.error)
    })?;
    for r in &outcome.history {
        let valid = r.valid_accuracy.map(|a| format!(" valid_acc {a:.4}")).unwrap_or_default();
        println!("epoch {} loss {:.6} train_acc {:.4}{valid}", r.epoch, r.train_loss, r.train_accuracy);
    }
    save_checkpoint(&outcome.model, &args.out)?;

    let validation = match valid {
        Some(v) => {
            let p = evaluate(&outcome.model, v, config.batch_size, config.threshold)?;
            EvaluationReport::from_predictions(&p.scores, &p.predicted, &p.actual, config.positive_class).ok()
        }
        None => None,
    };
    let report_path = args.report.unwrap_or_else(|| default_report_path(&args.out));
    let text = render_training_report(&config.to_json(), &outcome.history, validation.as_ref());
    write_file(&report_path, &text)?;
    println!("checkpoint {}", args.out.display());
    println!("report {}", report_path.display());
    Ok(())
}

pub struct EvalArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub split: Split,
    pub report: PathBuf,
    pub roc: Option<PathBuf>,
    pub positive_class: Label,
    pub threshold: f64,
    pub batch_size: usize,
}

fn print_metrics(m: &MetricsReport, score_auc: Option<f64>) {
    println!("positive_class {}", m.positive_class());
    for metric in Metric::ALL {
        let shown = m.percent(metric).unwrap_or_else(|| "undefined".into());
        println!("{:<10} {shown}", metric.name());
    }
    if let Some(auc) = score_auc {
        println!("{:<10} {}", "score_auc", percent_string_f64(auc));
    }
}

pub fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    if args.batch_size == 0 {
        return Err(CliError::config("batch_size must be at least 1"));
    }
    let model = load_checkpoint(&args.model)?;
    let manifest = load_manifest(&args.data)?;
    let [h, w, _] = model.spec().input_shape;
    let source = ManifestSource::new(&manifest, args.split, h, w);
    if source.is_empty() {
        return Err(CliError::data(format!("{}: split `{}` is empty", args.data.display(), args.split)));
    }
    let p = evaluate(&model, &source, args.batch_size, args.threshold)?;
    let eval = EvaluationReport::from_predictions(&p.scores, &p.predicted, &p.actual, args.positive_class)
        .map_err(|e| CliError::data(e.to_string()))?;
    let config = json!({
        "model": args.model,
        "model_spec": model.spec(),
        "data": args.data,
        "split": args.split,
        "positive_class": args.positive_class,
        "threshold": args.threshold,
        "batch_size": args.batch_size,
    });
    write_file(&args.report, &render_report(&eval, &[], &config))?;
    if let Some(roc) = &args.roc {
        write_file(roc, &roc_csv(&eval.roc))?;
    }
    print_metrics(&eval.metrics, eval.score_auc);
    Ok(())
}

pub fn cmd_predict(model: &Path, image: &Path, threshold: f64) -> Result<(), CliError> {
    let model = load_checkpoint(model)?;
    let [h, w, c] = model.spec().input_shape;
    let raw = decode_image(image)?;
    let sized = resize(&raw, h, w)?;
    let batch = Tensor::new(vec![1, h, w, c], sized.into_data()).map_err(|e| CliError::data(e.to_string()))?;
    let score = model.predict(&batch).map_err(|e| CliError::data(e.to_string()))?[0];
    println!("{} {score}", model.kind().decide(score as f64, threshold));
    Ok(())
}

pub fn cmd_metrics(cm: ConfusionMatrix, as_json: bool) -> Result<(), CliError> {
    let r = report(&cm).map_err(|e| CliError::config(e.to_string()))?;
    if as_json {
        let eval = EvaluationReport::from_confusion(&cm).map_err(|e| CliError::config(e.to_string()))?;
        let config = json!({"tp": cm.tp, "fp": cm.fp, "fn": cm.fn_, "tn": cm.tn, "positive_class": cm.positive_class});
        print!("{}", render_report(&eval, &[], &config));
    } else {
        print_metrics(&r, None);
    }
    Ok(())
}

pub fn cmd_gradcheck(layer: &str, config: GradcheckConfig) -> Result<(), CliError> {
    let targets: Vec<Target> = if layer == "all" {
        Target::ALL.to_vec()
    } else {
        vec![layer.parse().map_err(|e: dfdetect_core::gradcheck::GradcheckError| CliError::config(e.to_string()))?]
    };
    let mut all_passed = true;
    for t in targets {
        let r = check(t, &config).map_err(|e| CliError::new(EXIT_GRADCHECK, e.to_string()))?;
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        println!(
            "{:<12} max_rel_err {:.3e} tol {:.0e} instances {} rejected {} {verdict}",
            t.name(),
            r.max_rel_error,
            r.tolerance,
            r.instances,
            r.rejected
        );
        all_passed &= r.passed();
    }
    if all_passed {
        Ok(())
    } else {
        Err(CliError::new(EXIT_GRADCHECK, "gradient check failed"))
    }
}

pub fn cmd_make_fixture(out: &Path, counts: FixtureCounts, size: usize, seed: u64) -> Result<(), CliError> {
    if size == 0 {
        return Err(CliError::config("size must be at least 1"));
    }
    let manifest = write_fixture_tree(out, counts, size, size, seed)?;
    println!("{} images under {}", manifest.rows().len(), out.display());
    Ok(())
}
