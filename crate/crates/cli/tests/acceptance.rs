//! Acceptance criteria 1 to 8, one PASS/FAIL line each.

mod common;

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{dfdetect, metric_line, stderr};
use dfdetect_core::data::{decode_bytes, flip_horizontal};
use dfdetect_core::fixture::synthetic_source;
use dfdetect_core::gradcheck::{check_all, GradcheckConfig, Target};
use dfdetect_core::layers::Conv2D;
use dfdetect_core::metrics::{auc_from_scores, report};
use dfdetect_core::{
    evaluate, load_checkpoint, save_checkpoint, Activation, ConfusionMatrix, Hyper, InMemorySource, Label, Model,
    ModelKind, ModelSpec, Rng, Tensor, TrainConfig, Trainer,
};
use num_rational::Ratio;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

const CNN_COUNTS: (u64, u64, u64, u64) = (15109, 1692, 2391, 15808);
const SVM_COUNTS: (u64, u64, u64, u64) = (13508, 2418, 3992, 15082);

fn metrics_cli(c: (u64, u64, u64, u64)) -> Result<String, String> {
    let args = [c.0, c.1, c.2, c.3].map(|v| v.to_string());
    let out = dfdetect(&[
        "metrics", "--tp", &args[0], "--fp", &args[1], "--fn", &args[2], "--tn", &args[3], "--positive-class", "deepfake",
    ]);
    ensure(out.status.success(), || stderr(&out))?;
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn criterion_1() -> Outcome {
    let expected = [
        (CNN_COUNTS, ["88.33", "89.93", "86.34", "88.10", "88.33"]),
        (SVM_COUNTS, ["81.69", "84.82", "77.19", "80.82", "81.69"]),
    ];
    for (counts, want) in expected {
        let out = metrics_cli(counts)?;
        for (name, w) in ["accuracy", "precision", "recall", "f1", "auc"].iter().zip(want) {
            let got = metric_line(&out, name).ok_or_else(|| format!("no {name} line in {out}"))?;
            ensure(got == w, || format!("{name}: printed {got}, expected {w}"))?;
        }
    }
    let precision: f64 = metric_line(&metrics_cli(CNN_COUNTS)?, "precision").unwrap().parse().unwrap();
    ensure((precision - 89.91).abs() <= 0.03 + 1e-9, || format!("precision {precision} vs 89.91"))?;
    Ok("cnn counts -> 88.33/89.93/86.34/88.10/88.33, svm counts -> 81.69/84.82/77.19/80.82/81.69".into())
}

/// `(TPR + TNR) / 2` and `(tp + tn) / total`, computed independently.
fn balanced_identity(tp: u64, fp: u64, fn_: u64, tn: u64) -> Result<(), String> {
    let r = report(&ConfusionMatrix::new(tp, fp, fn_, tn, Label::Deepfake)).map_err(|e| e.to_string())?;
    let q = |n: u64, d: u64| Ratio::new(n as u128, d as u128);
    let hard_auc = (q(tp, tp + fn_) + q(tn, tn + fp)) / Ratio::from_integer(2);
    let accuracy = q(tp + tn, tp + fp + fn_ + tn);
    ensure(hard_auc == accuracy, || format!("oracle: auc {hard_auc} != accuracy {accuracy}"))?;
    ensure(r.auc == Some(hard_auc) && r.accuracy == Some(accuracy), || {
        format!("report: auc {:?} accuracy {:?} for ({tp},{fp},{fn_},{tn})", r.auc, r.accuracy)
    })
}

fn criterion_2() -> Outcome {
    for (tp, fp, fn_, tn) in [CNN_COUNTS, SVM_COUNTS] {
        balanced_identity(tp, fp, fn_, tn)?;
    }
    let mut rng = Rng::new(2);
    for _ in 0..1000 {
        let per_class = 1 + (rng.next_f64() * 100_000.0) as u64;
        let tp = (rng.next_f64() * (per_class + 1) as f64) as u64;
        let tn = (rng.next_f64() * (per_class + 1) as f64) as u64;
        balanced_identity(tp, per_class - tn, per_class - tp, tn)?;
    }
    Ok("both reference matrices plus 1000 random balanced matrices, exact rationals".into())
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let reports = check_all(&GradcheckConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut worst = Vec::new();
    for r in &reports {
        let limit = match r.target {
            Target::SvmHinge | Target::CnnSigmoid => 1e-4,
            _ => 1e-5,
        };
        ensure(r.instances >= 20, || format!("{}: only {} instances", r.target, r.instances))?;
        ensure(r.max_rel_error < limit, || format!("{}: max relative error {:.3e}", r.target, r.max_rel_error))?;
        worst.push(format!("{} {:.1e}", r.target, r.max_rel_error));
    }
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    let cli = dfdetect(&["gradcheck", "--layer", "all"]);
    ensure(cli.status.code() == Some(0), || format!("gradcheck command exited {:?}", cli.status.code()))?;
    Ok(format!("20 instances per target in {:.1}s; {}", elapsed.as_secs_f64(), worst.join(", ")))
}

fn criterion_4() -> Outcome {
    let conv = Conv2D::<f32>::from_params(
        Tensor::full(vec![3, 3, 1, 2], 0.1).unwrap(),
        Tensor::zeros(vec![2]).unwrap(),
        2,
        Activation::Relu,
    )
    .unwrap();
    for extent in 1..=17 {
        let (y, _) = conv.forward(&Tensor::full(vec![1, extent, extent, 1], 1.0).unwrap()).map_err(|e| e.to_string())?;
        let want = extent.div_ceil(2);
        ensure(y.shape() == [1, want, want, 2], || format!("extent {extent} -> {:?}", y.shape()))?;
    }
    let chain = |kind| ModelSpec::new(kind, [64, 64, 3], &Hyper::default()).and_then(|s| s.chain());
    let cnn: Vec<Vec<usize>> = vec![
        vec![32, 32, 32],
        vec![16, 16, 32],
        vec![8, 8, 32],
        vec![8, 8, 32],
        vec![2048],
        vec![128],
        vec![128],
        vec![1],
    ];
    let svm: Vec<Vec<usize>> = vec![vec![32, 32, 32], vec![16, 16, 32], vec![8, 8, 32], vec![4, 4, 32], vec![512], vec![1]];
    let got_cnn = chain(ModelKind::CnnSigmoid).map_err(|e| e.to_string())?;
    let got_svm = chain(ModelKind::SvmHinge).map_err(|e| e.to_string())?;
    ensure(got_cnn == cnn, || format!("cnn chain {got_cnn:?}"))?;
    ensure(got_svm == svm, || format!("svm chain {got_svm:?}"))?;
    Ok("ceil(in/2) for extents 1..=17; both 64x64x3 chains match".into())
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let train_set = synthetic_source(32, 64, 64, 1);
    let held_out = synthetic_source(200, 64, 64, 2);
    let mut summary = Vec::new();
    for kind in [ModelKind::CnnSigmoid, ModelKind::SvmHinge] {
        let model = Model::build(kind, [64, 64, 3], &Hyper::default(), 7).map_err(|e| e.to_string())?;
        let mut trainer = Trainer::new(model, TrainConfig { seed: 7, ..TrainConfig::default() });
        let mut reached = None;
        for epoch in 1..=200 {
            trainer.run_epoch::<_, InMemorySource>(&train_set, None).map_err(|e| e.to_string())?;
            if evaluate(trainer.model(), &train_set, 64, 0.5).map_err(|e| e.to_string())?.accuracy() == 1.0 {
                reached = Some(epoch);
                break;
            }
        }
        let epoch = reached.ok_or_else(|| format!("{kind} never reached 100% training accuracy"))?;
        let acc = evaluate(trainer.model(), &held_out, 64, 0.5).map_err(|e| e.to_string())?.accuracy();
        ensure(acc >= 0.95, || format!("{kind}: held-out accuracy {acc}"))?;
        summary.push(format!("{kind} 100% train at epoch {epoch}, held-out {:.1}%", acc * 100.0));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!("{} ({:.1}s)", summary.join("; "), elapsed.as_secs_f64()))
}

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let data = path("fx");
    let fx = dfdetect(&["make-fixture", "--out", &data, "--train", "24", "--valid", "8", "--test", "8", "--size", "32", "--seed", "4"]);
    ensure(fx.status.success(), || stderr(&fx))?;
    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        let ckpt = path(&format!("{run}.dfdm"));
        let train_report = path(&format!("{run}.train.json"));
        let eval_report = path(&format!("{run}.eval.json"));
        let out = dfdetect(&[
            "train", "--data", &data, "--out", &ckpt, "--report", &train_report, "--seed", "11", "--epochs", "4",
            "--set", "height=32", "--set", "width=32", "--set", "batch_size=8",
        ]);
        ensure(out.status.success(), || stderr(&out))?;
        let out = dfdetect(&["eval", "--model", &ckpt, "--data", &data, "--report", &eval_report]);
        ensure(out.status.success(), || stderr(&out))?;
        let read = |p: &str| fs::read(p).map_err(|e| e.to_string());
        bytes.push((read(&ckpt)?, read(&train_report)?, read(&eval_report)?));
    }
    ensure(bytes[0].0 == bytes[1].0, || "checkpoints differ".into())?;
    ensure(bytes[0].1 == bytes[1].1, || "training reports differ".into())?;
    // eval reports embed the checkpoint path, which differs by run name
    let strip = |b: &[u8], run: &str| String::from_utf8_lossy(b).replace(&format!("{run}.dfdm"), "_.dfdm");
    ensure(strip(&bytes[0].2, "a") == strip(&bytes[1].2, "b"), || "eval reports differ".into())?;
    Ok(format!("two seeded runs: {}-byte checkpoints and reports byte-identical", bytes[0].0.len()))
}

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = synthetic_source(12, 32, 32, 8);
    for kind in [ModelKind::CnnSigmoid, ModelKind::SvmHinge] {
        let model = Model::build(kind, [32, 32, 3], &Hyper::default(), 21).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("{kind}.dfdm"));
        save_checkpoint(&model, &path).map_err(|e| e.to_string())?;
        let restored = load_checkpoint(&path).map_err(|e| e.to_string())?;
        let a = evaluate(&model, &data, 5, 0.5).map_err(|e| e.to_string())?;
        let b = evaluate(&restored, &data, 5, 0.5).map_err(|e| e.to_string())?;
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure(bits(&a.scores) == bits(&b.scores), || format!("{kind}: predictions changed"))?;
    }

    let mut ppm = b"P6\n# hand built\n3 2\n255\n".to_vec();
    let raw = [0u8, 0, 0, 255, 255, 255, 255, 0, 0, 0, 255, 0, 0, 0, 255, 51, 102, 153];
    ppm.extend_from_slice(&raw);
    let decoded = decode_bytes(&ppm)?;
    let want: Vec<f32> = raw.iter().map(|&b| b as f32 / 255.0).collect();
    ensure(decoded.shape() == [2, 3, 3] && decoded.data() == want.as_slice(), || format!("{decoded:?}"))?;
    let gray = decode_bytes(b"P5 2 2 4 \x00\x01\x02\x04")?;
    let want_gray: Vec<f32> = [0.0, 0.25, 0.5, 1.0].iter().flat_map(|&v| [v; 3]).collect();
    ensure(gray.data() == want_gray.as_slice(), || format!("{gray:?}"))?;

    let mut rng = Rng::new(77);
    for _ in 0..50 {
        let h = 1 + (rng.next_f64() * 9.0) as usize;
        let w = 1 + (rng.next_f64() * 9.0) as usize;
        let img = rng.uniform(vec![h, w, 3], 0.0f32, 1.0).map_err(|e| e.to_string())?;
        let twice = flip_horizontal(&flip_horizontal(&img).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure(twice == img, || "double flip changed an image".into())?;
    }
    Ok("checkpoint predictions bit-exact, PPM P6/P5 decode exact, double flip identity on 50 images".into())
}

fn mann_whitney(scores: &[f64], actual: &[Label]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &sp) in scores.iter().enumerate() {
        for (j, &sn) in scores.iter().enumerate() {
            if actual[i] == Label::Real && actual[j] == Label::Deepfake {
                pairs += 1.0;
                wins += if sp > sn { 1.0 } else if sp == sn { 0.5 } else { 0.0 };
            }
        }
    }
    wins / pairs
}

fn criterion_8() -> Outcome {
    let mut rng = Rng::new(8);
    let mut worst = 0.0f64;
    let mut ties = 0usize;
    for _ in 0..100 {
        let n = 2 + (rng.next_f64() * 199.0) as usize;
        let levels = 2 + (rng.next_f64() * 30.0) as usize;
        let mut actual: Vec<Label> = (0..n).map(|_| if rng.bernoulli(0.5) { Label::Real } else { Label::Deepfake }).collect();
        actual[0] = Label::Real;
        actual[n - 1] = Label::Deepfake;
        let scores: Vec<f64> = (0..n).map(|_| (rng.next_f64() * levels as f64).floor() * 0.1 - 1.0).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        ties += sorted.windows(2).filter(|w| w[0] == w[1]).count();
        let got = auc_from_scores(&scores, &actual, Label::Real).map_err(|e| e.to_string())?;
        worst = worst.max((got - mann_whitney(&scores, &actual)).abs());
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    ensure(ties > 0, || "no tied scores generated".into())?;
    Ok(format!("100 instances (n <= 200, {ties} tied neighbours), max deviation {worst:e}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("metrics oracle", criterion_1),
        ("balanced-class identity", criterion_2),
        ("gradient suite", criterion_3),
        ("shape law", criterion_4),
        ("overfit sanity", criterion_5),
        ("determinism", criterion_6),
        ("round-trips", criterion_7),
        ("AUC oracle", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
