#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use dfdetect_core::{save_checkpoint, Hyper, Model, ModelKind, Tensor};

pub fn dfdetect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dfdetect"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Value printed after `name` in the metrics summary.
pub fn metric_line(out: &str, name: &str) -> Option<String> {
    out.lines()
        .find_map(|l| l.strip_prefix(name).filter(|rest| rest.starts_with(' ')).map(|rest| rest.trim().to_string()))
}

/// An svm_hinge model that is monotone in pixel intensity and thresholds at
/// mid-gray, so every bright fixture image scores real and every dark one
/// scores deepfake.
pub fn mid_gray_stub(side: usize) -> Model<f32> {
    let hyper = Hyper {
        filters: 4,
        ..Hyper::default()
    };
    let mut model = Model::<f32>::build(ModelKind::SvmHinge, [side, side, 3], &hyper, 0).unwrap();
    for (i, p) in model.params_mut().into_iter().enumerate() {
        let fill = if i % 2 == 0 { 0.1 } else { 0.0 };
        p.data_mut().iter_mut().for_each(|v| *v = fill);
    }
    let gray = Tensor::full(vec![1, side, side, 3], 0.5f32).unwrap();
    let pivot = model.predict(&gray).unwrap()[0];
    let mut params = model.params_mut();
    params.last_mut().unwrap().data_mut()[0] = -pivot;
    model
}

pub fn zero_cnn(side: usize) -> Model<f32> {
    let mut model = Model::<f32>::build(ModelKind::CnnSigmoid, [side, side, 3], &Hyper::default(), 0).unwrap();
    for p in model.params_mut() {
        p.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    model
}

pub fn save(model: &Model<f32>, path: &Path) {
    save_checkpoint(model, path).unwrap();
}
