#![allow(dead_code)]

use std::path::{Path, PathBuf};

use subprune::eval::{load_idx, Dataset, Preprocess, Split};
use subprune::model::load_model;
use subprune::Network;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn digits_dir() -> PathBuf {
    fixtures().join("digits")
}

pub fn digits_model() -> Network {
    load_model(&digits_dir().join("mlp.snm")).expect("fixture model loads")
}

fn digits_preprocess() -> Preprocess {
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(digits_dir().join("dataset.json")).unwrap()).unwrap();
    Preprocess {
        scale: 1.0 / 255.0,
        mean: meta["mean"].as_f64().unwrap(),
        std: meta["std"].as_f64().unwrap(),
    }
}

fn digits(prefix: &str, split: Split) -> Dataset {
    let dir = digits_dir();
    let mut ds = load_idx(
        &dir.join(format!("{prefix}-images-idx3-ubyte")),
        Some(&dir.join(format!("{prefix}-labels-idx1-ubyte"))),
        10,
        split,
    )
    .expect("fixture data loads");
    ds.normalize(&digits_preprocess()).unwrap();
    ds
}

pub fn digits_train() -> Dataset {
    digits("train", Split::Calibration)
}

pub fn digits_test() -> Dataset {
    digits("test", Split::Test)
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_subprune")
}
