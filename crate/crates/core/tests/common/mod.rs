#![allow(dead_code)]

use std::path::PathBuf;

use mpclo::io::load_instance;
use mpclo::model::MpcloInstance;
use nalgebra::DVector;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(format!("{name}.json"))
}

pub fn fixture(name: &str) -> MpcloInstance {
    load_instance(&fixture_path(name)).expect("fixture loads")
}

pub fn p(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}
