#![allow(dead_code)]

use std::path::{Path, PathBuf};

use harbench::ingest::{load_subject_file, AccelRange, SubjectRecording};
use harbench::nn::Hyperparams;
use harbench::synthetic::{write_dataset, SyntheticSpec};

/// Nine synthetic subjects; 101..=108 are eligible, 109 has no stair data.
pub fn small_spec(seconds: f64) -> SyntheticSpec {
    SyntheticSpec { seconds_per_activity: seconds, ..Default::default() }
}

pub fn write_small_dataset(dir: &Path, seconds: f64) -> Vec<PathBuf> {
    write_dataset(&small_spec(seconds), dir).expect("write synthetic dataset")
}

pub fn load_all(paths: &[PathBuf]) -> Vec<SubjectRecording> {
    paths.iter().map(|p| load_subject_file(p, AccelRange::G16).expect("parse synthetic file")).collect()
}

pub fn quick_hyper(max_epochs: usize) -> Hyperparams {
    Hyperparams { max_epochs, patience: 3, ..Hyperparams::default() }
}
