//! Leave-one-subject-out training harness.
//!
//! Every eligible subject is held out once. The held-out subject both drives
//! early stopping and provides the reported accuracy, which makes the
//! estimate optimistic. The protocol is kept that way on purpose so results
//! stay comparable with the published numbers.

mod stats;
mod train;

pub use stats::{mean_std, modality_group_stats, quantile, AccuracySummary, ModalityGroup};
pub use train::{train_fold, EarlyStopping, EpochStats, FoldResult, TrainedFold};

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{eligible_subjects, IngestError, SubjectRecording, NUM_CHANNELS};
use crate::nn::{Hyperparams, NetworkParams, NnError};
use crate::pipeline::{
    assemble_fold, windows_by_subject, DatasetOptions, FitScope, PipelineError, SignalCombination,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("need at least 2 subjects for cross-validation, got {0}")]
    InsufficientSubjects(usize),
    #[error("validation loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("fold coverage violated: {0}")]
    FoldCoverage(String),
    #[error("training set is empty")]
    EmptyTraining,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub fold_index: usize,
    pub train_subjects: Vec<u32>,
    pub val_subject: u32,
}

/// One fold per subject, in ascending subject order.
pub fn make_folds(subjects: &[u32]) -> Result<Vec<FoldSpec>, ExperimentError> {
    let mut ids: Vec<u32> = subjects.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(ExperimentError::InsufficientSubjects(ids.len()));
    }
    Ok(ids
        .iter()
        .enumerate()
        .map(|(fold_index, &val_subject)| FoldSpec {
            fold_index,
            train_subjects: ids.iter().copied().filter(|&s| s != val_subject).collect(),
            val_subject,
        })
        .collect())
}

/// Each subject is validation exactly once and never trains its own fold.
pub fn check_fold_coverage(folds: &[FoldSpec], subjects: &[u32]) -> Result<(), ExperimentError> {
    let expected: BTreeSet<u32> = subjects.iter().copied().collect();
    let vals: Vec<u32> = folds.iter().map(|f| f.val_subject).collect();
    let val_set: BTreeSet<u32> = vals.iter().copied().collect();
    if vals.len() != val_set.len() || val_set != expected {
        return Err(ExperimentError::FoldCoverage(format!("validation subjects {vals:?} vs eligible {expected:?}")));
    }
    if let Some(f) = folds.iter().find(|f| f.train_subjects.contains(&f.val_subject)) {
        return Err(ExperimentError::FoldCoverage(format!("fold {} trains on its validation subject", f.fold_index)));
    }
    Ok(())
}

/// Everything besides the recordings that determines an experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub hyper: Hyperparams,
    pub scope: FitScope,
    pub dataset: DatasetOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { hyper: Hyperparams::default(), scope: FitScope::TrainOnly, dataset: DatasetOptions::default() }
    }
}

/// Seed of fold `k`: the base seed XOR `k`.
pub fn fold_seed(base: u64, fold_index: usize) -> u64 {
    base ^ fold_index as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub combo: char,
    pub name: String,
    pub modality: usize,
    pub folds: Vec<FoldResult>,
    pub mean_val_accuracy: f64,
    pub std_val_accuracy: f64,
    pub mean_epochs: f64,
    pub std_epochs: f64,
    pub subsample: usize,
    pub norm_scope: FitScope,
}

impl ExperimentResult {
    /// Aggregates fold results (population standard deviations).
    pub fn from_folds(combo: &SignalCombination, folds: Vec<FoldResult>, subsample: usize, norm_scope: FitScope) -> Self {
        let accs: Vec<f64> = folds.iter().map(|f| f.best_val_accuracy).collect();
        let epochs: Vec<f64> = folds.iter().map(|f| f.epochs_trained as f64).collect();
        let (mean_val_accuracy, std_val_accuracy) = mean_std(&accs);
        let (mean_epochs, std_epochs) = mean_std(&epochs);
        ExperimentResult {
            combo: combo.id,
            name: combo.name.to_string(),
            modality: combo.modality(),
            folds,
            mean_val_accuracy,
            std_val_accuracy,
            mean_epochs,
            std_epochs,
            subsample,
            norm_scope,
        }
    }
}

/// Cross-validated results plus the best-epoch network of every fold.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub result: ExperimentResult,
    pub models: Vec<NetworkParams>,
}

pub fn run_experiment(
    recordings: &[SubjectRecording],
    combo: &SignalCombination,
    config: &ExperimentConfig,
) -> Result<ExperimentResult, ExperimentError> {
    run_experiment_with_models(recordings, combo, config).map(|run| run.result)
}

/// Folds are trained in parallel; each has its own seed and data, and the
/// results are merged by fold index.
pub fn run_experiment_with_models(
    recordings: &[SubjectRecording],
    combo: &SignalCombination,
    config: &ExperimentConfig,
) -> Result<ExperimentRun, ExperimentError> {
    config.hyper.validate()?;
    debug_assert!(combo.channels.iter().all(|c| c.index() < NUM_CHANNELS));
    let subjects = eligible_subjects(recordings, &config.dataset.label_map, config.dataset.max_gap)?;
    let folds = make_folds(&subjects)?;
    check_fold_coverage(&folds, &subjects)?;

    let eligible: Vec<SubjectRecording> =
        recordings.iter().filter(|r| subjects.contains(&r.subject_id)).cloned().collect();
    let by_subject = windows_by_subject(&eligible, combo, &config.dataset);

    let trained: Vec<TrainedFold> = folds
        .par_iter()
        .map(|fold| {
            let data = assemble_fold(&by_subject, &fold.train_subjects, fold.val_subject, config.scope)?;
            let hyper = Hyperparams { seed: fold_seed(config.hyper.seed, fold.fold_index), ..config.hyper.clone() };
            let mut out = train_fold(&data.train, &data.val, &hyper, combo.modality())?;
            out.result.fold_index = fold.fold_index;
            out.result.val_subject = fold.val_subject;
            Ok(out)
        })
        .collect::<Result<_, ExperimentError>>()?;

    let (results, models): (Vec<FoldResult>, Vec<NetworkParams>) =
        trained.into_iter().map(|t| (t.result, t.params)).unzip();
    Ok(ExperimentRun {
        result: ExperimentResult::from_folds(combo, results, config.dataset.subsample, config.scope),
        models,
    })
}
