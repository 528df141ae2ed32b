//! Recordings to normalized, windowed, labeled datasets.

mod combination;
mod stats;
mod window;

pub use combination::{combination, combination_catalog, SignalCombination};
pub use stats::{apply_stats, fit_stats, ChannelStats, FitScope, STD_FLOOR};
pub use window::{
    recording_windows, segment_windows, window_count, WindowOrigin, WindowSet, WINDOW_LEN,
    WINDOW_STRIDE,
};

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ingest::{LabelMap, SubjectRecording};

/// Default longest run of missing samples that is interpolated (200 ms).
pub const DEFAULT_MAX_GAP: usize = 20;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no windows to fit statistics on")]
    EmptyInput,
    #[error("statistics cover {stats} channels but windows have {windows}")]
    ChannelMismatch { stats: usize, windows: usize },
    #[error("validation subject {0} is also a training subject")]
    ValidationInTraining(u32),
    #[error("no windows for subject {0}")]
    UnknownSubject(u32),
    #[error("subject {0} appears in both training and validation windows")]
    Leakage(u32),
}

/// Linearly interpolates runs of at most `max_gap` missing (NaN) samples that
/// have a valid neighbour on both sides. Longer runs and runs touching either
/// end are left missing.
pub fn clean_missing(series: &[f64], max_gap: usize) -> Vec<f64> {
    let mut out = series.to_vec();
    let mut i = 0;
    while i < out.len() {
        if !out[i].is_nan() {
            i += 1;
            continue;
        }
        let start = i;
        while i < out.len() && out[i].is_nan() {
            i += 1;
        }
        let gap = i - start;
        if start == 0 || i == out.len() || gap > max_gap {
            continue;
        }
        let left = out[start - 1];
        let right = out[i];
        let span = (gap + 1) as f64;
        for (k, cell) in out[start..i].iter_mut().enumerate() {
            let frac = (k + 1) as f64 / span;
            *cell = left + (right - left) * frac;
        }
    }
    out
}

/// Options shared by every fold build.
#[derive(Debug, Clone)]
pub struct DatasetOptions {
    pub label_map: LabelMap,
    pub max_gap: usize,
    /// Keep every k-th window (1 keeps all).
    pub subsample: usize,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions { label_map: LabelMap::default(), max_gap: DEFAULT_MAX_GAP, subsample: 1 }
    }
}

/// Unnormalized windows of every recording for one combination, keyed by subject.
pub fn windows_by_subject(
    recordings: &[SubjectRecording],
    combo: &SignalCombination,
    options: &DatasetOptions,
) -> BTreeMap<u32, WindowSet> {
    recordings
        .iter()
        .map(|rec| {
            let set = recording_windows(rec, &options.label_map, combo, options.max_gap);
            (rec.subject_id, set.subsample(options.subsample))
        })
        .collect()
}

/// One fold's normalized training and validation sets.
#[derive(Debug, Clone)]
pub struct FoldDatasets {
    pub train: WindowSet,
    pub val: WindowSet,
    pub stats: ChannelStats,
}

/// Builds a fold from per-subject windows. With `FitScope::Global` the
/// statistics are fitted on every subject present in `by_subject`.
pub fn assemble_fold(
    by_subject: &BTreeMap<u32, WindowSet>,
    train_subjects: &[u32],
    val_subject: u32,
    scope: FitScope,
) -> Result<FoldDatasets, PipelineError> {
    if train_subjects.contains(&val_subject) {
        return Err(PipelineError::ValidationInTraining(val_subject));
    }
    let pick = |id: &u32| by_subject.get(id).ok_or(PipelineError::UnknownSubject(*id));
    let train_parts = train_subjects.iter().map(pick).collect::<Result<Vec<_>, _>>()?;
    let val_raw = pick(&val_subject)?;
    let train_raw = WindowSet::concat(train_parts)?;

    let train_ids: BTreeSet<u32> = train_raw.provenance.iter().map(|p| p.subject_id).collect();
    if let Some(p) = val_raw.provenance.iter().find(|p| train_ids.contains(&p.subject_id)) {
        return Err(PipelineError::Leakage(p.subject_id));
    }

    let stats = match scope {
        FitScope::TrainOnly => fit_stats(&train_raw, scope)?,
        FitScope::Global => fit_stats(&WindowSet::concat(by_subject.values())?, scope)?,
    };
    Ok(FoldDatasets {
        train: apply_stats(&stats, &train_raw)?,
        val: apply_stats(&stats, val_raw)?,
        stats,
    })
}

/// Windows, normalizes and splits `recordings` for one fold.
pub fn build_fold_datasets(
    recordings: &[SubjectRecording],
    combo: &SignalCombination,
    train_subjects: &[u32],
    val_subject: u32,
    scope: FitScope,
    options: &DatasetOptions,
) -> Result<FoldDatasets, PipelineError> {
    let members: BTreeSet<u32> = train_subjects.iter().copied().chain([val_subject]).collect();
    let selected: Vec<SubjectRecording> =
        recordings.iter().filter(|r| members.contains(&r.subject_id)).cloned().collect();
    let by_subject = windows_by_subject(&selected, combo, options);
    assemble_fold(&by_subject, train_subjects, val_subject, scope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_short_gaps_only() {
        let nan = f64::NAN;
        assert_eq!(clean_missing(&[1.0, nan, 3.0], 1), vec![1.0, 2.0, 3.0]);
        assert_eq!(clean_missing(&[0.0, nan, nan, nan, 4.0], 3), vec![0.0, 1.0, 2.0, 3.0, 4.0]);

        let mut long = vec![1.0];
        long.extend(std::iter::repeat_n(nan, 30));
        long.push(2.0);
        let cleaned = clean_missing(&long, 20);
        assert!(cleaned[1..31].iter().all(|v| v.is_nan()));

        let plain = [1.0, -2.0, 3.5];
        assert_eq!(clean_missing(&plain, 20), plain.to_vec());
        assert!(clean_missing(&[1.0, nan, 3.0], 0)[1].is_nan());
    }

    #[test]
    fn edge_gaps_stay_missing() {
        let nan = f64::NAN;
        let out = clean_missing(&[nan, 1.0, 2.0, nan], 5);
        assert!(out[0].is_nan() && out[3].is_nan());
        assert_eq!(&out[1..3], &[1.0, 2.0]);
    }
}
