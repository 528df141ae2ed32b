use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ExperimentResult;

/// Mean and population standard deviation; `(NaN, NaN)` for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Linear-interpolation quantile of sorted data (`q` in [0, 1]).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl AccuracySummary {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        AccuracySummary {
            min: sorted[0],
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityGroup {
    pub modality: usize,
    pub combos: Vec<char>,
    /// Mean of the combinations' mean accuracies.
    pub mean_accuracy: f64,
    /// Distribution of every fold accuracy in the group.
    pub fold_accuracy: AccuracySummary,
    pub mean_epochs: f64,
    pub std_epochs: f64,
}

/// Groups results by modality; empty groups are omitted.
pub fn modality_group_stats(results: &[ExperimentResult]) -> Vec<ModalityGroup> {
    let mut groups: BTreeMap<usize, Vec<&ExperimentResult>> = BTreeMap::new();
    for r in results {
        groups.entry(r.modality).or_default().push(r);
    }
    groups
        .into_iter()
        .filter(|(_, members)| members.iter().any(|r| !r.folds.is_empty()))
        .map(|(modality, members)| {
            let means: Vec<f64> = members.iter().map(|r| r.mean_val_accuracy).collect();
            let folds: Vec<f64> = members.iter().flat_map(|r| r.folds.iter().map(|f| f.best_val_accuracy)).collect();
            let epochs: Vec<f64> =
                members.iter().flat_map(|r| r.folds.iter().map(|f| f.epochs_trained as f64)).collect();
            let (mean_epochs, std_epochs) = mean_std(&epochs);
            ModalityGroup {
                modality,
                combos: members.iter().map(|r| r.combo).collect(),
                mean_accuracy: mean_std(&means).0,
                fold_accuracy: AccuracySummary::of(&folds),
                mean_epochs,
                std_epochs,
            }
        })
        .collect()
}
