//! Table, CSV and JSON renderings of experiment results.

pub mod config;

pub use config::{load_config, ConfigError, ConfigOverrides, RunConfig};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::experiment::{modality_group_stats, ExperimentResult, ModalityGroup};

pub const CSV_HEADER: &str = "combo,name,modality,mean_val_acc,std_val_acc,mean_epochs,std_epochs";
pub const TABLE_FILE: &str = "table.txt";
pub const CSV_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub combo: char,
    pub name: String,
    pub modality: usize,
    pub mean_acc_pct: f64,
    pub std_acc_pct: f64,
    pub mean_epochs: f64,
    pub std_epochs: f64,
    pub subsample: usize,
}

impl ReportRow {
    pub fn label(&self) -> String {
        format!("{} ({})", self.name, self.combo)
    }
}

/// Rows sorted by mean accuracy, highest first; ties by combination letter.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    pub fn from_results(results: &[ExperimentResult]) -> Self {
        let mut rows: Vec<ReportRow> = results
            .iter()
            .map(|r| ReportRow {
                combo: r.combo,
                name: r.name.clone(),
                modality: r.modality,
                mean_acc_pct: 100.0 * r.mean_val_accuracy,
                std_acc_pct: 100.0 * r.std_val_accuracy,
                mean_epochs: r.mean_epochs,
                std_epochs: r.std_epochs,
                subsample: r.subsample,
            })
            .collect();
        rows.sort_by(|a, b| b.mean_acc_pct.total_cmp(&a.mean_acc_pct).then(a.combo.cmp(&b.combo)));
        ReportTable { rows }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.2},{:.2},{:.2},{:.2}",
                r.combo,
                csv_field(&r.name),
                r.modality,
                r.mean_acc_pct,
                r.std_acc_pct,
                r.mean_epochs,
                r.std_epochs
            );
        }
        out
    }

    /// Aligned plain-text table. Subsampled rows are flagged with `*`.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.label().len() + 2).max().unwrap_or(0).max("Input Data".len());
        let mut out = format!(
            "{:<width$}  {:>12}  {:>11}  {:>11}\n",
            "Input Data", "val_accuracy", "val_acc_std", "mean_epochs"
        );
        let mut flagged = Vec::new();
        for r in &self.rows {
            let mut label = r.label();
            if r.subsample > 1 {
                label.push_str(" *");
                flagged.push(r.subsample);
            }
            let _ = writeln!(
                out,
                "{label:<width$}  {:>12.2}  {:>11.2}  {:>11.2}",
                r.mean_acc_pct, r.std_acc_pct, r.mean_epochs
            );
        }
        flagged.sort_unstable();
        flagged.dedup();
        for k in flagged {
            let _ = writeln!(out, "* trained and evaluated on 1 of every {k} windows");
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Structured summary across combinations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub results: Vec<ExperimentResult>,
    pub modality_groups: Vec<ModalityGroup>,
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub table: PathBuf,
    pub summary: PathBuf,
}

/// Writes the CSV, the text table and the JSON summary into `out_dir`.
pub fn emit_report(results: &[ExperimentResult], out_dir: &Path) -> std::io::Result<ReportFiles> {
    std::fs::create_dir_all(out_dir)?;
    let table = ReportTable::from_results(results);
    let mut ordered = results.to_vec();
    ordered.sort_by_key(|r| r.combo);
    let summary = Summary { modality_groups: modality_group_stats(&ordered), results: ordered };

    let files = ReportFiles {
        csv: out_dir.join(CSV_FILE),
        table: out_dir.join(TABLE_FILE),
        summary: out_dir.join(SUMMARY_FILE),
    };
    std::fs::write(&files.csv, table.to_csv())?;
    std::fs::write(&files.table, table.to_text())?;
    std::fs::write(&files.summary, to_json(&summary)?)?;
    Ok(files)
}

pub fn to_json<T: Serialize>(value: &T) -> std::io::Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    s.push('\n');
    Ok(s)
}

pub fn read_result(path: &Path) -> std::io::Result<ExperimentResult> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{EpochStats, FoldResult};
    use crate::pipeline::{combination, FitScope};

    fn result_with_mean(id: char, acc: f64, subsample: usize) -> ExperimentResult {
        let fold = FoldResult {
            fold_index: 0,
            val_subject: 101,
            seed: 1,
            best_epoch: 3,
            best_val_accuracy: acc,
            best_val_loss: 0.1,
            epochs_trained: 53,
            train_windows: 100,
            val_windows: 20,
            loss_curve: vec![EpochStats { epoch: 1, train_loss: 1.0, val_loss: 0.1, val_acc: acc }],
        };
        ExperimentResult::from_folds(&combination(id).unwrap(), vec![fold], subsample, FitScope::Global)
    }

    #[test]
    fn sorted_by_accuracy() {
        let table = ReportTable::from_results(&[result_with_mean('f', 0.735, 1), result_with_mean('l', 0.999, 1)]);
        assert_eq!(table.rows[0].combo, 'l');
        let csv = table.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "l,Chest and Ankle IMU,12,99.90,0.00,53.00,0.00");
        assert!(lines[2].starts_with("f,Chest IMU,6,73.50,"));
    }

    #[test]
    fn single_row_text_and_subsample_flag() {
        let text = ReportTable::from_results(&[result_with_mean('l', 0.5, 4)]).to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Input Data"));
        assert!(lines[1].starts_with("Chest and Ankle IMU (l) *"));
        assert!(lines[1].contains("50.00"));
        assert_eq!(lines[2], "* trained and evaluated on 1 of every 4 windows");
    }

    #[test]
    fn quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
