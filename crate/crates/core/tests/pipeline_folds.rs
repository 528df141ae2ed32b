mod common;

use std::collections::BTreeSet;

use harbench::experiment::make_folds;
use harbench::ingest::{eligible_subjects, extract_segments, LabelMap};
use harbench::pipeline::{
    assemble_fold, combination_catalog, recording_windows, window_count, windows_by_subject, DatasetOptions,
    FitScope, WINDOW_LEN,
};

#[test]
fn synthetic_windows_match_segment_formula() {
    let dir = tempfile::tempdir().unwrap();
    let recs = common::load_all(&common::write_small_dataset(dir.path(), 4.0));
    let map = LabelMap::default();
    let combo = combination_catalog()[0].clone();
    for rec in &recs {
        let segs = extract_segments(rec, &map);
        let set = recording_windows(rec, &map, &combo, 20);
        // each segment holds one 4-sample dropout, which interpolation repairs
        let expected: usize = segs.iter().map(|s| window_count(s.len())).sum();
        assert_eq!(set.len(), expected, "subject {}", rec.subject_id);
        for (i, origin) in set.provenance.iter().enumerate() {
            let label = set.labels[i];
            let seg = &segs[origin.segment_index];
            assert_eq!(seg.class_label, label);
            assert!(origin.start >= seg.sample_range.start && origin.start + WINDOW_LEN <= seg.sample_range.end);
        }
    }
}

#[test]
fn standardization_and_leakage_across_all_folds_and_combinations() {
    let dir = tempfile::tempdir().unwrap();
    let recs = common::load_all(&common::write_small_dataset(dir.path(), 3.0));
    let map = LabelMap::default();
    let subjects = eligible_subjects(&recs, &map, 20).unwrap();
    assert_eq!(subjects.len(), 8);
    let folds = make_folds(&subjects).unwrap();
    let eligible: Vec<_> = recs.iter().filter(|r| subjects.contains(&r.subject_id)).cloned().collect();

    for combo in combination_catalog() {
        let by_subject = windows_by_subject(&eligible, &combo, &DatasetOptions::default());
        for fold in &folds {
            let data = assemble_fold(&by_subject, &fold.train_subjects, fold.val_subject, FitScope::TrainOnly).unwrap();
            let train_ids: BTreeSet<u32> = data.train.provenance.iter().map(|p| p.subject_id).collect();
            let val_ids: BTreeSet<u32> = data.val.provenance.iter().map(|p| p.subject_id).collect();
            assert_eq!(val_ids, BTreeSet::from([fold.val_subject]));
            assert!(train_ids.is_disjoint(&val_ids), "combo {} fold {}", combo.id, fold.fold_index);
            assert_eq!(train_ids.len(), 7);

            let n = combo.modality();
            let rows = data.train.data.len() / n;
            for c in 0..n {
                let col: Vec<f64> = data.train.data.iter().skip(c).step_by(n).copied().collect();
                assert_eq!(col.len(), rows);
                let mean = col.iter().sum::<f64>() / rows as f64;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64;
                assert!(mean.abs() < 1e-9, "combo {} channel {c} mean {mean}", combo.id);
                assert!((var.sqrt() - 1.0).abs() < 1e-9, "combo {} channel {c} std {}", combo.id, var.sqrt());
            }
        }
    }
}

#[test]
fn global_scope_uses_every_subject() {
    let dir = tempfile::tempdir().unwrap();
    let recs = common::load_all(&common::write_small_dataset(dir.path(), 3.0));
    let combo = combination_catalog()[3].clone();
    let subjects: Vec<u32> = (101..=108).collect();
    let eligible: Vec<_> = recs.iter().filter(|r| subjects.contains(&r.subject_id)).cloned().collect();
    let by_subject = windows_by_subject(&eligible, &combo, &DatasetOptions::default());
    let a = assemble_fold(&by_subject, &subjects[1..], 101, FitScope::Global).unwrap();
    let b = assemble_fold(&by_subject, &subjects[..7], 108, FitScope::Global).unwrap();
    assert_eq!(a.stats.mean, b.stats.mean);
    assert_eq!(a.stats.fit_scope, FitScope::Global);
    let c = assemble_fold(&by_subject, &subjects[1..], 101, FitScope::TrainOnly).unwrap();
    assert_ne!(a.stats.mean, c.stats.mean);
}

#[test]
fn window_csv_parses() {
    let dir = tempfile::tempdir().unwrap();
    let recs = common::load_all(&common::write_small_dataset(dir.path(), 2.0));
    let combo = combination_catalog()[0].clone();
    let set = recording_windows(&recs[0], &LabelMap::default(), &combo, 20);
    let mut bytes = Vec::new();
    set.write_csv(&mut bytes).unwrap();
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let header = reader.headers().unwrap().clone();
    assert_eq!(header.len(), 3 + WINDOW_LEN * combo.modality());
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), set.len());
    let first: f64 = rows[0][3].parse().unwrap();
    assert_eq!(first, set.window(0)[0]);
}
