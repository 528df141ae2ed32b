use std::io::Write;

use super::{clean_missing, PipelineError, SignalCombination};
use crate::ingest::{extract_segments, ActivitySegment, LabelMap, SubjectRecording};

/// One second at 100 Hz.
pub const WINDOW_LEN: usize = 100;
/// 25 % slide, 75 % overlap.
pub const WINDOW_STRIDE: usize = 25;

/// Number of full windows in a run of `len` samples.
pub fn window_count(len: usize) -> usize {
    if len < WINDOW_LEN {
        0
    } else {
        (len - WINDOW_LEN) / WINDOW_STRIDE + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WindowOrigin {
    pub subject_id: u32,
    pub segment_index: usize,
    /// First sample of the window, as an index into the parent recording.
    pub start: usize,
}

/// A batch of labeled windows, stored flat as `[window][time][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub modality: usize,
    pub data: Vec<f64>,
    pub labels: Vec<u8>,
    pub provenance: Vec<WindowOrigin>,
}

impl WindowSet {
    pub fn empty(modality: usize) -> Self {
        WindowSet { modality, data: Vec::new(), labels: Vec::new(), provenance: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn window_size(&self) -> usize {
        WINDOW_LEN * self.modality
    }

    pub fn window(&self, i: usize) -> &[f64] {
        let w = self.window_size();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn push(&mut self, values: &[f64], label: u8, origin: WindowOrigin) {
        debug_assert_eq!(values.len(), self.window_size());
        self.data.extend_from_slice(values);
        self.labels.push(label);
        self.provenance.push(origin);
    }

    pub fn concat<'a>(sets: impl IntoIterator<Item = &'a WindowSet>) -> Result<WindowSet, PipelineError> {
        let mut iter = sets.into_iter();
        let first = iter.next().ok_or(PipelineError::EmptyInput)?;
        let mut out = first.clone();
        for set in iter {
            if set.modality != out.modality {
                return Err(PipelineError::ChannelMismatch { stats: out.modality, windows: set.modality });
            }
            out.data.extend_from_slice(&set.data);
            out.labels.extend_from_slice(&set.labels);
            out.provenance.extend_from_slice(&set.provenance);
        }
        Ok(out)
    }

    /// Keeps windows whose index is a multiple of `k`.
    pub fn subsample(&self, k: usize) -> WindowSet {
        if k <= 1 {
            return self.clone();
        }
        self.select((0..self.len()).step_by(k))
    }

    pub fn select(&self, indices: impl IntoIterator<Item = usize>) -> WindowSet {
        let mut out = WindowSet::empty(self.modality);
        for i in indices {
            out.push(self.window(i), self.labels[i], self.provenance[i]);
        }
        out
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Debug dump: one row per window, `subject,label,offset,` then the
    /// flattened `[time][channel]` values.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "subject,label,offset")?;
        for t in 0..WINDOW_LEN {
            for c in 0..self.modality {
                write!(out, ",t{t}c{c}")?;
            }
        }
        writeln!(out)?;
        for i in 0..self.len() {
            let p = self.provenance[i];
            write!(out, "{},{},{}", p.subject_id, self.labels[i], p.start)?;
            for v in self.window(i) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    }
}

/// Windows of one activity segment for one combination.
///
/// Gaps are interpolated per channel within the segment only. A window is
/// kept only if none of the 18 channels is still missing anywhere inside it,
/// so every combination sees the same set of windows.
pub fn segment_windows(
    rec: &SubjectRecording,
    segment_index: usize,
    segment: &ActivitySegment,
    combo: &SignalCombination,
    max_gap: usize,
) -> WindowSet {
    let mut out = WindowSet::empty(combo.modality());
    let range = segment.sample_range.clone();
    let len = range.len();
    if len < WINDOW_LEN {
        return out;
    }
    let cleaned: Vec<Vec<f64>> =
        rec.channels.iter().map(|c| clean_missing(&c[range.clone()], max_gap)).collect();

    // prefix count of samples with any missing channel
    let mut dirty = vec![0usize; len + 1];
    for i in 0..len {
        let missing = cleaned.iter().any(|c| c[i].is_nan());
        dirty[i + 1] = dirty[i] + usize::from(missing);
    }

    let mut buf = vec![0.0; out.window_size()];
    for w in 0..window_count(len) {
        let offset = w * WINDOW_STRIDE;
        if dirty[offset + WINDOW_LEN] != dirty[offset] {
            continue;
        }
        for t in 0..WINDOW_LEN {
            for (c, ch) in combo.channels.iter().enumerate() {
                buf[t * combo.modality() + c] = cleaned[ch.index()][offset + t];
            }
        }
        out.push(
            &buf,
            segment.class_label,
            WindowOrigin { subject_id: rec.subject_id, segment_index, start: range.start + offset },
        );
    }
    out
}

/// All windows of one recording, segment by segment.
pub fn recording_windows(
    rec: &SubjectRecording,
    label_map: &LabelMap,
    combo: &SignalCombination,
    max_gap: usize,
) -> WindowSet {
    let mut out = WindowSet::empty(combo.modality());
    for (i, seg) in extract_segments(rec, label_map).iter().enumerate() {
        let part = segment_windows(rec, i, seg, combo, max_gap);
        out.data.extend_from_slice(&part.data);
        out.labels.extend_from_slice(&part.labels);
        out.provenance.extend_from_slice(&part.provenance);
    }
    out
}
