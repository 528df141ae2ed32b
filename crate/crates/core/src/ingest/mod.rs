//! PAMAP2 protocol-file ingestion.
//!
//! A protocol file holds one sample per line with 54 whitespace-separated
//! fields. Only the timestamp, the activity code and the accelerometer and
//! gyroscope triples of the three IMUs are kept; temperature, heart rate,
//! magnetometer and orientation are dropped while parsing.

mod cache;
mod channel;

pub use cache::{read_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};
pub use channel::{ChannelId, Location, SensorKind, Axis, NUM_CHANNELS};

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::clean_missing;

/// Number of whitespace-separated fields on every protocol line.
pub const FIELDS_PER_LINE: usize = 54;
const IMU_BLOCK_START: usize = 3;
const IMU_BLOCK_WIDTH: usize = 17;

/// Activity codes listed in the dataset documentation (0 marks transients).
pub const KNOWN_ACTIVITY_CODES: [u16; 19] =
    [0, 1, 2, 3, 4, 5, 6, 7, 9, 10, 11, 12, 13, 16, 17, 18, 19, 20, 24];

/// Minimum number of consecutive clean samples for a segment to yield a window.
pub const MIN_WINDOWABLE: usize = 100;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("file contains no samples")]
    EmptyFile,
    #[error("line {line}: timestamp {timestamp} does not increase")]
    NonMonotonicTimestamp { line: usize, timestamp: f64 },
    #[error("line {line}: undocumented activity code {code}")]
    UnknownActivity { line: usize, code: u16 },
    #[error("only {found} eligible subject(s); at least 2 are required")]
    InsufficientSubjects { found: usize },
    #[error("cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which of the two accelerometers of each IMU block is retained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AccelRange {
    #[default]
    #[serde(rename = "16g")]
    G16,
    #[serde(rename = "6g")]
    G6,
}

impl AccelRange {
    fn block_offset(self) -> usize {
        match self {
            AccelRange::G16 => 1,
            AccelRange::G6 => 4,
        }
    }
}

impl fmt::Display for AccelRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccelRange::G16 => "16g",
            AccelRange::G6 => "6g",
        })
    }
}

impl FromStr for AccelRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "16g" => Ok(AccelRange::G16),
            "6g" => Ok(AccelRange::G6),
            other => Err(format!("expected 16g or 6g, got {other:?}")),
        }
    }
}

/// Zero-based source field of every retained channel, in `ChannelId` order.
pub fn field_layout(range: AccelRange) -> [usize; NUM_CHANNELS] {
    let mut fields = [0usize; NUM_CHANNELS];
    for ch in ChannelId::all() {
        let block = IMU_BLOCK_START + IMU_BLOCK_WIDTH * ch.location as usize;
        let triple = match ch.kind {
            SensorKind::Accel => range.block_offset(),
            SensorKind::Gyro => 7,
        };
        fields[ch.index()] = block + triple + ch.axis as usize;
    }
    fields
}

/// One participant's protocol recording, restricted to the 18 inertial channels.
///
/// Missing cells are stored as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecording {
    pub subject_id: u32,
    pub timestamps: Vec<f64>,
    pub activity_ids: Vec<u16>,
    /// Column-major: `channels[c][i]` is channel `c` at sample `i`.
    pub channels: Vec<Vec<f64>>,
}

impl SubjectRecording {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn channel(&self, id: ChannelId) -> &[f64] {
        &self.channels[id.index()]
    }

    pub fn is_missing(&self, channel: ChannelId, sample: usize) -> bool {
        self.channels[channel.index()][sample].is_nan()
    }

    /// Bitwise comparison, treating NaN payloads as values.
    pub fn bit_identical(&self, other: &SubjectRecording) -> bool {
        fn same(a: &[f64], b: &[f64]) -> bool {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        }
        self.subject_id == other.subject_id
            && self.activity_ids == other.activity_ids
            && same(&self.timestamps, &other.timestamps)
            && self.channels.len() == other.channels.len()
            && self.channels.iter().zip(&other.channels).all(|(a, b)| same(a, b))
    }
}

/// Parses one PAMAP2 protocol file.
pub fn parse_subject_file<R: BufRead>(
    source: R,
    subject_id: u32,
    range: AccelRange,
) -> Result<SubjectRecording, IngestError> {
    let layout = field_layout(range);
    let mut rec = SubjectRecording {
        subject_id,
        timestamps: Vec::new(),
        activity_ids: Vec::new(),
        channels: vec![Vec::new(); NUM_CHANNELS],
    };
    let mut fields: Vec<f64> = Vec::with_capacity(FIELDS_PER_LINE);

    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        fields.clear();
        for token in line.split_whitespace() {
            let value = parse_field(token).ok_or_else(|| IngestError::MalformedLine {
                line: line_no,
                reason: format!("unparseable number {token:?}"),
            })?;
            fields.push(value);
        }
        if fields.len() != FIELDS_PER_LINE {
            return Err(IngestError::MalformedLine {
                line: line_no,
                reason: format!("expected {FIELDS_PER_LINE} fields, found {}", fields.len()),
            });
        }

        let timestamp = fields[0];
        if !timestamp.is_finite() {
            return Err(IngestError::MalformedLine {
                line: line_no,
                reason: "missing timestamp".into(),
            });
        }
        if let Some(&prev) = rec.timestamps.last() {
            if timestamp <= prev {
                return Err(IngestError::NonMonotonicTimestamp { line: line_no, timestamp });
            }
        }
        let code = activity_code(fields[1]).ok_or_else(|| IngestError::MalformedLine {
            line: line_no,
            reason: format!("activity id {} is not an integer code", fields[1]),
        })?;
        if !KNOWN_ACTIVITY_CODES.contains(&code) {
            return Err(IngestError::UnknownActivity { line: line_no, code });
        }

        rec.timestamps.push(timestamp);
        rec.activity_ids.push(code);
        for (column, &field) in rec.channels.iter_mut().zip(layout.iter()) {
            column.push(fields[field]);
        }
    }

    if rec.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    Ok(rec)
}

fn parse_field(token: &str) -> Option<f64> {
    if token.eq_ignore_ascii_case("nan") {
        return Some(f64::NAN);
    }
    token.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn activity_code(value: f64) -> Option<u16> {
    (value.fract() == 0.0 && (0.0..=f64::from(u16::MAX)).contains(&value)).then_some(value as u16)
}

/// Parses `subjectNNN.dat`, taking the subject id from the file name.
pub fn load_subject_file(path: &Path, range: AccelRange) -> Result<SubjectRecording, IngestError> {
    let subject_id = subject_id_from_path(path).ok_or_else(|| IngestError::MalformedLine {
        line: 0,
        reason: format!("cannot derive a subject id from {}", path.display()),
    })?;
    let file = std::fs::File::open(path)?;
    parse_subject_file(std::io::BufReader::new(file), subject_id, range)
}

pub fn subject_id_from_path(path: &Path) -> Option<u32> {
    let stem = path.file_stem()?.to_str()?;
    stem.strip_prefix("subject")?.parse().ok()
}

/// Lists the `subjectNNN.dat` files under a PAMAP2 `Protocol` directory, sorted by id.
pub fn discover_subject_files(data_root: &Path) -> Result<Vec<(u32, std::path::PathBuf)>, IngestError> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(data_root)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("dat") {
            continue;
        }
        if let Some(id) = subject_id_from_path(&path) {
            found.push((id, path));
        }
    }
    found.sort_by_key(|(id, _)| *id);
    Ok(found)
}

/// Raw activity code to class label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap(BTreeMap<u16, u8>);

impl LabelMap {
    pub fn new(pairs: impl IntoIterator<Item = (u16, u8)>) -> Self {
        LabelMap(pairs.into_iter().collect())
    }

    /// sitting=2, standing=3, walking=4, ascending stairs=12, descending stairs=13.
    pub fn five_activities() -> Self {
        LabelMap::new([(2, 0), (3, 1), (4, 2), (12, 3), (13, 4)])
    }

    pub fn class_of(&self, code: u16) -> Option<u8> {
        self.0.get(&code).copied()
    }

    pub fn classes(&self) -> std::collections::BTreeSet<u8> {
        self.0.values().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for LabelMap {
    fn default() -> Self {
        LabelMap::five_activities()
    }
}

pub const CLASS_NAMES: [&str; 5] =
    ["sitting", "standing", "walking", "ascending stairs", "descending stairs"];

/// A maximal run of samples with one mapped activity code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivitySegment {
    pub subject_id: u32,
    pub class_label: u8,
    pub sample_range: Range<usize>,
}

impl ActivitySegment {
    pub fn len(&self) -> usize {
        self.sample_range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_range.is_empty()
    }
}

pub fn extract_segments(rec: &SubjectRecording, label_map: &LabelMap) -> Vec<ActivitySegment> {
    let mut segments = Vec::new();
    let codes = &rec.activity_ids;
    let mut start = 0;
    while start < codes.len() {
        let code = codes[start];
        let mut end = start + 1;
        while end < codes.len() && codes[end] == code {
            end += 1;
        }
        if let Some(class_label) = label_map.class_of(code) {
            segments.push(ActivitySegment {
                subject_id: rec.subject_id,
                class_label,
                sample_range: start..end,
            });
        }
        start = end;
    }
    segments
}

/// Longest run of samples without a missing cell, after gap interpolation.
pub(crate) fn longest_clean_run(rec: &SubjectRecording, range: Range<usize>, max_gap: usize) -> usize {
    let cleaned: Vec<Vec<f64>> = rec
        .channels
        .iter()
        .map(|c| clean_missing(&c[range.clone()], max_gap))
        .collect();
    let mut best = 0;
    let mut run = 0;
    for i in 0..range.len() {
        if cleaned.iter().all(|c| !c[i].is_nan()) {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

/// Subjects with a window-able segment for every class in `label_map`, ascending.
pub fn eligible_subjects(
    recordings: &[SubjectRecording],
    label_map: &LabelMap,
    max_gap: usize,
) -> Result<Vec<u32>, IngestError> {
    let wanted = label_map.classes();
    let mut eligible: Vec<u32> = recordings
        .iter()
        .filter(|rec| {
            let covered: std::collections::BTreeSet<u8> = extract_segments(rec, label_map)
                .into_iter()
                .filter(|seg| {
                    seg.len() >= MIN_WINDOWABLE
                        && longest_clean_run(rec, seg.sample_range.clone(), max_gap) >= MIN_WINDOWABLE
                })
                .map(|seg| seg.class_label)
                .collect();
            covered == wanted
        })
        .map(|rec| rec.subject_id)
        .collect();
    eligible.sort_unstable();
    eligible.dedup();
    if eligible.len() < 2 {
        return Err(IngestError::InsufficientSubjects { found: eligible.len() });
    }
    Ok(eligible)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(ts: f64, code: u16, fill: impl Fn(usize) -> String) -> String {
        let mut f = vec![format!("{ts:.2}"), code.to_string(), "NaN".to_string()];
        for i in 3..FIELDS_PER_LINE {
            f.push(fill(i));
        }
        f.join(" ")
    }

    #[test]
    fn keeps_accel16_and_gyro_triples() {
        let text = line(0.0, 2, |i| format!("{i}"));
        let rec = parse_subject_file(text.as_bytes(), 101, AccelRange::G16).unwrap();
        assert_eq!(rec.len(), 1);
        let values: Vec<f64> = rec.channels.iter().map(|c| c[0]).collect();
        // 1-based fields: hand acc16 5-7, gyro 11-13; chest +17; ankle +34
        let expected: Vec<f64> = [4, 5, 6, 10, 11, 12, 21, 22, 23, 27, 28, 29, 38, 39, 40, 44, 45, 46]
            .iter()
            .map(|&f| f as f64)
            .collect();
        assert_eq!(values, expected);
    }

    #[test]
    fn six_g_switch() {
        let text = line(0.0, 2, |i| format!("{i}"));
        let rec = parse_subject_file(text.as_bytes(), 101, AccelRange::G6).unwrap();
        assert_eq!(rec.channel(ChannelId::new(Location::Hand, SensorKind::Accel, Axis::X))[0], 7.0);
        assert_eq!(rec.channel(ChannelId::new(Location::Ankle, SensorKind::Accel, Axis::Z))[0], 43.0);
        assert_eq!(rec.channel(ChannelId::new(Location::Ankle, SensorKind::Gyro, Axis::Z))[0], 46.0);
    }

    #[test]
    fn heart_rate_nan_is_fine_and_missing_cells_kept() {
        let text = line(0.0, 3, |i| if i == 5 { "NaN".into() } else { "1.5".into() });
        let rec = parse_subject_file(text.as_bytes(), 102, AccelRange::G16).unwrap();
        assert!(rec.is_missing(ChannelId::new(Location::Hand, SensorKind::Accel, Axis::Y), 0));
        assert!(!rec.is_missing(ChannelId::new(Location::Hand, SensorKind::Accel, Axis::X), 0));
    }

    #[test]
    fn arity_and_number_errors_carry_line() {
        let good = line(0.0, 2, |_| "0".into());
        let short = good.rsplit_once(' ').unwrap().0.to_string();
        let text = format!("{good}\n{short}\n");
        match parse_subject_file(text.as_bytes(), 101, AccelRange::G16) {
            Err(IngestError::MalformedLine { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let bad = line(0.0, 2, |i| if i == 9 { "x1".into() } else { "0".into() });
        assert!(matches!(
            parse_subject_file(bad.as_bytes(), 101, AccelRange::G16),
            Err(IngestError::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn empty_and_invalid_files() {
        assert!(matches!(
            parse_subject_file("".as_bytes(), 101, AccelRange::G16),
            Err(IngestError::EmptyFile)
        ));
        let text = format!("{}\n{}", line(1.0, 2, |_| "0".into()), line(0.5, 2, |_| "0".into()));
        assert!(matches!(
            parse_subject_file(text.as_bytes(), 101, AccelRange::G16),
            Err(IngestError::NonMonotonicTimestamp { line: 2, .. })
        ));
        let text = line(0.0, 8, |_| "0".into());
        assert!(matches!(
            parse_subject_file(text.as_bytes(), 101, AccelRange::G16),
            Err(IngestError::UnknownActivity { code: 8, .. })
        ));
    }

    fn with_codes(codes: &[u16]) -> SubjectRecording {
        SubjectRecording {
            subject_id: 105,
            timestamps: (0..codes.len()).map(|i| i as f64 * 0.01).collect(),
            activity_ids: codes.to_vec(),
            channels: vec![vec![0.0; codes.len()]; NUM_CHANNELS],
        }
    }

    #[test]
    fn run_length_segments() {
        let rec = with_codes(&[0, 0, 2, 2, 2, 0, 3, 3]);
        let segs = extract_segments(&rec, &LabelMap::new([(2, 0), (3, 1)]));
        assert_eq!(segs.len(), 2);
        assert_eq!((segs[0].sample_range.clone(), segs[0].class_label), (2..5, 0));
        assert_eq!((segs[1].sample_range.clone(), segs[1].class_label), (6..8, 1));

        assert!(extract_segments(&with_codes(&[0, 1, 5]), &LabelMap::default()).is_empty());
        let whole = extract_segments(&with_codes(&[4; 10]), &LabelMap::default());
        assert_eq!(whole.len(), 1);
        assert_eq!(whole[0].sample_range, 0..10);
    }

    #[test]
    fn eligibility_requires_every_class() {
        let mut codes = Vec::new();
        for code in [2u16, 3, 4, 12, 13] {
            codes.extend(std::iter::repeat_n(code, 120));
            codes.extend(std::iter::repeat_n(0, 5));
        }
        let full = with_codes(&codes);
        let mut second = full.clone();
        second.subject_id = 103;
        let mut no_stairs = with_codes(&codes[..3 * 125]);
        no_stairs.subject_id = 109;

        let map = LabelMap::default();
        let ids = eligible_subjects(&[full.clone(), no_stairs.clone(), second], &map, 20).unwrap();
        assert_eq!(ids, vec![103, 105]);
        assert!(matches!(
            eligible_subjects(&[], &map, 20),
            Err(IngestError::InsufficientSubjects { found: 0 })
        ));
        assert!(matches!(
            eligible_subjects(&[full, no_stairs], &map, 20),
            Err(IngestError::InsufficientSubjects { found: 1 })
        ));
    }

    #[test]
    fn segment_too_dirty_is_not_windowable() {
        let mut codes = Vec::new();
        for code in [2u16, 3, 4, 12, 13] {
            codes.extend(std::iter::repeat_n(code, 150));
        }
        let mut rec = with_codes(&codes);
        // a 30-sample dropout in the middle of the walking run leaves < 100 clean samples
        for i in 360..390 {
            rec.channels[0][i] = f64::NAN;
        }
        let mut other = with_codes(&codes);
        other.subject_id = 101;
        let ids = eligible_subjects(&[rec, other], &LabelMap::default(), 20);
        assert!(matches!(ids, Err(IngestError::InsufficientSubjects { found: 1 })));
    }

    #[test]
    fn subject_ids_from_file_names() {
        assert_eq!(subject_id_from_path(Path::new("/x/subject107.dat")), Some(107));
        assert_eq!(subject_id_from_path(Path::new("/x/readme.dat")), None);
    }
}
