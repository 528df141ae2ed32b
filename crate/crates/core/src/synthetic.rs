//! Synthetic recordings in the PAMAP2 protocol text format.
//!
//! Used by the test suites and for smoke runs without the real dataset.
//! Each activity has its own per-channel offset, oscillation amplitude and
//! cadence; subjects differ by a small offset and noise realisation. A few
//! short dropouts are written as `NaN` so gap interpolation is exercised.

use std::f64::consts::TAU;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ingest::{field_layout, AccelRange, FIELDS_PER_LINE, NUM_CHANNELS};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub subjects: Vec<u32>,
    /// Seconds recorded per activity and subject.
    pub seconds_per_activity: f64,
    /// Subjects whose file lacks the two stair activities.
    pub without_stairs: Vec<u32>,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            subjects: (101..=109).collect(),
            seconds_per_activity: 12.0,
            without_stairs: vec![109],
            noise: 0.3,
            seed: 7,
        }
    }
}

const ACTIVITY_CODES: [u16; 5] = [2, 3, 4, 12, 13];
const CADENCE_HZ: [f64; 5] = [0.0, 0.0, 1.8, 1.4, 2.1];
const SAMPLE_RATE: f64 = 100.0;

struct ActivityProfile {
    offset: [f64; NUM_CHANNELS],
    amplitude: [f64; NUM_CHANNELS],
    phase: [f64; NUM_CHANNELS],
}

fn profiles() -> Vec<ActivityProfile> {
    // fixed generator: the class signatures are the same for every subject
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..5)
        .map(|class| {
            let moving = CADENCE_HZ[class] > 0.0;
            let mut p = ActivityProfile { offset: [0.0; NUM_CHANNELS], amplitude: [0.0; NUM_CHANNELS], phase: [0.0; NUM_CHANNELS] };
            for c in 0..NUM_CHANNELS {
                let is_accel = (c / 3) % 2 == 0;
                p.offset[c] = if is_accel { rng.gen_range(-9.8..9.8) } else { rng.gen_range(-0.2..0.2) };
                p.amplitude[c] = if moving { rng.gen_range(0.5..3.0) } else { rng.gen_range(0.0..0.1) };
                p.phase[c] = rng.gen_range(0.0..TAU);
            }
            p
        })
        .collect()
}

/// Writes one subject's protocol file.
pub fn write_subject<W: Write>(spec: &SyntheticSpec, subject_id: u32, mut out: W) -> std::io::Result<()> {
    let profiles = profiles();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ u64::from(subject_id).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let noise = Normal::new(0.0, spec.noise.max(1e-12)).expect("positive std");
    let subject_shift: Vec<f64> = (0..NUM_CHANNELS).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let layout = field_layout(AccelRange::G16);

    let mut plan: Vec<(u16, usize)> = vec![(0, 150)];
    let per_activity = (spec.seconds_per_activity * SAMPLE_RATE).round() as usize;
    for (class, &code) in ACTIVITY_CODES.iter().enumerate() {
        if class >= 3 && spec.without_stairs.contains(&subject_id) {
            continue;
        }
        plan.push((code, per_activity));
        plan.push((0, 120));
    }
    if spec.without_stairs.contains(&subject_id) {
        plan.push((24, per_activity));
    }

    let mut sample = 0usize;
    let mut fields = vec![0.0f64; FIELDS_PER_LINE];
    for (code, len) in plan {
        let class = ACTIVITY_CODES.iter().position(|&c| c == code);
        // one short dropout per activity segment
        let dropout = class.map(|_| (rng.gen_range(0..len.max(1)), rng.gen_range(0..NUM_CHANNELS)));
        for i in 0..len {
            let t = sample as f64 / SAMPLE_RATE;
            for f in fields.iter_mut() {
                *f = rng.gen_range(-1.0..1.0);
            }
            fields[0] = t;
            fields[1] = f64::from(code);
            fields[2] = if sample.is_multiple_of(11) { 80.0 + rng.gen_range(0.0..20.0) } else { f64::NAN };
            for c in 0..NUM_CHANNELS {
                let value = match class {
                    Some(k) => {
                        let p = &profiles[k];
                        p.offset[c]
                            + subject_shift[c]
                            + p.amplitude[c] * (TAU * CADENCE_HZ[k] * t + p.phase[c]).sin()
                            + noise.sample(&mut rng)
                    }
                    None => noise.sample(&mut rng) * 3.0,
                };
                fields[layout[c]] = value;
            }
            if let Some((at, ch)) = dropout {
                if i >= at && i < at + 4 {
                    fields[layout[ch]] = f64::NAN;
                }
            }
            let line: Vec<String> = fields
                .iter()
                .enumerate()
                .map(|(j, v)| match j {
                    _ if v.is_nan() => "NaN".to_string(),
                    0 => format!("{v:.2}"),
                    1 => format!("{v:.0}"),
                    _ => format!("{v:.6}"),
                })
                .collect();
            writeln!(out, "{}", line.join(" "))?;
            sample += 1;
        }
    }
    out.flush()
}

/// Writes `subjectNNN.dat` for every subject into `dir`.
pub fn write_dataset(spec: &SyntheticSpec, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    spec.subjects
        .iter()
        .map(|&id| {
            let path = dir.join(format!("subject{id}.dat"));
            let file = std::fs::File::create(&path)?;
            write_subject(spec, id, std::io::BufWriter::new(file))?;
            Ok(path)
        })
        .collect()
}
