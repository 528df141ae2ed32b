//! Binary columnar cache for parsed recordings.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "HARCACHE"
//! version      u32
//! subject id   u32
//! channels     u32      always 18
//! samples      u64      n
//! timestamps   n × f64
//! activity     n × u16
//! channel 0..18, each n × f64 (NaN marks a missing cell)
//! ```

use std::io::{Read, Write};

use super::{IngestError, SubjectRecording, NUM_CHANNELS};

pub const CACHE_MAGIC: &[u8; 8] = b"HARCACHE";
pub const CACHE_VERSION: u32 = 1;

pub fn write_cache<W: Write>(rec: &SubjectRecording, mut out: W) -> Result<(), IngestError> {
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&CACHE_VERSION.to_le_bytes())?;
    out.write_all(&rec.subject_id.to_le_bytes())?;
    out.write_all(&(NUM_CHANNELS as u32).to_le_bytes())?;
    out.write_all(&(rec.len() as u64).to_le_bytes())?;

    let mut buf = Vec::with_capacity(rec.len() * 8);
    for t in &rec.timestamps {
        buf.extend_from_slice(&t.to_le_bytes());
    }
    out.write_all(&buf)?;
    buf.clear();
    for code in &rec.activity_ids {
        buf.extend_from_slice(&code.to_le_bytes());
    }
    out.write_all(&buf)?;
    for column in &rec.channels {
        buf.clear();
        for v in column {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_cache<R: Read>(mut input: R) -> Result<SubjectRecording, IngestError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(IngestError::Cache("bad magic bytes".into()));
    }
    let version = read_u32(&mut input)?;
    if version != CACHE_VERSION {
        return Err(IngestError::Cache(format!("unsupported version {version}")));
    }
    let subject_id = read_u32(&mut input)?;
    let channels = read_u32(&mut input)? as usize;
    if channels != NUM_CHANNELS {
        return Err(IngestError::Cache(format!("expected {NUM_CHANNELS} channels, found {channels}")));
    }
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    let n = usize::try_from(u64::from_le_bytes(word))
        .map_err(|_| IngestError::Cache("sample count overflows".into()))?;

    let timestamps = read_f64s(&mut input, n)?;
    let mut raw = vec![0u8; n * 2];
    input.read_exact(&mut raw)?;
    let activity_ids = raw.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect();
    let channels = (0..NUM_CHANNELS)
        .map(|_| read_f64s(&mut input, n))
        .collect::<Result<Vec<_>, _>>()?;

    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(IngestError::Cache("trailing bytes after payload".into()));
    }
    Ok(SubjectRecording { subject_id, timestamps, activity_ids, channels })
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32, IngestError> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>, IngestError> {
    let mut raw = vec![0u8; n * 8];
    input.read_exact(&mut raw)?;
    Ok(raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_recording() -> impl Strategy<Value = SubjectRecording> {
        (1usize..40).prop_flat_map(|n| {
            (
                101u32..110,
                proptest::collection::vec(any::<u16>(), n),
                proptest::collection::vec(proptest::collection::vec(any::<f64>(), n), NUM_CHANNELS),
            )
                .prop_map(move |(subject_id, activity_ids, channels)| SubjectRecording {
                    subject_id,
                    timestamps: (0..n).map(|i| i as f64 * 0.01).collect(),
                    activity_ids,
                    channels,
                })
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(rec in arb_recording()) {
            let mut bytes = Vec::new();
            write_cache(&rec, &mut bytes).unwrap();
            let back = read_cache(bytes.as_slice()).unwrap();
            prop_assert!(rec.bit_identical(&back));
        }
    }

    #[test]
    fn rejects_corruption() {
        let rec = SubjectRecording {
            subject_id: 101,
            timestamps: vec![0.0, 0.01],
            activity_ids: vec![2, 2],
            channels: vec![vec![1.0, f64::NAN]; NUM_CHANNELS],
        };
        let mut bytes = Vec::new();
        write_cache(&rec, &mut bytes).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_cache(bad.as_slice()), Err(IngestError::Cache(_))));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(read_cache(longer.as_slice()), Err(IngestError::Cache(_))));
        assert!(matches!(read_cache(&bytes[..bytes.len() - 1]), Err(IngestError::Io(_))));
    }
}
