use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NnError;
use crate::pipeline::WINDOW_LEN;

pub const NUM_CLASSES: usize = 5;
pub const CONV1_FILTERS: usize = 16;
pub const CONV1_KERNEL: usize = 7;
pub const CONV2_FILTERS: usize = 32;
pub const CONV2_KERNEL: usize = 11;
pub const FC1_UNITS: usize = 32;
pub const FC2_UNITS: usize = 24;

/// Modalities the catalog produces.
pub const SUPPORTED_MODALITIES: [usize; 4] = [6, 9, 12, 18];

/// Sequence lengths through the convolutional stack for a 100-sample window.
pub const CONV1_LEN: usize = WINDOW_LEN - CONV1_KERNEL + 1; // 94
pub const POOL1_LEN: usize = CONV1_LEN / 2; // 47
pub const CONV2_LEN: usize = POOL1_LEN - CONV2_KERNEL + 1; // 37
pub const POOL2_LEN: usize = CONV2_LEN / 2; // 18
pub const FLAT_LEN: usize = POOL2_LEN * CONV2_FILTERS; // 576

/// Closed-form trainable parameter count.
pub fn param_count(modality: usize, classes: usize) -> usize {
    CONV1_FILTERS * (CONV1_KERNEL * modality + 1)
        + CONV2_FILTERS * (CONV1_FILTERS * CONV2_KERNEL + 1)
        + (FLAT_LEN * FC1_UNITS + FC1_UNITS)
        + (FC1_UNITS * FC2_UNITS + FC2_UNITS)
        + (FC2_UNITS * classes + classes)
}

pub const TENSOR_NAMES: [&str; 10] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "fc1.weight",
    "fc1.bias",
    "fc2.weight",
    "fc2.bias",
    "out.weight",
    "out.bias",
];

/// All trainable arrays. Also used, with the same shapes, for gradients and
/// Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub modality: usize,
    pub classes: usize,
    /// `16 × N × 7`
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    /// `32 × 16 × 11`
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    /// `32 × 576`
    pub fc1_w: Vec<f64>,
    pub fc1_b: Vec<f64>,
    /// `24 × 32`
    pub fc2_w: Vec<f64>,
    pub fc2_b: Vec<f64>,
    /// `C × 24`
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(modality: usize, classes: usize) -> Self {
        NetworkParams {
            modality,
            classes,
            conv1_w: vec![0.0; CONV1_FILTERS * modality * CONV1_KERNEL],
            conv1_b: vec![0.0; CONV1_FILTERS],
            conv2_w: vec![0.0; CONV2_FILTERS * CONV1_FILTERS * CONV2_KERNEL],
            conv2_b: vec![0.0; CONV2_FILTERS],
            fc1_w: vec![0.0; FC1_UNITS * FLAT_LEN],
            fc1_b: vec![0.0; FC1_UNITS],
            fc2_w: vec![0.0; FC2_UNITS * FC1_UNITS],
            fc2_b: vec![0.0; FC2_UNITS],
            out_w: vec![0.0; classes * FC2_UNITS],
            out_b: vec![0.0; classes],
        }
    }

    pub fn zeros_like(&self) -> Self {
        NetworkParams::zeros(self.modality, self.classes)
    }

    pub fn tensors(&self) -> [&[f64]; 10] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.fc1_w,
            &self.fc1_b,
            &self.fc2_w,
            &self.fc2_b,
            &self.out_w,
            &self.out_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 10] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.fc1_w,
            &mut self.fc1_b,
            &mut self.fc2_w,
            &mut self.fc2_b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += other`, element by element.
    pub fn add_assign(&mut self, other: &NetworkParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Writes a checkpoint: magic, version, N, C, then every tensor in
    /// declaration order as little-endian f64.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<(), NnError> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(self.modality as u32).to_le_bytes())?;
        out.write_all(&(self.classes as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.len() * 8);
        for t in self.tensors() {
            for v in t {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.write_all(&buf)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self, NnError> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(NnError::Checkpoint("bad magic bytes".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        input.read_exact(&mut word)?;
        let modality = u32::from_le_bytes(word) as usize;
        input.read_exact(&mut word)?;
        let classes = u32::from_le_bytes(word) as usize;
        if modality == 0 || modality > 64 || !(2..=64).contains(&classes) {
            return Err(NnError::Checkpoint(format!("implausible header N={modality} C={classes}")));
        }
        let mut params = NetworkParams::zeros(modality, classes);
        let mut raw = vec![0u8; params.len() * 8];
        input.read_exact(&mut raw)?;
        let mut values = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")));
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = values.next().expect("sized from header");
            }
        }
        let mut extra = [0u8; 1];
        if input.read(&mut extra)? != 0 {
            return Err(NnError::Checkpoint("trailing bytes".into()));
        }
        Ok(params)
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HARMODEL";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Output-layer bound relative to its He bound, keeping initial logits near zero.
pub const OUTPUT_INIT_SCALE: f64 = 0.01;

/// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases. The output
/// layer's bound is shrunk by [`OUTPUT_INIT_SCALE`] so the untrained softmax
/// is close to uniform.
pub fn init_network(modality: usize, classes: usize, seed: u64) -> Result<NetworkParams, NnError> {
    if !SUPPORTED_MODALITIES.contains(&modality) {
        return Err(NnError::UnsupportedModality(modality));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(init_with_rng(modality, classes, OUTPUT_INIT_SCALE, &mut rng))
}

pub(crate) fn init_with_rng<R: Rng>(
    modality: usize,
    classes: usize,
    output_scale: f64,
    rng: &mut R,
) -> NetworkParams {
    let mut p = NetworkParams::zeros(modality, classes);
    let fill = |w: &mut [f64], fan_in: usize, scale: f64, rng: &mut R| {
        let bound = (6.0 / fan_in as f64).sqrt() * scale;
        for v in w {
            *v = rng.gen_range(-bound..bound);
        }
    };
    fill(&mut p.conv1_w, modality * CONV1_KERNEL, 1.0, rng);
    fill(&mut p.conv2_w, CONV1_FILTERS * CONV2_KERNEL, 1.0, rng);
    fill(&mut p.fc1_w, FLAT_LEN, 1.0, rng);
    fill(&mut p.fc2_w, FC1_UNITS, 1.0, rng);
    fill(&mut p.out_w, FC2_UNITS, output_scale, rng);
    p
}
