//! Central finite-difference check of the analytic gradients.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::network::{cross_entropy, forward, loss_and_grad, Mode};
use super::params::{init_with_rng, NetworkParams, NUM_CLASSES, TENSOR_NAMES};
use super::NnError;
use crate::pipeline::WINDOW_LEN;

/// Denominator floor of [`relative_error`]. Below it both gradients are
/// treated as zero and the absolute error is what gets measured.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub modality: usize,
    pub batch: usize,
    /// Parameters sampled per layer (all of them when the layer is smaller).
    pub samples_per_layer: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { modality: 6, batch: 4, samples_per_layer: 200, step: 1e-5, seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub checked: usize,
    /// Coordinates whose ±step perturbation changed a ReLU state or a pooling
    /// winner; the loss is not differentiable across them.
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub layers: Vec<LayerCheck>,
    pub max_rel_error: f64,
}

const LAYERS: [(&str, [usize; 2]); 5] =
    [("conv1", [0, 1]), ("conv2", [2, 3]), ("fc1", [4, 5]), ("fc2", [6, 7]), ("out", [8, 9])];

fn get(p: &NetworkParams, tensor: usize, i: usize) -> f64 {
    p.tensors()[tensor][i]
}

fn set(p: &mut NetworkParams, tensor: usize, i: usize, v: f64) {
    p.tensors_mut()[tensor][i] = v;
}

/// Random network (He-uniform everywhere, small random biases), a standard
/// normal batch and uniform labels; dropout off.
pub fn gradient_check(cfg: &GradCheckConfig) -> Result<GradCheckReport, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init_with_rng(cfg.modality, NUM_CLASSES, 1.0, &mut rng);
    for t in [1, 3, 5, 7, 9] {
        for v in params.tensors_mut()[t].iter_mut() {
            *v = rng.gen_range(-0.1..0.1);
        }
    }
    let batch: Vec<f64> = (0..cfg.batch * WINDOW_LEN * cfg.modality).map(|_| StandardNormal.sample(&mut rng)).collect();
    let labels: Vec<u8> = (0..cfg.batch).map(|_| rng.gen_range(0..NUM_CLASSES as u8)).collect();

    // Eval mode never draws from this generator.
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let (_, cache) = forward(&params, &batch, Mode::Eval, 0.0, &mut unused)?;
    let base_pattern = cache.activation_pattern();
    let (_, grads) = loss_and_grad(&params, &cache, &labels)?;

    let mut probe = |p: &NetworkParams| -> Result<(f64, bool), NnError> {
        let (probs, cache) = forward(p, &batch, Mode::Eval, 0.0, &mut unused)?;
        Ok((cross_entropy(&probs, &labels, NUM_CLASSES), cache.activation_pattern() == base_pattern))
    };

    let mut layers = Vec::new();
    for (name, tensors) in LAYERS {
        let sizes: Vec<usize> = tensors.iter().map(|&t| params.tensors()[t].len()).collect();
        let total: usize = sizes.iter().sum();
        let order = index::sample(&mut rng, total, total).into_vec();
        let target = cfg.samples_per_layer.min(total);
        let mut check = LayerCheck { layer: name, checked: 0, skipped_kinks: 0, max_rel_error: 0.0 };
        for flat in order {
            if check.checked == target {
                break;
            }
            let (tensor, i) = if flat < sizes[0] { (tensors[0], flat) } else { (tensors[1], flat - sizes[0]) };
            let orig = get(&params, tensor, i);
            set(&mut params, tensor, i, orig + cfg.step);
            let (plus, same_plus) = probe(&params)?;
            set(&mut params, tensor, i, orig - cfg.step);
            let (minus, same_minus) = probe(&params)?;
            set(&mut params, tensor, i, orig);
            if !(same_plus && same_minus) {
                check.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let err = relative_error(get(&grads, tensor, i), numeric);
            check.max_rel_error = check.max_rel_error.max(err);
            check.checked += 1;
        }
        layers.push(check);
    }
    debug_assert_eq!(TENSOR_NAMES.len(), 2 * LAYERS.len());
    let max_rel_error = layers.iter().map(|l| l.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { seed: cfg.seed, layers, max_rel_error })
}
