//! Forward and backward passes of the two-stage convolutional classifier.
//!
//! ```text
//! (100,N) conv7 → (94,16) relu pool → (47,16) dropout
//!         conv11 → (37,32) relu pool → (18,32) dropout → flatten 576
//!         fc → 32 relu dropout → fc → 24 relu dropout → fc → C softmax
//! ```

use rand::Rng;
use rayon::prelude::*;

use super::layers::{
    apply_mask, conv1d, conv1d_backward, dense, dense_backward, maxpool, maxpool_backward,
    relu_backward, relu_inplace, softmax,
};
use super::params::*;
use super::NnError;
use crate::pipeline::{WindowSet, WINDOW_LEN};

/// Probability floor inside the log of the cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

/// Samples per gradient accumulation chunk. Chunks are reduced in index
/// order, so results do not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything one sample's backward pass needs.
#[derive(Debug, Clone)]
pub struct SampleCache {
    input: Vec<f64>,
    conv1_pre: Vec<f64>,
    pool1_arg: Vec<usize>,
    pool1_out: Vec<f64>,
    mask1: Option<Vec<f64>>,
    conv2_pre: Vec<f64>,
    pool2_arg: Vec<usize>,
    flat: Vec<f64>,
    mask2: Option<Vec<f64>>,
    fc1_pre: Vec<f64>,
    fc1_out: Vec<f64>,
    mask3: Option<Vec<f64>>,
    fc2_pre: Vec<f64>,
    fc2_out: Vec<f64>,
    mask4: Option<Vec<f64>>,
    probs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub samples: Vec<SampleCache>,
}

impl ForwardCache {
    /// ReLU on/off state and pooling winners of the whole batch. Two inputs
    /// with equal patterns lie in the same linear region of the network.
    pub fn activation_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for s in &self.samples {
            for pre in [&s.conv1_pre, &s.conv2_pre, &s.fc1_pre, &s.fc2_pre] {
                out.extend(pre.iter().map(|&v| usize::from(v > 0.0)));
            }
            out.extend_from_slice(&s.pool1_arg);
            out.extend_from_slice(&s.pool2_arg);
        }
        out
    }
}

struct Masks([Option<Vec<f64>>; 4]);

fn draw_masks<R: Rng>(rate: f64, rng: &mut R) -> Masks {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    let mut mask = |n: usize| -> Option<Vec<f64>> {
        Some((0..n).map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 }).collect())
    };
    Masks([
        mask(POOL1_LEN * CONV1_FILTERS),
        mask(FLAT_LEN),
        mask(FC1_UNITS),
        mask(FC2_UNITS),
    ])
}

fn forward_sample(p: &NetworkParams, input: &[f64], masks: Masks) -> SampleCache {
    let [mask1, mask2, mask3, mask4] = masks.0;

    let conv1_pre = conv1d(input, p.modality, &p.conv1_w, &p.conv1_b, CONV1_KERNEL).expect("checked shape");
    let mut act = conv1_pre.clone();
    relu_inplace(&mut act);
    let (mut pool1_out, pool1_arg) = maxpool(&act, CONV1_FILTERS);
    apply_mask(&mut pool1_out, mask1.as_deref());

    let conv2_pre = conv1d(&pool1_out, CONV1_FILTERS, &p.conv2_w, &p.conv2_b, CONV2_KERNEL).expect("fixed shape");
    let mut act = conv2_pre.clone();
    relu_inplace(&mut act);
    let (mut flat, pool2_arg) = maxpool(&act, CONV2_FILTERS);
    apply_mask(&mut flat, mask2.as_deref());

    let fc1_pre = dense(&flat, &p.fc1_w, &p.fc1_b);
    let mut fc1_out = fc1_pre.clone();
    relu_inplace(&mut fc1_out);
    apply_mask(&mut fc1_out, mask3.as_deref());

    let fc2_pre = dense(&fc1_out, &p.fc2_w, &p.fc2_b);
    let mut fc2_out = fc2_pre.clone();
    relu_inplace(&mut fc2_out);
    apply_mask(&mut fc2_out, mask4.as_deref());

    let logits = dense(&fc2_out, &p.out_w, &p.out_b);
    let probs = softmax(&logits);

    SampleCache {
        input: input.to_vec(),
        conv1_pre,
        pool1_arg,
        pool1_out,
        mask1,
        conv2_pre,
        pool2_arg,
        flat,
        mask2,
        fc1_pre,
        fc1_out,
        mask3,
        fc2_pre,
        fc2_out,
        mask4,
        probs,
    }
}

/// Accumulates one sample's gradient given `d loss / d logits`.
fn backward_sample(p: &NetworkParams, s: &SampleCache, dlogits: &[f64], g: &mut NetworkParams) {
    let mut d = dense_backward(&s.fc2_out, &p.out_w, dlogits, &mut g.out_w, &mut g.out_b);
    apply_mask(&mut d, s.mask4.as_deref());
    relu_backward(&mut d, &s.fc2_pre);

    let mut d = dense_backward(&s.fc1_out, &p.fc2_w, &d, &mut g.fc2_w, &mut g.fc2_b);
    apply_mask(&mut d, s.mask3.as_deref());
    relu_backward(&mut d, &s.fc1_pre);

    let mut d = dense_backward(&s.flat, &p.fc1_w, &d, &mut g.fc1_w, &mut g.fc1_b);
    apply_mask(&mut d, s.mask2.as_deref());
    let mut d = maxpool_backward(&d, &s.pool2_arg, CONV2_LEN * CONV2_FILTERS);
    relu_backward(&mut d, &s.conv2_pre);

    let mut d = conv1d_backward(
        &s.pool1_out,
        CONV1_FILTERS,
        &p.conv2_w,
        CONV2_KERNEL,
        &d,
        &mut g.conv2_w,
        &mut g.conv2_b,
        true,
    )
    .expect("input gradient requested");
    apply_mask(&mut d, s.mask1.as_deref());
    let mut d = maxpool_backward(&d, &s.pool1_arg, CONV1_LEN * CONV1_FILTERS);
    relu_backward(&mut d, &s.conv1_pre);

    conv1d_backward(&s.input, p.modality, &p.conv1_w, CONV1_KERNEL, &d, &mut g.conv1_w, &mut g.conv1_b, false);
}

fn check_batch(p: &NetworkParams, batch: &[f64]) -> Result<usize, NnError> {
    let width = WINDOW_LEN * p.modality;
    if batch.is_empty() || !batch.len().is_multiple_of(width) {
        return Err(NnError::ShapeMismatch(format!(
            "batch of {} values is not a whole number of {WINDOW_LEN}x{} windows",
            batch.len(),
            p.modality
        )));
    }
    if batch.iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFiniteInput);
    }
    Ok(batch.len() / width)
}

/// Runs a batch of `B` windows laid out `[window][time][channel]` and returns
/// the `B × C` class probabilities with the cache for [`loss_and_grad`].
///
/// In `Train` mode inverted dropout at `dropout_rate` is applied after both
/// pooling stages and both hidden dense layers; masks are drawn from `rng`
/// in sample order. `Eval` mode never touches `rng`.
pub fn forward<R: Rng>(
    params: &NetworkParams,
    batch: &[f64],
    mode: Mode,
    dropout_rate: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, ForwardCache), NnError> {
    let b = check_batch(params, batch)?;
    let width = WINDOW_LEN * params.modality;
    let masks: Vec<Masks> = (0..b)
        .map(|_| match mode {
            Mode::Train if dropout_rate > 0.0 => draw_masks(dropout_rate, rng),
            _ => Masks([None, None, None, None]),
        })
        .collect();
    let samples: Vec<SampleCache> = masks
        .into_par_iter()
        .enumerate()
        .map(|(i, m)| forward_sample(params, &batch[i * width..(i + 1) * width], m))
        .collect();
    let probs = samples.iter().flat_map(|s| s.probs.iter().copied()).collect();
    Ok((probs, ForwardCache { samples }))
}

/// Mean cross-entropy of probabilities against labels, with the log argument
/// floored at [`PROB_FLOOR`].
pub fn cross_entropy(probs: &[f64], labels: &[u8], classes: usize) -> f64 {
    let total: f64 = probs
        .chunks_exact(classes)
        .zip(labels)
        .map(|(row, &y)| -row[y as usize].max(PROB_FLOOR).ln())
        .sum();
    total / labels.len() as f64
}

/// Loss of the cached batch and the gradient of every parameter.
pub fn loss_and_grad(
    params: &NetworkParams,
    cache: &ForwardCache,
    labels: &[u8],
) -> Result<(f64, NetworkParams), NnError> {
    let b = cache.samples.len();
    if labels.len() != b {
        return Err(NnError::ShapeMismatch(format!("{} labels for a batch of {b}", labels.len())));
    }
    if let Some(&y) = labels.iter().find(|&&y| y as usize >= params.classes) {
        return Err(NnError::ShapeMismatch(format!("label {y} out of range for {} classes", params.classes)));
    }
    let probs: Vec<f64> = cache.samples.iter().flat_map(|s| s.probs.iter().copied()).collect();
    let loss = cross_entropy(&probs, labels, params.classes);

    let inv_b = 1.0 / b as f64;
    let partials: Vec<NetworkParams> = cache
        .samples
        .par_chunks(GRAD_CHUNK)
        .zip(labels.par_chunks(GRAD_CHUNK))
        .map(|(samples, ys)| {
            let mut g = params.zeros_like();
            for (s, &y) in samples.iter().zip(ys) {
                let dlogits: Vec<f64> = s
                    .probs
                    .iter()
                    .enumerate()
                    .map(|(c, &pc)| (pc - f64::from(u8::from(c == y as usize))) * inv_b)
                    .collect();
                backward_sample(params, s, &dlogits, &mut g);
            }
            g
        })
        .collect();
    let mut grads = params.zeros_like();
    for g in &partials {
        grads.add_assign(g);
    }
    Ok((loss, grads))
}

/// Eval-mode class probabilities for every window of a set.
pub fn predict_proba(params: &NetworkParams, windows: &WindowSet) -> Result<Vec<f64>, NnError> {
    if windows.modality != params.modality {
        return Err(NnError::ShapeMismatch(format!(
            "windows have {} channels, network expects {}",
            windows.modality, params.modality
        )));
    }
    if windows.is_empty() {
        return Ok(Vec::new());
    }
    check_batch(params, &windows.data)?;
    let width = windows.window_size();
    let rows: Vec<Vec<f64>> = (0..windows.len())
        .into_par_iter()
        .map(|i| forward_sample(params, &windows.data[i * width..(i + 1) * width], Masks([None, None, None, None])).probs)
        .collect();
    Ok(rows.concat())
}

/// Index of the largest probability; ties go to the lowest class.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn predict(params: &NetworkParams, windows: &WindowSet) -> Result<Vec<u8>, NnError> {
    let probs = predict_proba(params, windows)?;
    Ok(probs.chunks_exact(params.classes).map(|r| argmax(r) as u8).collect())
}

/// Eval-mode mean cross-entropy and accuracy over a window set.
pub fn evaluate(params: &NetworkParams, windows: &WindowSet) -> Result<(f64, f64), NnError> {
    let probs = predict_proba(params, windows)?;
    if windows.is_empty() {
        return Err(NnError::ShapeMismatch("cannot evaluate an empty window set".into()));
    }
    let loss = cross_entropy(&probs, &windows.labels, params.classes);
    let correct = probs
        .chunks_exact(params.classes)
        .zip(&windows.labels)
        .filter(|(row, &y)| argmax(row) == y as usize)
        .count();
    Ok((loss, correct as f64 / windows.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_batch(b: usize, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..b * WINDOW_LEN * n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn zero_network_is_uniform() {
        let p = NetworkParams::zeros(12, 5);
        let batch = normal_batch(3, 12, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (probs, cache) = forward(&p, &batch, Mode::Eval, 0.3, &mut rng).unwrap();
        assert!(probs.iter().all(|&v| (v - 0.2).abs() < 1e-15));
        let (loss, _) = loss_and_grad(&p, &cache, &[0, 3, 4]).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn shape_trace_for_twelve_channels() {
        let p = init_network(12, 5, 2).unwrap();
        let batch = normal_batch(2, 12, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (probs, cache) = forward(&p, &batch, Mode::Train, 0.3, &mut rng).unwrap();
        assert_eq!(probs.len(), 2 * 5);
        let s = &cache.samples[0];
        assert_eq!(s.conv1_pre.len(), 94 * 16);
        assert_eq!(s.pool1_out.len(), 47 * 16);
        assert_eq!(s.conv2_pre.len(), 37 * 32);
        assert_eq!(s.flat.len(), 576);
        assert_eq!(s.fc1_pre.len(), 32);
        assert_eq!(s.fc2_pre.len(), 24);
        for row in probs.chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn eval_mode_is_deterministic_and_train_mode_is_not() {
        let p = init_network(6, 5, 9).unwrap();
        let batch = normal_batch(4, 6, 5);
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let (a, _) = forward(&p, &batch, Mode::Eval, 0.3, &mut r1).unwrap();
        let (b, _) = forward(&p, &batch, Mode::Eval, 0.3, &mut r2).unwrap();
        assert_eq!(a, b);
        let (c, _) = forward(&p, &batch, Mode::Train, 0.3, &mut r1).unwrap();
        let (d, _) = forward(&p, &batch, Mode::Train, 0.3, &mut r2).unwrap();
        assert_ne!(c, d);
    }

    #[test]
    fn input_errors() {
        let p = init_network(6, 5, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(forward(&p, &[0.0; 599], Mode::Eval, 0.0, &mut rng), Err(NnError::ShapeMismatch(_))));
        let mut batch = vec![0.0; 600];
        batch[17] = f64::NAN;
        assert!(matches!(forward(&p, &batch, Mode::Eval, 0.0, &mut rng), Err(NnError::NonFiniteInput)));
        let (_, cache) = forward(&p, &vec![0.0; 600], Mode::Eval, 0.0, &mut rng).unwrap();
        assert!(loss_and_grad(&p, &cache, &[0, 1]).is_err());
        assert!(loss_and_grad(&p, &cache, &[5]).is_err());
    }

    #[test]
    fn loss_edge_values() {
        assert!((cross_entropy(&[0.2; 5], &[2], 5) - 1.6094379124341003).abs() < 1e-12);
        assert_eq!(cross_entropy(&[0.0, 1.0, 0.0, 0.0, 0.0], &[1], 5), 0.0);
        assert!((cross_entropy(&[1.0, 0.0, 0.0, 0.0, 0.0], &[1], 5) + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn argmax_tie_rule() {
        assert_eq!(argmax(&[0.1, 0.6, 0.1, 0.1, 0.1]), 1);
        assert_eq!(argmax(&[0.2; 5]), 0);
        let p = NetworkParams::zeros(6, 5);
        let mut set = WindowSet::empty(6);
        for i in 0..3 {
            set.push(&normal_batch(1, 6, i), 3, crate::pipeline::WindowOrigin { subject_id: 101, segment_index: 0, start: 0 });
        }
        assert_eq!(predict(&p, &set).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let draws = 100_000usize;
        let mut sum = 0.0;
        let mut n = 0usize;
        while n < draws {
            let Masks(m) = draw_masks(0.3, &mut rng);
            for v in m[2].as_ref().unwrap() {
                sum += 1.7 * v;
                n += 1;
            }
        }
        let mean = sum / n as f64;
        assert!((mean - 1.7).abs() / 1.7 < 0.01, "mean {mean}");
    }

    #[test]
    fn gradient_accumulation_is_thread_count_independent() {
        let p = init_network(6, 5, 3).unwrap();
        let batch = normal_batch(20, 6, 8);
        let labels: Vec<u8> = (0..20).map(|i| (i % 5) as u8).collect();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(5);
                let (_, cache) = forward(&p, &batch, Mode::Train, 0.3, &mut rng).unwrap();
                loss_and_grad(&p, &cache, &labels).unwrap()
            })
        };
        let (l1, g1) = run(1);
        let (l4, g4) = run(4);
        assert_eq!(l1.to_bits(), l4.to_bits());
        assert_eq!(g1, g4);
    }
}
