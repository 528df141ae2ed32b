//! Per-sample layer kernels on row-major `[time][channel]` buffers.

use super::NnError;

/// Valid cross-correlation: `out[t,o] = b[o] + Σ_{c,k} x[t+k,c]·w[o,c,k]`.
///
/// `input` is `len × in_ch`, `weights` is `out_ch × in_ch × kernel`; the
/// result is `(len - kernel + 1) × out_ch`.
pub fn conv1d(
    input: &[f64],
    in_ch: usize,
    weights: &[f64],
    bias: &[f64],
    kernel: usize,
) -> Result<Vec<f64>, NnError> {
    let out_ch = bias.len();
    if in_ch == 0 || !input.len().is_multiple_of(in_ch) || weights.len() != out_ch * in_ch * kernel {
        return Err(NnError::ShapeMismatch(format!(
            "conv1d: input {} with {in_ch} channels, weights {} for {out_ch}x{in_ch}x{kernel}",
            input.len(),
            weights.len()
        )));
    }
    let len = input.len() / in_ch;
    if len < kernel {
        return Err(NnError::ShapeMismatch(format!("conv1d: length {len} shorter than kernel {kernel}")));
    }
    let out_len = len - kernel + 1;
    let mut out = vec![0.0; out_len * out_ch];
    for t in 0..out_len {
        let patch = &input[t * in_ch..(t + kernel) * in_ch];
        let row = &mut out[t * out_ch..(t + 1) * out_ch];
        for (o, cell) in row.iter_mut().enumerate() {
            let w = &weights[o * in_ch * kernel..(o + 1) * in_ch * kernel];
            let mut acc = bias[o];
            for c in 0..in_ch {
                let wc = &w[c * kernel..(c + 1) * kernel];
                for (k, wk) in wc.iter().enumerate() {
                    acc += patch[k * in_ch + c] * wk;
                }
            }
            *cell = acc;
        }
    }
    Ok(out)
}

/// Accumulates weight and bias gradients of [`conv1d`] and optionally returns
/// the gradient with respect to its input.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward(
    input: &[f64],
    in_ch: usize,
    weights: &[f64],
    kernel: usize,
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let out_ch = grad_b.len();
    let out_len = grad_out.len() / out_ch;
    let mut grad_in = want_input_grad.then(|| vec![0.0; input.len()]);
    for t in 0..out_len {
        let patch = &input[t * in_ch..(t + kernel) * in_ch];
        for o in 0..out_ch {
            let g = grad_out[t * out_ch + o];
            if g == 0.0 {
                continue;
            }
            grad_b[o] += g;
            let base = o * in_ch * kernel;
            for c in 0..in_ch {
                for k in 0..kernel {
                    grad_w[base + c * kernel + k] += g * patch[k * in_ch + c];
                }
            }
            if let Some(gi) = grad_in.as_mut() {
                for c in 0..in_ch {
                    for k in 0..kernel {
                        gi[(t + k) * in_ch + c] += g * weights[base + c * kernel + k];
                    }
                }
            }
        }
    }
    grad_in
}

/// Width-2, stride-2 max pooling over time. A trailing odd row is dropped;
/// ties pick the earlier row. Returns the pooled buffer and, per output cell,
/// the flat input index that produced it.
pub fn maxpool(input: &[f64], channels: usize) -> (Vec<f64>, Vec<usize>) {
    let out_len = input.len() / channels / 2;
    let mut out = Vec::with_capacity(out_len * channels);
    let mut argmax = Vec::with_capacity(out_len * channels);
    for t in 0..out_len {
        for c in 0..channels {
            let a = 2 * t * channels + c;
            let b = a + channels;
            let pick = if input[b] > input[a] { b } else { a };
            out.push(input[pick]);
            argmax.push(pick);
        }
    }
    (out, argmax)
}

/// Routes each pooled gradient back to the input position that won.
pub fn maxpool_backward(grad_out: &[f64], argmax: &[usize], input_len: usize) -> Vec<f64> {
    let mut grad_in = vec![0.0; input_len];
    for (g, &i) in grad_out.iter().zip(argmax) {
        grad_in[i] += g;
    }
    grad_in
}

pub fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes `grad` wherever the pre-activation was not positive.
pub fn relu_backward(grad: &mut [f64], pre: &[f64]) {
    for (g, p) in grad.iter_mut().zip(pre) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
}

/// `out = W·x + b` with `W` stored `outputs × inputs`.
pub fn dense(input: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let n_in = input.len();
    bias.iter()
        .enumerate()
        .map(|(o, b)| {
            let row = &weights[o * n_in..(o + 1) * n_in];
            b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
        })
        .collect()
}

pub fn dense_backward(
    input: &[f64],
    weights: &[f64],
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) -> Vec<f64> {
    let n_in = input.len();
    let mut grad_in = vec![0.0; n_in];
    for (o, &g) in grad_out.iter().enumerate() {
        grad_b[o] += g;
        if g == 0.0 {
            continue;
        }
        let row = &weights[o * n_in..(o + 1) * n_in];
        let grow = &mut grad_w[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            grow[i] += g * input[i];
            grad_in[i] += g * row[i];
        }
    }
    grad_in
}

/// Softmax with the row maximum subtracted first.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn apply_mask(x: &mut [f64], mask: Option<&[f64]>) {
    if let Some(mask) = mask {
        for (v, m) in x.iter_mut().zip(mask) {
            *v *= m;
        }
    }
}
