//! Forward and backward kernels for the layers of the embedding network.
//!
//! All image tensors are `H x W x C`, row-major, channels innermost.
//! Convolution kernels are `3 x 3 x C x F` with the output channel innermost,
//! so the hot loops run over contiguous output channels.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 3x3 convolution with one pixel of zero padding on every side.
pub fn conv3x3_forward(input: &Tensor, kernel: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let (h, w, c) = input.hwc()?;
    let f = check_kernel(kernel, c)?;
    if bias.len() != f {
        return Err(Error::config(format!(
            "conv bias has {} entries, kernel has {f} output channels",
            bias.len()
        )));
    }
    let x = input.data();
    let k = kernel.data();
    let mut out = Tensor::zeros(&[h, w, f]);
    let o = out.data_mut();
    for y in 0..h {
        for xx in 0..w {
            let acc = &mut o[(y * w + xx) * f..][..f];
            acc.copy_from_slice(bias);
            for (ky, iy) in window(y, h) {
                for (kx, ix) in window(xx, w) {
                    let pixel = &x[(iy * w + ix) * c..][..c];
                    let taps = &k[(ky * 3 + kx) * c * f..][..c * f];
                    for (ci, &v) in pixel.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        for (a, &kv) in acc.iter_mut().zip(&taps[ci * f..][..f]) {
                            *a += v * kv;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Accumulates kernel, bias and (optionally) input gradients of [`conv3x3_forward`].
pub fn conv3x3_backward(
    input: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
    grad_kernel: &mut [f64],
    grad_bias: &mut [f64],
    mut grad_input: Option<&mut [f64]>,
) -> Result<()> {
    let (h, w, c) = input.hwc()?;
    let f = check_kernel(kernel, c)?;
    if grad_out.shape() != [h, w, f] {
        return Err(Error::config(format!(
            "conv upstream gradient shape {:?} does not match output [{h}, {w}, {f}]",
            grad_out.shape()
        )));
    }
    if grad_kernel.len() != kernel.len() || grad_bias.len() != f {
        return Err(Error::config("conv gradient buffers have the wrong size"));
    }
    if let Some(gi) = grad_input.as_deref() {
        if gi.len() != input.len() {
            return Err(Error::config("conv input gradient buffer has the wrong size"));
        }
    }
    let x = input.data();
    let k = kernel.data();
    let g = grad_out.data();
    for y in 0..h {
        for xx in 0..w {
            let go = &g[(y * w + xx) * f..][..f];
            if go.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (b, &gv) in grad_bias.iter_mut().zip(go) {
                *b += gv;
            }
            for (ky, iy) in window(y, h) {
                for (kx, ix) in window(xx, w) {
                    let base = (iy * w + ix) * c;
                    let tap = (ky * 3 + kx) * c * f;
                    for ci in 0..c {
                        let v = x[base + ci];
                        let row = tap + ci * f;
                        if v != 0.0 {
                            for (gk, &gv) in grad_kernel[row..row + f].iter_mut().zip(go) {
                                *gk += v * gv;
                            }
                        }
                        if let Some(gi) = grad_input.as_deref_mut() {
                            let dot: f64 = k[row..row + f].iter().zip(go).map(|(a, b)| a * b).sum();
                            gi[base + ci] += dot;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Output of a 2x2 max pool: the pooled tensor plus, for every output cell,
/// the flat input index of the winning element.
#[derive(Clone, Debug)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// Non-overlapping 2x2 max pool with stride 2. A trailing odd row or column is
/// dropped. Ties go to the first element in row-major window order.
pub fn maxpool2x2_forward(input: &Tensor) -> Result<Pooled> {
    let (h, w, c) = input.hwc()?;
    if h < 2 || w < 2 {
        return Err(Error::config(format!(
            "max pool needs at least 2x2 input, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut output = Tensor::zeros(&[oh, ow, c]);
    let mut argmax = vec![0usize; oh * ow * c];
    let out = output.data_mut();
    for oy in 0..oh {
        for ox in 0..ow {
            for ch in 0..c {
                let mut best_idx = ((2 * oy) * w + 2 * ox) * c + ch;
                let mut best = x[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                    if x[idx] > best {
                        best = x[idx];
                        best_idx = idx;
                    }
                }
                let o = (oy * ow + ox) * c + ch;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok(Pooled { output, argmax })
}

/// Routes each pooled gradient back to its winning input element.
pub fn maxpool2x2_backward(grad_out: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(Error::config("pool gradient does not match the recorded argmax mask"));
    }
    let mut grad = Tensor::zeros(input_shape);
    let gi = grad.data_mut();
    for (&idx, &gv) in argmax.iter().zip(grad_out.data()) {
        gi[idx] += gv;
    }
    Ok(grad)
}

/// Per-channel mean over all spatial positions.
pub fn global_avg_pool(input: &Tensor) -> Result<Vec<f64>> {
    let (h, w, c) = input.hwc()?;
    let mut out = vec![0.0; c];
    for pixel in input.data().chunks_exact(c) {
        for (o, &v) in out.iter_mut().zip(pixel) {
            *o += v;
        }
    }
    let n = (h * w) as f64;
    for o in &mut out {
        *o /= n;
    }
    Ok(out)
}

pub fn global_avg_pool_backward(grad_out: &[f64], input_shape: &[usize]) -> Result<Tensor> {
    let [h, w, c] = input_shape[..] else {
        return Err(Error::config("global average pool input must be HxWxC"));
    };
    if grad_out.len() != c {
        return Err(Error::config("global average pool gradient has the wrong length"));
    }
    let n = (h * w) as f64;
    let share: Vec<f64> = grad_out.iter().map(|g| g / n).collect();
    let mut grad = Tensor::zeros(input_shape);
    for pixel in grad.data_mut().chunks_exact_mut(c) {
        pixel.copy_from_slice(&share);
    }
    Ok(grad)
}

/// `out = input^T W + b` with `W` stored as `C x d`. No activation.
pub fn dense_forward(input: &[f64], weights: &Tensor, bias: &[f64]) -> Result<Vec<f64>> {
    let d = check_dense(input.len(), weights)?;
    if bias.len() != d {
        return Err(Error::config(format!(
            "dense bias has {} entries, expected {d}",
            bias.len()
        )));
    }
    let mut out = bias.to_vec();
    for (&x, row) in input.iter().zip(weights.data().chunks_exact(d)) {
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += x * wv;
        }
    }
    Ok(out)
}

/// Accumulates weight and bias gradients and returns the input gradient.
pub fn dense_backward(
    input: &[f64],
    weights: &Tensor,
    grad_out: &[f64],
    grad_weights: &mut [f64],
    grad_bias: &mut [f64],
) -> Result<Vec<f64>> {
    let d = check_dense(input.len(), weights)?;
    if grad_out.len() != d || grad_bias.len() != d || grad_weights.len() != weights.len() {
        return Err(Error::config("dense gradient buffers have the wrong size"));
    }
    for (b, &g) in grad_bias.iter_mut().zip(grad_out) {
        *b += g;
    }
    let mut grad_input = vec![0.0; input.len()];
    for ((&x, row), (gw, gi)) in input
        .iter()
        .zip(weights.data().chunks_exact(d))
        .zip(grad_weights.chunks_exact_mut(d).zip(grad_input.iter_mut()))
    {
        for ((gwv, &g), &wv) in gw.iter_mut().zip(grad_out).zip(row) {
            *gwv += x * g;
            *gi += wv * g;
        }
    }
    Ok(grad_input)
}

pub fn relu_inplace(t: &mut Tensor) {
    for v in t.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Kernel taps along one axis that land inside the image: `(tap, source)`.
fn window(pos: usize, len: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..3usize).filter_map(move |tap| {
        let src = (pos + tap).checked_sub(1)?;
        (src < len).then_some((tap, src))
    })
}

fn check_kernel(kernel: &Tensor, channels: usize) -> Result<usize> {
    match kernel.shape()[..] {
        [3, 3, c, f] if c == channels => Ok(f),
        _ => Err(Error::config(format!(
            "conv kernel shape {:?} does not match [3, 3, {channels}, F]",
            kernel.shape()
        ))),
    }
}

fn check_dense(input_len: usize, weights: &Tensor) -> Result<usize> {
    match weights.shape()[..] {
        [c, d] if c == input_len => Ok(d),
        _ => Err(Error::config(format!(
            "dense weights {:?} do not accept an input of length {input_len}",
            weights.shape()
        ))),
    }
}
