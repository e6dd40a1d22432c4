//! Helpers shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::fs;
use std::path::Path;

use evosynth::numerics::{
    conv2d_backward, conv2d_forward, fc_backward, fc_forward, maxpool2x2_backward, maxpool2x2_forward, relu_backward,
    relu_forward, softmax_cross_entropy, Tensor,
};
use rand::seq::SliceRandom;
use rand::Rng;

pub const GRAD_STEP: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, 1e-5)`, the floor keeping near-zero pairs from
/// dominating.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

pub fn random_tensor<R: Rng>(rng: &mut R, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn random_mask<R: Rng>(rng: &mut R, shape: &[usize], keep: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| if rng.gen_bool(keep) { 1.0 } else { 0.0 }).collect()).unwrap()
}

fn weighted_sum(out: &Tensor, r: &Tensor) -> f64 {
    out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Central difference of `f` along every coordinate of `x`.
fn numeric_grad(x: &Tensor, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + GRAD_STEP;
            let up = f(&probe);
            probe.data_mut()[i] = orig - GRAD_STEP;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * GRAD_STEP)
        })
        .collect()
}

fn max_err(analytic: &Tensor, numeric: &[f64]) -> f64 {
    analytic.data().iter().zip(numeric).map(|(&a, &n)| rel_err(a, n)).fold(0.0, f64::max)
}

/// Worst relative error of conv input, weight and bias gradients on one
/// random masked instance.
pub fn check_conv<R: Rng>(rng: &mut R) -> f64 {
    let (n, c, o) = (rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=3));
    let (kh, kw) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let (h, w) = (kh + rng.gen_range(0..=3), kw + rng.gen_range(0..=3));
    let x = random_tensor(rng, &[n, c, h, w], 1.0);
    let wt = random_tensor(rng, &[o, c, kh, kw], 1.0);
    let b = random_tensor(rng, &[o], 1.0);
    let m = random_mask(rng, &[o, c, kh, kw], 0.7);
    let out = conv2d_forward(&x, &wt, &b, &m).unwrap();
    let r = random_tensor(rng, out.shape(), 1.0);
    let g = conv2d_backward(&x, &wt, &m, &r).unwrap();
    let gx = numeric_grad(&x, |p| weighted_sum(&conv2d_forward(p, &wt, &b, &m).unwrap(), &r));
    let gw = numeric_grad(&wt, |p| weighted_sum(&conv2d_forward(&x, p, &b, &m).unwrap(), &r));
    let gb = numeric_grad(&b, |p| weighted_sum(&conv2d_forward(&x, &wt, p, &m).unwrap(), &r));
    max_err(&g.input_grad, &gx).max(max_err(&g.weight_grad, &gw)).max(max_err(&g.bias_grad, &gb))
}

pub fn check_fc<R: Rng>(rng: &mut R) -> f64 {
    let (n, i, o) = (rng.gen_range(1..=4), rng.gen_range(1..=12), rng.gen_range(1..=6));
    let x = random_tensor(rng, &[n, i], 1.0);
    let wt = random_tensor(rng, &[o, i], 1.0);
    let b = random_tensor(rng, &[o], 1.0);
    let m = random_mask(rng, &[o, i], 0.7);
    let out = fc_forward(&x, &wt, &b, &m).unwrap();
    let r = random_tensor(rng, out.shape(), 1.0);
    let g = fc_backward(&x, &wt, &m, &r).unwrap();
    let gx = numeric_grad(&x, |p| weighted_sum(&fc_forward(p, &wt, &b, &m).unwrap(), &r));
    let gw = numeric_grad(&wt, |p| weighted_sum(&fc_forward(&x, p, &b, &m).unwrap(), &r));
    let gb = numeric_grad(&b, |p| weighted_sum(&fc_forward(&x, &wt, p, &m).unwrap(), &r));
    max_err(&g.input_grad, &gx).max(max_err(&g.weight_grad, &gw)).max(max_err(&g.bias_grad, &gb))
}

/// Pool inputs are a shuffled grid with spacing 0.01, so no window has a
/// near-tie a finite-difference step could flip.
pub fn check_pool<R: Rng>(rng: &mut R) -> f64 {
    let (n, c) = (rng.gen_range(1..=2), rng.gen_range(1..=3));
    let (h, w) = (rng.gen_range(2..=7), rng.gen_range(2..=7));
    let len = n * c * h * w;
    let mut vals: Vec<f64> = (0..len).map(|i| i as f64 * 0.01 - 0.5).collect();
    vals.shuffle(rng);
    let x = Tensor::new(vec![n, c, h, w], vals).unwrap();
    let (out, idx) = maxpool2x2_forward(&x).unwrap();
    let r = random_tensor(rng, out.shape(), 1.0);
    let g = maxpool2x2_backward(&r, &idx).unwrap();
    let gx = numeric_grad(&x, |p| weighted_sum(&maxpool2x2_forward(p).unwrap().0, &r));
    max_err(&g, &gx)
}

/// ReLU inputs keep `|x| ≥ 1e-3`, away from the kink.
pub fn check_relu<R: Rng>(rng: &mut R) -> f64 {
    let len = rng.gen_range(1..=40);
    let vals = (0..len)
        .map(|_| {
            let v: f64 = rng.gen_range(1e-3..2.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    let x = Tensor::new(vec![len], vals).unwrap();
    let r = random_tensor(rng, &[len], 1.0);
    let g = relu_backward(&x, &r).unwrap();
    let gx = numeric_grad(&x, |p| weighted_sum(&relu_forward(p), &r));
    max_err(&g, &gx)
}

pub fn check_softmax_ce<R: Rng>(rng: &mut R) -> f64 {
    let (n, k) = (rng.gen_range(1..=5), rng.gen_range(2..=10));
    let logits = random_tensor(rng, &[n, k], 3.0);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
    let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
    let gx = numeric_grad(&logits, |p| softmax_cross_entropy(p, &labels).unwrap().0);
    max_err(&g, &gx)
}

/// Direct six-loop convolution.
pub fn conv_oracle(x: &Tensor, w: &Tensor, b: &Tensor, m: &Tensor) -> Vec<f64> {
    let [n, c, h, wd] = x.shape().try_into().unwrap();
    let [o, _, kh, kw] = w.shape().try_into().unwrap();
    let (oh, ow) = (h - kh + 1, wd - kw + 1);
    let (xd, wdat, md) = (x.data(), w.data(), m.data());
    let mut out = vec![0.0; n * o * oh * ow];
    for s in 0..n {
        for oc in 0..o {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = b.data()[oc];
                    for ic in 0..c {
                        for u in 0..kh {
                            for v in 0..kw {
                                let wi = ((oc * c + ic) * kh + u) * kw + v;
                                acc += xd[((s * c + ic) * h + y + u) * wd + xx + v] * wdat[wi] * md[wi];
                            }
                        }
                    }
                    out[((s * o + oc) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    out
}

/// Max abs difference between the optimized convolution and the oracle on
/// one random instance.
pub fn conv_vs_oracle<R: Rng>(rng: &mut R) -> f64 {
    let (n, c, o) = (rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=5));
    let (kh, kw) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
    let (h, w) = (kh + rng.gen_range(0..=8), kw + rng.gen_range(0..=8));
    let x = random_tensor(rng, &[n, c, h, w], 1.0);
    let wt = random_tensor(rng, &[o, c, kh, kw], 1.0);
    let b = random_tensor(rng, &[o], 1.0);
    let m = random_mask(rng, &[o, c, kh, kw], 0.6);
    let fast = conv2d_forward(&x, &wt, &b, &m).unwrap();
    fast.data()
        .iter()
        .zip(conv_oracle(&x, &wt, &b, &m))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn idx_images(images: &[Vec<u8>], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [0x0803u32, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&0x0801u32.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// A learnable 28×28 ten-class problem: class `k` lights a 6×6 block at a
/// class-specific position, over faint noise.
fn synthetic_split<R: Rng>(rng: &mut R, count: usize) -> (Vec<Vec<u8>>, Vec<u8>) {
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let k = (i % 10) as u8;
        let mut img: Vec<u8> = (0..784).map(|_| rng.gen_range(0..40)).collect();
        let (by, bx) = (2 + (k as usize / 5) * 12 + rng.gen_range(0..3), 2 + (k as usize % 5) * 5);
        for y in by..by + 6 {
            for x in bx..(bx + 6).min(28) {
                img[y * 28 + x] = 255;
            }
        }
        images.push(img);
        labels.push(k);
    }
    (images, labels)
}

/// Writes a synthetic dataset under the standard MNIST file names.
pub fn write_synthetic_mnist<R: Rng>(dir: &Path, train: usize, test: usize, rng: &mut R) {
    fs::create_dir_all(dir).unwrap();
    let (tr_x, tr_y) = synthetic_split(rng, train);
    let (te_x, te_y) = synthetic_split(rng, test);
    fs::write(dir.join("train-images-idx3-ubyte"), idx_images(&tr_x, 28, 28)).unwrap();
    fs::write(dir.join("train-labels-idx1-ubyte"), idx_labels(&tr_y)).unwrap();
    fs::write(dir.join("t10k-images-idx3-ubyte"), idx_images(&te_x, 28, 28)).unwrap();
    fs::write(dir.join("t10k-labels-idx1-ubyte"), idx_labels(&te_y)).unwrap();
}
