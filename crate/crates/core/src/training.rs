//! Mini-batch SGD over a [`NetworkArch`] and test-set evaluation.
//!
//! Each mini-batch is cut into fixed shards of [`SHARD_SIZE`] samples.
//! Shard gradients are computed independently (in parallel when more than
//! one worker is allowed) and then summed strictly in shard order, so the
//! resulting update is bit-identical for every worker count.

use serde::{Deserialize, Serialize};

use crate::data::{batches, Batch, Dataset};
use crate::error::{Error, Result};
use crate::model::{LayerSpec, NetworkArch};
use crate::numerics::{
    conv2d_backward_opt, conv2d_forward, fc_backward_opt, fc_forward, maxpool2x2_backward, maxpool2x2_forward,
    relu_backward, relu_forward, sgd_step, softmax_cross_entropy_with_denominator, PoolIndices, Tensor,
};

/// Samples per gradient shard. Part of the reproducibility contract: changing
/// it changes the floating-point summation order.
pub const SHARD_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Worker threads for shard gradients; 0 or 1 means single-threaded.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            momentum: 0.9,
            batch_size: 64,
            threads: 0,
        }
    }
}

/// Momentum buffers, one per weight and bias tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    weight_velocity: Vec<Tensor>,
    bias_velocity: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(net: &NetworkArch) -> Self {
        OptimizerState {
            weight_velocity: net.params().iter().map(|p| Tensor::zeros(p.weights.shape())).collect(),
            bias_velocity: net.params().iter().map(|p| Tensor::zeros(p.bias.shape())).collect(),
        }
    }
}

/// Gradients for every parametric layer, in network order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl ParamGrads {
    fn accumulate(&mut self, other: &ParamGrads) -> Result<()> {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.add_assign(b)?;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.add_assign(b)?;
        }
        Ok(())
    }
}

enum Cache {
    Conv { input: Tensor, param: usize },
    Fc { input: Tensor, param: usize },
    Pool(PoolIndices),
    Relu(Tensor),
    Softmax,
}

fn forward_cached(net: &NetworkArch, images: &Tensor, keep: bool) -> Result<(Tensor, Vec<Cache>)> {
    let mut x = images.clone();
    let mut caches = Vec::new();
    let mut param = 0;
    for spec in &net.config().layers {
        let (next, cache) = match spec {
            LayerSpec::Conv { .. } => {
                let p = &net.params()[param];
                let y = conv2d_forward(&x, &p.weights, &p.bias, &p.mask)?;
                param += 1;
                (y, Cache::Conv { input: x, param: param - 1 })
            }
            LayerSpec::Fc { .. } => {
                let p = &net.params()[param];
                let y = fc_forward(&x, &p.weights, &p.bias, &p.mask)?;
                param += 1;
                (y, Cache::Fc { input: x, param: param - 1 })
            }
            LayerSpec::Pool => {
                let (y, idx) = maxpool2x2_forward(&x)?;
                (y, Cache::Pool(idx))
            }
            LayerSpec::Relu => {
                let y = relu_forward(&x);
                (y, Cache::Relu(x))
            }
            // probabilities are never materialised; the loss works on logits
            LayerSpec::Softmax => (x, Cache::Softmax),
        };
        x = next;
        if keep {
            caches.push(cache);
        }
    }
    Ok((x, caches))
}

/// Class scores (pre-softmax logits) for a batch of images.
pub fn forward(net: &NetworkArch, images: &Tensor) -> Result<Tensor> {
    forward_cached(net, images, false).map(|(y, _)| y)
}

/// Sum of per-sample cross-entropy losses divided by `denominator`, with the
/// matching parameter gradients.
pub fn loss_and_gradients(net: &NetworkArch, images: &Tensor, labels: &[usize], denominator: usize) -> Result<(f64, ParamGrads)> {
    let (logits, caches) = forward_cached(net, images, true)?;
    let (loss, mut grad) = softmax_cross_entropy_with_denominator(&logits, labels, denominator)?;

    let mut wgrads: Vec<Option<Tensor>> = vec![None; net.params().len()];
    let mut bgrads: Vec<Option<Tensor>> = vec![None; net.params().len()];
    for (idx, cache) in caches.iter().enumerate().rev() {
        let need_input = idx > 0;
        grad = match cache {
            Cache::Conv { input, param } => {
                let p = &net.params()[*param];
                let g = conv2d_backward_opt(input, &p.weights, &p.mask, &grad, need_input)?;
                wgrads[*param] = Some(g.weight_grad);
                bgrads[*param] = Some(g.bias_grad);
                g.input_grad
            }
            Cache::Fc { input, param } => {
                let p = &net.params()[*param];
                let g = fc_backward_opt(input, &p.weights, &p.mask, &grad, need_input)?;
                wgrads[*param] = Some(g.weight_grad);
                bgrads[*param] = Some(g.bias_grad);
                g.input_grad
            }
            Cache::Pool(indices) => maxpool2x2_backward(&grad, indices)?,
            Cache::Relu(input) => relu_backward(input, &grad)?,
            Cache::Softmax => grad,
        };
    }
    Ok((
        loss,
        ParamGrads {
            weights: wgrads.into_iter().map(|g| g.expect("every parametric layer visited")).collect(),
            biases: bgrads.into_iter().map(|g| g.expect("every parametric layer visited")).collect(),
        },
    ))
}

fn shard_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..n).step_by(SHARD_SIZE).map(|s| (s, (s + SHARD_SIZE).min(n))).collect()
}

fn shard_gradient(net: &NetworkArch, batch: &Batch, range: (usize, usize), denominator: usize) -> Result<(f64, ParamGrads)> {
    let s = batch.images.shape();
    let per: usize = s[1..].iter().product();
    let mut shape = s.to_vec();
    shape[0] = range.1 - range.0;
    let images = Tensor::new(shape, batch.images.data()[range.0 * per..range.1 * per].to_vec())?;
    loss_and_gradients(net, &images, &batch.labels[range.0..range.1], denominator)
}

/// Mean loss and gradient over a batch, reduced in fixed shard order.
pub fn batch_gradient(net: &NetworkArch, batch: &Batch, threads: usize) -> Result<(f64, ParamGrads)> {
    let n = batch.labels.len();
    let ranges = shard_ranges(n);
    let results: Vec<Result<(f64, ParamGrads)>> = if threads <= 1 || ranges.len() == 1 {
        ranges.iter().map(|&r| shard_gradient(net, batch, r, n)).collect()
    } else {
        let workers = threads.min(ranges.len());
        let per_worker = ranges.len().div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = ranges
                .chunks(per_worker)
                .map(|chunk| {
                    scope.spawn(move || chunk.iter().map(|&r| shard_gradient(net, batch, r, n)).collect::<Vec<_>>())
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("gradient worker panicked"))
                .collect()
        })
    };

    let mut iter = results.into_iter();
    let (mut loss, mut total) = iter.next().expect("non-empty batch")?;
    for r in iter {
        let (l, g) = r?;
        loss += l;
        total.accumulate(&g)?;
    }
    Ok((loss, total))
}

/// One SGD update on `batch`; returns the batch mean loss.
pub fn train_step(net: &mut NetworkArch, state: &mut OptimizerState, batch: &Batch, cfg: &TrainConfig) -> Result<f64> {
    let (loss, grads) = batch_gradient(net, batch, cfg.threads)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite { op: "train_step", index: 0 });
    }
    for (i, p) in net.params_mut().iter_mut().enumerate() {
        sgd_step(&mut p.weights, Some(&p.mask), &grads.weights[i], cfg.lr, cfg.momentum, &mut state.weight_velocity[i])?;
        sgd_step(&mut p.bias, None, &grads.biases[i], cfg.lr, cfg.momentum, &mut state.bias_velocity[i])?;
    }
    Ok(loss)
}

/// One pass over `dataset` in a permutation drawn from `seed`; returns the
/// mean of the per-batch losses.
pub fn train_epoch(net: &mut NetworkArch, state: &mut OptimizerState, dataset: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for batch in batches(dataset, cfg.batch_size, seed)? {
        sum += train_step(net, state, &batch, cfg)?;
        count += 1;
    }
    Ok(sum / count.max(1) as f64)
}

/// Index of the largest score per row; ties go to the lowest class index.
pub fn predict(net: &NetworkArch, images: &Tensor) -> Result<Vec<usize>> {
    let logits = forward(net, images)?;
    let classes = logits.shape()[1];
    Ok(logits
        .data()
        .chunks_exact(classes)
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect())
}

/// Fraction of `dataset` classified correctly.
pub fn evaluate(net: &NetworkArch, dataset: &Dataset) -> Result<f64> {
    const CHUNK: usize = 500;
    if dataset.is_empty() {
        return Err(Error::Dataset("cannot evaluate on an empty dataset".into()));
    }
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(CHUNK) {
        let sub = dataset.gather(chunk);
        let pred = predict(net, sub.images())?;
        correct += pred.iter().zip(sub.labels()).filter(|(p, l)| p == l).count();
    }
    Ok(correct as f64 / dataset.len() as f64)
}
