use super::{check_rank, check_same_shape, Tensor};
use crate::error::{Error, Result};

pub fn relu_forward(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Tensor::new(input.shape().to_vec(), data).expect("shape preserved")
}

/// Gradient of ReLU; the subgradient at exactly zero is taken as 0.
pub fn relu_backward(input: &Tensor, output_grad: &Tensor) -> Result<Tensor> {
    check_same_shape("relu_backward", "output_grad", input, output_grad)?;
    let data = input
        .data()
        .iter()
        .zip(output_grad.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Mean softmax cross-entropy over the batch. Returns the loss and its
/// gradient with respect to `logits`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let batch = logits.shape().first().copied().unwrap_or(0);
    softmax_cross_entropy_with_denominator(logits, labels, batch)
}

/// Sum of per-sample losses divided by `denominator`; lets a batch split into
/// shards produce gradients of the full-batch mean.
pub(crate) fn softmax_cross_entropy_with_denominator(
    logits: &Tensor,
    labels: &[usize],
    denominator: usize,
) -> Result<(f64, Tensor)> {
    const OP: &str = "softmax_cross_entropy";
    check_rank(OP, "logits", logits, 2)?;
    let (batch, classes) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != batch {
        return Err(Error::shape(OP, "labels length", batch, labels.len()));
    }
    if denominator == 0 {
        return Err(Error::InvalidArgument {
            op: OP,
            msg: "zero denominator".into(),
        });
    }
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::LabelOutOfRange { index, label, classes });
    }

    let scale = 1.0 / denominator as f64;
    let z = logits.data();
    let mut grad = vec![0.0; batch * classes];
    let mut loss = 0.0;
    for n in 0..batch {
        let row = &z[n * classes..(n + 1) * classes];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_sum = sum.ln() + max;
        loss += log_sum - row[labels[n]];
        let grow = &mut grad[n * classes..(n + 1) * classes];
        for (gv, &v) in grow.iter_mut().zip(row) {
            *gv = (v - log_sum).exp() * scale;
        }
        grow[labels[n]] -= scale;
    }
    Ok((loss * scale, Tensor::new(vec![batch, classes], grad)?))
}
