use super::{check_rank, check_same_shape, LayerGrad, Tensor};
use crate::error::{Error, Result};

/// Splits a batch-major input into (batch, features), flattening trailing axes.
fn flat_dims(op: &'static str, input: &Tensor, weights: &Tensor, mask: &Tensor) -> Result<(usize, usize, usize)> {
    check_rank(op, "weights", weights, 2)?;
    check_same_shape(op, "mask", weights, mask)?;
    if input.ndim() < 2 {
        return Err(Error::shape(op, "input rank (at least)", 2, input.ndim()));
    }
    let batch = input.shape()[0];
    let features = input.len() / batch;
    let (out_f, in_f) = (weights.shape()[0], weights.shape()[1]);
    if features != in_f {
        return Err(Error::shape(op, "in_features", in_f, features));
    }
    Ok((batch, in_f, out_f))
}

/// Fully connected layer: `output[n,o] = bias[o] + Σ_i input[n,i] · (weights ⊙ mask)[o,i]`.
/// Inputs with more than two axes are flattened per sample.
pub fn fc_forward(input: &Tensor, weights: &Tensor, bias: &Tensor, mask: &Tensor) -> Result<Tensor> {
    const OP: &str = "fc_forward";
    let (batch, in_f, out_f) = flat_dims(OP, input, weights, mask)?;
    check_rank(OP, "bias", bias, 1)?;
    if bias.len() != out_f {
        return Err(Error::shape(OP, "bias length", out_f, bias.len()));
    }
    let eff = weights.masked(mask)?;
    let (x, w, b) = (input.data(), eff.data(), bias.data());
    let mut out = vec![0.0; batch * out_f];
    for n in 0..batch {
        let row = &x[n * in_f..(n + 1) * in_f];
        for o in 0..out_f {
            let wrow = &w[o * in_f..(o + 1) * in_f];
            out[n * out_f + o] = b[o] + dot(row, wrow);
        }
    }
    Tensor::new(vec![batch, out_f], out)
}

pub fn fc_backward(input: &Tensor, weights: &Tensor, mask: &Tensor, output_grad: &Tensor) -> Result<LayerGrad> {
    fc_backward_opt(input, weights, mask, output_grad, true)
}

pub(crate) fn fc_backward_opt(
    input: &Tensor,
    weights: &Tensor,
    mask: &Tensor,
    output_grad: &Tensor,
    need_input_grad: bool,
) -> Result<LayerGrad> {
    const OP: &str = "fc_backward";
    let (batch, in_f, out_f) = flat_dims(OP, input, weights, mask)?;
    check_rank(OP, "output_grad", output_grad, 2)?;
    if output_grad.shape()[0] != batch {
        return Err(Error::shape(OP, "output_grad batch", batch, output_grad.shape()[0]));
    }
    if output_grad.shape()[1] != out_f {
        return Err(Error::shape(OP, "output_grad features", out_f, output_grad.shape()[1]));
    }
    let eff = weights.masked(mask)?;
    let (x, w, m, g) = (input.data(), eff.data(), mask.data(), output_grad.data());

    let mut wgrad = vec![0.0; out_f * in_f];
    let mut bgrad = vec![0.0; out_f];
    let mut igrad = vec![0.0; batch * in_f];
    for n in 0..batch {
        let row = &x[n * in_f..(n + 1) * in_f];
        let irow = &mut igrad[n * in_f..(n + 1) * in_f];
        for o in 0..out_f {
            let gv = g[n * out_f + o];
            bgrad[o] += gv;
            if gv == 0.0 {
                continue;
            }
            let wg = &mut wgrad[o * in_f..(o + 1) * in_f];
            for (acc, &xv) in wg.iter_mut().zip(row) {
                *acc += gv * xv;
            }
            if need_input_grad {
                let wrow = &w[o * in_f..(o + 1) * in_f];
                for (acc, &wv) in irow.iter_mut().zip(wrow) {
                    *acc += gv * wv;
                }
            }
        }
    }
    for (v, &mv) in wgrad.iter_mut().zip(m) {
        if mv == 0.0 {
            *v = 0.0;
        }
    }

    Ok(LayerGrad {
        weight_grad: Tensor::new(vec![out_f, in_f], wgrad)?,
        bias_grad: Tensor::new(vec![out_f], bgrad)?,
        input_grad: Tensor::new(input.shape().to_vec(), igrad)?,
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_mask_is_noop() {
        let x = Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0]).unwrap();
        let w = Tensor::new(vec![2, 3], vec![0.1, 0.2, 0.3, -0.4, 0.5, -0.6]).unwrap();
        let b = Tensor::new(vec![2], vec![0.25, -0.25]).unwrap();
        let masked = fc_forward(&x, &w, &b, &Tensor::ones(&[2, 3])).unwrap();
        // unmasked reference
        let mut expect = vec![0.0; 4];
        for n in 0..2 {
            for o in 0..2 {
                expect[n * 2 + o] = b.data()[o] + (0..3).map(|i| x.data()[n * 3 + i] * w.data()[o * 3 + i]).sum::<f64>();
            }
        }
        assert_eq!(masked.data(), expect.as_slice());
    }

    #[test]
    fn flattens_trailing_axes() {
        let x = Tensor::ones(&[1, 2, 2, 2]);
        let w = Tensor::ones(&[3, 8]);
        let out = fc_forward(&x, &w, &Tensor::zeros(&[3]), &Tensor::ones(&[3, 8])).unwrap();
        assert_eq!(out.shape(), &[1, 3]);
        assert_eq!(out.data(), &[8.0, 8.0, 8.0]);
        let g = fc_backward(&x, &w, &Tensor::ones(&[3, 8]), &Tensor::ones(&[1, 3])).unwrap();
        assert_eq!(g.input_grad.shape(), &[1, 2, 2, 2]);
    }

    #[test]
    fn in_features_mismatch() {
        let err = fc_forward(&Tensor::ones(&[1, 5]), &Tensor::ones(&[3, 4]), &Tensor::zeros(&[3]), &Tensor::ones(&[3, 4]))
            .unwrap_err();
        assert!(err.to_string().contains("in_features"), "{err}");
    }
}
