use super::{check_rank, Tensor};
use crate::error::{Error, Result};

/// Winning input positions recorded by [`maxpool2x2_forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndices {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl PoolIndices {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Flat input index selected for each output element.
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// 2×2 max pooling with stride 2. Trailing odd rows/columns are dropped.
/// Ties resolve to the lowest flat input index.
pub fn maxpool2x2_forward(input: &Tensor) -> Result<(Tensor, PoolIndices)> {
    const OP: &str = "maxpool2x2_forward";
    check_rank(OP, "input", input, 4)?;
    let s = input.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    if h < 2 {
        return Err(Error::shape(OP, "input height (at least)", 2, h));
    }
    if w < 2 {
        return Err(Error::shape(OP, "input width (at least)", 2, w));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for xx in 0..ow {
                // visited in increasing flat index; strict > keeps the first maximum
                let candidates = [
                    base + 2 * y * w + 2 * xx,
                    base + 2 * y * w + 2 * xx + 1,
                    base + (2 * y + 1) * w + 2 * xx,
                    base + (2 * y + 1) * w + 2 * xx + 1,
                ];
                let mut best = candidates[0];
                for &idx in &candidates[1..] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::new(vec![n, c, oh, ow], out)?,
        PoolIndices {
            input_shape: s.to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool2x2_backward(output_grad: &Tensor, indices: &PoolIndices) -> Result<Tensor> {
    const OP: &str = "maxpool2x2_backward";
    if output_grad.len() != indices.argmax.len() {
        return Err(Error::shape(OP, "output_grad length", indices.argmax.len(), output_grad.len()));
    }
    let mut grad = Tensor::zeros(&indices.input_shape);
    let g = grad.data_mut();
    for (&idx, &gv) in indices.argmax.iter().zip(output_grad.data()) {
        g[idx] += gv;
    }
    Ok(grad)
}
