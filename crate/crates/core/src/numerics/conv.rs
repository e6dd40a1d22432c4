use super::{check_rank, check_same_shape, LayerGrad, Tensor};
use crate::error::{Error, Result};

struct ConvDims {
    batch: usize,
    in_ch: usize,
    height: usize,
    width: usize,
    out_ch: usize,
    kh: usize,
    kw: usize,
    out_h: usize,
    out_w: usize,
}

fn conv_dims(op: &'static str, input: &Tensor, weights: &Tensor, mask: &Tensor) -> Result<ConvDims> {
    check_rank(op, "input", input, 4)?;
    check_rank(op, "weights", weights, 4)?;
    check_same_shape(op, "mask", weights, mask)?;
    let (batch, in_ch, height, width) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
    let (out_ch, w_in, kh, kw) = (weights.shape()[0], weights.shape()[1], weights.shape()[2], weights.shape()[3]);
    if w_in != in_ch {
        return Err(Error::shape(op, "weights in_channels", in_ch, w_in));
    }
    if kh > height {
        return Err(Error::shape(op, "kernel height (must be <= input height)", height, kh));
    }
    if kw > width {
        return Err(Error::shape(op, "kernel width (must be <= input width)", width, kw));
    }
    Ok(ConvDims {
        batch,
        in_ch,
        height,
        width,
        out_ch,
        kh,
        kw,
        out_h: height - kh + 1,
        out_w: width - kw + 1,
    })
}

/// Valid (unpadded, stride 1) 2-D convolution with masked weights.
///
/// `output[n,o,y,x] = bias[o] + Σ input[n,i,y+u,x+v] · weights[o,i,u,v] · mask[o,i,u,v]`.
/// Pruned kernel taps are skipped entirely.
pub fn conv2d_forward(input: &Tensor, weights: &Tensor, bias: &Tensor, mask: &Tensor) -> Result<Tensor> {
    const OP: &str = "conv2d_forward";
    let d = conv_dims(OP, input, weights, mask)?;
    check_rank(OP, "bias", bias, 1)?;
    if bias.len() != d.out_ch {
        return Err(Error::shape(OP, "bias length", d.out_ch, bias.len()));
    }

    let eff = weights.masked(mask)?;
    let (x, w, b) = (input.data(), eff.data(), bias.data());
    let in_plane = d.height * d.width;
    let out_plane = d.out_h * d.out_w;
    let ksize = d.kh * d.kw;
    let mut out = vec![0.0; d.batch * d.out_ch * out_plane];

    for n in 0..d.batch {
        for o in 0..d.out_ch {
            let obase = (n * d.out_ch + o) * out_plane;
            let oplane = &mut out[obase..obase + out_plane];
            oplane.fill(b[o]);
            for i in 0..d.in_ch {
                let ibase = (n * d.in_ch + i) * in_plane;
                let kbase = (o * d.in_ch + i) * ksize;
                for u in 0..d.kh {
                    for v in 0..d.kw {
                        let wv = w[kbase + u * d.kw + v];
                        if wv == 0.0 {
                            continue;
                        }
                        for y in 0..d.out_h {
                            let src = ibase + (y + u) * d.width + v;
                            let src = &x[src..src + d.out_w];
                            let dst = &mut oplane[y * d.out_w..(y + 1) * d.out_w];
                            for (o_val, &i_val) in dst.iter_mut().zip(src) {
                                *o_val += wv * i_val;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![d.batch, d.out_ch, d.out_h, d.out_w], out)
}

/// Gradients of [`conv2d_forward`]. The weight gradient is zero wherever the
/// mask is zero.
pub fn conv2d_backward(input: &Tensor, weights: &Tensor, mask: &Tensor, output_grad: &Tensor) -> Result<LayerGrad> {
    conv2d_backward_opt(input, weights, mask, output_grad, true)
}

/// As [`conv2d_backward`]; when `need_input_grad` is false the input gradient
/// is returned as zeros without being computed (first layer of a network).
pub(crate) fn conv2d_backward_opt(
    input: &Tensor,
    weights: &Tensor,
    mask: &Tensor,
    output_grad: &Tensor,
    need_input_grad: bool,
) -> Result<LayerGrad> {
    const OP: &str = "conv2d_backward";
    let d = conv_dims(OP, input, weights, mask)?;
    check_rank(OP, "output_grad", output_grad, 4)?;
    let expected = [d.batch, d.out_ch, d.out_h, d.out_w];
    for (axis, (&e, &g)) in expected.iter().zip(output_grad.shape()).enumerate() {
        if e != g {
            return Err(Error::shape(OP, format!("output_grad axis {axis}"), e, g));
        }
    }

    let eff = weights.masked(mask)?;
    let (x, w, m, g) = (input.data(), eff.data(), mask.data(), output_grad.data());
    let in_plane = d.height * d.width;
    let out_plane = d.out_h * d.out_w;
    let ksize = d.kh * d.kw;

    let mut wgrad = vec![0.0; weights.len()];
    let mut bgrad = vec![0.0; d.out_ch];
    let mut igrad = vec![0.0; input.len()];

    for n in 0..d.batch {
        for o in 0..d.out_ch {
            let obase = (n * d.out_ch + o) * out_plane;
            let gplane = &g[obase..obase + out_plane];
            bgrad[o] += gplane.iter().sum::<f64>();
            for i in 0..d.in_ch {
                let ibase = (n * d.in_ch + i) * in_plane;
                let kbase = (o * d.in_ch + i) * ksize;
                for u in 0..d.kh {
                    for v in 0..d.kw {
                        let k = kbase + u * d.kw + v;
                        if m[k] == 0.0 {
                            continue;
                        }
                        let mut acc = 0.0;
                        for y in 0..d.out_h {
                            let src = ibase + (y + u) * d.width + v;
                            let xs = &x[src..src + d.out_w];
                            let gs = &gplane[y * d.out_w..(y + 1) * d.out_w];
                            acc += xs.iter().zip(gs).map(|(&a, &b)| a * b).sum::<f64>();
                        }
                        wgrad[k] += acc;

                        let wv = w[k];
                        if !need_input_grad || wv == 0.0 {
                            continue;
                        }
                        for y in 0..d.out_h {
                            let dst = ibase + (y + u) * d.width + v;
                            let dst = &mut igrad[dst..dst + d.out_w];
                            let gs = &gplane[y * d.out_w..(y + 1) * d.out_w];
                            for (iv, &gv) in dst.iter_mut().zip(gs) {
                                *iv += wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(LayerGrad {
        weight_grad: Tensor::new(weights.shape().to_vec(), wgrad)?,
        bias_grad: Tensor::new(vec![d.out_ch], bgrad)?,
        input_grad: Tensor::new(input.shape().to_vec(), igrad)?,
    })
}
