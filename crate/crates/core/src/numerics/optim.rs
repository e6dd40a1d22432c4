use super::{check_same_shape, Tensor};
use crate::error::{Error, Result};

/// One momentum-SGD step followed by projection onto the mask:
///
/// ```text
/// velocity <- momentum * velocity - lr * grad
/// weights  <- (weights + velocity) ⊙ mask
/// ```
///
/// Pruned coordinates are written as exactly `0.0`, and their velocity is
/// reset so nothing accumulates behind the mask. Passing `mask = None`
/// updates every coordinate (biases). A non-finite gradient aborts the step
/// before anything is modified.
pub fn sgd_step(
    weights: &mut Tensor,
    mask: Option<&Tensor>,
    grads: &Tensor,
    lr: f64,
    momentum: f64,
    velocity: &mut Tensor,
) -> Result<()> {
    const OP: &str = "sgd_step";
    check_same_shape(OP, "grads", weights, grads)?;
    check_same_shape(OP, "velocity", weights, velocity)?;
    if let Some(m) = mask {
        check_same_shape(OP, "mask", weights, m)?;
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument {
            op: OP,
            msg: format!("learning rate must be positive, got {lr}"),
        });
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::InvalidArgument {
            op: OP,
            msg: format!("momentum must lie in [0,1), got {momentum}"),
        });
    }
    if let Some(index) = grads.data().iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite { op: OP, index });
    }

    let g = grads.data();
    let v = velocity.data_mut();
    let w = weights.data_mut();
    match mask {
        Some(m) => {
            for (((wv, vv), &gv), &mv) in w.iter_mut().zip(v.iter_mut()).zip(g).zip(m.data()) {
                if mv == 0.0 {
                    *vv = 0.0;
                    *wv = 0.0;
                } else {
                    *vv = momentum * *vv - lr * gv;
                    *wv += *vv;
                }
            }
        }
        None => {
            for ((wv, vv), &gv) in w.iter_mut().zip(v.iter_mut()).zip(g) {
                *vv = momentum * *vv - lr * gv;
                *wv += *vv;
            }
        }
    }
    Ok(())
}
