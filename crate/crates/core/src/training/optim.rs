use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::Real;

/// Heavy-ball velocity buffers, one per parameter tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SgdState<T> {
    pub velocity: Vec<Vec<T>>,
}

/// `v <- momentum * v + g; theta <- theta - lr * v` on every tensor.
///
/// Gradients are scanned before anything is written; a NaN or infinity
/// aborts the step with the offending tensor and index, leaving parameters
/// and state untouched.
pub fn sgd_momentum_step<T: Real>(
    params: Vec<&mut [T]>,
    grads: &[Vec<T>],
    state: &mut SgdState<T>,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(invalid(format!("{} parameter tensors but {} gradients", params.len(), grads.len())));
    }
    for (t, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() {
            return Err(invalid(format!("gradient {t} has {} entries for {} parameters", g.len(), p.len())));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter tensor {t} at index {i} ({})", g[i])));
        }
    }
    if state.velocity.is_empty() {
        state.velocity = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
    }
    let (lr, m) = (T::cast(lr), T::cast(momentum));
    for ((p, g), v) in params.into_iter().zip(grads).zip(&mut state.velocity) {
        for ((pi, &gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            *vi = m * *vi + gi;
            *pi -= lr * *vi;
        }
    }
    Ok(())
}

/// Step learning-rate drop: `factor` applies from `epoch` on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrDrop {
    pub epoch: usize,
    pub factor: f64,
}

pub fn lr_schedule(epoch: usize, lr_initial: f64, drop: LrDrop) -> f64 {
    if epoch < drop.epoch {
        lr_initial
    } else {
        lr_initial * drop.factor
    }
}
