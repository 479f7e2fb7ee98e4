use serde::{Deserialize, Serialize};

use super::{Dims, Real, Tensor};
use crate::error::{invalid, Result};

/// Target `g x g` grid for adaptive average pooling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub grid: usize,
}

impl PoolSpec {
    pub fn new(grid: usize) -> Self {
        PoolSpec { grid }
    }

    pub fn validate(&self, input: Dims) -> Result<()> {
        if self.grid == 0 {
            return Err(invalid("pool grid must be at least 1"));
        }
        if self.grid > input.height.min(input.width) {
            return Err(invalid(format!(
                "pool grid {} larger than input {}x{}",
                self.grid, input.height, input.width
            )));
        }
        Ok(())
    }
}

/// `[floor(i * len / g), ceil((i + 1) * len / g))`
fn window(i: usize, len: usize, g: usize) -> (usize, usize) {
    (i * len / g, ((i + 1) * len).div_ceil(g))
}

pub fn adaptive_avg_pool<T: Real>(input: &Tensor<T>, spec: PoolSpec) -> Result<Tensor<T>> {
    let d = input.dims();
    spec.validate(d)?;
    let g = spec.grid;
    Ok(Tensor::from_fn(
        Dims::new(d.batch, d.channels, g, g),
        |n, c, i, j| {
            let (y0, y1) = window(i, d.height, g);
            let (x0, x1) = window(j, d.width, g);
            let mut s = T::zero();
            for y in y0..y1 {
                for x in x0..x1 {
                    s += input.at(n, c, y, x);
                }
            }
            s / T::cast(((y1 - y0) * (x1 - x0)) as f64)
        },
    ))
}

pub fn adaptive_avg_pool_backward<T: Real>(
    input_dims: Dims,
    spec: PoolSpec,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    spec.validate(input_dims)?;
    let g = spec.grid;
    Dims::new(input_dims.batch, input_dims.channels, g, g)
        .expect_eq(&grad_out.dims(), "adaptive_avg_pool_backward")?;
    let mut gin = Tensor::zeros(input_dims);
    for n in 0..input_dims.batch {
        for c in 0..input_dims.channels {
            for i in 0..g {
                let (y0, y1) = window(i, input_dims.height, g);
                for j in 0..g {
                    let (x0, x1) = window(j, input_dims.width, g);
                    let share = grad_out.at(n, c, i, j) / T::cast(((y1 - y0) * (x1 - x0)) as f64);
                    for y in y0..y1 {
                        for x in x0..x1 {
                            let k = gin.offset(n, c, y, x);
                            gin.values_mut()[k] += share;
                        }
                    }
                }
            }
        }
    }
    Ok(gin)
}

/// Non-overlapping `k x k` average pooling (window = stride = `k`); trailing
/// rows/columns that do not fill a window are dropped.
pub fn avg_pool<T: Real>(input: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    let d = input.dims();
    if k == 0 || k > d.height || k > d.width {
        return Err(invalid(format!("avg_pool window {k} does not fit {d}")));
    }
    let norm = T::cast((k * k) as f64);
    Ok(Tensor::from_fn(
        Dims::new(d.batch, d.channels, d.height / k, d.width / k),
        |n, c, i, j| {
            let mut s = T::zero();
            for y in i * k..(i + 1) * k {
                for x in j * k..(j + 1) * k {
                    s += input.at(n, c, y, x);
                }
            }
            s / norm
        },
    ))
}

pub fn avg_pool_backward<T: Real>(input_dims: Dims, k: usize, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let od = Dims::new(input_dims.batch, input_dims.channels, input_dims.height / k, input_dims.width / k);
    od.expect_eq(&grad_out.dims(), "avg_pool_backward")?;
    let norm = T::cast((k * k) as f64);
    Ok(Tensor::from_fn(input_dims, |n, c, y, x| {
        let (i, j) = (y / k, x / k);
        if i < od.height && j < od.width {
            grad_out.at(n, c, i, j) / norm
        } else {
            T::zero()
        }
    }))
}
