use crate::error::{invalid, Axis, Error, Result};
use crate::tensor::{
    adaptive_avg_pool, adaptive_avg_pool_backward, linear, linear_backward, Dense, Dims, PoolSpec, Real, Tensor,
};

/// Intermediate values of one [`spp_head`] call, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct SppPass<T> {
    pub pooled: Vec<Tensor<T>>,
    /// Dense outputs before the relu, one per scale.
    pub pre: Vec<Tensor<T>>,
    /// Concatenated features, `(batch, F, 1, 1)`.
    pub out: Tensor<T>,
}

/// Spatial pyramid head: for each grid size `g`, pool to `g x g`, flatten,
/// project with that scale's dense layer, relu; then concatenate.
///
/// Every dense layer maps to `F / scales.len()` outputs, so the result has
/// `F` features whatever the scale list.
pub fn spp_head<T: Real>(features: &Tensor<T>, scales: &[usize], denses: &[Dense<T>]) -> Result<SppPass<T>> {
    if scales.len() != denses.len() || scales.is_empty() {
        return Err(invalid(format!(
            "spp head has {} scales but {} dense layers",
            scales.len(),
            denses.len()
        )));
    }
    let seg = denses[0].out_features;
    if denses.iter().any(|d| d.out_features != seg) {
        return Err(invalid("spp dense layers must share an output width"));
    }
    let batch = features.dims().batch;
    let f = seg * scales.len();
    let mut pooled = Vec::with_capacity(scales.len());
    let mut pre = Vec::with_capacity(scales.len());
    let mut out = vec![T::zero(); batch * f];
    for (s, (&g, dense)) in scales.iter().zip(denses).enumerate() {
        let p = adaptive_avg_pool(features, PoolSpec::new(g))?;
        let z = linear(&p, dense)?;
        for n in 0..batch {
            for (j, &v) in z.sample_values(n).iter().enumerate() {
                out[n * f + s * seg + j] = v.max(T::zero());
            }
        }
        pooled.push(p);
        pre.push(z);
    }
    Ok(SppPass {
        pooled,
        pre,
        out: Tensor::new(Dims::new(batch, f, 1, 1), out)?,
    })
}

/// Returns the gradient on `features` and `(weights, bias)` gradients for
/// each scale's dense layer.
#[allow(clippy::type_complexity)]
pub fn spp_head_backward<T: Real>(
    feature_dims: Dims,
    scales: &[usize],
    denses: &[Dense<T>],
    pass: &SppPass<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<(Vec<T>, Vec<T>)>)> {
    let batch = feature_dims.batch;
    let seg = denses[0].out_features;
    let f = seg * scales.len();
    if grad_out.dims() != Dims::new(batch, f, 1, 1) {
        return Err(Error::Shape {
            op: "spp_head_backward",
            axis: Axis::Features,
            expected: f,
            found: grad_out.dims().channels,
        });
    }
    let mut gfeat = Tensor::zeros(feature_dims);
    let mut dense_grads = Vec::with_capacity(scales.len());
    for (s, (&g, dense)) in scales.iter().zip(denses).enumerate() {
        let z = &pass.pre[s];
        let gz = Tensor::from_fn(z.dims(), |n, j, _, _| {
            if z.at(n, j, 0, 0) > T::zero() {
                grad_out.values()[n * f + s * seg + j]
            } else {
                T::zero()
            }
        });
        let dg = linear_backward(&pass.pooled[s], dense, &gz)?;
        let gp = adaptive_avg_pool_backward(feature_dims, PoolSpec::new(g), &dg.input.reshape(pass.pooled[s].dims())?)?;
        gfeat = gfeat.add(&gp)?;
        dense_grads.push((dg.weights, dg.bias));
    }
    Ok((gfeat, dense_grads))
}
