use super::{AspectRatio, DilationRate, DilationRateSet, InterpolationWeights, Orientation};
use crate::error::{invalid, Axis, Error, Result};
use crate::tensor::conv::{accumulate_sample, accumulate_sample_backward, add_bias, bias_grad, output_dims};
use crate::tensor::{conv2d_forward, same_padding, ConvGeometry, ConvGrads, ConvKernel, Dims, Real, Tensor};

/// Geometry of one dilation branch: the base stride, dilation `rate`, and
/// same padding for that dilation. The base kernel's own dilation and
/// padding are ignored.
pub fn branch_geometry<T: Real>(kernel: &ConvKernel<T>, rate: DilationRate) -> ConvGeometry {
    let (kh, kw) = kernel.kernel_size();
    ConvGeometry {
        dilation: (rate.vertical, rate.horizontal),
        stride: kernel.stride,
        padding: (same_padding(kh, rate.vertical), same_padding(kw, rate.horizontal)),
    }
}

/// Output dims shared by every branch of `set`. Branches disagreeing on
/// output size (even-sized kernels) are an error.
pub fn afdc_output_dims<T: Real>(input: Dims, kernel: &ConvKernel<T>, set: &DilationRateSet) -> Result<Dims> {
    let mut shared: Option<Dims> = None;
    for &rate in set.rates() {
        let od = output_dims(input, kernel.weights.dims(), branch_geometry(kernel, rate), "afdc")?;
        match shared {
            None => shared = Some(od),
            Some(s) if s != od => {
                return Err(invalid(format!(
                    "rate set incompatible with padding geometry: branch {rate} gives {od}, expected {s}"
                )))
            }
            Some(_) => {}
        }
    }
    shared.ok_or(Error::EmptyRateSet)
}

fn check_bias<T: Real>(kernel: &ConvKernel<T>, op: &'static str) -> Result<()> {
    if kernel.bias.len() != kernel.out_channels() {
        return Err(Error::Shape {
            op,
            axis: Axis::Channels,
            expected: kernel.out_channels(),
            found: kernel.bias.len(),
        });
    }
    Ok(())
}

/// Reference path for one image: runs the (at most two) integer dilated
/// convolutions bracketing `ratio` with zero bias, blends them with weights
/// `ceil(r) - r` and `r - floor(r)`, then adds the bias once.
///
/// No clamping happens here; any ratio the input can hold is accepted.
pub fn afdc_direct<T: Real>(input: &Tensor<T>, kernel: &ConvKernel<T>, ratio: &AspectRatio) -> Result<Tensor<T>> {
    if input.dims().batch != 1 {
        return Err(Error::Shape {
            op: "afdc_direct",
            axis: Axis::Batch,
            expected: 1,
            found: input.dims().batch,
        });
    }
    check_bias(kernel, "afdc_direct")?;
    let orientation = ratio.orientation();
    let r = if orientation == Orientation::Square { 1.0 } else { ratio.value() };
    let (lo, hi) = (r.floor(), r.ceil());
    let branches = if lo == hi {
        vec![(lo as usize, 1.0)]
    } else {
        vec![(lo as usize, hi - r), (hi as usize, r - lo)]
    };
    let zero_bias = ConvKernel {
        bias: vec![T::zero(); kernel.bias.len()],
        ..kernel.clone()
    };
    let mut out: Option<Tensor<T>> = None;
    for (d, w) in branches {
        let geom = branch_geometry(kernel, DilationRate::along(orientation, d));
        let k = ConvKernel {
            dilation: geom.dilation,
            padding: geom.padding,
            ..zero_bias.clone()
        };
        let y = conv2d_forward(input, &k)?;
        let w = T::cast(w);
        out = Some(match out {
            None => y.map(|v| T::zero() + w * v),
            Some(acc) => acc.zip_map(&y, |a, b| a + w * b)?,
        });
    }
    let out = out.expect("at least one branch");
    let od = out.dims();
    let mut values = out.into_values();
    add_bias(&mut values, &kernel.bias, od);
    Tensor::new(od, values)
}

fn check_weights(batch: usize, weights: &[InterpolationWeights], set: &DilationRateSet, op: &str) -> Result<()> {
    if weights.len() != batch {
        return Err(invalid(format!(
            "{op}: {} weight vectors for a batch of {batch}",
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| w.len() != set.len()) {
        return Err(invalid(format!(
            "{op}: weight vector of length {} for a rate set of {}",
            w.len(),
            set.len()
        )));
    }
    Ok(())
}

/// Batched fractional dilated convolution with one shared kernel.
///
/// Branch `k` of `set` is the base kernel at dilation `set[k]`. Each sample's
/// output is `sum_k w[b][k] * branch_k(x_b)` followed by the bias, reduced in
/// rate-set order. Branches with zero weight for a sample are skipped for
/// that sample, which leaves the result unchanged.
///
/// ```
/// use afdc::afdc::{afdc_batch_forward, compute_ratio, interpolation_weights, DilationRateSet};
/// use afdc::tensor::{ConvKernel, Dims, Tensor};
///
/// let set = DilationRateSet::three();
/// let x = Tensor::<f64>::from_fn(Dims::new(1, 1, 5, 5), |_, _, y, x| (y * 5 + x) as f64);
/// let k = ConvKernel::new(Tensor::full(Dims::new(1, 1, 3, 3), 1.0), vec![0.0]).unwrap();
/// let w = interpolation_weights(&compute_ratio(60, 40).unwrap(), &set).unwrap();
/// let y = afdc_batch_forward(&x, &[w], &k, &set).unwrap();
/// assert_eq!(y.dims(), Dims::new(1, 1, 5, 5));
/// ```
pub fn afdc_batch_forward<T: Real>(
    input: &Tensor<T>,
    weights: &[InterpolationWeights],
    kernel: &ConvKernel<T>,
    set: &DilationRateSet,
) -> Result<Tensor<T>> {
    let id = input.dims();
    check_weights(id.batch, weights, set, "afdc_batch_forward")?;
    check_bias(kernel, "afdc_batch_forward")?;
    let od = afdc_output_dims(id, kernel, set)?;
    let item = od.sample_len();
    let mut out = vec![T::zero(); od.len()];
    let mut scratch = vec![T::zero(); item];
    for (k, &rate) in set.rates().iter().enumerate() {
        let geom = branch_geometry(kernel, rate);
        for (n, w) in weights.iter().enumerate() {
            let wk = w.as_slice()[k];
            if wk == 0.0 {
                continue;
            }
            scratch.iter_mut().for_each(|v| *v = T::zero());
            accumulate_sample(input, n, &kernel.weights, geom, od, &mut scratch);
            let wk = T::cast(wk);
            for (o, &s) in out[n * item..(n + 1) * item].iter_mut().zip(&scratch) {
                *o += wk * s;
            }
        }
    }
    add_bias(&mut out, &kernel.bias, od);
    Tensor::new(od, out)
}

/// Gradients of [`afdc_batch_forward`]. Every branch adds into the same
/// weight gradient; the bias gradient is the plain sum of `grad_out` since
/// the weights of each sample sum to one.
pub fn afdc_batch_backward<T: Real>(
    input: &Tensor<T>,
    weights: &[InterpolationWeights],
    kernel: &ConvKernel<T>,
    set: &DilationRateSet,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let id = input.dims();
    check_weights(id.batch, weights, set, "afdc_batch_backward")?;
    check_bias(kernel, "afdc_batch_backward")?;
    let od = afdc_output_dims(id, kernel, set)?;
    od.expect_eq(&grad_out.dims(), "afdc_batch_backward")?;
    let item_in = id.sample_len();
    let item_out = od.sample_len();
    let mut gin = vec![T::zero(); id.len()];
    let mut gw = vec![T::zero(); kernel.weights.len()];
    let mut scaled = vec![T::zero(); item_out];
    for (k, &rate) in set.rates().iter().enumerate() {
        let geom = branch_geometry(kernel, rate);
        for (n, w) in weights.iter().enumerate() {
            let wk = w.as_slice()[k];
            if wk == 0.0 {
                continue;
            }
            let wk = T::cast(wk);
            let g = &grad_out.values()[n * item_out..(n + 1) * item_out];
            for (s, &v) in scaled.iter_mut().zip(g) {
                *s = wk * v;
            }
            accumulate_sample_backward(
                input,
                n,
                &kernel.weights,
                geom,
                &scaled,
                od,
                &mut gin[n * item_in..(n + 1) * item_in],
                &mut gw,
            );
        }
    }
    Ok(ConvGrads {
        input: Tensor::new(id, gin)?,
        weights: Tensor::new(kernel.weights.dims(), gw)?,
        bias: bias_grad(grad_out),
    })
}
