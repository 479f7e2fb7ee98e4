use serde::{Deserialize, Serialize};

use super::{Dims, Real, Tensor};
use crate::error::{invalid, Axis, Error, Result};

/// Dilation, stride and zero padding of a 2-D convolution, each as
/// `(vertical, horizontal)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub dilation: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl Default for ConvGeometry {
    fn default() -> Self {
        ConvGeometry {
            dilation: (1, 1),
            stride: (1, 1),
            padding: (0, 0),
        }
    }
}

/// Symmetric padding that keeps a stride-1 convolution size-preserving:
/// `((k - 1) * d) / 2`, rounded down.
pub fn same_padding(kernel: usize, dilation: usize) -> usize {
    (kernel.saturating_sub(1) * dilation) / 2
}

/// `floor((len + 2p - ((k - 1) d + 1)) / s) + 1`, or `None` when the dilated
/// kernel does not fit in the padded input.
pub fn conv_output_len(
    len: usize,
    kernel: usize,
    dilation: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    let extent = (kernel - 1) * dilation + 1;
    let padded = len + 2 * padding;
    (extent <= padded).then(|| (padded - extent) / stride + 1)
}

/// Convolution parameters: weights shaped `(out_c, in_c, k_h, k_w)` (stored
/// in a [`Tensor`] whose batch axis is the output channel), one bias per
/// output channel, and the sampling geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel<T> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
    pub dilation: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl<T: Real> ConvKernel<T> {
    pub fn new(weights: Tensor<T>, bias: Vec<T>) -> Result<Self> {
        if bias.len() != weights.dims().batch {
            return Err(Error::Shape {
                op: "ConvKernel::new",
                axis: Axis::Channels,
                expected: weights.dims().batch,
                found: bias.len(),
            });
        }
        Ok(ConvKernel {
            weights,
            bias,
            dilation: (1, 1),
            stride: (1, 1),
            padding: (0, 0),
        })
    }

    pub fn zeros(out_c: usize, in_c: usize, k_h: usize, k_w: usize) -> Self {
        ConvKernel {
            weights: Tensor::zeros(Dims::new(out_c, in_c, k_h, k_w)),
            bias: vec![T::zero(); out_c],
            dilation: (1, 1),
            stride: (1, 1),
            padding: (0, 0),
        }
    }

    pub fn with_dilation(mut self, d_h: usize, d_w: usize) -> Self {
        self.dilation = (d_h, d_w);
        self
    }

    pub fn with_stride(mut self, s_h: usize, s_w: usize) -> Self {
        self.stride = (s_h, s_w);
        self
    }

    pub fn with_padding(mut self, p_h: usize, p_w: usize) -> Self {
        self.padding = (p_h, p_w);
        self
    }

    /// Sets padding to [`same_padding`] for the current dilation.
    pub fn with_same_padding(self) -> Self {
        let (kh, kw) = self.kernel_size();
        let (dh, dw) = self.dilation;
        self.with_padding(same_padding(kh, dh), same_padding(kw, dw))
    }

    pub fn geometry(&self) -> ConvGeometry {
        ConvGeometry {
            dilation: self.dilation,
            stride: self.stride,
            padding: self.padding,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weights.dims().batch
    }

    pub fn in_channels(&self) -> usize {
        self.weights.dims().channels
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.weights.dims().height, self.weights.dims().width)
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn output_dims(&self, input: Dims) -> Result<Dims> {
        output_dims(input, self.weights.dims(), self.geometry(), "conv2d")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

pub(crate) fn output_dims(
    input: Dims,
    weights: Dims,
    geom: ConvGeometry,
    op: &'static str,
) -> Result<Dims> {
    if input.channels != weights.channels {
        return Err(Error::Shape {
            op,
            axis: Axis::Channels,
            expected: weights.channels,
            found: input.channels,
        });
    }
    let (dh, dw) = geom.dilation;
    let (sh, sw) = geom.stride;
    if dh == 0 || dw == 0 {
        return Err(invalid(format!("{op}: dilation must be at least 1")));
    }
    if sh == 0 || sw == 0 {
        return Err(invalid(format!("{op}: stride must be at least 1")));
    }
    if weights.height == 0 || weights.width == 0 {
        return Err(invalid(format!("{op}: empty kernel")));
    }
    let axis_len = |axis, len, k, d, s, p| {
        conv_output_len(len, k, d, s, p).ok_or(Error::DilationTooLarge {
            op,
            axis,
            extent: (k - 1) * d + 1,
            padded: len + 2 * p,
        })
    };
    let out_h = axis_len(Axis::Height, input.height, weights.height, dh, sh, geom.padding.0)?;
    let out_w = axis_len(Axis::Width, input.width, weights.width, dw, sw, geom.padding.1)?;
    Ok(Dims::new(input.batch, weights.batch, out_h, out_w))
}

/// Output positions `o < out_len` with `0 <= o * stride + offset - pad < in_len`.
#[inline]
fn valid_range(
    out_len: usize,
    stride: usize,
    offset: usize,
    pad: usize,
    in_len: usize,
) -> (usize, usize) {
    let lo = if pad > offset {
        (pad - offset).div_ceil(stride)
    } else {
        0
    };
    if in_len + pad <= offset {
        return (0, 0);
    }
    let hi = ((in_len - 1 + pad - offset) / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

/// Adds the convolution taps (no bias) of batch item `n` into `out`, which
/// holds that item's `(out_c, out_h, out_w)` block. Every output element
/// accumulates in `(in_channel, row, col)` tap order.
pub(crate) fn accumulate_sample<T: Real>(
    input: &Tensor<T>,
    n: usize,
    weights: &Tensor<T>,
    geom: ConvGeometry,
    out_dims: Dims,
    out: &mut [T],
) {
    let id = input.dims();
    let wd = weights.dims();
    let (oh, ow) = (out_dims.height, out_dims.width);
    let (dh, dw) = geom.dilation;
    let (sh, sw) = geom.stride;
    let (ph, pw) = geom.padding;
    let x = input.sample_values(n);
    let w = weights.values();
    let plane_in = id.plane_len();
    for co in 0..wd.batch {
        let out_plane = &mut out[co * oh * ow..(co + 1) * oh * ow];
        for ci in 0..wd.channels {
            let in_plane = &x[ci * plane_in..(ci + 1) * plane_in];
            for a in 0..wd.height {
                let (y0, y1) = valid_range(oh, sh, a * dh, ph, id.height);
                for b in 0..wd.width {
                    let wv = w[((co * wd.channels + ci) * wd.height + a) * wd.width + b];
                    let (x0, x1) = valid_range(ow, sw, b * dw, pw, id.width);
                    if x0 >= x1 {
                        continue;
                    }
                    for oy in y0..y1 {
                        let iy = oy * sh + a * dh - ph;
                        let row = &in_plane[iy * id.width..(iy + 1) * id.width];
                        let dst = &mut out_plane[oy * ow + x0..oy * ow + x1];
                        let ix0 = x0 * sw + b * dw - pw;
                        if sw == 1 {
                            for (o, &v) in dst.iter_mut().zip(&row[ix0..ix0 + (x1 - x0)]) {
                                *o += wv * v;
                            }
                        } else {
                            for (o, &v) in dst.iter_mut().zip(row[ix0..].iter().step_by(sw)) {
                                *o += wv * v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Backward counterpart of [`accumulate_sample`]: adds `scale * grad_out`
/// contributions for item `n` into the input-gradient block and the shared
/// weight gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_sample_backward<T: Real>(
    input: &Tensor<T>,
    n: usize,
    weights: &Tensor<T>,
    geom: ConvGeometry,
    grad_out: &[T],
    out_dims: Dims,
    grad_in: &mut [T],
    grad_w: &mut [T],
) {
    let id = input.dims();
    let wd = weights.dims();
    let (oh, ow) = (out_dims.height, out_dims.width);
    let (dh, dw) = geom.dilation;
    let (sh, sw) = geom.stride;
    let (ph, pw) = geom.padding;
    let x = input.sample_values(n);
    let w = weights.values();
    let plane_in = id.plane_len();
    for co in 0..wd.batch {
        let g_plane = &grad_out[co * oh * ow..(co + 1) * oh * ow];
        for ci in 0..wd.channels {
            let in_plane = &x[ci * plane_in..(ci + 1) * plane_in];
            let gin_plane = &mut grad_in[ci * plane_in..(ci + 1) * plane_in];
            for a in 0..wd.height {
                let (y0, y1) = valid_range(oh, sh, a * dh, ph, id.height);
                for b in 0..wd.width {
                    let widx = ((co * wd.channels + ci) * wd.height + a) * wd.width + b;
                    let wv = w[widx];
                    let (x0, x1) = valid_range(ow, sw, b * dw, pw, id.width);
                    if x0 >= x1 {
                        continue;
                    }
                    let mut gw = T::zero();
                    for oy in y0..y1 {
                        let iy = oy * sh + a * dh - ph;
                        let g = &g_plane[oy * ow + x0..oy * ow + x1];
                        let ix0 = x0 * sw + b * dw - pw;
                        let row = &in_plane[iy * id.width..(iy + 1) * id.width];
                        let grow = &mut gin_plane[iy * id.width..(iy + 1) * id.width];
                        if sw == 1 {
                            let len = x1 - x0;
                            for ((gi, &v), &go) in grow[ix0..ix0 + len]
                                .iter_mut()
                                .zip(&row[ix0..ix0 + len])
                                .zip(g)
                            {
                                *gi += wv * go;
                                gw += go * v;
                            }
                        } else {
                            for (k, &go) in g.iter().enumerate() {
                                let ix = ix0 + k * sw;
                                grow[ix] += wv * go;
                                gw += go * row[ix];
                            }
                        }
                    }
                    grad_w[widx] += gw;
                }
            }
        }
    }
}

/// Dilated, strided, zero-padded 2-D convolution (cross-correlation) plus bias.
///
/// Output extent per axis is `floor((in + 2p - ((k - 1) d + 1)) / s) + 1`.
pub fn conv2d_forward<T: Real>(input: &Tensor<T>, kernel: &ConvKernel<T>) -> Result<Tensor<T>> {
    let geom = kernel.geometry();
    let od = output_dims(input.dims(), kernel.weights.dims(), geom, "conv2d_forward")?;
    if kernel.bias.len() != od.channels {
        return Err(Error::Shape {
            op: "conv2d_forward",
            axis: Axis::Channels,
            expected: od.channels,
            found: kernel.bias.len(),
        });
    }
    let mut out = vec![T::zero(); od.len()];
    let item = od.sample_len();
    for n in 0..od.batch {
        accumulate_sample(
            input,
            n,
            &kernel.weights,
            geom,
            od,
            &mut out[n * item..(n + 1) * item],
        );
    }
    add_bias(&mut out, &kernel.bias, od);
    Tensor::new(od, out)
}

pub(crate) fn add_bias<T: Real>(out: &mut [T], bias: &[T], dims: Dims) {
    let plane = dims.plane_len();
    for (i, chunk) in out.chunks_mut(plane).enumerate() {
        let b = bias[i % dims.channels];
        for v in chunk {
            *v += b;
        }
    }
}

pub(crate) fn bias_grad<T: Real>(grad_out: &Tensor<T>) -> Vec<T> {
    let d = grad_out.dims();
    let mut gb = vec![T::zero(); d.channels];
    for (i, chunk) in grad_out.values().chunks(d.plane_len().max(1)).enumerate() {
        let s: T = chunk.iter().copied().sum();
        gb[i % d.channels] += s;
    }
    gb
}

/// Exact gradients of [`conv2d_forward`] with respect to input, weights and bias.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernel: &ConvKernel<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let geom = kernel.geometry();
    let od = output_dims(input.dims(), kernel.weights.dims(), geom, "conv2d_backward")?;
    od.expect_eq(&grad_out.dims(), "conv2d_backward")?;
    let id = input.dims();
    let mut gin = vec![T::zero(); id.len()];
    let mut gw = vec![T::zero(); kernel.weights.len()];
    let item_in = id.sample_len();
    let item_out = od.sample_len();
    for n in 0..id.batch {
        accumulate_sample_backward(
            input,
            n,
            &kernel.weights,
            geom,
            &grad_out.values()[n * item_out..(n + 1) * item_out],
            od,
            &mut gin[n * item_in..(n + 1) * item_in],
            &mut gw,
        );
    }
    Ok(ConvGrads {
        input: Tensor::new(id, gin)?,
        weights: Tensor::new(kernel.weights.dims(), gw)?,
        bias: bias_grad(grad_out),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid3() -> Tensor<f64> {
        Tensor::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &[7.0, 8.0, 9.0]]).unwrap()
    }

    fn ones2() -> ConvKernel<f64> {
        ConvKernel::new(Tensor::full(Dims::new(1, 1, 2, 2), 1.0), vec![0.0]).unwrap()
    }

    fn random(dims: Dims, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(dims, |_, _, _, _| rng.gen_range(-1.0..1.0))
    }

    /// Direct sliding-window definition, independent of the shifted-row kernel.
    fn naive(input: &Tensor<f64>, k: &ConvKernel<f64>) -> Tensor<f64> {
        let id = input.dims();
        let wd = k.weights.dims();
        let (dh, dw) = k.dilation;
        let (sh, sw) = k.stride;
        let (ph, pw) = k.padding;
        let oh = (id.height + 2 * ph - (wd.height - 1) * dh - 1) / sh + 1;
        let ow = (id.width + 2 * pw - (wd.width - 1) * dw - 1) / sw + 1;
        Tensor::from_fn(Dims::new(id.batch, wd.batch, oh, ow), |n, co, oy, ox| {
            let mut s = k.bias[co];
            for ci in 0..wd.channels {
                for a in 0..wd.height {
                    for b in 0..wd.width {
                        let iy = (oy * sh + a * dh) as isize - ph as isize;
                        let ix = (ox * sw + b * dw) as isize - pw as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < id.height && (ix as usize) < id.width {
                            s += k.weights.at(co, ci, a, b) * input.at(n, ci, iy as usize, ix as usize);
                        }
                    }
                }
            }
            s
        })
    }

    #[test]
    fn all_ones_2x2() {
        let out = conv2d_forward(&grid3(), &ones2()).unwrap();
        assert_eq!(out.values(), &[12.0, 16.0, 24.0, 28.0]);
    }

    #[test]
    fn dilation_two_hits_corners() {
        let out = conv2d_forward(&grid3(), &ones2().with_dilation(2, 2)).unwrap();
        assert_eq!(out.dims(), Dims::new(1, 1, 1, 1));
        assert_eq!(out.values(), &[20.0]);
    }

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(Dims::new(2, 1, 4, 5), &mut rng);
        let k = ConvKernel::new(Tensor::full(Dims::new(1, 1, 1, 1), 1.0), vec![0.0]).unwrap();
        assert_eq!(conv2d_forward(&x, &k).unwrap(), x);
    }

    #[test]
    fn errors_name_the_axis() {
        let x = grid3();
        let k = ones2().with_dilation(1, 3);
        match conv2d_forward(&x, &k) {
            Err(Error::DilationTooLarge { axis, extent, padded, .. }) => {
                assert_eq!(axis, Axis::Width);
                assert_eq!((extent, padded), (4, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
        let k2 = ConvKernel::<f64>::zeros(1, 2, 2, 2);
        assert!(matches!(
            conv2d_forward(&x, &k2),
            Err(Error::Shape { axis: Axis::Channels, .. })
        ));
        let g = Tensor::zeros(Dims::new(1, 1, 3, 2));
        assert!(matches!(
            conv2d_backward(&x, &ones2(), &g),
            Err(Error::Shape { axis: Axis::Height, .. })
        ));
    }

    #[test]
    fn scalar_backward() {
        let (x, w, g) = (1.5, -0.75, 2.0);
        let input = Tensor::full(Dims::new(1, 1, 1, 1), x);
        let k = ConvKernel::new(Tensor::full(Dims::new(1, 1, 1, 1), w), vec![0.3]).unwrap();
        let go = Tensor::full(Dims::new(1, 1, 1, 1), g);
        let grads = conv2d_backward(&input, &k, &go).unwrap();
        assert_eq!(grads.input.values(), &[w * g]);
        assert_eq!(grads.weights.values(), &[x * g]);
        assert_eq!(grads.bias, vec![g]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(Dims::new(1, 2, 5, 5), &mut rng);
        let k = ConvKernel::new(random(Dims::new(3, 2, 3, 3), &mut rng), vec![0.1; 3]).unwrap();
        let od = k.output_dims(x.dims()).unwrap();
        let grads = conv2d_backward(&x, &k, &Tensor::zeros(od)).unwrap();
        assert!(grads.input.values().iter().all(|&v| v == 0.0));
        assert!(grads.weights.values().iter().all(|&v| v == 0.0));
        assert!(grads.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn finite_difference_dilated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(Dims::new(1, 2, 5, 5), &mut rng);
        let k = ConvKernel::new(random(Dims::new(3, 2, 3, 3), &mut rng), vec![0.2, -0.1, 0.05])
            .unwrap()
            .with_dilation(1, 2);
        let od = k.output_dims(x.dims()).unwrap();
        let proj = random(od, &mut rng);
        let grads = conv2d_backward(&x, &k, &proj).unwrap();
        let objective = |out: &Tensor<f64>| -> f64 {
            out.values().iter().zip(proj.values()).map(|(a, b)| a * b).sum()
        };

        let report = grad_check(
            |v: &[f64]| objective(&conv2d_forward(&Tensor::new(x.dims(), v.to_vec()).unwrap(), &k).unwrap()),
            x.values(),
            grads.input.values(),
            1e-5,
        );
        assert!(report.max_rel_err < 1e-4, "input grad {report:?}");

        let report = grad_check(
            |v: &[f64]| {
                let mut kk = k.clone();
                kk.weights = Tensor::new(k.weights.dims(), v.to_vec()).unwrap();
                objective(&conv2d_forward(&x, &kk).unwrap())
            },
            k.weights.values(),
            grads.weights.values(),
            1e-5,
        );
        assert!(report.max_rel_err < 1e-4, "weight grad {report:?}");

        let report = grad_check(
            |v: &[f64]| {
                let mut kk = k.clone();
                kk.bias = v.to_vec();
                objective(&conv2d_forward(&x, &kk).unwrap())
            },
            &k.bias,
            &grads.bias,
            1e-5,
        );
        assert!(report.max_rel_err < 1e-4, "bias grad {report:?}");
    }

    #[test]
    fn shape_law_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in 1..=4 {
            for d in 1..=4 {
                for s in 1..=3 {
                    for p in 0..=3 {
                        let len = 9;
                        let x = random(Dims::new(1, 1, len, len + 2), &mut rng);
                        let kern = ConvKernel::new(random(Dims::new(2, 1, k, k), &mut rng), vec![0.0; 2])
                            .unwrap()
                            .with_dilation(d, d)
                            .with_stride(s, s)
                            .with_padding(p, p);
                        let extent = (k - 1) * d + 1;
                        match conv2d_forward(&x, &kern) {
                            Ok(out) => {
                                assert!(extent <= len + 2 * p);
                                assert_eq!(out.dims().height, (len + 2 * p - extent) / s + 1);
                                assert_eq!(out.dims().width, (len + 2 + 2 * p - extent) / s + 1);
                                assert!(out.rel_err(&naive(&x, &kern)).unwrap() < 1e-14);
                            }
                            Err(Error::DilationTooLarge { .. }) => assert!(extent > len + 2 * p),
                            Err(e) => panic!("{e}"),
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_naive_and_is_linear(
            seed in any::<u64>(),
            h in 3usize..9, w in 3usize..9,
            dh in 1usize..3, dw in 1usize..3,
            sh in 1usize..3, sw in 1usize..3,
            alpha in -2.0f64..2.0, beta in -2.0f64..2.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dims = Dims::new(2, 2, h, w);
            let x = random(dims, &mut rng);
            let y = random(dims, &mut rng);
            let k1 = ConvKernel::new(random(Dims::new(2, 2, 3, 3), &mut rng), vec![0.0; 2]).unwrap()
                .with_dilation(dh, dw).with_stride(sh, sw).with_same_padding();
            let k2 = ConvKernel::new(random(Dims::new(2, 2, 3, 3), &mut rng), vec![0.0; 2]).unwrap()
                .with_dilation(dh, dw).with_stride(sh, sw).with_same_padding();
            let cx = conv2d_forward(&x, &k1).unwrap();
            prop_assert!(cx.rel_err(&naive(&x, &k1)).unwrap() < 1e-14);

            // input linearity
            let mix = x.scale(alpha).add(&y.scale(beta)).unwrap();
            let lhs = conv2d_forward(&mix, &k1).unwrap();
            let rhs = cx.scale(alpha).add(&conv2d_forward(&y, &k1).unwrap().scale(beta)).unwrap();
            prop_assert!(lhs.rel_err(&rhs).unwrap() < 1e-6);

            // kernel linearity
            let mut kmix = k1.clone();
            kmix.weights = k1.weights.scale(alpha).add(&k2.weights.scale(beta)).unwrap();
            let lhs = conv2d_forward(&x, &kmix).unwrap();
            let rhs = cx.scale(alpha).add(&conv2d_forward(&x, &k2).unwrap().scale(beta)).unwrap();
            prop_assert!(lhs.rel_err(&rhs).unwrap() < 1e-6);
        }
    }
}
