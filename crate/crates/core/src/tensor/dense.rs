use super::{Dims, Real, Tensor};
use crate::error::{Axis, Error, Result};

/// Fully connected layer; `weights` is `out_features x in_features`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub in_features: usize,
    pub out_features: usize,
}

impl<T: Real> Dense<T> {
    pub fn new(in_features: usize, out_features: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weights.len() != in_features * out_features {
            return Err(Error::Shape {
                op: "Dense::new",
                axis: Axis::Features,
                expected: in_features * out_features,
                found: weights.len(),
            });
        }
        if bias.len() != out_features {
            return Err(Error::Shape {
                op: "Dense::new",
                axis: Axis::Features,
                expected: out_features,
                found: bias.len(),
            });
        }
        Ok(Dense {
            weights,
            bias,
            in_features,
            out_features,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut weights = vec![T::zero(); n * n];
        for i in 0..n {
            weights[i * n + i] = T::one();
        }
        Dense {
            weights,
            bias: vec![T::zero(); n],
            in_features: n,
            out_features: n,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

fn check_input<T: Real>(input: &Tensor<T>, dense: &Dense<T>, op: &'static str) -> Result<()> {
    let found = input.dims().sample_len();
    if found != dense.in_features {
        return Err(Error::Shape {
            op,
            axis: Axis::Features,
            expected: dense.in_features,
            found,
        });
    }
    Ok(())
}

/// Applies the layer to each batch item flattened to `C * H * W` features.
/// Output dims are `(batch, out_features, 1, 1)`.
pub fn linear<T: Real>(input: &Tensor<T>, dense: &Dense<T>) -> Result<Tensor<T>> {
    check_input(input, dense, "linear")?;
    let batch = input.dims().batch;
    let mut out = Vec::with_capacity(batch * dense.out_features);
    for n in 0..batch {
        let x = input.sample_values(n);
        for (o, row) in dense.weights.chunks(dense.in_features).enumerate() {
            let dot: T = row.iter().zip(x).map(|(&w, &v)| w * v).sum();
            out.push(dot + dense.bias[o]);
        }
    }
    Tensor::new(Dims::new(batch, dense.out_features, 1, 1), out)
}

pub fn linear_backward<T: Real>(
    input: &Tensor<T>,
    dense: &Dense<T>,
    grad_out: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    check_input(input, dense, "linear_backward")?;
    let batch = input.dims().batch;
    Dims::new(batch, dense.out_features, 1, 1).expect_eq(&grad_out.dims(), "linear_backward")?;
    let mut gin = vec![T::zero(); input.len()];
    let mut gw = vec![T::zero(); dense.weights.len()];
    let mut gb = vec![T::zero(); dense.out_features];
    let nin = dense.in_features;
    for n in 0..batch {
        let x = input.sample_values(n);
        let g = grad_out.sample_values(n);
        let gx = &mut gin[n * nin..(n + 1) * nin];
        for (o, &go) in g.iter().enumerate() {
            gb[o] += go;
            let row = &dense.weights[o * nin..(o + 1) * nin];
            let grow = &mut gw[o * nin..(o + 1) * nin];
            for i in 0..nin {
                gx[i] += row[i] * go;
                grow[i] += x[i] * go;
            }
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(input.dims(), gin)?,
        weights: gw,
        bias: gb,
    })
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of [`relu`] given the pre-activation input.
pub fn relu_backward<T: Real>(pre: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    pre.zip_map(grad_out, |x, g| if x > T::zero() { g } else { T::zero() })
}

/// Numerically stable softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Pulls a gradient on the probabilities back to the logits:
/// `g_i = p_i * (gp_i - sum_j p_j gp_j)`.
pub fn softmax_backward<T: Real>(probs: &[T], grad_probs: &[T]) -> Vec<T> {
    let dot: T = probs.iter().zip(grad_probs).map(|(&p, &g)| p * g).sum();
    probs
        .iter()
        .zip(grad_probs)
        .map(|(&p, &g)| p * (g - dot))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;

    #[test]
    fn softmax_uniform_and_simplex() {
        let p = softmax(&[0.0f64; 10]);
        assert!(p.iter().all(|&v| (v - 0.1).abs() < 1e-15));
        let q = softmax(&[3.0f32, -40.0, 0.5, 80.0, 1.0, 2.0, -2.0, 0.0, 7.0, 1e-3]);
        let s: f32 = q.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert!(q.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn relu_values() {
        let t = Tensor::from_rows(&[&[-1.0f64, 2.0, 0.0]]).unwrap();
        assert_eq!(relu(&t).values(), &[0.0, 2.0, 0.0]);
    }

    #[test]
    fn identity_linear() {
        let x = Tensor::new(Dims::new(2, 3, 1, 1), vec![1.0f64, -2.0, 3.5, 0.0, 4.0, -1.0]).unwrap();
        let y = linear(&x, &Dense::identity(3)).unwrap();
        assert_eq!(y.values(), x.values());
    }

    #[test]
    fn linear_shape_error() {
        let x = Tensor::<f64>::zeros(Dims::new(1, 2, 2, 1));
        assert!(matches!(
            linear(&x, &Dense::identity(3)),
            Err(Error::Shape { axis: Axis::Features, expected: 3, found: 4, .. })
        ));
    }

    #[test]
    fn linear_and_softmax_gradients() {
        let dims = Dims::new(2, 2, 2, 1);
        let x = Tensor::new(dims, vec![0.3, -0.7, 1.1, 0.2, -0.4, 0.9, 0.05, -1.3]).unwrap();
        let w: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
        let dense = Dense::new(4, 3, w, vec![0.1, -0.2, 0.3]).unwrap();
        let proj = Tensor::new(Dims::new(2, 3, 1, 1), vec![1.0, -0.5, 0.25, 0.7, 0.1, -0.9]).unwrap();
        let g = linear_backward(&x, &dense, &proj).unwrap();
        let dot = |t: &Tensor<f64>| -> f64 { t.values().iter().zip(proj.values()).map(|(a, b)| a * b).sum() };
        let r = grad_check(
            |v| dot(&linear(&Tensor::new(dims, v.to_vec()).unwrap(), &dense).unwrap()),
            x.values(),
            g.input.values(),
            1e-5,
        );
        assert!(r.passes(1e-4), "{r:?}");
        let r = grad_check(
            |v| {
                let d = Dense::new(4, 3, v.to_vec(), dense.bias.clone()).unwrap();
                dot(&linear(&x, &d).unwrap())
            },
            &dense.weights,
            &g.weights,
            1e-5,
        );
        assert!(r.passes(1e-4), "{r:?}");

        let logits = [0.2, -1.0, 0.7, 2.0];
        let gp = [0.5, -0.25, 1.0, 0.1];
        let analytic = softmax_backward(&softmax(&logits), &gp);
        let r = grad_check(
            |v| softmax(v).iter().zip(&gp).map(|(a, b)| a * b).sum(),
            &logits,
            &analytic,
            1e-5,
        );
        assert!(r.passes(1e-4), "{r:?}");
    }
}
