use rand::Rng;

use super::spp::{spp_head, spp_head_backward, SppPass};
use super::{BlockConfig, NetworkConfig, ScoreDistribution};
use crate::afdc::{afdc_batch_backward, afdc_batch_forward, DilationRateSet, InterpolationWeights};
use crate::error::{Error, Result};
use crate::tensor::{
    avg_pool, avg_pool_backward, conv2d_backward, conv2d_forward, linear, linear_backward, relu, relu_backward,
    softmax, ConvKernel, Dense, Dims, Real, Tensor,
};

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Conv { kernel: ConvKernel<T>, afdc: bool },
    Relu,
    Pool { k: usize },
}

/// Parameters of a built [`NetworkConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    config: NetworkConfig,
    layers: Vec<Layer<T>>,
    spp: Vec<Dense<T>>,
    output: Dense<T>,
}

/// Activations of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass<T> {
    /// Input of each trunk layer, then the trunk output.
    activations: Vec<Tensor<T>>,
    spp: SppPass<T>,
    /// `(batch, 10, 1, 1)`.
    pub logits: Tensor<T>,
    weights: Vec<InterpolationWeights>,
    rates: DilationRateSet,
}

impl<T: Real> ForwardPass<T> {
    /// Softmax of the logits, computed in double precision.
    pub fn distributions(&self) -> Vec<ScoreDistribution> {
        logits_to_distributions(&self.logits)
    }

    pub fn batch(&self) -> usize {
        self.logits.dims().batch
    }
}

pub fn logits_to_distributions<T: Real>(logits: &Tensor<T>) -> Vec<ScoreDistribution> {
    (0..logits.dims().batch)
        .map(|n| {
            let z: Vec<f64> = logits.sample_values(n).iter().map(|v| v.as_f64()).collect();
            ScoreDistribution::from_slice(&softmax(&z)).expect("softmax is a simplex")
        })
        .collect()
}

fn kaiming<T: Real>(rng: &mut impl Rng, fan_in: usize, n: usize) -> Vec<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| T::cast(rng.gen_range(-bound..bound))).collect()
}

fn dense_init<T: Real>(rng: &mut impl Rng, i: usize, o: usize) -> Dense<T> {
    Dense::new(i, o, kaiming(rng, i, i * o), vec![T::zero(); o]).expect("sized")
}

fn dense_entries<T: Real>(name: String, d: &Dense<T>) -> [(String, Dims, &[T]); 2] {
    [
        (format!("{name}.weight"), Dims::new(1, 1, d.out_features, d.in_features), &d.weights[..]),
        (format!("{name}.bias"), Dims::new(1, 1, 1, d.out_features), &d.bias[..]),
    ]
}

impl<T: Real> Model<T> {
    /// Allocates parameters with Kaiming-uniform weights
    /// (`U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`) and zero biases, drawn in
    /// layer order from `rng`.
    pub fn build(config: &NetworkConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let layers = config
            .blocks
            .iter()
            .map(|b| match *b {
                BlockConfig::Conv {
                    in_c,
                    out_c,
                    k,
                    stride,
                    afdc,
                } => {
                    let w = kaiming(rng, in_c * k * k, out_c * in_c * k * k);
                    let weights = Tensor::new(Dims::new(out_c, in_c, k, k), w).expect("sized");
                    let kernel = ConvKernel::new(weights, vec![T::zero(); out_c])
                        .expect("sized")
                        .with_stride(stride, stride)
                        .with_same_padding();
                    Layer::Conv { kernel, afdc }
                }
                BlockConfig::Relu => Layer::Relu,
                BlockConfig::Pool { k } => Layer::Pool { k },
            })
            .collect();
        let c = config.trunk_channels();
        let scales = config.head.scales();
        let seg = config.feature_dim / scales.len();
        let spp = scales.iter().map(|g| dense_init(rng, c * g * g, seg)).collect();
        let output = dense_init(rng, config.feature_dim, config.score_bins);
        Ok(Model {
            config: config.clone(),
            layers,
            spp,
            output,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// The same parameters with every conv's AFDC flag set to `on`.
    pub fn with_afdc(&self, on: bool) -> Self {
        let mut m = self.clone();
        m.config = self.config.with_afdc(on);
        for l in &mut m.layers {
            if let Layer::Conv { afdc, .. } = l {
                *afdc = on;
            }
        }
        m
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    /// Named parameter tensors in a fixed order: conv weights/biases by
    /// layer, then the SPP dense layers, then the output layer.
    pub fn named_parameters(&self) -> Vec<(String, Dims, &[T])> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            if let Layer::Conv { kernel, .. } = l {
                out.push((format!("block{i}.weight"), kernel.weights.dims(), kernel.weights.values()));
                out.push((format!("block{i}.bias"), Dims::new(1, 1, 1, kernel.bias.len()), &kernel.bias[..]));
            }
        }
        for (s, d) in self.spp.iter().enumerate() {
            out.extend(dense_entries(format!("spp{s}"), d));
        }
        out.extend(dense_entries("output".into(), &self.output));
        out
    }


    pub fn parameters(&self) -> Vec<&[T]> {
        self.named_parameters().into_iter().map(|(_, _, p)| p).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for l in &mut self.layers {
            if let Layer::Conv { kernel, .. } = l {
                out.push(kernel.weights.values_mut());
                out.push(&mut kernel.bias[..]);
            }
        }
        for d in &mut self.spp {
            out.push(&mut d.weights[..]);
            out.push(&mut d.bias[..]);
        }
        out.push(&mut self.output.weights[..]);
        out.push(&mut self.output.bias[..]);
        out
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        let cv = |v: &[T]| v.iter().map(|x| U::cast(x.as_f64())).collect::<Vec<U>>();
        let cd = |d: &Dense<T>| Dense {
            weights: cv(&d.weights),
            bias: cv(&d.bias),
            in_features: d.in_features,
            out_features: d.out_features,
        };
        Model {
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Conv { kernel, afdc } => Layer::Conv {
                        kernel: ConvKernel {
                            weights: kernel.weights.cast(),
                            bias: cv(&kernel.bias),
                            dilation: kernel.dilation,
                            stride: kernel.stride,
                            padding: kernel.padding,
                        },
                        afdc: *afdc,
                    },
                    Layer::Relu => Layer::Relu,
                    Layer::Pool { k } => Layer::Pool { k: *k },
                })
                .collect(),
            spp: self.spp.iter().map(cd).collect(),
            output: cd(&self.output),
        }
    }

    /// Runs the network on `input` (`(batch, C, s, s)`). `weights` holds one
    /// interpolation vector per sample aligned with `rates`; vanilla layers
    /// ignore them.
    pub fn forward(
        &self,
        input: &Tensor<T>,
        weights: &[InterpolationWeights],
        rates: &DilationRateSet,
    ) -> Result<ForwardPass<T>> {
        let d = input.dims();
        if d.channels != self.config.input_channels {
            return Err(Error::Config {
                index: 0,
                message: format!("input has {} channels, network expects {}", d.channels, self.config.input_channels),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut x = input.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let at = |e: Error| Error::Config {
                index: i,
                message: e.to_string(),
            };
            let y = match l {
                Layer::Conv { kernel, afdc: true } => afdc_batch_forward(&x, weights, kernel, rates).map_err(at)?,
                Layer::Conv { kernel, afdc: false } => conv2d_forward(&x, kernel).map_err(at)?,
                Layer::Relu => relu(&x),
                Layer::Pool { k } => avg_pool(&x, *k).map_err(at)?,
            };
            activations.push(std::mem::replace(&mut x, y));
        }
        let head = self.layers.len();
        let spp = spp_head(&x, &self.config.head.scales(), &self.spp).map_err(|e| Error::Config {
            index: head,
            message: e.to_string(),
        })?;
        activations.push(x);
        let logits = linear(&spp.out, &self.output)?;
        Ok(ForwardPass {
            activations,
            spp,
            logits,
            weights: weights.to_vec(),
            rates: rates.clone(),
        })
    }

    /// Parameter gradients, aligned with [`Model::parameters`], for upstream
    /// gradient `grad_logits` on the logits.
    pub fn backward(&self, pass: &ForwardPass<T>, grad_logits: &Tensor<T>) -> Result<Vec<Vec<T>>> {
        let out_g = linear_backward(&pass.spp.out, &self.output, grad_logits)?;
        let trunk_out = pass.activations.last().expect("trunk output");
        let (mut g, spp_g) = spp_head_backward(
            trunk_out.dims(),
            &self.config.head.scales(),
            &self.spp,
            &pass.spp,
            &out_g.input,
        )?;
        let mut conv_grads: Vec<(Vec<T>, Vec<T>)> = Vec::new();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let x = &pass.activations[i];
            g = match l {
                Layer::Conv { kernel, afdc } => {
                    let cg = if *afdc {
                        afdc_batch_backward(x, &pass.weights, kernel, &pass.rates, &g)?
                    } else {
                        conv2d_backward(x, kernel, &g)?
                    };
                    conv_grads.push((cg.weights.into_values(), cg.bias));
                    cg.input
                }
                Layer::Relu => relu_backward(x, &g)?,
                Layer::Pool { k } => avg_pool_backward(x.dims(), *k, &g)?,
            };
        }
        let mut grads = Vec::new();
        for (w, b) in conv_grads.into_iter().rev() {
            grads.push(w);
            grads.push(b);
        }
        for (w, b) in spp_g {
            grads.push(w);
            grads.push(b);
        }
        grads.push(out_g.weights);
        grads.push(out_g.bias);
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afdc::{compute_ratio, interpolation_weights, DilationRate};
    use crate::tensor::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(afdc: bool) -> NetworkConfig {
        let mut c = NetworkConfig::experiment(afdc);
        c.blocks.truncate(4);
        c.head = super::super::HeadConfig::Spp { scales: vec![1, 2] };
        c.feature_dim = 8;
        c
    }

    fn input(rng: &mut ChaCha8Rng, b: usize, s: usize) -> Tensor<f64> {
        Tensor::from_fn(Dims::new(b, 1, s, s), |_, _, _, _| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn afdc_is_parameter_free() {
        let mut r1 = ChaCha8Rng::seed_from_u64(0);
        let mut r2 = ChaCha8Rng::seed_from_u64(0);
        let a = Model::<f32>::build(&NetworkConfig::desk_default(true), &mut r1).unwrap();
        let v = Model::<f32>::build(&NetworkConfig::desk_default(false), &mut r2).unwrap();
        assert_eq!(a.param_count(), v.param_count());
        assert_eq!(a.parameters(), v.parameters());
    }

    #[test]
    fn rejects_empty() {
        let mut c = tiny(true);
        c.blocks.clear();
        assert!(Model::<f64>::build(&c, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn outputs_are_simplex_and_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Model::<f32>::build(&tiny(true), &mut rng).unwrap();
        let set = DilationRateSet::three();
        let one = input(&mut rng, 1, 12).cast::<f32>();
        let x = Tensor::stack(&[one.clone(), one]).unwrap();
        let w = vec![interpolation_weights(&compute_ratio(15, 10).unwrap(), &set).unwrap(); 2];
        let p = m.forward(&x, &w, &set).unwrap().distributions();
        assert_eq!(p[0], p[1]);
        for d in &p {
            assert!((d.as_array().iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn square_batch_ignores_afdc_flag() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Model::<f64>::build(&tiny(true), &mut rng).unwrap();
        let v = m.with_afdc(false);
        let set = DilationRateSet::seven();
        let x = input(&mut rng, 3, 10);
        let w = vec![InterpolationWeights::one_hot(&set, DilationRate::IDENTITY).unwrap(); 3];
        let a = m.forward(&x, &w, &set).unwrap();
        let b = v.forward(&x, &w, &set).unwrap();
        assert_eq!(a.logits, b.logits);
    }

    #[test]
    fn seeded_build_is_reproducible() {
        let build = || Model::<f32>::build(&tiny(true), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(build(), build());
    }

    #[test]
    fn spatial_mismatch_names_layer() {
        let mut c = tiny(false);
        c.head = super::super::HeadConfig::Spp { scales: vec![4] };
        let m = Model::<f64>::build(&c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let set = DilationRateSet::identity_only();
        let x = Tensor::zeros(Dims::new(1, 1, 5, 5));
        let w = vec![InterpolationWeights::one_hot(&set, DilationRate::IDENTITY).unwrap()];
        let err = m.forward(&x, &w, &set).unwrap_err();
        assert!(matches!(err, Error::Config { index: 4, .. }), "{err}");
    }

    #[test]
    fn whole_model_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Model::<f64>::build(&tiny(true), &mut rng).unwrap();
        let set = DilationRateSet::seven();
        let x = input(&mut rng, 2, 9);
        let w: Vec<_> = [(13, 10), (10, 25)]
            .iter()
            .map(|&(h, ww)| interpolation_weights(&compute_ratio(h, ww).unwrap(), &set).unwrap())
            .collect();
        let proj: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pass = m.forward(&x, &w, &set).unwrap();
        let g = Tensor::new(pass.logits.dims(), proj.clone()).unwrap();
        let grads = m.backward(&pass, &g).unwrap();
        for (idx, p) in m.parameters().iter().enumerate() {
            let rep = grad_check(
                |v| {
                    let mut mm = m.clone();
                    mm.parameters_mut()[idx].copy_from_slice(v);
                    let l = mm.forward(&x, &w, &set).unwrap().logits;
                    l.values().iter().zip(&proj).map(|(a, b)| a * b).sum()
                },
                p,
                &grads[idx],
                1e-5,
            );
            assert!(rep.passes(1e-4), "param {idx}: {rep:?}");
        }
    }
}
