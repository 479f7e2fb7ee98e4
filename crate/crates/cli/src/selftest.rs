//! Built-in invariant suites behind `afdc selftest`.

use afdc::afdc::{
    afdc_batch_backward, afdc_batch_forward, afdc_direct, compute_ratio, interpolation_weights, AspectRatio,
    DilationRate, DilationRateSet, InterpolationWeights, Orientation,
};
use afdc::cost::CostNet;
use afdc::model::{spp_head, spp_head_backward, BlockConfig, HeadConfig, Model, NetworkConfig, ScoreDistribution};
use afdc::pipeline::GroupBoundaries;
use afdc::tensor::{
    conv2d_backward, conv2d_forward, grad_check, resize_nearest, softmax, ConvKernel, Dense, Dims, Real, Tensor,
};
use afdc::training::{emd_logit_grad, emd_loss};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub checks: usize,
    pub max_err: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelftestReport {
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

impl SelftestReport {
    pub fn failing(&self) -> Vec<&'static str> {
        self.suites.iter().filter(|s| !s.passed).map(|s| s.name).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.suites {
            s.push_str(&format!(
                "{} {:<20} checks={:<5} max_err={:.3e} tol={:.0e}{}\n",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.checks,
                r.max_err,
                r.tolerance,
                if r.detail.is_empty() { String::new() } else { format!("  {}", r.detail) }
            ));
        }
        let failed = self.failing();
        s.push_str(&format!(
            "{} suites, {} passed{}\n",
            self.suites.len(),
            self.suites.len() - failed.len(),
            if failed.is_empty() { String::new() } else { format!(", failing: {}", failed.join(", ")) }
        ));
        s
    }
}

pub const SUITES: [&str; 7] = [
    "distributivity",
    "weight_contract",
    "batch_equivalence",
    "receptive_field",
    "gradients",
    "emd_oracle",
    "param_freeness",
];

/// Runs every suite. `fault` names a suite whose comparison gets perturbed.
pub fn run_all(fault: Option<&str>) -> SelftestReport {
    let eps = |name: &str| if fault == Some(name) { 1e-3 } else { 0.0 };
    let suites = vec![
        distributivity(eps("distributivity")),
        weight_contract(eps("weight_contract")),
        batch_equivalence(eps("batch_equivalence")),
        receptive_field(eps("receptive_field")),
        gradients(eps("gradients")),
        emd_oracle(eps("emd_oracle")),
        param_freeness(eps("param_freeness")),
    ];
    SelftestReport {
        passed: suites.iter().all(|s| s.passed),
        suites,
    }
}

fn report(name: &'static str, checks: usize, max_err: f64, tolerance: f64, detail: String) -> SuiteReport {
    SuiteReport {
        name,
        passed: max_err.is_finite() && max_err <= tolerance,
        checks,
        max_err,
        tolerance,
        detail,
    }
}

fn rand_tensor<T: Real>(rng: &mut ChaCha8Rng, dims: Dims) -> Tensor<T> {
    Tensor::from_fn(dims, |_, _, _, _| T::cast(rng.gen_range(-1.0..1.0)))
}

fn rand_kernel<T: Real>(rng: &mut ChaCha8Rng, out_c: usize, in_c: usize, k: usize) -> ConvKernel<T> {
    let w = rand_tensor(rng, Dims::new(out_c, in_c, k, k));
    let b = (0..out_c).map(|_| T::cast(rng.gen_range(-0.5..0.5))).collect();
    ConvKernel::new(w, b).expect("shapes agree")
}

/// Dims `(h, w)` with `max/min` in `[1, 4]` and a random orientation.
fn rand_ratio(rng: &mut ChaCha8Rng, r_max: f64) -> AspectRatio {
    let short = rng.gen_range(20..60usize);
    let long = ((short as f64) * rng.gen_range(1.0..r_max)).round() as usize;
    if rng.gen_bool(0.5) {
        compute_ratio(long, short).expect("positive")
    } else {
        compute_ratio(short, long).expect("positive")
    }
}

/// All branch kernels of `kernel` folded into one kernel of the widest
/// extent, each weighted by its interpolation weight.
fn blended_kernel<T: Real>(kernel: &ConvKernel<T>, w: &InterpolationWeights, set: &DilationRateSet) -> ConvKernel<T> {
    let d = kernel.weights.dims();
    let k = d.height;
    let dmax = set.rates().iter().map(|r| r.dilation()).max().unwrap_or(1);
    let e = (k - 1) * dmax + 1;
    let mut big = Tensor::<T>::zeros(Dims::new(d.batch, d.channels, e, e));
    let c = (e - 1) / 2;
    let half = (k - 1) / 2;
    for (rate, &wk) in set.rates().iter().zip(w.as_slice()) {
        if wk == 0.0 {
            continue;
        }
        for o in 0..d.batch {
            for i in 0..d.channels {
                for y in 0..k {
                    for x in 0..k {
                        let by = c + y * rate.vertical - half * rate.vertical;
                        let bx = c + x * rate.horizontal - half * rate.horizontal;
                        let v = big.at(o, i, by, bx) + T::cast(wk) * kernel.weights.at(o, i, y, x);
                        big.set(o, i, by, bx, v);
                    }
                }
            }
        }
    }
    ConvKernel::new(big, kernel.bias.clone())
        .expect("shapes agree")
        .with_stride(kernel.stride.0, kernel.stride.1)
        .with_padding(c, c)
}

fn distributivity_trial<T: Real>(rng: &mut ChaCha8Rng, eps: f64) -> f64 {
    let set = DilationRateSet::seven();
    let in_c = rng.gen_range(1..=3);
    let out_c = rng.gen_range(1..=3);
    let k = *[1usize, 3, 5].choose(rng).expect("nonempty");
    let s = rng.gen_range(1..=2);
    let (h, w) = (rng.gen_range(6..14), rng.gen_range(6..14));
    let x = rand_tensor::<T>(rng, Dims::new(1, in_c, h, w));
    let kernel = rand_kernel::<T>(rng, out_c, in_c, k).with_stride(s, s);
    let ratio = rand_ratio(rng, 4.0);
    let weights = interpolation_weights(&ratio, &set).expect("in range");
    let summed = afdc_direct(&x, &kernel, &ratio).expect("valid").map(|v| v + T::cast(eps));
    let blended = conv2d_forward(&x, &blended_kernel(&kernel, &weights, &set)).expect("valid");
    summed.rel_err(&blended).unwrap_or(f64::INFINITY)
}

fn distributivity(eps: f64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 300;
    let (mut e64, mut e32) = (0.0f64, 0.0f64);
    for _ in 0..n {
        e64 = e64.max(distributivity_trial::<f64>(&mut rng, eps));
        e32 = e32.max(distributivity_trial::<f32>(&mut rng, eps));
    }
    // report relative to each precision's tolerance
    let worst = (e64 / 1e-12).max(e32 / 1e-5) * 1e-12;
    report(
        "distributivity",
        2 * n,
        worst,
        1e-12,
        format!("f64 {e64:.2e} (tol 1e-12), f32 {e32:.2e} (tol 1e-5)"),
    )
}

fn weight_contract(eps: f64) -> SuiteReport {
    let set = DilationRateSet::seven();
    let mut worst = 0.0f64;
    let mut checks = 0;
    let mut bad = String::new();
    for hundredths in 100..=400usize {
        for tall in [true, false] {
            let ratio = if tall {
                compute_ratio(hundredths, 100)
            } else {
                compute_ratio(100, hundredths)
            }
            .expect("positive");
            let r = hundredths as f64 / 100.0;
            let w = interpolation_weights(&ratio, &set).expect("in range");
            let orient = if hundredths == 100 { Orientation::Square } else { ratio.orientation() };
            let mut expected = vec![0.0; set.len()];
            let (lo, hi) = (r.floor() as usize, r.ceil() as usize);
            let at = |d: usize| set.position(DilationRate::along(orient, d)).expect("in set");
            if lo == hi {
                expected[at(lo)] = 1.0;
            } else {
                expected[at(lo)] += hi as f64 - r;
                expected[at(hi)] += r - lo as f64;
            }
            let sum: f64 = w.as_slice().iter().sum::<f64>() + eps;
            let err = w
                .as_slice()
                .iter()
                .zip(&expected)
                .map(|(a, b)| (a - b).abs())
                .fold((sum - 1.0).abs(), f64::max);
            if w.as_slice().iter().any(|&v| v < 0.0) || w.nonzero() > 2 {
                worst = f64::INFINITY;
                bad = format!("r={r} tall={tall}");
            }
            worst = worst.max(err);
            checks += 1;
        }
    }
    report("weight_contract", checks, worst, 1e-12, bad)
}

fn batch_equivalence(eps: f64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let groups = GroupBoundaries::default();
    let n = 40;
    let mut worst = 0.0f64;
    for _ in 0..n {
        let g = rng.gen_range(0..groups.len());
        let (lo, hi) = groups.interval(g);
        let set = groups.rates_for(g);
        let b = rng.gen_range(2..=5);
        let ratios: Vec<AspectRatio> = (0..b)
            .map(|_| loop {
                let r = rand_ratio(&mut rng, 4.0);
                if groups.index_of(r.value()) == g && r.value() >= lo && r.value() <= hi {
                    break r;
                }
            })
            .collect();
        let c = rng.gen_range(1..=3);
        let k = *[1usize, 3, 5].choose(&mut rng).expect("nonempty");
        let s = rng.gen_range(1..=2);
        let x = rand_tensor::<f32>(&mut rng, Dims::new(b, c, 10, 10));
        let kernel = rand_kernel::<f32>(&mut rng, 2, c, k).with_stride(s, s);
        let w: Vec<_> = ratios.iter().map(|r| interpolation_weights(r, &set).expect("in group")).collect();
        let y = afdc_batch_forward(&x, &w, &kernel, &set).expect("valid");
        for (i, r) in ratios.iter().enumerate() {
            let direct = afdc_direct(&x.sample(i), &kernel, r).expect("valid").map(|v| v + eps as f32);
            worst = worst.max(y.sample(i).rel_err(&direct).unwrap_or(f64::INFINITY));
        }
    }
    report("batch_equivalence", n, worst, 1e-6, String::new())
}

fn receptive_field(eps: f64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    let mut checks = 0;
    for s in 2..=4usize {
        for horizontal in [true, false] {
            let (h, w) = (rng.gen_range(5..9), rng.gen_range(5..9));
            let x = rand_tensor::<f64>(&mut rng, Dims::new(1, 2, h, w));
            let kernel = rand_kernel::<f64>(&mut rng, 2, 2, 3);
            let (stretched, dil) = if horizontal {
                (resize_nearest(&x, h, w * s), (1, s))
            } else {
                (resize_nearest(&x, h * s, w), (s, 1))
            };
            let stretched = stretched.expect("valid");
            let vanilla = conv2d_forward(&x, &kernel).expect("valid");
            let dilated = conv2d_forward(&stretched, &kernel.clone().with_dilation(dil.0, dil.1)).expect("valid");
            let vd = vanilla.dims();
            for o in 0..vd.channels {
                for y in 0..vd.height {
                    for xx in 0..vd.width {
                        let (dy, dx) = if horizontal { (y, xx * s) } else { (y * s, xx) };
                        let diff = (dilated.at(0, o, dy, dx) - vanilla.at(0, o, y, xx) - eps).abs();
                        worst = worst.max(diff);
                        checks += 1;
                    }
                }
            }
        }
    }
    report("receptive_field", checks, worst, 0.0, String::new())
}

fn flat(t: &Tensor<f64>) -> Vec<f64> {
    t.values().to_vec()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gradients(eps: f64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let step = 1e-6;
    let mut worst = 0.0f64;
    let mut checks = 0;
    let mut note = |name: &str, r: afdc::tensor::GradCheckReport, worst: &mut f64, parts: &mut Vec<String>| {
        let e = if r.all_finite { r.max_rel_err } else { f64::INFINITY };
        *worst = worst.max(e);
        checks += r.checked;
        parts.push(format!("{name} {e:.1e}"));
    };
    let mut parts = Vec::new();

    // plain conv: input, weights, bias
    let x = rand_tensor::<f64>(&mut rng, Dims::new(2, 2, 7, 6));
    let kernel = rand_kernel::<f64>(&mut rng, 3, 2, 3).with_dilation(1, 2).with_stride(2, 1).with_padding(1, 2);
    let od = kernel.output_dims(x.dims()).expect("valid");
    let g = rand_tensor::<f64>(&mut rng, od);
    let grads = conv2d_backward(&x, &kernel, &g).expect("valid");
    let obj_x = |v: &[f64]| {
        let t = Tensor::new(x.dims(), v.to_vec()).expect("dims");
        dot(conv2d_forward(&t, &kernel).expect("valid").values(), g.values())
    };
    let mut an = flat(&grads.input);
    an[0] += eps;
    note("conv.input", grad_check(obj_x, x.values(), &an, step), &mut worst, &mut parts);
    let obj_w = |v: &[f64]| {
        let mut k = kernel.clone();
        k.weights = Tensor::new(kernel.weights.dims(), v.to_vec()).expect("dims");
        dot(conv2d_forward(&x, &k).expect("valid").values(), g.values())
    };
    note("conv.weights", grad_check(obj_w, kernel.weights.values(), &flat(&grads.weights), step), &mut worst, &mut parts);
    let obj_b = |v: &[f64]| {
        let mut k = kernel.clone();
        k.bias = v.to_vec();
        dot(conv2d_forward(&x, &k).expect("valid").values(), g.values())
    };
    note("conv.bias", grad_check(obj_b, &kernel.bias, &grads.bias, step), &mut worst, &mut parts);

    // AFDC batch with mixed weights
    let set = DilationRateSet::seven();
    let x = rand_tensor::<f64>(&mut rng, Dims::new(3, 2, 9, 9));
    let kernel = rand_kernel::<f64>(&mut rng, 2, 2, 3);
    let w: Vec<_> = (0..3)
        .map(|_| interpolation_weights(&rand_ratio(&mut rng, 4.0), &set).expect("in range"))
        .collect();
    let y = afdc_batch_forward(&x, &w, &kernel, &set).expect("valid");
    let g = rand_tensor::<f64>(&mut rng, y.dims());
    let grads = afdc_batch_backward(&x, &w, &kernel, &set, &g).expect("valid");
    let obj_x = |v: &[f64]| {
        let t = Tensor::new(x.dims(), v.to_vec()).expect("dims");
        dot(afdc_batch_forward(&t, &w, &kernel, &set).expect("valid").values(), g.values())
    };
    note("afdc.input", grad_check(obj_x, x.values(), &flat(&grads.input), step), &mut worst, &mut parts);
    let obj_w = |v: &[f64]| {
        let mut k = kernel.clone();
        k.weights = Tensor::new(kernel.weights.dims(), v.to_vec()).expect("dims");
        dot(afdc_batch_forward(&x, &w, &k, &set).expect("valid").values(), g.values())
    };
    note("afdc.weights", grad_check(obj_w, kernel.weights.values(), &flat(&grads.weights), step), &mut worst, &mut parts);

    // SPP head
    let feats = rand_tensor::<f64>(&mut rng, Dims::new(2, 3, 5, 5));
    let scales = [1usize, 2];
    let denses: Vec<Dense<f64>> = scales
        .iter()
        .map(|&s| {
            let n_in = 3 * s * s;
            let wv = (0..n_in * 4).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let bv = (0..4).map(|_| rng.gen_range(0.1..0.5)).collect();
            Dense::new(n_in, 4, wv, bv).expect("shapes")
        })
        .collect();
    let pass = spp_head(&feats, &scales, &denses).expect("valid");
    let g = rand_tensor::<f64>(&mut rng, pass.out.dims());
    let (gf, gd) = spp_head_backward(feats.dims(), &scales, &denses, &pass, &g).expect("valid");
    let obj_f = |v: &[f64]| {
        let t = Tensor::new(feats.dims(), v.to_vec()).expect("dims");
        dot(spp_head(&t, &scales, &denses).expect("valid").out.values(), g.values())
    };
    note("spp.features", grad_check(obj_f, feats.values(), &flat(&gf), step), &mut worst, &mut parts);
    let obj_d = |v: &[f64]| {
        let mut d = denses.clone();
        d[1].weights = v.to_vec();
        dot(spp_head(&feats, &scales, &d).expect("valid").out.values(), g.values())
    };
    note("spp.dense", grad_check(obj_d, &denses[1].weights, &gd[1].0, step), &mut worst, &mut parts);

    // softmax + EMD r=2 on logits
    for _ in 0..5 {
        let z: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let target = rand_simplex(&mut rng);
        let (_, gz) = emd_logit_grad(&z, &target, 2.0).expect("valid");
        let obj = |v: &[f64]| {
            let p = ScoreDistribution::from_slice(&softmax(v)).expect("simplex");
            emd_loss(&p, &target, 2.0).expect("valid")
        };
        note("softmax_emd", grad_check(obj, &z, &gz, step), &mut worst, &mut parts);
    }
    report("gradients", checks, worst, 1e-4, parts.join(", "))
}

fn rand_simplex(rng: &mut ChaCha8Rng) -> ScoreDistribution {
    let raw: Vec<f64> = (0..10).map(|_| -rng.gen_range(1e-9f64..1.0).ln()).collect();
    let s: f64 = raw.iter().sum();
    ScoreDistribution::from_slice(&raw.iter().map(|v| v / s).collect::<Vec<_>>()).expect("simplex")
}

fn cdf_emd(a: &[f64; 10], b: &[f64; 10], r: f64) -> f64 {
    let (mut ca, mut cb, mut acc) = (0.0, 0.0, 0.0);
    for k in 0..10 {
        ca += a[k];
        cb += b[k];
        acc += (ca - cb).abs().powf(r);
    }
    (acc / 10.0).powf(1.0 / r)
}

fn emd_oracle(eps: f64) -> SuiteReport {
    let mut worst = 0.0f64;
    let mut checks = 0;
    for i in 1..=10 {
        for j in i + 1..=10 {
            let e = emd_loss(&ScoreDistribution::point_mass(i).expect("bin"), &ScoreDistribution::point_mass(j).expect("bin"), 1.0).expect("valid");
            worst = worst.max((e + eps - (j - i) as f64 / 10.0).abs());
            checks += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..500 {
        let (a, b) = (rand_simplex(&mut rng), rand_simplex(&mut rng));
        for r in [1.0, 2.0] {
            let e = emd_loss(&a, &b, r).expect("valid");
            worst = worst.max((e - cdf_emd(a.as_array(), b.as_array(), r)).abs());
            checks += 1;
        }
    }
    report("emd_oracle", checks, worst, 1e-12, String::new())
}

/// Random valid trunk: conv/relu/pool blocks with a consistent channel chain.
pub fn random_network(rng: &mut impl Rng) -> NetworkConfig {
    let input_channels = rng.gen_range(1..=3);
    let mut blocks = Vec::new();
    let mut c = input_channels;
    for _ in 0..rng.gen_range(1..=4) {
        let out_c = rng.gen_range(1..=8);
        blocks.push(BlockConfig::Conv {
            in_c: c,
            out_c,
            k: [1, 3, 5][rng.gen_range(0..3)],
            stride: rng.gen_range(1..=2),
            afdc: rng.gen_bool(0.7),
        });
        c = out_c;
        if rng.gen_bool(0.5) {
            blocks.push(BlockConfig::Relu);
        }
        if rng.gen_bool(0.2) {
            blocks.push(BlockConfig::Pool { k: 2 });
        }
    }
    let (head, feature_dim) = if rng.gen_bool(0.5) {
        (HeadConfig::Global, rng.gen_range(2..=16))
    } else {
        (HeadConfig::Spp { scales: vec![1, 2] }, 2 * rng.gen_range(1..=8))
    };
    NetworkConfig {
        input_channels,
        blocks,
        head,
        feature_dim,
        score_bins: 10,
    }
}

fn param_freeness(eps: f64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let n = 20;
    let mut worst = 0.0f64;
    for _ in 0..n {
        let cfg = random_network(&mut rng);
        let on = cfg.with_afdc(true);
        let off = cfg.with_afdc(false);
        let mut init = ChaCha8Rng::seed_from_u64(0);
        let a = Model::<f32>::build(&on, &mut init).map(|m| m.param_count());
        let b = Model::<f32>::build(&off, &mut init).map(|m| m.param_count());
        let ca = CostNet::from_network(&on).map(|n| n.count_params());
        let cb = CostNet::from_network(&off).map(|n| n.count_params());
        match (a, b, ca, cb) {
            (Ok(a), Ok(b), Ok(ca), Ok(cb)) => {
                let diff = (a as f64 - b as f64).abs() + (ca as f64 - cb as f64).abs() + (a as f64 - ca as f64).abs();
                worst = worst.max(diff + eps);
            }
            _ => worst = f64::INFINITY,
        }
    }
    report("param_freeness", n, worst, 0.0, String::new())
}
