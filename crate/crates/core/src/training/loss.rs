use crate::error::{invalid, Result};
use crate::model::{ScoreDistribution, SCORE_BINS};
use crate::tensor::{softmax, softmax_backward};

fn check_r(r: f64) -> Result<()> {
    if r >= 1.0 && r.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("EMD exponent must be >= 1, got {r}")))
    }
}

/// `((1/N) sum_k |CDF_p(k) - CDF_p_hat(k)|^r)^(1/r)` over the `N = 10` bins.
pub fn emd_loss(p_hat: &ScoreDistribution, p: &ScoreDistribution, r: f64) -> Result<f64> {
    Ok(emd_with_grad(p_hat, p, r)?.0)
}

/// EMD and its gradient with respect to `p_hat`.
///
/// With `d_k = CDF_p_hat(k) - CDF_p(k)` and `S = sum |d_k|^r`, the partial
/// on `d_k` is `(S/N)^(1/r - 1) |d_k|^(r-1) sign(d_k) / N`; `p_hat_i` feeds
/// every `d_k` with `k >= i`. At `r = 1` this is the sign subgradient with
/// `sign(0) = 0`; at `S = 0` the gradient is zero.
pub fn emd_with_grad(p_hat: &ScoreDistribution, p: &ScoreDistribution, r: f64) -> Result<(f64, [f64; SCORE_BINS])> {
    check_r(r)?;
    let n = SCORE_BINS as f64;
    let (ch, cp) = (p_hat.cdf(), p.cdf());
    let mut d = [0.0; SCORE_BINS];
    for k in 0..SCORE_BINS {
        d[k] = ch[k] - cp[k];
    }
    let s: f64 = d.iter().map(|v| v.abs().powf(r)).sum();
    let loss = (s / n).powf(1.0 / r);
    let mut grad = [0.0; SCORE_BINS];
    if s == 0.0 {
        return Ok((loss, grad));
    }
    let outer = if r == 1.0 { 1.0 } else { (s / n).powf(1.0 / r - 1.0) };
    let mut acc = 0.0;
    for k in (0..SCORE_BINS).rev() {
        let dk = d[k];
        let sign = if dk > 0.0 {
            1.0
        } else if dk < 0.0 {
            -1.0
        } else {
            0.0
        };
        let mag = if r == 1.0 { 1.0 } else { dk.abs().powf(r - 1.0) };
        acc += outer * mag * sign / n;
        grad[k] = acc;
    }
    Ok((loss, grad))
}

/// EMD of `softmax(logits)` against `target` and its gradient on the logits.
pub fn emd_logit_grad(logits: &[f64], target: &ScoreDistribution, r: f64) -> Result<(f64, Vec<f64>)> {
    let probs = softmax(logits);
    let p_hat = ScoreDistribution::from_slice(&probs)?;
    let (loss, gp) = emd_with_grad(&p_hat, target, r)?;
    Ok((loss, softmax_backward(&probs, &gp)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use proptest::prelude::*;

    fn oracle(a: &ScoreDistribution, b: &ScoreDistribution, r: f64) -> f64 {
        let mut s = 0.0;
        for k in 0..SCORE_BINS {
            let ca: f64 = a.as_array()[..=k].iter().sum();
            let cb: f64 = b.as_array()[..=k].iter().sum();
            s += (ca - cb).abs().powf(r);
        }
        (s / SCORE_BINS as f64).powf(1.0 / r)
    }

    fn simplex(raw: Vec<f64>) -> ScoreDistribution {
        let s: f64 = raw.iter().sum();
        ScoreDistribution::from_slice(&raw.iter().map(|v| v / s).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn point_masses() {
        for i in 1..=10 {
            for j in 1..=10 {
                let a = ScoreDistribution::point_mass(i).unwrap();
                let b = ScoreDistribution::point_mass(j).unwrap();
                let e = emd_loss(&a, &b, 1.0).unwrap();
                assert!((e - i.abs_diff(j) as f64 / 10.0).abs() < 1e-15, "{i},{j}");
            }
        }
        let u = ScoreDistribution::uniform();
        let e = emd_loss(&u, &ScoreDistribution::point_mass(1).unwrap(), 1.0).unwrap();
        assert!((e - 0.45).abs() < 1e-12);
        assert_eq!(emd_loss(&u, &u, 2.0).unwrap(), 0.0);
        assert!(emd_loss(&u, &u, 0.5).is_err());
    }

    #[test]
    fn logit_gradient_r2() {
        let target = simplex((1..=10).map(|v| (v as f64 * 0.7).sin() + 1.5).collect());
        let logits: Vec<f64> = (0..10).map(|v| (v as f64 * 1.3).cos()).collect();
        let (_, g) = emd_logit_grad(&logits, &target, 2.0).unwrap();
        let rep = grad_check(|z| emd_logit_grad(z, &target, 2.0).unwrap().0, &logits, &g, 1e-6);
        assert!(rep.passes(1e-4), "{rep:?}");
    }

    proptest! {
        #[test]
        fn matches_oracle_and_is_a_metric(
            a in proptest::collection::vec(0.01f64..1.0, 10),
            b in proptest::collection::vec(0.01f64..1.0, 10),
            r in prop_oneof![Just(1.0), Just(2.0), 1.0f64..3.0],
        ) {
            let (a, b) = (simplex(a), simplex(b));
            let e = emd_loss(&a, &b, r).unwrap();
            prop_assert!((e - oracle(&a, &b, r)).abs() <= 1e-12);
            prop_assert!(e >= 0.0);
            prop_assert!((e - emd_loss(&b, &a, r).unwrap()).abs() <= 1e-15);
            prop_assert_eq!(emd_loss(&a, &a, r).unwrap(), 0.0);
        }
    }
}
