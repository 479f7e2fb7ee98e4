use serde::{Deserialize, Serialize};

use super::emd_loss;
use crate::error::{invalid, Result};
use crate::model::{binarize, ScoreDistribution, HIGH_THRESHOLD, SCORE_BINS};

/// Evaluation metrics over mean scores. A correlation is `None` when either
/// side has zero variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cls_acc: f64,
    pub mse: f64,
    /// Mean EMD, `r = 1` unless stated otherwise.
    pub emd: f64,
    pub srcc: Option<f64>,
    pub lcc: Option<f64>,
}

/// Pearson correlation, `None` for fewer than two points or zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

pub fn metrics(predictions: &[ScoreDistribution], targets: &[ScoreDistribution]) -> Result<MetricReport> {
    metrics_with_r(predictions, targets, 1.0)
}

/// [`metrics`] with EMD exponent `r`.
pub fn metrics_with_r(predictions: &[ScoreDistribution], targets: &[ScoreDistribution], r: f64) -> Result<MetricReport> {
    if predictions.len() != targets.len() {
        return Err(invalid(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(invalid("metrics need at least one sample"));
    }
    let pm: Vec<f64> = predictions.iter().map(|p| p.mean()).collect();
    let tm: Vec<f64> = targets.iter().map(|p| p.mean()).collect();
    let n = pm.len() as f64;
    let hits = pm
        .iter()
        .zip(&tm)
        .filter(|(a, b)| binarize(**a, HIGH_THRESHOLD) == binarize(**b, HIGH_THRESHOLD))
        .count();
    let mse = pm.iter().zip(&tm).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let mut emd = 0.0;
    for (p, t) in predictions.iter().zip(targets) {
        emd += emd_loss(p, t, r)?;
    }
    Ok(MetricReport {
        cls_acc: hits as f64 / n,
        mse,
        emd: emd / n,
        srcc: spearman(&pm, &tm),
        lcc: pearson(&pm, &tm),
    })
}

/// The constant prediction minimizing mean `r = 1` EMD over `targets`: the
/// bin-wise median of their CDFs.
pub fn best_constant_predictor(targets: &[ScoreDistribution]) -> Result<ScoreDistribution> {
    if targets.is_empty() {
        return Err(invalid("no targets"));
    }
    let cdfs: Vec<[f64; SCORE_BINS]> = targets.iter().map(|t| t.cdf()).collect();
    let mut cdf = [0.0; SCORE_BINS];
    for (k, c) in cdf.iter_mut().enumerate() {
        let mut col: Vec<f64> = cdfs.iter().map(|v| v[k]).collect();
        col.sort_by(f64::total_cmp);
        let m = col.len();
        *c = if m % 2 == 1 {
            col[m / 2]
        } else {
            0.5 * (col[m / 2 - 1] + col[m / 2])
        };
    }
    cdf[SCORE_BINS - 1] = 1.0;
    let mut p = [0.0; SCORE_BINS];
    let mut prev = 0.0;
    for k in 0..SCORE_BINS {
        p[k] = (cdf[k] - prev).max(0.0);
        prev = cdf[k].max(prev);
    }
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    ScoreDistribution::new(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist_with_mean(m: f64) -> ScoreDistribution {
        ScoreDistribution::discretized_gaussian(m, 1.0).unwrap()
    }

    #[test]
    fn perfect_agreement() {
        let t: Vec<_> = [3.0, 5.5, 7.0, 4.2].iter().map(|&m| dist_with_mean(m)).collect();
        let r = metrics(&t, &t).unwrap();
        assert_eq!((r.cls_acc, r.mse, r.emd), (1.0, 0.0, 0.0));
        assert!((r.srcc.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.lcc.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reversed_ranks() {
        let p: Vec<_> = [3.0, 4.0, 5.0, 6.0].iter().map(|&m| dist_with_mean(m)).collect();
        let t: Vec<_> = p.iter().rev().copied().collect();
        assert!((metrics(&p, &t).unwrap().srcc.unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_pearson_and_mse() {
        let (pm, tm) = ([2.0, 4.0, 6.0], [1.0, 2.0, 3.0]);
        assert!((pearson(&pm, &tm).unwrap() - 1.0).abs() < 1e-12);
        let mse = pm.iter().zip(&tm).map(|(a, b): (&f64, &f64)| (a - b).powi(2)).sum::<f64>() / 3.0;
        assert!((mse - 14.0 / 3.0).abs() < 1e-12);
        let pts = [1, 2, 3].map(|b| ScoreDistribution::point_mass(b).unwrap());
        let pp = [2, 4, 6].map(|b| ScoreDistribution::point_mass(b).unwrap());
        let r = metrics(&pp, &pts).unwrap();
        assert!((r.mse - 14.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn undefined_correlation() {
        let p = vec![ScoreDistribution::uniform(); 3];
        let t: Vec<_> = [3.0, 5.0, 7.0].iter().map(|&m| dist_with_mean(m)).collect();
        let r = metrics(&p, &t).unwrap();
        assert_eq!((r.srcc, r.lcc), (None, None));
        assert!(metrics(&p, &t[..2]).is_err());
    }

    #[test]
    fn ties_share_rank() {
        assert_eq!(average_ranks(&[1.0, 3.0, 1.0, 2.0]), vec![1.5, 4.0, 1.5, 3.0]);
    }

    #[test]
    fn constant_predictor_beats_alternatives() {
        let t: Vec<_> = [3.0, 5.0, 5.5, 6.0, 8.0].iter().map(|&m| dist_with_mean(m)).collect();
        let best = best_constant_predictor(&t).unwrap();
        let cost = |c: &ScoreDistribution| t.iter().map(|x| emd_loss(c, x, 1.0).unwrap()).sum::<f64>();
        for alt in [ScoreDistribution::uniform(), dist_with_mean(5.5), dist_with_mean(5.0)] {
            assert!(cost(&best) <= cost(&alt) + 1e-12);
        }
    }
}
