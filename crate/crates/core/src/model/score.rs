use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCORE_BINS: usize = 10;

/// Binary label threshold on the mean score.
pub const HIGH_THRESHOLD: f64 = 5.0;

const SIMPLEX_TOL: f64 = 1e-6;

/// Probability vector over the ordinal scores `1..=10`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScoreDistribution {
    p: [f64; SCORE_BINS],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    High,
    Low,
}

impl ScoreDistribution {
    /// Accepts `p` when every entry is non-negative and the sum is within
    /// 1e-6 of one.
    pub fn new(p: [f64; SCORE_BINS]) -> Result<Self> {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("score distribution".into()));
        }
        if let Some(v) = p.iter().find(|&&v| v < 0.0) {
            return Err(Error::NotSimplex(format!("negative entry {v}")));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::NotSimplex(format!("entries sum to {s}")));
        }
        Ok(ScoreDistribution { p })
    }

    pub fn from_slice(p: &[f64]) -> Result<Self> {
        let arr: [f64; SCORE_BINS] = p
            .try_into()
            .map_err(|_| Error::NotSimplex(format!("expected {SCORE_BINS} bins, got {}", p.len())))?;
        Self::new(arr)
    }

    pub fn uniform() -> Self {
        ScoreDistribution {
            p: [1.0 / SCORE_BINS as f64; SCORE_BINS],
        }
    }

    /// All mass on `bin` (1-based).
    pub fn point_mass(bin: usize) -> Result<Self> {
        if !(1..=SCORE_BINS).contains(&bin) {
            return Err(Error::InvalidArgument(format!("score bin {bin} outside 1..={SCORE_BINS}")));
        }
        let mut p = [0.0; SCORE_BINS];
        p[bin - 1] = 1.0;
        Ok(ScoreDistribution { p })
    }

    /// Gaussian density with the given mean and spread, sampled at the bin
    /// centers `1..=10` and normalized.
    pub fn discretized_gaussian(mean: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !mean.is_finite() {
            return Err(Error::InvalidArgument(format!("bad gaussian ({mean}, {sigma})")));
        }
        let mut p = [0.0; SCORE_BINS];
        for (i, v) in p.iter_mut().enumerate() {
            let z = ((i + 1) as f64 - mean) / sigma;
            *v = (-0.5 * z * z).exp();
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        Ok(ScoreDistribution { p })
    }

    pub fn as_array(&self) -> &[f64; SCORE_BINS] {
        &self.p
    }

    pub fn cdf(&self) -> [f64; SCORE_BINS] {
        let mut c = [0.0; SCORE_BINS];
        let mut acc = 0.0;
        for (o, &v) in c.iter_mut().zip(&self.p) {
            acc += v;
            *o = acc;
        }
        c
    }

    /// `sum_i i * p_i`, in `[1, 10]`.
    pub fn mean(&self) -> f64 {
        self.p.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum()
    }
}

impl TryFrom<Vec<f64>> for ScoreDistribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ScoreDistribution::from_slice(&v)
    }
}

impl From<ScoreDistribution> for Vec<f64> {
    fn from(s: ScoreDistribution) -> Self {
        s.p.to_vec()
    }
}

pub fn mean_score(p: &ScoreDistribution) -> f64 {
    p.mean()
}

/// `High` iff `mean > threshold`.
pub fn binarize(mean: f64, threshold: f64) -> Quality {
    if mean > threshold {
        Quality::High
    } else {
        Quality::Low
    }
}
