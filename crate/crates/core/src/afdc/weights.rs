use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AspectRatio, DilationRate, DilationRateSet, Orientation};
use crate::error::{invalid, Error, Result};

/// Zero-padded interpolation weight vector aligned with a [`DilationRateSet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationWeights {
    w: Vec<f64>,
}

impl InterpolationWeights {
    /// Wraps raw weights; they must be non-negative and sum to 1 within 1e-9.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::EmptyRateSet);
        }
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(invalid(format!("interpolation weights must be non-negative: {w:?}")));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("interpolation weights sum to {s}, not 1")));
        }
        Ok(InterpolationWeights { w })
    }

    pub fn one_hot(set: &DilationRateSet, rate: DilationRate) -> Result<Self> {
        let k = set.position(rate).ok_or(Error::RateNotInSet(rate.as_tuple()))?;
        let mut w = vec![0.0; set.len()];
        w[k] = 1.0;
        Ok(InterpolationWeights { w })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn nonzero(&self) -> usize {
        self.w.iter().filter(|&&v| v != 0.0).count()
    }

    /// Weight on `rate`, zero when absent from `set`.
    pub fn weight_of(&self, set: &DilationRateSet, rate: DilationRate) -> f64 {
        set.position(rate).map_or(0.0, |k| self.w[k])
    }

    /// Re-expresses these weights over `target`, which must contain every
    /// rate carrying nonzero weight.
    pub fn realign(&self, from: &DilationRateSet, target: &DilationRateSet) -> Result<Self> {
        let mut w = vec![0.0; target.len()];
        for (rate, &v) in from.rates().iter().zip(&self.w) {
            if v != 0.0 {
                let k = target.position(*rate).ok_or(Error::RateNotInSet(rate.as_tuple()))?;
                w[k] = v;
            }
        }
        Ok(InterpolationWeights { w })
    }

    /// Debug rows `sample_index,rate_i,rate_j,weight`, one per rate.
    pub fn csv_rows(&self, sample_index: usize, set: &DilationRateSet) -> Vec<String> {
        set.rates()
            .iter()
            .zip(&self.w)
            .map(|(r, w)| format!("{sample_index},{},{},{w}", r.vertical, r.horizontal))
            .collect()
    }
}

/// Interpolation weight of an integer rate for ratio `r`:
/// `r - (rate - 1)` when `rate - r` is in `[0, 1)`, `(rate + 1) - r` when it
/// is in `(-1, 0)`, zero otherwise. An integer `r` lands entirely on
/// `rate == r`.
pub fn rate_weight(rate: usize, r: f64) -> f64 {
    let rate = rate as f64;
    let delta = rate - r;
    if (0.0..1.0).contains(&delta) {
        r - (rate - 1.0)
    } else if delta > -1.0 && delta < 0.0 {
        (rate + 1.0) - r
    } else {
        0.0
    }
}

/// The ratio actually used for dilation: `r` clamped to the largest
/// dilation the set offers for the image's orientation.
pub fn effective_ratio(ratio: &AspectRatio, set: &DilationRateSet) -> f64 {
    let orientation = ratio.orientation();
    if orientation == Orientation::Square {
        return 1.0;
    }
    let max = set.max_dilation(orientation) as f64;
    let r = ratio.value();
    if r > max {
        log::warn!("aspect ratio {ratio} exceeds max dilation {max}; clamping");
        max
    } else {
        r
    }
}

/// Per-image weights blending the two integer dilations nearest to the
/// image's aspect ratio, placed on the orientation-matching pairs of `set`.
///
/// Tall originals use pairs `(1, d)`, wide ones `(d, 1)`, square ones the
/// identity. Ratios beyond the set's largest dilation clamp to it.
pub fn interpolation_weights(ratio: &AspectRatio, set: &DilationRateSet) -> Result<InterpolationWeights> {
    let orientation = ratio.orientation();
    if orientation == Orientation::Square {
        return InterpolationWeights::one_hot(set, DilationRate::IDENTITY);
    }
    let r = effective_ratio(ratio, set);
    let w: Vec<f64> = set
        .rates()
        .iter()
        .map(|rate| {
            if rate.serves(orientation) {
                rate_weight(rate.dilation(), r)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        let missing = [r.floor() as usize, r.ceil() as usize]
            .into_iter()
            .map(|d| DilationRate::along(orientation, d))
            .find(|rate| !set.contains(*rate))
            .unwrap_or(DilationRate::along(orientation, r.ceil() as usize));
        return Err(Error::RateNotInSet(missing.as_tuple()));
    }
    Ok(InterpolationWeights { w })
}

/// How interpolation weights are produced at evaluation time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightMode {
    /// One-hot on `(1, 1)`: an ordinary convolution.
    Vanilla,
    /// One-hot on a fixed pair regardless of the image.
    Constant(DilationRate),
    /// One-hot on `round(r)`.
    NearestInteger,
    /// One-hot on whichever of `floor(r)`, `ceil(r)` is farther from `r`.
    SecondNearestInteger,
    /// 0.5 / 0.5 on the two nearest integer dilations.
    MeanOfTwo,
    /// Linear interpolation of the two nearest integer dilations.
    Fractional,
}

impl WeightMode {
    /// The six evaluation modes in reporting order.
    pub const ALL: [WeightMode; 6] = [
        WeightMode::Vanilla,
        WeightMode::Constant(DilationRate::new(2, 1)),
        WeightMode::SecondNearestInteger,
        WeightMode::MeanOfTwo,
        WeightMode::NearestInteger,
        WeightMode::Fractional,
    ];
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightMode::Vanilla => f.write_str("vanilla"),
            WeightMode::Constant(r) => write!(f, "constant{}{}", r.vertical, r.horizontal),
            WeightMode::NearestInteger => f.write_str("nearest"),
            WeightMode::SecondNearestInteger => f.write_str("second-nearest"),
            WeightMode::MeanOfTwo => f.write_str("mean2"),
            WeightMode::Fractional => f.write_str("fractional"),
        }
    }
}

impl FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "vanilla" => WeightMode::Vanilla,
            "nearest" => WeightMode::NearestInteger,
            "second-nearest" => WeightMode::SecondNearestInteger,
            "mean2" => WeightMode::MeanOfTwo,
            "fractional" => WeightMode::Fractional,
            other => {
                let digits = other
                    .strip_prefix("constant")
                    .filter(|d| d.len() == 2 && d.bytes().all(|b| b.is_ascii_digit()))
                    .ok_or_else(|| invalid(format!("unknown weight mode {other:?}")))?;
                let v = (digits.as_bytes()[0] - b'0') as usize;
                let h = (digits.as_bytes()[1] - b'0') as usize;
                WeightMode::Constant(DilationRate::new(v, h))
            }
        })
    }
}

/// The two integer dilations bracketing `r`. An integer `r` pairs with the
/// next dilation up, or the one below when `r` is already the maximum.
fn bracket(r: f64, max: usize) -> (usize, usize) {
    let lo = r.floor() as usize;
    let hi = r.ceil() as usize;
    if lo != hi {
        (lo, hi)
    } else if lo < max {
        (lo, lo + 1)
    } else {
        (lo.saturating_sub(1).max(1), lo)
    }
}

/// Weights for the evaluation-time ablation modes. Square images have no
/// dilation axis, so every mode except `Constant` maps them to `(1, 1)`.
pub fn test_mode_weights(
    ratio: &AspectRatio,
    set: &DilationRateSet,
    mode: WeightMode,
) -> Result<InterpolationWeights> {
    let orientation = ratio.orientation();
    match mode {
        WeightMode::Vanilla => return InterpolationWeights::one_hot(set, DilationRate::IDENTITY),
        WeightMode::Constant(rate) => return InterpolationWeights::one_hot(set, rate),
        WeightMode::Fractional => return interpolation_weights(ratio, set),
        _ => {}
    }
    if orientation == Orientation::Square {
        return InterpolationWeights::one_hot(set, DilationRate::IDENTITY);
    }
    let r = effective_ratio(ratio, set);
    let max = set.max_dilation(orientation);
    let pick = |d: usize| DilationRate::along(orientation, d);
    match mode {
        WeightMode::NearestInteger => InterpolationWeights::one_hot(set, pick(r.round() as usize)),
        WeightMode::SecondNearestInteger => {
            let (lo, hi) = bracket(r, max);
            let nearest = r.round() as usize;
            let far = if nearest == lo { hi } else { lo };
            InterpolationWeights::one_hot(set, pick(far))
        }
        WeightMode::MeanOfTwo => {
            let (lo, hi) = bracket(r, max);
            if lo == hi {
                return InterpolationWeights::one_hot(set, pick(lo));
            }
            let mut w = vec![0.0; set.len()];
            for d in [lo, hi] {
                let k = set.position(pick(d)).ok_or(Error::RateNotInSet(pick(d).as_tuple()))?;
                w[k] = 0.5;
            }
            Ok(InterpolationWeights { w })
        }
        WeightMode::Vanilla | WeightMode::Constant(_) | WeightMode::Fractional => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afdc::compute_ratio;

    fn w_on(w: &InterpolationWeights, set: &DilationRateSet, v: usize, h: usize) -> f64 {
        w.weight_of(set, DilationRate::new(v, h))
    }

    #[test]
    fn tall_one_and_a_half_on_three_set() {
        let set = DilationRateSet::three();
        let w = interpolation_weights(&compute_ratio(600, 400).unwrap(), &set).unwrap();
        assert_eq!(w_on(&w, &set, 1, 1), 0.5);
        assert_eq!(w_on(&w, &set, 1, 2), 0.5);
        assert_eq!(w_on(&w, &set, 2, 1), 0.0);
    }

    #[test]
    fn one_and_a_quarter() {
        let set = DilationRateSet::seven();
        let w = interpolation_weights(&compute_ratio(500, 400).unwrap(), &set).unwrap();
        assert_eq!(w_on(&w, &set, 1, 1), 0.75);
        assert_eq!(w_on(&w, &set, 1, 2), 0.25);
        assert_eq!(w.nonzero(), 2);
    }

    #[test]
    fn integer_and_square_are_one_hot() {
        let set = DilationRateSet::seven();
        let w = interpolation_weights(&compute_ratio(300, 900).unwrap(), &set).unwrap();
        assert_eq!(w, InterpolationWeights::one_hot(&set, DilationRate::new(3, 1)).unwrap());
        let w = interpolation_weights(&compute_ratio(64, 64).unwrap(), &set).unwrap();
        assert_eq!(w, InterpolationWeights::one_hot(&set, DilationRate::IDENTITY).unwrap());
    }

    #[test]
    fn clamps_beyond_max() {
        let set = DilationRateSet::seven();
        let w = interpolation_weights(&compute_ratio(500, 100).unwrap(), &set).unwrap();
        assert_eq!(w_on(&w, &set, 1, 4), 1.0);
        let three = DilationRateSet::three();
        let w = interpolation_weights(&compute_ratio(100, 350).unwrap(), &three).unwrap();
        assert_eq!(w_on(&w, &three, 2, 1), 1.0);
    }

    #[test]
    fn missing_bracket_rate_is_an_error() {
        let set = DilationRateSet::new(vec![DilationRate::IDENTITY, DilationRate::new(1, 3)]).unwrap();
        let err = interpolation_weights(&compute_ratio(150, 100).unwrap(), &set).unwrap_err();
        assert!(matches!(err, Error::RateNotInSet((1, 2))), "{err}");
    }

    #[test]
    fn ablation_modes_at_1_3_tall() {
        let set = DilationRateSet::seven();
        let r = compute_ratio(130, 100).unwrap();
        let get = |m| test_mode_weights(&r, &set, m).unwrap();
        let nearest = get(WeightMode::NearestInteger);
        assert_eq!(nearest, InterpolationWeights::one_hot(&set, DilationRate::new(1, 1)).unwrap());
        let second = get(WeightMode::SecondNearestInteger);
        assert_eq!(second, InterpolationWeights::one_hot(&set, DilationRate::new(1, 2)).unwrap());
        let mean = get(WeightMode::MeanOfTwo);
        assert_eq!(w_on(&mean, &set, 1, 1), 0.5);
        assert_eq!(w_on(&mean, &set, 1, 2), 0.5);
        let vanilla = get(WeightMode::Vanilla);
        assert_eq!(vanilla, InterpolationWeights::one_hot(&set, DilationRate::IDENTITY).unwrap());
        let constant = get(WeightMode::Constant(DilationRate::new(2, 1)));
        assert_eq!(w_on(&constant, &set, 2, 1), 1.0);
        let frac = get(WeightMode::Fractional);
        assert!((w_on(&frac, &set, 1, 1) - 0.7).abs() < 1e-12);
        assert!((w_on(&frac, &set, 1, 2) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn ablation_modes_at_integer_ratio() {
        let set = DilationRateSet::three();
        let r = compute_ratio(100, 200).unwrap();
        let second = test_mode_weights(&r, &set, WeightMode::SecondNearestInteger).unwrap();
        assert_eq!(w_on(&second, &set, 1, 1), 1.0);
        let mean = test_mode_weights(&r, &set, WeightMode::MeanOfTwo).unwrap();
        assert_eq!(w_on(&mean, &set, 1, 1), 0.5);
        assert_eq!(w_on(&mean, &set, 2, 1), 0.5);
    }

    #[test]
    fn mode_strings() {
        for m in WeightMode::ALL {
            assert_eq!(m.to_string().parse::<WeightMode>().unwrap(), m);
        }
        assert_eq!(WeightMode::ALL[1].to_string(), "constant21");
        assert!("bogus".parse::<WeightMode>().is_err());
        assert!("constant2".parse::<WeightMode>().is_err());
    }

    #[test]
    fn realign_to_superset() {
        let three = DilationRateSet::three();
        let seven = DilationRateSet::seven();
        let r = compute_ratio(150, 100).unwrap();
        let w3 = interpolation_weights(&r, &three).unwrap();
        assert_eq!(w3.realign(&three, &seven).unwrap(), interpolation_weights(&r, &seven).unwrap());
        let rows = w3.csv_rows(4, &three);
        assert_eq!(rows[0], "4,1,2,0.5");
    }

    proptest::proptest! {
        #[test]
        fn weight_contract(h in 100usize..=400, w in 100usize..=400, seven in proptest::bool::ANY) {
            let set = if seven { DilationRateSet::seven() } else { DilationRateSet::three() };
            let ratio = compute_ratio(h, w).unwrap();
            let iw = interpolation_weights(&ratio, &set).unwrap();
            let v = iw.as_slice();
            proptest::prop_assert!(v.iter().all(|&x| x >= 0.0));
            proptest::prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let support: Vec<DilationRate> = set.rates().iter().zip(v).filter(|(_, &x)| x > 0.0).map(|(r, _)| *r).collect();
            proptest::prop_assert!(support.len() <= 2);
            for r in &support {
                proptest::prop_assert!(r.serves(ratio.orientation()));
            }
            if let [a, b] = support[..] {
                proptest::prop_assert_eq!(a.dilation().abs_diff(b.dilation()), 1);
                let lo = a.dilation().min(b.dilation()) as f64;
                let r = effective_ratio(&ratio, &set);
                proptest::prop_assert!(lo == r.floor());
            }
        }
    }
}
