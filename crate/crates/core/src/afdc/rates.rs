use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Orientation;
use crate::error::{invalid, Error, Result};

/// Integer dilation pair `(vertical, horizontal)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DilationRate {
    pub vertical: usize,
    pub horizontal: usize,
}

impl DilationRate {
    pub const IDENTITY: DilationRate = DilationRate {
        vertical: 1,
        horizontal: 1,
    };

    pub const fn new(vertical: usize, horizontal: usize) -> Self {
        DilationRate {
            vertical,
            horizontal,
        }
    }

    /// Rate that dilates along the axis stretched by warping an image of the
    /// given orientation: tall originals dilate horizontally, wide ones
    /// vertically.
    pub fn along(orientation: Orientation, d: usize) -> Self {
        match orientation {
            Orientation::Tall => DilationRate::new(1, d),
            Orientation::Wide => DilationRate::new(d, 1),
            Orientation::Square => DilationRate::IDENTITY,
        }
    }

    /// The larger component.
    pub fn dilation(&self) -> usize {
        self.vertical.max(self.horizontal)
    }

    /// Orientation this pair serves; `Square` for `(1, 1)`.
    pub fn orientation(&self) -> Orientation {
        use std::cmp::Ordering::*;
        match self.horizontal.cmp(&self.vertical) {
            Greater => Orientation::Tall,
            Less => Orientation::Wide,
            Equal => Orientation::Square,
        }
    }

    /// Whether this pair lies on the half of a rate set usable by images of
    /// `orientation` (the identity belongs to both halves).
    pub fn serves(&self, orientation: Orientation) -> bool {
        *self == DilationRate::IDENTITY || self.orientation() == orientation
    }

    pub fn as_tuple(&self) -> (usize, usize) {
        (self.vertical, self.horizontal)
    }
}

impl fmt::Display for DilationRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.vertical, self.horizontal)
    }
}

/// Ordered, duplicate-free list of dilation pairs containing `(1, 1)`, where
/// each pair has at least one component equal to 1. The order fixes the
/// branch order used when blending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<DilationRate>", into = "Vec<DilationRate>")]
pub struct DilationRateSet {
    rates: Vec<DilationRate>,
}

impl DilationRateSet {
    pub fn new(rates: Vec<DilationRate>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::EmptyRateSet);
        }
        if !rates.contains(&DilationRate::IDENTITY) {
            return Err(Error::MissingIdentityRate);
        }
        for (i, r) in rates.iter().enumerate() {
            if r.vertical == 0 || r.horizontal == 0 {
                return Err(invalid(format!("dilation rate {r} has a zero component")));
            }
            if r.vertical.min(r.horizontal) != 1 {
                return Err(invalid(format!("dilation rate {r} dilates both axes")));
            }
            if rates[..i].contains(r) {
                return Err(invalid(format!("duplicate dilation rate {r}")));
            }
        }
        Ok(DilationRateSet { rates })
    }

    /// `{(1,2), (1,1), (2,1)}`: enough for ratios up to 2 in either orientation.
    pub fn three() -> Self {
        Self::symmetric(2)
    }

    /// `{(1,4), (1,3), (1,2), (1,1), (2,1), (3,1), (4,1)}`.
    pub fn seven() -> Self {
        Self::symmetric(4)
    }

    pub fn identity_only() -> Self {
        DilationRateSet {
            rates: vec![DilationRate::IDENTITY],
        }
    }

    /// `(1, max) .. (1, 2), (1, 1), (2, 1) .. (max, 1)`.
    pub fn symmetric(max: usize) -> Self {
        let max = max.max(1);
        let mut rates: Vec<_> = (2..=max).rev().map(|d| DilationRate::new(1, d)).collect();
        rates.push(DilationRate::IDENTITY);
        rates.extend((2..=max).map(|d| DilationRate::new(d, 1)));
        DilationRateSet { rates }
    }

    pub fn rates(&self) -> &[DilationRate] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn position(&self, rate: DilationRate) -> Option<usize> {
        self.rates.iter().position(|r| *r == rate)
    }

    pub fn contains(&self, rate: DilationRate) -> bool {
        self.position(rate).is_some()
    }

    /// Largest dilation available to images of `orientation` (1 for square).
    pub fn max_dilation(&self, orientation: Orientation) -> usize {
        self.rates
            .iter()
            .filter(|r| r.serves(orientation))
            .map(|r| r.dilation())
            .max()
            .unwrap_or(1)
    }

    /// The pairs of `self` that also appear in `other`, in `self`'s order.
    pub fn intersect(&self, other: &DilationRateSet) -> DilationRateSet {
        DilationRateSet {
            rates: self
                .rates
                .iter()
                .copied()
                .filter(|r| other.contains(*r))
                .collect(),
        }
    }
}

impl TryFrom<Vec<DilationRate>> for DilationRateSet {
    type Error = Error;
    fn try_from(v: Vec<DilationRate>) -> Result<Self> {
        DilationRateSet::new(v)
    }
}

impl From<DilationRateSet> for Vec<DilationRate> {
    fn from(s: DilationRateSet) -> Self {
        s.rates
    }
}

impl fmt::Display for DilationRateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.rates.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{r}")?;
        }
        Ok(())
    }
}

impl FromStr for DilationRateSet {
    type Err = Error;

    /// Parses the `Display` form, e.g. `(1,2)|(1,1)|(2,1)`.
    fn from_str(s: &str) -> Result<Self> {
        let rates = s
            .split('|')
            .map(|p| {
                let inner = p.trim().trim_start_matches('(').trim_end_matches(')');
                let (a, b) = inner
                    .split_once(',')
                    .ok_or_else(|| invalid(format!("bad dilation pair {p:?}")))?;
                let parse = |x: &str| {
                    x.trim()
                        .parse::<usize>()
                        .map_err(|_| invalid(format!("bad dilation pair {p:?}")))
                };
                Ok(DilationRate::new(parse(a)?, parse(b)?))
            })
            .collect::<Result<Vec<_>>>()?;
        DilationRateSet::new(rates)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_sets() {
        assert_eq!(DilationRateSet::three().to_string(), "(1,2)|(1,1)|(2,1)");
        assert_eq!(
            DilationRateSet::seven().to_string(),
            "(1,4)|(1,3)|(1,2)|(1,1)|(2,1)|(3,1)|(4,1)"
        );
        let s = DilationRateSet::seven();
        assert_eq!(s.max_dilation(Orientation::Tall), 4);
        assert_eq!(s.max_dilation(Orientation::Square), 1);
        assert_eq!("(1,2)|(1,1)|(2,1)".parse::<DilationRateSet>().unwrap(), DilationRateSet::three());
    }

    #[test]
    fn validation() {
        assert!(matches!(DilationRateSet::new(vec![]), Err(Error::EmptyRateSet)));
        assert!(matches!(
            DilationRateSet::new(vec![DilationRate::new(1, 2)]),
            Err(Error::MissingIdentityRate)
        ));
        assert!(DilationRateSet::new(vec![DilationRate::IDENTITY, DilationRate::new(2, 2)]).is_err());
        assert!(DilationRateSet::new(vec![DilationRate::IDENTITY, DilationRate::IDENTITY]).is_err());
        let json = serde_json::to_string(&DilationRateSet::three()).unwrap();
        let back: DilationRateSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, DilationRateSet::three());
        assert!(serde_json::from_str::<DilationRateSet>("[]").is_err());
    }
}
