use super::ImageRecord;
use crate::afdc::{DilationRate, DilationRateSet};
use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// Upper edges of the ratio intervals, starting from 1. `[2.0, 4.0]` means
/// groups `[1, 2]` and `(2, 4]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupBoundaries {
    edges: Vec<f64>,
}

impl Default for GroupBoundaries {
    fn default() -> Self {
        GroupBoundaries { edges: vec![2.0, 4.0] }
    }
}

impl GroupBoundaries {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.is_empty() {
            return Err(invalid("group boundaries need at least one edge"));
        }
        let mut prev = 1.0;
        for &e in &edges {
            if !(e > prev) || !e.is_finite() {
                return Err(invalid(format!("group edges must increase from 1: {edges:?}")));
            }
            prev = e;
        }
        Ok(GroupBoundaries { edges })
    }

    /// A single group covering `[1, r_max]`.
    pub fn single(r_max: f64) -> Result<Self> {
        Self::new(vec![r_max])
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn r_max(&self) -> f64 {
        *self.edges.last().expect("nonempty")
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// `(lo, hi)` of group `i`.
    pub fn interval(&self, i: usize) -> (f64, f64) {
        let lo = if i == 0 { 1.0 } else { self.edges[i - 1] };
        (lo, self.edges[i])
    }

    /// Group index for ratio `r`; beyond `r_max` goes to the last group.
    pub fn index_of(&self, r: f64) -> usize {
        self.edges.iter().position(|&e| r <= e).unwrap_or(self.edges.len() - 1)
    }

    /// `(1,1)` plus both orientations of every integer dilation in
    /// `[floor(lo), ceil(hi)]`.
    pub fn rates_for(&self, i: usize) -> DilationRateSet {
        let (lo, hi) = self.interval(i);
        let (a, b) = ((lo.floor() as usize).max(2), hi.ceil() as usize);
        let mut rates: Vec<_> = (a..=b).rev().map(|d| DilationRate::new(1, d)).collect();
        rates.push(DilationRate::IDENTITY);
        rates.extend((a..=b).map(|d| DilationRate::new(d, 1)));
        DilationRateSet::new(rates).expect("well-formed by construction")
    }
}

/// Records from one ratio interval together with the dilation branches that
/// interval needs.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchGroup {
    pub records: Vec<ImageRecord>,
    pub active_rates: DilationRateSet,
    pub interval: (f64, f64),
}

impl BatchGroup {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Stacks the pixels; every record must already share dims.
    pub fn pixels(&self) -> Result<Tensor<f32>> {
        let parts: Vec<_> = self.records.iter().map(|r| r.pixels.clone()).collect();
        Tensor::stack(&parts)
    }
}

/// Splits records into ratio groups, preserving input order inside each
/// group. Empty groups are dropped. Pixels are not touched.
pub fn group_by_ratio(records: &[ImageRecord], boundaries: &GroupBoundaries) -> Vec<BatchGroup> {
    let mut buckets: Vec<Vec<ImageRecord>> = vec![Vec::new(); boundaries.len()];
    for r in records {
        let v = r.ratio.value();
        if v > boundaries.r_max() {
            log::warn!("ratio {} beyond grouping range {}; using widest group", r.ratio, boundaries.r_max());
        }
        buckets[boundaries.index_of(v)].push(r.clone());
    }
    buckets
        .into_iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(i, records)| BatchGroup {
            records,
            active_rates: boundaries.rates_for(i),
            interval: boundaries.interval(i),
        })
        .collect()
}
