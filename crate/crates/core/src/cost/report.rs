use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::CostNet;
use crate::error::{invalid, Result};
use crate::pipeline::GroupBoundaries;

/// One line of the cost table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub network: String,
    pub k: usize,
    pub params: u64,
    pub mult_adds: u64,
    /// Mult-Adds relative to the K = 1 network.
    pub ratio: f64,
}

/// Params and Mult-Adds for each branch count in `ks`.
pub fn cost_table(net: &CostNet, input_hw: (usize, usize), ks: &[usize]) -> Result<Vec<CostRow>> {
    let base = net.count_mult_adds(input_hw, 1)?.mult_adds as f64;
    ks.iter()
        .map(|&k| {
            let b = net.count_mult_adds(input_hw, k)?;
            Ok(CostRow {
                network: net.name.clone(),
                k,
                params: b.params,
                mult_adds: b.mult_adds,
                ratio: b.mult_adds as f64 / base,
            })
        })
        .collect()
}

pub fn cost_table_text(rows: &[CostRow]) -> String {
    let mut s = format!("{:<10} {:>3} {:>12} {:>16} {:>8}\n", "network", "K", "params", "mult_adds", "ratio");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<10} {:>3} {:>12} {:>16} {:>8.3}",
            r.network, r.k, r.params, r.mult_adds, r.ratio
        );
    }
    s
}

pub fn cost_table_csv(rows: &[CostRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["network", "k", "params", "mult_adds", "ratio"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.network.clone(),
            r.k.to_string(),
            r.params.to_string(),
            r.mult_adds.to_string(),
            format!("{:.6}", r.ratio),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| invalid(e.to_string()))
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    invalid(format!("csv: {e}"))
}

/// Share of images per ratio interval `[lo, hi]` (ratio as long/short side).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioHistogram {
    bins: Vec<(f64, f64, f64)>,
}

impl RatioHistogram {
    /// `(lo, hi, mass)` triples; masses must sum to 1.
    pub fn new(bins: Vec<(f64, f64, f64)>) -> Result<Self> {
        if bins.is_empty() {
            return Err(invalid("empty ratio histogram"));
        }
        for &(lo, hi, m) in &bins {
            if !(lo >= 1.0 && hi >= lo && (0.0..=1.0).contains(&m)) {
                return Err(invalid(format!("bad histogram bin ({lo}, {hi}, {m})")));
            }
        }
        let total: f64 = bins.iter().map(|b| b.2).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("histogram mass sums to {total}")));
        }
        Ok(RatioHistogram { bins })
    }

    /// 97.8% of images within `[1/2, 2]`, the rest up to 4.
    pub fn photo_collection() -> Self {
        RatioHistogram::new(vec![(1.0, 2.0, 0.978), (2.0, 4.0, 0.022)]).expect("valid")
    }

    pub fn bins(&self) -> &[(f64, f64, f64)] {
        &self.bins
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub interval: (f64, f64),
    pub mass: f64,
    pub k: usize,
    pub mult_adds: u64,
}

/// Expected per-image cost when each batch runs only its group's branches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupingReport {
    pub groups: Vec<GroupRow>,
    pub expected_mult_adds: f64,
    /// Cost with every branch of the widest group active.
    pub ungrouped_mult_adds: u64,
    pub saving: f64,
}

impl GroupingReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for g in &self.groups {
            let _ = writeln!(
                s,
                "ratio [{:.2}, {:.2}]  mass {:>6.2}%  K {}  mult_adds {}",
                g.interval.0,
                g.interval.1,
                100.0 * g.mass,
                g.k,
                g.mult_adds
            );
        }
        let _ = writeln!(
            s,
            "expected {:.0}  ungrouped {}  saving {:.2}%",
            self.expected_mult_adds,
            self.ungrouped_mult_adds,
            100.0 * self.saving
        );
        s
    }
}

/// Bins are assigned to a group by their upper edge.
pub fn grouping_report(
    net: &CostNet,
    input_hw: (usize, usize),
    hist: &RatioHistogram,
    boundaries: &GroupBoundaries,
) -> Result<GroupingReport> {
    let mut mass = vec![0.0; boundaries.len()];
    for &(_, hi, m) in hist.bins() {
        mass[boundaries.index_of(hi)] += m;
    }
    let mut groups = Vec::with_capacity(boundaries.len());
    let mut expected = 0.0;
    for (i, &m) in mass.iter().enumerate() {
        let k = boundaries.rates_for(i).len();
        let cost = net.count_mult_adds(input_hw, k)?.mult_adds;
        expected += m * cost as f64;
        groups.push(GroupRow {
            interval: boundaries.interval(i),
            mass: m,
            k,
            mult_adds: cost,
        });
    }
    let all = GroupBoundaries::single(boundaries.r_max())?.rates_for(0).len();
    let ungrouped = net.count_mult_adds(input_hw, all)?.mult_adds;
    Ok(GroupingReport {
        groups,
        expected_mult_adds: expected,
        ungrouped_mult_adds: ungrouped,
        saving: 1.0 - expected / ungrouped as f64,
    })
}
