use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{emd_logit_grad, lr_schedule, metrics_with_r, sgd_momentum_step, LrDrop, MetricReport, SgdState};
use crate::afdc::{interpolation_weights, test_mode_weights, DilationRateSet, InterpolationWeights, WeightMode};
use crate::error::{invalid, Error, Result};
use crate::model::{Model, ScoreDistribution};
use crate::pipeline::{square_warp, GroupBoundaries, ImageRecord, WarpRange};
use crate::tensor::{Real, Tensor};

/// Optimization and data settings for [`train_loop`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_initial: f64,
    pub lr_drop: LrDrop,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub emd_r_train: f64,
    pub emd_r_eval: f64,
    pub seed: u64,
    pub warp: WarpRange,
    /// Warp size for validation and evaluation; the middle of `warp` when
    /// absent.
    pub eval_warp: Option<usize>,
    /// Epoch from which the seven-rate set replaces the three-rate set.
    /// `None` uses the seven-rate set throughout.
    pub curriculum_switch: Option<usize>,
    /// Upper ratio edges of the batching groups.
    pub group_edges: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::with_epochs(12)
    }
}

impl TrainConfig {
    /// Defaults with the learning rate dropping tenfold after three quarters
    /// of `epochs` and the rate-set switch at half.
    pub fn with_epochs(epochs: usize) -> Self {
        TrainConfig {
            lr_initial: 0.01,
            lr_drop: LrDrop {
                epoch: (epochs * 3).div_ceil(4),
                factor: 0.1,
            },
            momentum: 0.9,
            epochs,
            batch_size: 16,
            emd_r_train: 2.0,
            emd_r_eval: 1.0,
            seed: 0,
            warp: WarpRange::default(),
            eval_warp: None,
            curriculum_switch: Some(epochs / 2),
            group_edges: vec![2.0, 4.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(invalid(format!("train config: {m}")));
        if !(self.lr_initial > 0.0) || !(self.lr_drop.factor > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.emd_r_train >= 1.0) || !(self.emd_r_eval >= 1.0) {
            return bad("EMD exponents must be >= 1");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        self.warp.validate()?;
        GroupBoundaries::new(self.group_edges.clone())?;
        Ok(())
    }

    pub fn eval_size(&self) -> usize {
        self.eval_warp.unwrap_or((self.warp.min + self.warp.max) / 2)
    }

    /// Active rate set and batching groups for `epoch`.
    pub fn phase(&self, epoch: usize) -> (DilationRateSet, GroupBoundaries) {
        match self.curriculum_switch {
            Some(s) if epoch < s => (
                DilationRateSet::three(),
                GroupBoundaries::single(2.0).expect("valid"),
            ),
            _ => (
                DilationRateSet::seven(),
                GroupBoundaries::new(self.group_edges.clone()).expect("validated"),
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub split: String,
    pub report: MetricReport,
    pub lr: f64,
    pub active_rate_set: String,
}

pub const LOG_HEADER: [&str; 9] = [
    "epoch",
    "split",
    "cls_acc",
    "mse",
    "emd",
    "srcc",
    "lcc",
    "lr",
    "active_rate_set",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
}

impl EpochRow {
    pub fn fields(&self) -> Vec<String> {
        vec![
            self.epoch.to_string(),
            self.split.clone(),
            format!("{:.6}", self.report.cls_acc),
            format!("{:.6}", self.report.mse),
            format!("{:.6}", self.report.emd),
            fmt_opt(self.report.srcc),
            fmt_opt(self.report.lcc),
            format!("{}", self.lr),
            self.active_rate_set.clone(),
        ]
    }
}

/// Writes the epoch log as CSV.
pub fn write_log(rows: &[EpochRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let e = |e: csv::Error| Error::InvalidArgument(format!("log: {e}"));
    w.write_record(LOG_HEADER).map_err(e)?;
    for r in rows {
        w.write_record(r.fields()).map_err(e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_log(rows: &[EpochRow], path: impl AsRef<Path>) -> Result<()> {
    write_log(rows, std::fs::File::create(path)?)
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation EMD (training EMD when there is
    /// no validation split). The initial model if no epoch finished.
    pub best: Model<f32>,
    pub best_epoch: Option<usize>,
    pub last: Model<f32>,
    pub rows: Vec<EpochRow>,
    /// Why training stopped early, if it did.
    pub halted: Option<String>,
}

/// Settings for batched inference.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub warp_size: usize,
    pub batch_size: usize,
    pub rates: DilationRateSet,
}

impl EvalConfig {
    pub fn from_train(cfg: &TrainConfig) -> Self {
        EvalConfig {
            warp_size: cfg.eval_size(),
            batch_size: cfg.batch_size.max(1),
            rates: DilationRateSet::seven(),
        }
    }
}

fn batch_tensor<T: Real>(records: &[ImageRecord], size: usize) -> Result<Tensor<T>> {
    let parts = records
        .iter()
        .map(|r| Ok(square_warp(r, size)?.pixels.cast::<T>()))
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack(&parts)
}

/// Predictions in input order, with interpolation weights from `mode`.
pub fn predict<T: Real>(
    model: &Model<T>,
    records: &[ImageRecord],
    mode: WeightMode,
    cfg: &EvalConfig,
) -> Result<Vec<ScoreDistribution>> {
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(cfg.batch_size.max(1)) {
        let x = batch_tensor::<T>(chunk, cfg.warp_size)?;
        let w = chunk
            .iter()
            .map(|r| test_mode_weights(&r.ratio, &cfg.rates, mode))
            .collect::<Result<Vec<_>>>()?;
        out.extend(model.forward(&x, &w, &cfg.rates)?.distributions());
    }
    Ok(out)
}

pub fn evaluate<T: Real>(
    model: &Model<T>,
    records: &[ImageRecord],
    mode: WeightMode,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    let preds = predict(model, records, mode, cfg)?;
    let targets: Vec<_> = records.iter().map(|r| r.label).collect();
    super::metrics(&preds, &targets)
}

struct Batch {
    indices: Vec<usize>,
    rates: DilationRateSet,
}

fn epoch_batches(
    train: &[ImageRecord],
    batch_size: usize,
    boundaries: &GroupBoundaries,
    phase_rates: &DilationRateSet,
    rng: &mut ChaCha8Rng,
) -> Vec<Batch> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let mut by_group: Vec<Vec<usize>> = vec![Vec::new(); boundaries.len()];
    for &i in &order {
        by_group[boundaries.index_of(train[i].ratio.value())].push(i);
    }
    let mut batches = Vec::new();
    for (g, members) in by_group.iter().enumerate() {
        let rates = boundaries.rates_for(g).intersect(phase_rates);
        for chunk in members.chunks(batch_size) {
            batches.push(Batch {
                indices: chunk.to_vec(),
                rates: rates.clone(),
            });
        }
    }
    batches.shuffle(rng);
    batches
}

/// Mini-batch SGD on EMD with the configured curriculum.
///
/// Each epoch reshuffles, groups samples by aspect ratio into batches
/// that only carry the dilation branches their group needs, and warps each
/// batch to one square size drawn per batch visit. All randomness comes from
/// `cfg.seed`. A non-finite loss or gradient stops training; the returned
/// models are the last finite ones.
pub fn train_loop(
    model: Model<f32>,
    train: &[ImageRecord],
    val: &[ImageRecord],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(invalid("training set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = model;
    let mut state = SgdState::default();
    let mut outcome = TrainOutcome {
        best: model.clone(),
        best_epoch: None,
        last: model.clone(),
        rows: Vec::new(),
        halted: None,
    };
    let mut best_emd = f64::INFINITY;
    let eval_cfg = EvalConfig::from_train(cfg);
    'epochs: for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg.lr_initial, cfg.lr_drop);
        let (phase_rates, boundaries) = cfg.phase(epoch);
        let batches = epoch_batches(train, cfg.batch_size, &boundaries, &phase_rates, &mut rng);
        let mut preds = Vec::with_capacity(train.len());
        let mut targets = Vec::with_capacity(train.len());
        for batch in batches {
            let recs: Vec<ImageRecord> = batch.indices.iter().map(|&i| train[i].clone()).collect();
            let size = cfg.warp.sample(&mut rng);
            let x = batch_tensor::<f32>(&recs, size)?;
            let weights = recs
                .iter()
                .map(|r| interpolation_weights(&r.ratio, &batch.rates))
                .collect::<Result<Vec<InterpolationWeights>>>()?;
            let pass = model.forward(&x, &weights, &batch.rates)?;
            let b = recs.len() as f64;
            let mut grad = Vec::with_capacity(pass.logits.len());
            let mut loss = 0.0;
            for (n, r) in recs.iter().enumerate() {
                let z: Vec<f64> = pass.logits.sample_values(n).iter().map(|v| v.as_f64()).collect();
                let (l, g) = emd_logit_grad(&z, &r.label, cfg.emd_r_train)?;
                loss += l / b;
                grad.extend(g.iter().map(|v| (v / b) as f32));
            }
            if !loss.is_finite() {
                outcome.halted = Some(format!("non-finite loss at epoch {epoch}"));
                break 'epochs;
            }
            preds.extend(pass.distributions());
            targets.extend(recs.iter().map(|r| r.label));
            let grads = model.backward(&pass, &Tensor::new(pass.logits.dims(), grad)?)?;
            if let Err(e) = sgd_momentum_step(model.parameters_mut(), &grads, &mut state, lr, cfg.momentum) {
                outcome.halted = Some(format!("epoch {epoch}: {e}"));
                break 'epochs;
            }
        }
        let active = phase_rates.to_string();
        let train_report = metrics_with_r(&preds, &targets, cfg.emd_r_eval)?;
        outcome.rows.push(EpochRow {
            epoch,
            split: "train".into(),
            report: train_report,
            lr,
            active_rate_set: active.clone(),
        });
        let selection = if val.is_empty() {
            train_report.emd
        } else {
            let preds = predict(&model, val, WeightMode::Fractional, &eval_cfg)?;
            let targets: Vec<_> = val.iter().map(|r| r.label).collect();
            let report = metrics_with_r(&preds, &targets, cfg.emd_r_eval)?;
            outcome.rows.push(EpochRow {
                epoch,
                split: "val".into(),
                report,
                lr,
                active_rate_set: active,
            });
            report.emd
        };
        log::info!("epoch {epoch}: train emd {:.5}, selection emd {selection:.5}", train_report.emd);
        if selection < best_emd {
            best_emd = selection;
            outcome.best = model.clone();
            outcome.best_epoch = Some(epoch);
        }
        outcome.last = model.clone();
    }
    Ok(outcome)
}
