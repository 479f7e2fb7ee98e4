//! Loss, optimizer, metrics and the training/evaluation loops.

mod loss;
mod metrics;
mod optim;
mod train;

pub use loss::{emd_logit_grad, emd_loss, emd_with_grad};
pub use metrics::{average_ranks, best_constant_predictor, metrics, metrics_with_r, pearson, spearman, MetricReport};
pub use optim::{lr_schedule, sgd_momentum_step, LrDrop, SgdState};
pub use train::{
    evaluate, predict, save_log, train_loop, write_log, EpochRow, EvalConfig, TrainConfig, TrainOutcome, LOG_HEADER,
};
