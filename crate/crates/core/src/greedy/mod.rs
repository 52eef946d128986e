//! Module-wise training: the transport penalty, the three training regimes,
//! per-epoch metrics and the memory model.

mod memory;
mod metrics;
mod penalty;
mod plan;
mod train;

pub use memory::{memory_account, MemoryAccount, MemoryCounts};
pub use metrics::{best_head_by_test, select_head, HeadPolicy, MetricsRecord, MetricsRow, METRICS_COLUMNS};
pub use penalty::{raw_transport, transport_penalty, weighted_penalty, PenaltyForm};
pub use plan::{lap_epochs, EpochSchedule, Regime, Regularizer, TauSchedule, TrainPlan};
pub use train::{epoch_order, train, train_multilap, train_parallel, train_sequential};
