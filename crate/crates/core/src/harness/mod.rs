//! Small-scale training runs on synthetic data.

pub mod data;
pub mod model;
pub mod sweep;
pub mod train;

pub use data::{make_dataset, make_held_out, DatasetSpec, SyntheticDataset, TaskKind, Teacher};
pub use model::{BatchLoss, ModelKind, ToyModel};
pub use sweep::{robustness_sweep, write_robustness_csv, RobustnessGrid, RobustnessRow};
pub use train::{
    inner_loop_trace, train, write_run_jsonl, AdaptiveAlphaConfig, InnerConfig, LookaheadConfig, OptimizerConfig,
    RunRecord, Sampling, Session, TraceEntry, TracePhase, TrainConfig, DIVERGENCE_THRESHOLD,
};
