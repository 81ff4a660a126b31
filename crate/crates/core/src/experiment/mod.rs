//! Experiment harness: JSON configs, the training loop, checkpoints, CSV
//! metrics and the commands exposed by the `stochpool` binary.
//!
//! Every random consumer draws from a stream derived from the master seed
//! and a purpose tag (shuffle, init, pooling, evaluation, subsample,
//! visualization), keyed further by epoch. Changing one consumer never
//! shifts the draws of another, and a run is a pure function of its config.

mod checkpoint;
mod commands;
mod config;
mod metrics;
mod train;

pub use checkpoint::Checkpoint;
pub use commands::{
    cmd_combo_matrix, cmd_convert_svhn, cmd_eval, cmd_reduced_set, cmd_sweep_pool_size, cmd_train, cmd_visualize,
    eval_tables, method_modes, parse_sources, top_feature_layer, VisualizeOptions, VisualizeReport,
};
pub use config::{
    load_raw, prepare, prepare_test_with_mean, DataSource, DatasetConfig, ExperimentConfig, LcnConfig,
    NetworkConfig, PoolingConfig, PreparedData,
};
pub use metrics::{pct, read_metrics_csv, write_metrics_csv, write_timing_csv, MetricsRow, Table, METRICS_HEADER};
pub use train::{epoch_order, epoch_stream, evaluate, train, Evaluation, TrainOptions, TrainRun};
