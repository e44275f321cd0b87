//! Synthetic study: curves peaking at a sparse linear function of the
//! covariates, with the argmax as the target functional.

mod dgp;
mod metrics;
mod replicate;

pub use dgp::{peak_curve, simulate, SimConfig, SimTruth};
pub use metrics::{epsilon_max, metrics, rmse, Metrics};
pub use replicate::{
    baseline_adaptive_lasso, replication_seed, run_replication, run_replication_on, run_study, summarize_study,
    write_epsilon_csv, write_metrics_csv, EngineConfig, MethodRecord, MethodSummary, ReplicationOutput, Spread,
    StudySummary, DEFAULT_ETA_GRID, METHODS,
};
