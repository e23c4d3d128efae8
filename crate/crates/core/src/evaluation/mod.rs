//! ROC analysis, the low-FPR metric suite and validation-driven selection.

mod metrics;
mod roc;
mod tune;

pub use metrics::{metrics, read_report, report, write_report, Metrics, MetricsReport, METRICS_HEADER};
pub use roc::{roc_curve, RocCurve, RocPoint};
pub use tune::{search_grid, tune_select, validation_pauc, GridPoint, ValidationTable, GRID_LR, GRID_STEPS};
