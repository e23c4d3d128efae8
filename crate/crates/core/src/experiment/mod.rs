//! Experiment plumbing: run configuration, end-to-end pipeline and reports.

mod config;
mod pipeline;
mod plot;

pub use config::{DataSource, RunConfig, SweepConfig};
pub use pipeline::{
    fit_detectors, load_data, run_attack, run_pipeline, run_sweep, score_split, split, train_shadows, train_target,
    AttackOutput, PipelineOutput, SweepOutput,
};
pub use plot::roc_svg;
