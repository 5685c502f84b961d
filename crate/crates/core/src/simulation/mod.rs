//! Closed-loop simulation, evaluation metrics and log export.

mod export;
mod metrics;
mod run;
mod settings;

pub use export::{export, fmt_f64, import_log, round9, stem, METRICS_COLUMNS, TRAJECTORY_COLUMNS};
pub use metrics::{metrics, AgentMetrics, MetricsReport, Quartiles};
pub use run::{
    run, run_observed, AgentRecord, AgentTrack, Observer, RoleSummary, SimulationLog, Termination,
};
pub use settings::SimulationSettings;
