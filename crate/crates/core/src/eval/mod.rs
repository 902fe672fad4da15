//! Metrics, annotation cost accounting and learning-curve sweeps.

mod auc;
mod cost;
mod report;
mod sweep;

pub use auc::roc_auc;
pub use cost::{annotation_cost, CostModel};
pub use report::{emit_report, parse_report, read_report, report_to_string, ReportFormat, COLUMNS, CURVE_SCHEMA};
pub use sweep::{
    mean_auc_by_model, model_name, run_sweep, run_sweep_with_jobs, sort_points, subsample_order, CellFailure,
    CurvePoint, SweepOutcome, SweepSpec,
};
