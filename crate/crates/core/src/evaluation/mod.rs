//! Accuracy metrics, the cross-correlation baseline, overlay rendering and
//! experiment drivers.

mod bench;
mod experiment;
mod metrics;
mod ncc;
mod overlay;

pub use bench::{benchmark_looks, benchmark_pair, benchmark_truth};
pub use experiment::{run_experiment, ExperimentSpec, Method, Report, RunSummary, Sweep};
pub use metrics::{
    feature_error, feature_point_error, rmse, ControlGrid, FeatureError, DEFAULT_GRID,
    DEFAULT_MATCH_RADIUS,
};
pub use ncc::{ncc_at, ncc_register, NccResult, DEFAULT_WINDOW, MIN_OVERLAP_FRACTION};
pub use overlay::{render_overlay, Overlay, HEIGHTENING};
