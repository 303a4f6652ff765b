//! Run configuration, training driver, checkpoints and the evaluation and
//! analysis tools built on trained policies.

mod checkpoint;
mod config;
mod eval;
mod export;
mod metrics;
mod registry;
mod session;
mod train;
mod variance;
mod visits;

pub use checkpoint::{Checkpoint, NetState, ParamEntry, CHECKPOINT_VERSION};
pub use config::{parse_config_text, Algorithm, RunConfig, DEFAULT_WIDTH};
pub use eval::{bootstrap_mean_ci, evaluate, EvalPolicy, EvalReport, EvalRow, BOOTSTRAP_RESAMPLES, CONFIDENCE};
pub use export::{export_trajectories, sidecar_path};
pub use metrics::{metrics_record, MetricsWriter, METRICS_HEADER};
pub use registry::{BestKnown, BestKnownRegistry, REGISTRY_VERSION};
pub use session::{flat_parameter_count, resolve_hrl_width, Learner, Session, Trajectory};
pub use train::{checkpoint_path, metrics_header, resume, train, CONFIG_FILE, LATEST_CHECKPOINT, METRICS_FILE};
pub use variance::{
    discounted_return, log_spaced_horizons, unbiased_variance, variance_experiment, variance_from_rewards,
    VarianceReport,
};
pub use visits::{cumulative_visit_times, VisitTimes};
