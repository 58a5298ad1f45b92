//! Run configuration, CSV logs, checkpoints, and the train / evaluate /
//! compare / gradcheck entry points used by the command-line tool.

mod config;
mod gradcheck;
mod log;
mod run;

pub use config::{apply_override, output_root, RunConfig, RunSection, OUTPUT_ROOT_VAR};
pub use gradcheck::{gradcheck_suite, GradcheckResult, FD_STEP, FD_TOLERANCE};
pub use log::{
    parse_lineage, read_metrics, write_samples, LogWriter, MetricRow, MetricsWriter, TrainingLog, COMPARE_SCHEMA,
    LOG_SCHEMA, METRICS_SCHEMA, SAMPLES_SCHEMA, TIMING_SCHEMA,
};
pub use run::{checkpoint_dir, compare, evaluate, evaluation_noise, run_training, CompareRow, EvalOptions, RunSummary};
