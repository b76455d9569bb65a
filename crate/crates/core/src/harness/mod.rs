//! Run configuration, checkpoints, reports and the train/evaluate drivers
//! behind the `uqp` command line.

pub mod checkpoint;
pub mod config;
pub mod report;
pub mod run;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint};
pub use config::{DataSource, RunConfig, KEYS};
pub use report::{
    emit_report, parse_reports_json, reports_to_csv, reports_to_json, MetricsReport, ReportFormat, Scores,
};
pub use run::{
    evaluate_predictor, load_data, load_predictor, run_evaluate, run_train, save_predictor, sweep_ensemble,
    train_predictor, PhaseLog, TrainOutput,
};
