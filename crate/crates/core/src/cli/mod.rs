//! Library side of the `tvreg` command-line tool: data ingestion,
//! configuration, reports and the replication harness.

pub mod config;
pub mod ingest;
pub mod replicate;
pub mod report;

pub use config::{AnalysisConfig, CalibrationKind, Command, HypothesisSpec, Policy};
pub use ingest::{ingest_csv, write_csv, CsvSchema};
pub use replicate::{run_replication, ReplicationOutput, ReplicationSpec, ReplicationSummary, TableId};
pub use report::{emit_report, read_report, write_curve_csv, Report};
