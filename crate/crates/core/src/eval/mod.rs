//! Offline evaluation: dataset ingestion, platform partitioning with holdout
//! sets, prediction and recommendation metrics, and the repeated-run pipeline.

pub mod config;
pub mod data;
pub mod metrics;
pub mod normalize;
pub mod pipeline;
pub mod split;
pub mod synth;

pub use config::{Cell, ConfigMap, DatasetKind, EvalConfig};
pub use data::{load_movielens, load_wsdream, QosMatrix, RawMatrix};
pub use metrics::{aqos, ild, mae, rmse, AqosSummary};
pub use normalize::{normalize, Normalization};
pub use pipeline::{load_dataset, run_pipeline, sweep, write_metrics_csv, CellOutcome, EvalReport, PlatformMetrics};
pub use split::{split_platforms, PlatformSplit, Split, SplitSpec, TargetUser};
