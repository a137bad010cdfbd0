//! End-to-end orchestration: corpus ingestion, stage execution and reports.

mod config;
mod manifest;
mod plots;
mod stages;
pub mod toy;

pub use config::{CpcScale, FeatureChoice, PipelineConfig, Summarization, IVECTOR_MAX_DIM, MFCC_DIM};
pub use manifest::{ingest, Manifest, ManifestRow};
pub use plots::{det_coords, feature_stats_csv, plot_det, plot_features, DetCurve};
pub use stages::{
    artifact_hashes, content_hash, load_archive, read_summary, run_all, run_stage, EvalRow, Layout, Receipt,
    Stage, StageOutcome,
};
