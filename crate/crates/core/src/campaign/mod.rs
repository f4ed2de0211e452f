//! Attack sweeps over model variants: configuration, execution, statistics
//! and reports.

mod config;
mod report;
mod run;
mod stats;

pub use config::{
    AttackOptions, CampaignConfig, DatasetPaths, Scenario, ScenarioMatrix, ThermalOptions, VariantRef,
};
pub use report::{
    compare_variants, emit_csv, emit_summary, recovery_metrics, summarize, summary_json, write_csv, Baseline,
    CampaignReport, RecoveryRow, ReportHeader, ScenarioSummary, TrialRow, CSV_HEADER,
};
pub use run::{
    load_dataset, prepare_variants, run_campaign, run_campaign_with, write_outputs, PreparedVariant, CSV_FILE,
    REPORT_FILE, SUMMARY_FILE,
};
pub use stats::{quantile, FiveNumber};

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

impl CampaignError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CampaignError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit status: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CampaignError::Config(_) => 1,
            _ => 2,
        }
    }
}
