//! Replicated comparison of HetGP and DetHetGP under an equal simulation budget.

mod config;
mod cross_section;
mod output;
mod replication;
mod standardizer;
mod summary;
mod trained;

pub use config::{ExperimentConfig, HetGpDesign, Standardization};
pub use cross_section::{cross_section, CrossSectionRow, Z95};
pub use output::{
    write_cross_section_csv, write_replications_csv, write_summary_json, CROSS_SECTION_HEADER,
    REPLICATIONS_HEADER,
};
pub use replication::{
    evaluate, fit_replication, prepare_replication, replication_seed, run_replication,
    score_replication, Dataset, FitStatus, FittedReplication, Method, MethodOutcome,
    ReplicationData, ReplicationResult,
};
pub use standardizer::Standardizer;
pub use summary::{quantile, run_experiment, ExperimentResult, MethodSummary, Quartiles, QUANTILE_METHOD};
pub use trained::{fit_model, fit_model_file, ModelFile, ModelKind, TrainedModel};
