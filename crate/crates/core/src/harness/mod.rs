//! Simulation grid, replication driver and report files.

pub mod conditions;
pub mod report;
pub mod run;

pub use conditions::{enumerate_conditions, find_condition, ConditionId, GridErrorType, GRID_RATES};
pub use report::{read_manifest, write_report, RunManifest};
pub use run::{
    compute_grid, run_baseline, run_grid, run_replication, run_replication_with, Algorithm, BaselineArtifacts,
    ConditionReport, DbscanRecord, GmmRecord, GridOutcome, ReplicationRecord, RunConfig,
};
