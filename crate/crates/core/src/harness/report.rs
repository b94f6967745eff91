use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{Algorithm, BaselineArtifacts, ConditionReport, ReplicationRecord, RunConfig};
use crate::error::{Error, Result};

pub const GMM_RESULTS: &str = "gmm_results.csv";
pub const DBSCAN_RESULTS: &str = "dbscan_results.csv";
pub const REPLICATIONS: &str = "replications.csv";
pub const MANIFEST: &str = "run_manifest.json";

const STABLE_ARI_SCOPE: &str =
    "ari_stable is computed over all points; members of unstable clusters are relabelled as noise";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub gmm_k: Option<usize>,
    pub gmm_merged_clusters: Option<usize>,
    pub gmm_ari_vs_truth: Option<f64>,
    pub dbscan_eps: Option<f64>,
    pub dbscan_clusters: Option<usize>,
    pub dbscan_noise: Option<usize>,
    pub dbscan_ari_vs_truth: Option<f64>,
}

impl BaselineSummary {
    pub fn from_artifacts(b: &BaselineArtifacts) -> Self {
        Self {
            gmm_k: b.gmm.as_ref().map(|g| g.model.k()),
            gmm_merged_clusters: b.gmm.as_ref().map(|g| g.merge.n_merged_clusters),
            gmm_ari_vs_truth: b.gmm.as_ref().map(|g| g.ari_vs_truth),
            dbscan_eps: b.dbscan.as_ref().map(|d| d.params.eps),
            dbscan_clusters: b.dbscan.as_ref().map(|d| d.labels.n_clusters()),
            dbscan_noise: b.dbscan.as_ref().map(|d| d.labels.noise_count()),
            dbscan_ari_vs_truth: b.dbscan.as_ref().map(|d| d.ari_vs_truth),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub master_seed: u64,
    pub config: RunConfig,
    pub baseline: BaselineSummary,
    pub failed_replications: usize,
    pub stable_ari_scope: String,
}

fn round3(x: f64) -> String {
    format!("{x:.3}")
}

fn opt3(x: Option<f64>) -> String {
    x.map(round3).unwrap_or_else(|| "NA".into())
}

fn opt_full(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_else(|| "NA".into())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_owned(),
        source,
    })
}

fn write_rows(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let wrap = |source| Error::Csv {
        path: path.to_owned(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn condition_cells(r: &ConditionReport) -> Vec<String> {
    let c = &r.condition;
    vec![
        c.type_name().into(),
        c.vars_name().into(),
        c.magnitude_name().into(),
        c.rate.to_string(),
    ]
}

/// Writes the per-condition tables, the per-replication records and the run
/// manifest. Returns the paths written.
pub fn write_report(
    reports: &[ConditionReport],
    records: &[ReplicationRecord],
    config: &RunConfig,
    baseline: &BaselineArtifacts,
) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::EmptyReport);
    }
    let dir = &config.output_directory;
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.clone(),
        source,
    })?;
    let mut written = Vec::new();

    if config.has(Algorithm::Gmm) {
        let rows = reports
            .iter()
            .filter_map(|r| {
                r.gmm.as_ref().map(|g| {
                    let mut row = condition_cells(r);
                    row.extend([round3(g.n_clusters), opt3(g.ari), round3(g.n_merged), opt3(g.ari_merged)]);
                    row
                })
            })
            .collect();
        let path = dir.join(GMM_RESULTS);
        write_rows(
            &path,
            &["error_type", "vars", "magnitude", "rate", "n_clusters", "ari", "n_merged", "ari_merged"],
            rows,
        )?;
        written.push(path);
    }

    if config.has(Algorithm::Dbscan) {
        let rows = reports
            .iter()
            .filter_map(|r| {
                r.dbscan.as_ref().map(|d| {
                    let mut row = condition_cells(r);
                    row.extend([
                        round3(d.n_clusters),
                        opt3(d.ari),
                        round3(d.n_stable),
                        opt3(d.ari_stable),
                        round3(d.noise_size),
                    ]);
                    row
                })
            })
            .collect();
        let path = dir.join(DBSCAN_RESULTS);
        write_rows(
            &path,
            &[
                "error_type", "vars", "magnitude", "rate", "n_clusters", "ari", "n_stable", "ari_stable", "noise_size",
            ],
            rows,
        )?;
        written.push(path);
    }

    let mut rows = Vec::new();
    for rec in records {
        let c = &rec.condition;
        let prefix = vec![
            c.index.to_string(),
            c.type_name().to_string(),
            c.vars_name().to_string(),
            c.magnitude_name().to_string(),
            c.rate.to_string(),
            rec.replication.to_string(),
        ];
        if let Some(g) = &rec.gmm {
            let mut row = prefix.clone();
            row.extend([
                "gmm".to_string(),
                g.failed.to_string(),
                g.n_clusters.to_string(),
                opt_full(g.ari),
                g.n_merged.to_string(),
                opt_full(g.ari_merged),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ]);
            rows.push(row);
        }
        if let Some(d) = &rec.dbscan {
            let mut row = prefix;
            row.extend([
                "dbscan".to_string(),
                d.failed.to_string(),
                d.n_clusters.to_string(),
                opt_full(d.ari),
                String::new(),
                String::new(),
                d.n_stable.to_string(),
                opt_full(d.ari_stable),
                d.noise_size.to_string(),
                if d.eps.is_finite() { d.eps.to_string() } else { "NA".into() },
                d.noise_stable.map(|s| s.to_string()).unwrap_or_else(|| "NA".into()),
            ]);
            rows.push(row);
        }
    }
    let path = dir.join(REPLICATIONS);
    write_rows(
        &path,
        &[
            "condition", "error_type", "vars", "magnitude", "rate", "replication", "algorithm", "failed", "n_clusters",
            "ari", "n_merged", "ari_merged", "n_stable", "ari_stable", "noise_size", "eps", "noise_stable",
        ],
        rows,
    )?;
    written.push(path);

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        master_seed: config.master_seed,
        config: config.clone(),
        baseline: BaselineSummary::from_artifacts(baseline),
        failed_replications: records
            .iter()
            .filter(|r| r.gmm.as_ref().is_some_and(|g| g.failed) || r.dbscan.as_ref().is_some_and(|d| d.failed))
            .count(),
        stable_ari_scope: STABLE_ARI_SCOPE.into(),
    };
    let path = dir.join(MANIFEST);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    written.push(path);
    Ok(written)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}
