use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::conditions::{enumerate_conditions, ConditionId};
use crate::datagen::{generate_baseline, LabeledDataset};
use crate::dbscan::{dbscan, fit_auto, DbscanParams};
use crate::error::{Error, Result};
use crate::error_model::{inject, ErrorCondition};
use crate::gmm::{map_assign, merge_components, select_k, EmConfig, GmmModel, MergeResult};
use crate::labels::ClusterLabels;
use crate::rng::RngStream;
use crate::validation::{adjusted_rand_index, assess_stability, stable_subset_labels, StabilityReport};

/// Purpose codes for the `("use", _)` path element.
const USE_INJECT: u64 = 0;
const USE_GMM: u64 = 1;
const USE_STABILITY: u64 = 2;
const USE_DATA: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Gmm,
    Dbscan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub master_seed: u64,
    pub replications: usize,
    pub stability_bootstraps: usize,
    pub algorithms: Vec<Algorithm>,
    pub k_min: usize,
    pub k_max: usize,
    pub merge_cutoff: f64,
    pub stability_threshold: f64,
    pub eps_override: Option<f64>,
    /// Grid indices to run; `None` runs all 36.
    pub conditions: Option<Vec<usize>>,
    pub output_directory: PathBuf,
    pub worker_count: usize,
    pub em: EmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 1,
            replications: 100,
            stability_bootstraps: 50,
            algorithms: vec![Algorithm::Gmm, Algorithm::Dbscan],
            k_min: 1,
            k_max: 10,
            merge_cutoff: 0.1,
            stability_threshold: 0.7,
            eps_override: None,
            conditions: None,
            output_directory: PathBuf::from("results"),
            worker_count: 1,
            em: EmConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParams("replications must be at least 1".into()));
        }
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::InvalidParams(format!("empty K range {}..={}", self.k_min, self.k_max)));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidParams("no algorithms selected".into()));
        }
        if self.has(Algorithm::Dbscan) && self.stability_bootstraps == 0 {
            return Err(Error::InvalidB);
        }
        if let Some(eps) = self.eps_override {
            DbscanParams::new(eps, 1)?;
        }
        if let Some(idx) = &self.conditions {
            if let Some(&bad) = idx.iter().find(|&&i| i >= 36) {
                return Err(Error::IndexOutOfRange { index: bad, len: 36 });
            }
        }
        Ok(())
    }

    pub fn has(&self, algorithm: Algorithm) -> bool {
        self.algorithms.contains(&algorithm)
    }

    pub fn selected_conditions(&self) -> Vec<ConditionId> {
        let all = enumerate_conditions();
        match &self.conditions {
            None => all,
            Some(idx) => idx.iter().map(|&i| all[i]).collect(),
        }
    }

    fn workers(&self) -> usize {
        self.worker_count.max(1)
    }
}

#[derive(Clone, Debug)]
pub struct GmmBaseline {
    pub model: GmmModel,
    pub merge: MergeResult,
    /// Raw MAP labels; the reference for every GMM comparison.
    pub labels: ClusterLabels,
    pub merged_labels: ClusterLabels,
    pub ari_vs_truth: f64,
}

#[derive(Clone, Debug)]
pub struct DbscanBaseline {
    pub params: DbscanParams,
    pub labels: ClusterLabels,
    pub ari_vs_truth: f64,
}

/// Everything computed once on the error-free data.
#[derive(Clone, Debug)]
pub struct BaselineArtifacts {
    pub dataset: LabeledDataset,
    pub gmm: Option<GmmBaseline>,
    pub dbscan: Option<DbscanBaseline>,
}

fn true_labels(data: &LabeledDataset) -> Vec<i32> {
    data.labels.iter().map(|&l| l as i32).collect()
}

fn baseline_stream(config: &RunConfig) -> RngStream {
    RngStream::new(config.master_seed).child("baseline", 0)
}

fn dbscan_params(data: &crate::linalg::Matrix, eps_override: Option<f64>) -> Result<(DbscanParams, ClusterLabels)> {
    let min_points = DbscanParams::default_min_points(data.cols());
    match eps_override {
        Some(eps) => {
            let params = DbscanParams::new(eps, min_points)?;
            let labels = dbscan(data, &params)?;
            Ok((params, labels))
        }
        None => fit_auto(data, min_points),
    }
}

/// Generates the baseline dataset and fits the selected algorithms to it.
pub fn run_baseline(config: &RunConfig) -> Result<BaselineArtifacts> {
    config.validate()?;
    let stream = baseline_stream(config);
    let dataset = generate_baseline(&stream.child("use", USE_DATA));
    let truth = true_labels(&dataset);

    let gmm = if config.has(Algorithm::Gmm) {
        let model = select_k(
            &dataset.values,
            config.k_min,
            config.k_max,
            &config.em,
            &stream.child("use", USE_GMM),
        )?;
        let merge = merge_components(&model, config.merge_cutoff);
        let labels = map_assign(&model, &dataset.values, None)?;
        let merged_labels = map_assign(&model, &dataset.values, Some(&merge))?;
        let ari_vs_truth = adjusted_rand_index(labels.labels(), &truth)?;
        Some(GmmBaseline {
            model,
            merge,
            labels,
            merged_labels,
            ari_vs_truth,
        })
    } else {
        None
    };

    let dbscan = if config.has(Algorithm::Dbscan) {
        let (params, labels) = dbscan_params(&dataset.values, config.eps_override)?;
        let ari_vs_truth = adjusted_rand_index(labels.labels(), &truth)?;
        Some(DbscanBaseline {
            params,
            labels,
            ari_vs_truth,
        })
    } else {
        None
    };

    Ok(BaselineArtifacts { dataset, gmm, dbscan })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmRecord {
    /// Number of mixture components selected by BIC; 0 when the fit failed.
    pub n_clusters: usize,
    pub ari: Option<f64>,
    pub n_merged: usize,
    pub ari_merged: Option<f64>,
    pub failed: bool,
}

impl GmmRecord {
    fn failed() -> Self {
        Self {
            n_clusters: 0,
            ari: None,
            n_merged: 0,
            ari_merged: None,
            failed: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DbscanRecord {
    /// Substantive clusters plus one for a non-empty noise set.
    pub n_clusters: usize,
    pub n_substantive: usize,
    pub ari: Option<f64>,
    pub n_stable: usize,
    pub ari_stable: Option<f64>,
    pub noise_size: usize,
    pub eps: f64,
    /// `None` when there was no noise to assess.
    pub noise_stable: Option<bool>,
    pub failed: bool,
}

impl DbscanRecord {
    fn failed() -> Self {
        Self {
            n_clusters: 0,
            n_substantive: 0,
            ari: None,
            n_stable: 0,
            ari_stable: None,
            noise_size: 0,
            eps: f64::NAN,
            noise_stable: None,
            failed: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub condition: ConditionId,
    pub replication: usize,
    pub gmm: Option<GmmRecord>,
    pub dbscan: Option<DbscanRecord>,
}

fn gmm_replication(
    data: &crate::linalg::Matrix,
    baseline: &GmmBaseline,
    config: &RunConfig,
    stream: &RngStream,
) -> Result<GmmRecord> {
    let model = select_k(data, config.k_min, config.k_max, &config.em, stream)?;
    let merge = merge_components(&model, config.merge_cutoff);
    let raw = map_assign(&model, data, None)?;
    let merged = map_assign(&model, data, Some(&merge))?;
    let reference = baseline.labels.labels();
    Ok(GmmRecord {
        n_clusters: model.k(),
        ari: Some(adjusted_rand_index(raw.labels(), reference)?),
        n_merged: merge.n_merged_clusters,
        ari_merged: Some(adjusted_rand_index(merged.labels(), reference)?),
        failed: false,
    })
}

/// DBSCAN on one perturbed dataset plus its bootstrap stability.
pub fn dbscan_replication(
    data: &crate::linalg::Matrix,
    reference: &ClusterLabels,
    config: &RunConfig,
    stream: &RngStream,
) -> Result<(DbscanRecord, Option<StabilityReport>)> {
    let (params, labels) = dbscan_params(data, config.eps_override)?;
    let noise_size = labels.noise_count();
    let ari = adjusted_rand_index(labels.labels(), reference.labels())?;
    let n_clusters = labels.n_clusters() + usize::from(noise_size > 0);
    if labels.n_clusters() == 0 {
        // nothing to bootstrap; the stable subset is empty
        let stable = ClusterLabels::new(vec![crate::labels::NOISE; labels.len()], 0)?;
        return Ok((
            DbscanRecord {
                n_clusters,
                n_substantive: 0,
                ari: Some(ari),
                n_stable: 0,
                ari_stable: Some(adjusted_rand_index(stable.labels(), reference.labels())?),
                noise_size,
                eps: params.eps,
                noise_stable: None,
                failed: false,
            },
            None,
        ));
    }
    let report = assess_stability(
        data,
        &labels,
        &params,
        config.stability_bootstraps,
        config.stability_threshold,
        stream,
    )?;
    let stable = stable_subset_labels(&labels, &report);
    Ok((
        DbscanRecord {
            n_clusters,
            n_substantive: labels.n_clusters(),
            ari: Some(ari),
            n_stable: report.n_stable(),
            ari_stable: Some(adjusted_rand_index(stable.labels(), reference.labels())?),
            noise_size,
            eps: params.eps,
            noise_stable: report.noise().map(|n| n.stable),
            failed: false,
        },
        Some(report),
    ))
}

/// Runs one replication for an arbitrary error condition. `stream` must be
/// unique to the replication.
pub fn run_replication_with(
    condition: &ErrorCondition,
    stream: &RngStream,
    baseline: &BaselineArtifacts,
    config: &RunConfig,
) -> Result<(Option<GmmRecord>, Option<DbscanRecord>)> {
    let params = condition.injection_params(baseline.dataset.dim())?;
    let perturbed = inject(&baseline.dataset, condition, &params, &stream.child("use", USE_INJECT))?;
    let data = &perturbed.values;

    let gmm = baseline.gmm.as_ref().map(|b| {
        gmm_replication(data, b, config, &stream.child("use", USE_GMM)).unwrap_or_else(|e| {
            log::warn!("GMM fit failed: {e}");
            GmmRecord::failed()
        })
    });
    let dbscan = baseline.dbscan.as_ref().map(|b| {
        dbscan_replication(data, &b.labels, config, &stream.child("use", USE_STABILITY))
            .map(|(r, _)| r)
            .unwrap_or_else(|e| {
                log::warn!("DBSCAN fit failed: {e}");
                DbscanRecord::failed()
            })
    });
    Ok((gmm, dbscan))
}

pub fn replication_stream(config: &RunConfig, condition: &ConditionId, replication: usize) -> RngStream {
    RngStream::new(config.master_seed)
        .child("cond", condition.index as u64)
        .child("rep", replication as u64)
}

/// One grid replication: perturb the baseline, recluster, compare.
pub fn run_replication(
    condition: &ConditionId,
    replication: usize,
    baseline: &BaselineArtifacts,
    config: &RunConfig,
) -> Result<ReplicationRecord> {
    let stream = replication_stream(config, condition, replication);
    let (gmm, dbscan) = run_replication_with(&condition.error_condition(), &stream, baseline, config)?;
    Ok(ReplicationRecord {
        condition: *condition,
        replication,
        gmm,
        dbscan,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GmmSummary {
    pub n_clusters: f64,
    pub ari: Option<f64>,
    pub n_merged: f64,
    pub ari_merged: Option<f64>,
    pub failures: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DbscanSummary {
    pub n_clusters: f64,
    pub ari: Option<f64>,
    pub n_stable: f64,
    pub ari_stable: Option<f64>,
    pub noise_size: f64,
    pub eps: f64,
    /// Share of replications with an assessed noise set in which it was unstable.
    pub noise_unstable_share: Option<f64>,
    pub failures: usize,
}

/// Per-condition means over all replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: ConditionId,
    pub replications: usize,
    pub gmm: Option<GmmSummary>,
    pub dbscan: Option<DbscanSummary>,
}

fn mean<I: Iterator<Item = f64>>(values: I) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

impl ConditionReport {
    /// Aggregates records in the order given. Counts average over every
    /// record, sentinels included; indices average over successful fits.
    pub fn aggregate(condition: ConditionId, records: &[&ReplicationRecord]) -> Self {
        let gmm: Vec<&GmmRecord> = records.iter().filter_map(|r| r.gmm.as_ref()).collect();
        let db: Vec<&DbscanRecord> = records.iter().filter_map(|r| r.dbscan.as_ref()).collect();
        let gmm = (!gmm.is_empty()).then(|| GmmSummary {
            n_clusters: mean(gmm.iter().map(|r| r.n_clusters as f64)).unwrap_or(0.0),
            ari: mean(gmm.iter().filter_map(|r| r.ari)),
            n_merged: mean(gmm.iter().map(|r| r.n_merged as f64)).unwrap_or(0.0),
            ari_merged: mean(gmm.iter().filter_map(|r| r.ari_merged)),
            failures: gmm.iter().filter(|r| r.failed).count(),
        });
        let dbscan = (!db.is_empty()).then(|| {
            let assessed: Vec<bool> = db.iter().filter_map(|r| r.noise_stable).collect();
            DbscanSummary {
                n_clusters: mean(db.iter().map(|r| r.n_clusters as f64)).unwrap_or(0.0),
                ari: mean(db.iter().filter_map(|r| r.ari)),
                n_stable: mean(db.iter().map(|r| r.n_stable as f64)).unwrap_or(0.0),
                ari_stable: mean(db.iter().filter_map(|r| r.ari_stable)),
                noise_size: mean(db.iter().map(|r| r.noise_size as f64)).unwrap_or(0.0),
                eps: mean(db.iter().filter(|r| !r.failed).map(|r| r.eps)).unwrap_or(f64::NAN),
                noise_unstable_share: mean(assessed.iter().map(|&s| if s { 0.0 } else { 1.0 })),
                failures: db.iter().filter(|r| r.failed).count(),
            }
        });
        Self {
            condition,
            replications: records.len(),
            gmm,
            dbscan,
        }
    }

    /// Largest failed share across algorithms.
    pub fn failure_share(&self) -> f64 {
        let failures = self
            .gmm
            .as_ref()
            .map_or(0, |g| g.failures)
            .max(self.dbscan.as_ref().map_or(0, |d| d.failures));
        failures as f64 / self.replications.max(1) as f64
    }
}

/// Reports and raw records of a grid run.
#[derive(Clone, Debug)]
pub struct GridOutcome {
    pub reports: Vec<ConditionReport>,
    pub records: Vec<ReplicationRecord>,
}

impl GridOutcome {
    /// Conditions with more than 10% failed replications.
    pub fn failing_conditions(&self) -> Vec<ConditionId> {
        self.reports
            .iter()
            .filter(|r| r.failure_share() > 0.1)
            .map(|r| r.condition)
            .collect()
    }
}

/// Executes every selected condition × replication on a pool of
/// `worker_count` threads. Work units own their random streams and results
/// are gathered in condition/replication order, so output does not depend on
/// the number of workers.
pub fn compute_grid(config: &RunConfig, baseline: &BaselineArtifacts) -> Result<GridOutcome> {
    use rayon::prelude::*;

    config.validate()?;
    let conditions = config.selected_conditions();
    let units: Vec<(ConditionId, usize)> = conditions
        .iter()
        .flat_map(|c| (0..config.replications).map(move |r| (*c, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers())
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let total = units.len();
    let records: Vec<ReplicationRecord> = pool.install(|| {
        units
            .par_iter()
            .map(|(c, r)| {
                let rec = run_replication(c, *r, baseline, config);
                let finished = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                if finished % config.replications == 0 {
                    log::info!("{finished}/{total} replications done");
                }
                rec
            })
            .collect::<Result<_>>()
    })?;

    let reports = conditions
        .iter()
        .map(|c| {
            let mine: Vec<&ReplicationRecord> = records.iter().filter(|r| r.condition.index == c.index).collect();
            ConditionReport::aggregate(*c, &mine)
        })
        .collect();
    Ok(GridOutcome { reports, records })
}

/// Baseline, full grid, and report files under `config.output_directory`.
pub fn run_grid(config: &RunConfig) -> Result<(BaselineArtifacts, GridOutcome)> {
    let baseline = run_baseline(config)?;
    let outcome = compute_grid(config, &baseline)?;
    super::report::write_report(&outcome.reports, &outcome.records, config, &baseline)?;
    Ok((baseline, outcome))
}
