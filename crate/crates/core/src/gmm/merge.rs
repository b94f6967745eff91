//! Hierarchical merging of mixture components.
//!
//! Pairs of clusters are compared through the Bhattacharyya coefficient
//! `ρ = exp(−D_B)`. The most similar pair is fused while `ρ ≥ cutoff`; a fused
//! cluster is represented by the single Gaussian matching the first two
//! moments of its member components.

use serde::{Deserialize, Serialize};

use super::{GaussianComponent, GmmModel};
use crate::error::{Error, Result};
use crate::linalg::{add_outer, Cholesky, Matrix};

/// One fusion: the component sets on either side and their coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub criterion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeResult {
    /// Merged-cluster id of every component, contiguous from 0.
    pub cluster_of_component: Vec<usize>,
    pub n_merged_clusters: usize,
    pub trace: Vec<MergeStep>,
}

impl MergeResult {
    pub fn identity(k: usize) -> Self {
        Self {
            cluster_of_component: (0..k).collect(),
            n_merged_clusters: k,
            trace: Vec::new(),
        }
    }
}

fn distance_between(mean_a: &[f64], cov_a: &Matrix, mean_b: &[f64], cov_b: &Matrix) -> Result<f64> {
    let d = mean_a.len();
    if mean_b.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: mean_b.len(),
        });
    }
    let mut avg = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            avg[(i, j)] = 0.5 * (cov_a[(i, j)] + cov_b[(i, j)]);
        }
    }
    let chol_avg = Cholesky::new(&avg)?;
    let log_det_a = Cholesky::new(cov_a)?.log_det();
    let log_det_b = Cholesky::new(cov_b)?.log_det();
    let diff: Vec<f64> = mean_a.iter().zip(mean_b).map(|(a, b)| a - b).collect();
    let mut scratch = vec![0.0; d];
    let quad = chol_avg.quadratic_form(&diff, &mut scratch);
    let dist = quad / 8.0 + 0.5 * (chol_avg.log_det() - 0.5 * (log_det_a + log_det_b));
    // identical inputs can round a hair below zero
    Ok(dist.max(0.0))
}

/// `D_B = ⅛ Δμᵀ Σ̄⁻¹ Δμ + ½ ln(det Σ̄ / √(det Σ_a det Σ_b))`, `Σ̄ = (Σ_a + Σ_b)/2`.
pub fn bhattacharyya_distance(a: &GaussianComponent, b: &GaussianComponent) -> Result<f64> {
    distance_between(a.mean(), a.covariance(), b.mean(), b.covariance())
}

struct Representative {
    members: Vec<usize>,
    mean: Vec<f64>,
    covariance: Matrix,
}

fn moment_match(components: &[GaussianComponent], members: Vec<usize>) -> Representative {
    let d = components[0].dim();
    let total: f64 = members.iter().map(|&m| components[m].weight()).sum();
    let mut mean = vec![0.0; d];
    for &m in &members {
        let c = &components[m];
        for (acc, v) in mean.iter_mut().zip(c.mean()) {
            *acc += c.weight() * v / total;
        }
    }
    let mut covariance = Matrix::zeros(d, d);
    let mut diff = vec![0.0; d];
    for &m in &members {
        let c = &components[m];
        let w = c.weight() / total;
        for t in 0..d {
            diff[t] = c.mean()[t] - mean[t];
        }
        for i in 0..d {
            for j in 0..d {
                covariance[(i, j)] += w * c.covariance()[(i, j)];
            }
        }
        add_outer(&mut covariance, &diff, w);
    }
    Representative {
        members,
        mean,
        covariance,
    }
}

fn coefficient(a: &Representative, b: &Representative) -> f64 {
    distance_between(&a.mean, &a.covariance, &b.mean, &b.covariance)
        .map(|d| (-d).exp())
        .unwrap_or(0.0)
}

/// Fuses components until every pairwise coefficient is below `cutoff`.
/// Merged-cluster ids are ordered by their smallest member component.
pub fn merge_components(model: &GmmModel, cutoff: f64) -> MergeResult {
    let components = model.components();
    let k = components.len();
    let mut clusters: Vec<Representative> = (0..k).map(|c| moment_match(components, vec![c])).collect();
    let mut trace = Vec::new();

    while clusters.len() > 1 {
        let mut best = (0, 1, f64::NEG_INFINITY);
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let rho = coefficient(&clusters[i], &clusters[j]);
                if rho > best.2 {
                    best = (i, j, rho);
                }
            }
        }
        let (i, j, rho) = best;
        if rho < cutoff {
            break;
        }
        let right = clusters.remove(j);
        let left_members = clusters[i].members.clone();
        let mut members = left_members.clone();
        members.extend_from_slice(&right.members);
        members.sort_unstable();
        trace.push(MergeStep {
            left: left_members,
            right: right.members,
            criterion: rho,
        });
        clusters[i] = moment_match(components, members);
    }

    let mut cluster_of_component = vec![0; k];
    for (id, c) in clusters.iter().enumerate() {
        for &m in &c.members {
            cluster_of_component[m] = id;
        }
    }
    MergeResult {
        cluster_of_component,
        n_merged_clusters: clusters.len(),
        trace,
    }
}
