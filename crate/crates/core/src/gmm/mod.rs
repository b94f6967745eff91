//! Gaussian mixture models with full covariances: EM estimation, BIC model
//! selection and Bhattacharyya-based merging of components into clusters.

mod merge;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::ClusterLabels;
use crate::linalg::{add_outer, squared_euclidean, Cholesky, Matrix};
use crate::rng::RngStream;

pub use merge::{bhattacharyya_distance, merge_components, MergeResult, MergeStep};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Slack allowed when checking that an EM step did not lower the
/// log-likelihood, relative to `max(1, |logL|)`.
pub const ASCENT_TOLERANCE: f64 = 1e-9;

static ASCENT_CHECKS: AtomicU64 = AtomicU64::new(0);
static ASCENT_VIOLATIONS: AtomicU64 = AtomicU64::new(0);
// bits of the largest absolute drop seen; non-negative floats order like their bits
static ASCENT_WORST_DROP: AtomicU64 = AtomicU64::new(0);

/// Process-wide EM ascent bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AscentStats {
    pub checks: u64,
    pub violations: u64,
    /// Largest log-likelihood decrease among the violations.
    pub worst_drop: f64,
}

pub fn ascent_stats() -> AscentStats {
    AscentStats {
        checks: ASCENT_CHECKS.load(Ordering::Relaxed),
        violations: ASCENT_VIOLATIONS.load(Ordering::Relaxed),
        worst_drop: f64::from_bits(ASCENT_WORST_DROP.load(Ordering::Relaxed)),
    }
}

/// One weighted Gaussian with its cached factorization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawComponent", into = "RawComponent")]
pub struct GaussianComponent {
    weight: f64,
    mean: Vec<f64>,
    covariance: Matrix,
    chol: Cholesky,
    log_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct RawComponent {
    weight: f64,
    mean: Vec<f64>,
    covariance: Matrix,
}

impl TryFrom<RawComponent> for GaussianComponent {
    type Error = Error;

    fn try_from(raw: RawComponent) -> Result<Self> {
        GaussianComponent::new(raw.weight, raw.mean, raw.covariance)
    }
}

impl From<GaussianComponent> for RawComponent {
    fn from(c: GaussianComponent) -> Self {
        RawComponent {
            weight: c.weight,
            mean: c.mean,
            covariance: c.covariance,
        }
    }
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: Vec<f64>, covariance: Matrix) -> Result<Self> {
        if covariance.rows() != mean.len() || covariance.cols() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: covariance.rows(),
            });
        }
        if !(weight > 0.0 && weight <= 1.0 + 1e-12) {
            return Err(Error::InvalidWeights(format!("component weight {weight} outside (0, 1]")));
        }
        let chol = Cholesky::new(&covariance)?;
        let log_norm = -0.5 * (mean.len() as f64 * LN_2PI + chol.log_det());
        Ok(Self {
            weight,
            mean,
            covariance,
            chol,
            log_norm,
        })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_det(&self) -> f64 {
        self.chol.log_det()
    }

    /// `ln f(x | μ, Σ)`; both slices must have length `d`.
    #[inline]
    fn log_density(&self, x: &[f64], diff: &mut [f64]) -> f64 {
        for ((o, a), b) in diff.iter_mut().zip(x).zip(&self.mean) {
            *o = a - b;
        }
        self.log_norm - 0.5 * self.chol.whitened_norm_sq(diff)
    }
}

/// Log density of a multivariate normal, evaluated through the Cholesky factor.
pub fn mvn_logpdf(x: &[f64], mean: &[f64], covariance: &Matrix) -> Result<f64> {
    if x.len() != mean.len() {
        return Err(Error::DimensionMismatch {
            expected: mean.len(),
            got: x.len(),
        });
    }
    let c = GaussianComponent::new(1.0, mean.to_vec(), covariance.clone())?;
    let mut diff = vec![0.0; x.len()];
    Ok(c.log_density(x, &mut diff))
}

/// A fitted mixture. `responsibilities` and `log_likelihood` always describe
/// the current parameters on the data the model was fitted to.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GmmModel {
    components: Vec<GaussianComponent>,
    log_likelihood: f64,
    bic: f64,
    n: usize,
    d: usize,
    #[serde(skip)]
    responsibilities: Matrix,
    #[serde(default)]
    iterations: usize,
    #[serde(default)]
    converged: bool,
}

impl GmmModel {
    /// Builds a model from components and runs an E-step on `data`.
    pub fn from_components(data: &Matrix, components: Vec<GaussianComponent>) -> Result<Self> {
        check_weights(&components)?;
        if data.is_empty() {
            return Err(Error::TooFewPoints { needed: 1, got: 0 });
        }
        let d = data.cols();
        if let Some(c) = components.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: c.dim(),
            });
        }
        let (responsibilities, log_likelihood) = e_step(data, &components);
        let k = components.len();
        let n = data.rows();
        Ok(Self {
            bic: bic(log_likelihood, k, d, n),
            components,
            log_likelihood,
            n,
            d,
            responsibilities,
            iterations: 0,
            converged: false,
        })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn bic(&self) -> f64 {
        self.bic
    }

    /// n×K posterior component probabilities.
    pub fn responsibilities(&self) -> &Matrix {
        &self.responsibilities
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }
}

fn check_weights(components: &[GaussianComponent]) -> Result<()> {
    if components.is_empty() {
        return Err(Error::InvalidWeights("no components".into()));
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidWeights(format!("weights sum to {total}")));
    }
    Ok(())
}

/// Number of free parameters of a full-covariance mixture.
pub fn parameter_count(k: usize, d: usize) -> usize {
    (k - 1) + k * d + k * d * (d + 1) / 2
}

/// `−2 logL + p ln n`; lower is better.
pub fn bic(log_likelihood: f64, k: usize, d: usize, n: usize) -> f64 {
    -2.0 * log_likelihood + parameter_count(k, d) as f64 * (n as f64).ln()
}

#[inline]
fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln Σ_k w_k f_k(x)` with log-sum-exp stabilization.
pub fn mixture_logpdf(x: &[f64], model: &GmmModel) -> Result<f64> {
    check_weights(&model.components)?;
    if x.len() != model.d {
        return Err(Error::DimensionMismatch {
            expected: model.d,
            got: x.len(),
        });
    }
    let mut diff = vec![0.0; x.len()];
    let terms: Vec<f64> = model
        .components
        .iter()
        .map(|c| c.weight.ln() + c.log_density(x, &mut diff))
        .collect();
    Ok(log_sum_exp(&terms))
}

/// Writes `ln w + ln f(x_i)` into column `j` of `out` for every row, with
/// the dimension fixed at compile time so the inner loops unroll.
fn log_terms_fixed<const D: usize>(data: &Matrix, c: &GaussianComponent, out: &mut Matrix, j: usize) {
    let inv = c.chol.inverse_packed();
    let mut mean = [0.0; D];
    mean.copy_from_slice(&c.mean);
    let offset = c.weight.ln() + c.log_norm;
    for (i, x) in data.as_slice().chunks_exact(D).enumerate() {
        let mut diff = [0.0; D];
        for t in 0..D {
            diff[t] = x[t] - mean[t];
        }
        let mut at = 0;
        let mut quad = 0.0;
        for a in 0..D {
            let mut y = 0.0;
            for b in 0..=a {
                y += inv[at + b] * diff[b];
            }
            at += a + 1;
            quad += y * y;
        }
        out[(i, j)] = offset - 0.5 * quad;
    }
}

fn log_terms(data: &Matrix, c: &GaussianComponent, out: &mut Matrix, j: usize) {
    match data.cols() {
        1 => log_terms_fixed::<1>(data, c, out, j),
        2 => log_terms_fixed::<2>(data, c, out, j),
        3 => log_terms_fixed::<3>(data, c, out, j),
        4 => log_terms_fixed::<4>(data, c, out, j),
        d => {
            let log_w = c.weight.ln();
            let mut diff = vec![0.0; d];
            for (i, x) in data.iter_rows().enumerate() {
                out[(i, j)] = log_w + c.log_density(x, &mut diff);
            }
        }
    }
}

/// Posterior probabilities and total log-likelihood.
fn e_step(data: &Matrix, components: &[GaussianComponent]) -> (Matrix, f64) {
    let (n, k) = (data.rows(), components.len());
    let mut resp = Matrix::zeros(n, k);
    for (j, c) in components.iter().enumerate() {
        log_terms(data, c, &mut resp, j);
    }
    let mut total = 0.0;
    for i in 0..n {
        let row = resp.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        total += max + sum.ln();
        let inv = 1.0 / sum;
        row.iter_mut().for_each(|v| *v *= inv);
    }
    (resp, total)
}

/// Responsibility mass, weighted mean and weighted scatter (lower triangle)
/// of column `j`.
fn weighted_moments_fixed<const D: usize>(data: &Matrix, resp: &Matrix, j: usize) -> (f64, Vec<f64>, Matrix) {
    let mut mass = 0.0;
    let mut sum = [0.0; D];
    for (i, x) in data.as_slice().chunks_exact(D).enumerate() {
        let r = resp[(i, j)];
        mass += r;
        for t in 0..D {
            sum[t] += r * x[t];
        }
    }
    let mean = sum.map(|v| v / mass);
    let mut lower = [[0.0; D]; D];
    for (i, x) in data.as_slice().chunks_exact(D).enumerate() {
        let r = resp[(i, j)];
        let mut diff = [0.0; D];
        for t in 0..D {
            diff[t] = x[t] - mean[t];
        }
        for a in 0..D {
            let ra = r * diff[a];
            for b in 0..=a {
                lower[a][b] += ra * diff[b];
            }
        }
    }
    let mut scatter = Matrix::zeros(D, D);
    for a in 0..D {
        for b in 0..=a {
            scatter[(a, b)] = lower[a][b];
        }
    }
    (mass, mean.to_vec(), scatter)
}

fn weighted_moments(data: &Matrix, resp: &Matrix, j: usize) -> (f64, Vec<f64>, Matrix) {
    let d = data.cols();
    match d {
        1 => return weighted_moments_fixed::<1>(data, resp, j),
        2 => return weighted_moments_fixed::<2>(data, resp, j),
        3 => return weighted_moments_fixed::<3>(data, resp, j),
        4 => return weighted_moments_fixed::<4>(data, resp, j),
        _ => {}
    }
    let mut mass = 0.0;
    let mut mean = vec![0.0; d];
    for (i, x) in data.iter_rows().enumerate() {
        let r = resp[(i, j)];
        mass += r;
        for (m, v) in mean.iter_mut().zip(x) {
            *m += r * v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= mass);
    let mut scatter = Matrix::zeros(d, d);
    let mut diff = vec![0.0; d];
    for (i, x) in data.iter_rows().enumerate() {
        let r = resp[(i, j)];
        for t in 0..d {
            diff[t] = x[t] - mean[t];
        }
        for a in 0..d {
            let ra = r * diff[a];
            let row = scatter.row_mut(a);
            for b in 0..=a {
                row[b] += ra * diff[b];
            }
        }
    }
    (mass, mean, scatter)
}

/// Weighted means and ridged covariances from a responsibility matrix.
fn m_step(data: &Matrix, resp: &Matrix, ridge: f64) -> Result<Vec<GaussianComponent>> {
    let (n, d) = (data.rows(), data.cols());
    let k = resp.cols();
    let floor = k as f64 / (10.0 * n as f64);
    let mut mass = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut scatter = Vec::with_capacity(k);
    for j in 0..k {
        let (m, mean, mut cov) = weighted_moments(data, resp, j);
        let weight = m / n as f64;
        if !(weight >= floor) {
            return Err(Error::DegenerateComponent {
                component: j,
                weight,
                floor,
            });
        }
        for a in 0..d {
            for b in 0..a {
                cov[(b, a)] = cov[(a, b)];
            }
        }
        mass.push(m);
        means.push(mean);
        scatter.push(cov);
    }

    let total_mass: f64 = mass.iter().sum();
    let mut out = Vec::with_capacity(k);
    for (j, (mut cov, mean)) in scatter.into_iter().zip(means).enumerate() {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] /= mass[j];
            }
        }
        let bump = ridge * cov.trace() / d as f64;
        for a in 0..d {
            cov[(a, a)] += bump;
        }
        let comp = GaussianComponent::new(mass[j] / total_mass, mean, cov).map_err(|e| match e {
            Error::NotPositiveDefinite { .. } => Error::DegenerateComponent {
                component: j,
                weight: mass[j] / n as f64,
                floor,
            },
            other => other,
        })?;
        out.push(comp);
    }
    Ok(out)
}

/// One EM iteration: M-step from the model's responsibilities, then the
/// E-step that refreshes responsibilities and log-likelihood.
pub fn em_step(data: &Matrix, model: &GmmModel, ridge: f64) -> Result<GmmModel> {
    if data.rows() != model.n || data.cols() != model.d {
        return Err(Error::DimensionMismatch {
            expected: model.n,
            got: data.rows(),
        });
    }
    let components = m_step(data, &model.responsibilities, ridge)?;
    let mut next = GmmModel::from_components(data, components)?;
    next.iterations = model.iterations + 1;
    Ok(next)
}

/// EM settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iterations: usize,
    pub rel_tolerance: f64,
    pub restarts: usize,
    pub ridge: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            rel_tolerance: 1e-8,
            restarts: 5,
            ridge: 1e-6,
        }
    }
}

impl EmConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.restarts == 0 || !(self.rel_tolerance > 0.0) || !(self.ridge > 0.0) {
            return Err(Error::InvalidParams(format!("EM config fields must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// k-means++ seeding: the first seed uniformly, later seeds with probability
/// proportional to squared distance from the nearest chosen seed.
fn kmeanspp_seeds<R: Rng + ?Sized>(data: &Matrix, k: usize, rng: &mut R) -> Vec<usize> {
    let n = data.rows();
    let mut seeds = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = data
        .iter_rows()
        .map(|x| squared_euclidean(x, data.row(seeds[0])))
        .collect();
    while seeds.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        seeds.push(next);
        for (i, x) in data.iter_rows().enumerate() {
            nearest[i] = nearest[i].min(squared_euclidean(x, data.row(next)));
        }
    }
    seeds
}

/// Starting model: means at k-means++ seeds, every covariance equal to the
/// pooled within-group covariance of the nearest-seed partition, equal weights.
fn initial_model<R: Rng + ?Sized>(data: &Matrix, k: usize, ridge: f64, rng: &mut R) -> Result<GmmModel> {
    let d = data.cols();
    let seeds = kmeanspp_seeds(data, k, rng);
    let centers: Vec<&[f64]> = seeds.iter().map(|&s| data.row(s)).collect();

    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    let assign: Vec<usize> = data
        .iter_rows()
        .map(|x| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centers.iter().enumerate() {
                let dist = squared_euclidean(x, c);
                if dist < best_d {
                    best_d = dist;
                    best = j;
                }
            }
            best
        })
        .collect();
    for (x, &g) in data.iter_rows().zip(&assign) {
        counts[g] += 1;
        for (s, v) in sums[g].iter_mut().zip(x) {
            *s += v;
        }
    }
    let group_means: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|v| v / c.max(1) as f64).collect())
        .collect();
    let mut pooled = Matrix::zeros(d, d);
    let mut diff = vec![0.0; d];
    for (x, &g) in data.iter_rows().zip(&assign) {
        for t in 0..d {
            diff[t] = x[t] - group_means[g][t];
        }
        add_outer(&mut pooled, &diff, 1.0);
    }
    let n = data.rows() as f64;
    for a in 0..d {
        for b in 0..d {
            pooled[(a, b)] /= n;
        }
    }
    let bump = ridge * pooled.trace() / d as f64;
    for a in 0..d {
        pooled[(a, a)] += bump.max(f64::MIN_POSITIVE);
    }

    let components = centers
        .iter()
        .map(|c| GaussianComponent::new(1.0 / k as f64, c.to_vec(), pooled.clone()))
        .collect::<Result<Vec<_>>>()?;
    GmmModel::from_components(data, components)
}

fn run_em(data: &Matrix, mut model: GmmModel, config: &EmConfig) -> Result<GmmModel> {
    // The seeded start is not an M-step fixed point; ascent is only guaranteed
    // from the first M-step on.
    model = em_step(data, &model, config.ridge)?;
    while model.iterations < config.max_iterations {
        let next = em_step(data, &model, config.ridge)?;
        let (old, new) = (model.log_likelihood, next.log_likelihood);
        ASCENT_CHECKS.fetch_add(1, Ordering::Relaxed);
        if new < old - ASCENT_TOLERANCE * old.abs().max(1.0) {
            ASCENT_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
            ASCENT_WORST_DROP.fetch_max((old - new).to_bits(), Ordering::Relaxed);
            log::debug!("EM step lowered logL from {old} to {new}");
        }
        let change = (new - old).abs() / old.abs().max(f64::MIN_POSITIVE);
        model = next;
        if change < config.rel_tolerance {
            model.converged = true;
            break;
        }
    }
    Ok(model)
}

/// Best-of-restarts EM fit of a `k`-component mixture. Restart `r` seeds from
/// the sub-stream `("restart", r)`.
pub fn fit_gmm(data: &Matrix, k: usize, config: &EmConfig, stream: &RngStream) -> Result<GmmModel> {
    config.validate()?;
    if k == 0 {
        return Err(Error::InvalidParams("K must be at least 1".into()));
    }
    let needed = k * (data.cols() + 1);
    if data.rows() < needed {
        return Err(Error::TooFewPoints {
            needed,
            got: data.rows(),
        });
    }
    let mut best: Option<GmmModel> = None;
    for r in 0..config.restarts {
        let mut rng = stream.child("restart", r as u64).rng();
        let fitted = initial_model(data, k, config.ridge, &mut rng).and_then(|m| run_em(data, m, config));
        match fitted {
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.log_likelihood > b.log_likelihood) {
                    best = Some(m);
                }
            }
            Err(Error::DegenerateComponent { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    best.ok_or(Error::AllRestartsDegenerate {
        k,
        restarts: config.restarts,
    })
}

/// Fits every K in `k_min..=k_max` (K uses sub-stream `("k", K)`) and returns
/// the lowest-BIC model, preferring smaller K on ties.
pub fn select_k(
    data: &Matrix,
    k_min: usize,
    k_max: usize,
    config: &EmConfig,
    stream: &RngStream,
) -> Result<GmmModel> {
    if k_min == 0 || k_min > k_max {
        return Err(Error::InvalidParams(format!("invalid K range {k_min}..={k_max}")));
    }
    let mut best: Option<GmmModel> = None;
    for k in k_min..=k_max {
        match fit_gmm(data, k, config, &stream.child("k", k as u64)) {
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.bic < b.bic) {
                    best = Some(m);
                }
            }
            Err(Error::AllRestartsDegenerate { .. }) => {
                log::debug!("K = {k}: every restart degenerated");
            }
            Err(e) => return Err(e),
        }
    }
    best.ok_or(Error::NoUsableFit { k_min, k_max })
}

/// MAP labels: argmax posterior, ties to the lower component index. With a
/// merge result, component labels are mapped to merged-cluster ids.
pub fn map_assign(model: &GmmModel, data: &Matrix, merge: Option<&MergeResult>) -> Result<ClusterLabels> {
    if data.cols() != model.d {
        return Err(Error::DimensionMismatch {
            expected: model.d,
            got: data.cols(),
        });
    }
    let (resp, _) = e_step(data, &model.components);
    let raw: Vec<i32> = resp.iter_rows().map(|r| argmax(r) as i32).collect();
    match merge {
        None => ClusterLabels::new(raw, model.k()),
        Some(m) => {
            let mapped = raw.iter().map(|&c| m.cluster_of_component[c as usize] as i32).collect();
            ClusterLabels::new(mapped, m.n_merged_clusters)
        }
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = j;
        }
    }
    best
}
