//! Sampling of multivariate normal mixtures, including the fixed
//! three-component population the robustness study perturbs.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::rng::RngStream;

const BASELINE_CONFIG: &str = include_str!("../config/baseline.json");

/// Population-level parameters of one Gaussian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

impl GaussianSpec {
    pub fn new(mean: Vec<f64>, covariance: Matrix) -> Result<Self> {
        let spec = Self { mean, covariance };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Checks shapes and positive definiteness, returning the factorization.
    pub fn validate(&self) -> Result<Cholesky> {
        let d = self.mean.len();
        if self.covariance.rows() != d || self.covariance.cols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.covariance.rows(),
            });
        }
        if !self.covariance.is_symmetric(1e-12) {
            return Err(Error::InvalidParams("covariance is not symmetric".into()));
        }
        Cholesky::new(&self.covariance)
    }
}

/// A mixture with deterministic per-component sample sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<GaussianSpec>,
    pub counts: Vec<usize>,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidParams("mixture has no components".into()));
        }
        if self.components.len() != self.counts.len() {
            return Err(Error::InvalidParams(format!(
                "{} components but {} counts",
                self.components.len(),
                self.counts.len()
            )));
        }
        if self.counts.contains(&0) {
            return Err(Error::InvalidParams("component counts must be positive".into()));
        }
        let d = self.components[0].dim();
        for c in &self.components {
            if c.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.dim(),
                });
            }
            c.validate()?;
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, GaussianSpec::dim)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The three-component population: 400/350/250 draws from G1, G2, G3.
    pub fn baseline() -> Self {
        Self::from_json(BASELINE_CONFIG).expect("bundled baseline config is valid")
    }
}

/// Observations plus the index of the component that generated each row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub values: Matrix,
    pub labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    /// Rows belonging to generating component `k`.
    pub fn component_rows(&self, k: usize) -> Matrix {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == k).collect();
        self.values.select_rows(&idx)
    }
}

/// Draws `n` rows `μ + L z` with `z` standard normal, from an explicit generator.
pub fn sample_mvn_with<R: Rng + ?Sized>(spec: &GaussianSpec, n: usize, rng: &mut R) -> Result<Matrix> {
    let chol = spec.validate()?;
    let d = spec.dim();
    let mut out = Matrix::zeros(n, d);
    let mut z = vec![0.0; d];
    let mut lz = vec![0.0; d];
    for i in 0..n {
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        chol.mul_lower(&z, &mut lz);
        for (o, (m, v)) in out.row_mut(i).iter_mut().zip(spec.mean.iter().zip(&lz)) {
            *o = m + v;
        }
    }
    Ok(out)
}

pub fn sample_mvn(spec: &GaussianSpec, n: usize, stream: &RngStream) -> Result<Matrix> {
    sample_mvn_with(spec, n, &mut stream.rng())
}

/// Samples every component in order; component `k` draws from the sub-stream
/// `("component", k)` and its rows are labeled `k`.
pub fn generate_mixture(spec: &MixtureSpec, stream: &RngStream) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut parts = Vec::with_capacity(spec.components.len());
    let mut labels = Vec::with_capacity(spec.total());
    for (k, (component, &count)) in spec.components.iter().zip(&spec.counts).enumerate() {
        parts.push(sample_mvn(component, count, &stream.child("component", k as u64))?);
        labels.extend(std::iter::repeat_n(k, count));
    }
    Ok(LabeledDataset {
        values: Matrix::vstack(&parts)?,
        labels,
    })
}

/// The study's error-free dataset: 1000 rows, components kept in order.
pub fn generate_baseline(stream: &RngStream) -> LabeledDataset {
    generate_mixture(&MixtureSpec::baseline(), stream).expect("baseline spec is valid")
}
