//! Measurement-error injection.
//!
//! Observed values are `Y = X + ε` for a random subset of rows. Four error
//! laws are supported:
//!
//! * random i.i.d. `ε ~ N(0, σ)`;
//! * systematic shift `ε ~ N(μ, σ)` with `μ ≠ 0`;
//! * covariate-dependent: a per-row `Z ~ Bernoulli(π)`, drawn independently of
//!   `X`, selects between `N(μ₀, σ₀)` and `N(μ₁, σ₁)`;
//! * value-dependent: `ε ~ N(slope · (x − median), σ)` where the median is the
//!   clean column median.
//!
//! The second parameter of `N(·, ·)` is always a standard deviation.

use rand::Rng;
use rand_distr::{OpenClosed01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorType {
    RandomIid,
    SystematicShift,
    CovariateDependent,
    ValueDependent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variables {
    /// Only the first variable.
    One,
    All,
}

impl Variables {
    pub fn affected(self, d: usize) -> Vec<usize> {
        match self {
            Variables::One => (0..d.min(1)).collect(),
            Variables::All => (0..d).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Magnitude {
    Low,
    Medium,
    High,
}

impl Magnitude {
    fn level(self) -> usize {
        match self {
            Magnitude::Low => 0,
            Magnitude::Medium => 1,
            Magnitude::High => 2,
        }
    }
}

/// Mean and standard deviation of an additive normal error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub mean: f64,
    pub sd: f64,
}

impl Shift {
    pub const NONE: Shift = Shift { mean: 0.0, sd: 0.0 };

    pub fn new(mean: f64, sd: f64) -> Self {
        Self { mean, sd }
    }

    pub fn is_none(&self) -> bool {
        self.mean == 0.0 && self.sd == 0.0
    }
}

/// Per-variable shift parameters; untouched variables carry `(0, 0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub per_variable: Vec<Shift>,
}

/// Parameters of the covariate-dependent law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateParams {
    #[serde(default = "default_pi_z")]
    pub pi_z: f64,
    pub when_zero: Shift,
    pub when_one: Shift,
}

fn default_pi_z() -> f64 {
    0.5
}

/// Parameters of the value-dependent law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueParams {
    pub slope: f64,
    pub sd: f64,
}

/// Explicit parameters for the two laws that have no magnitude grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExplicitParams {
    Covariate(CovariateParams),
    Value(ValueParams),
}

/// One error condition: which law, which variables, how strong, how often.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorCondition {
    #[serde(rename = "type")]
    pub error_type: ErrorType,
    pub variables: Variables,
    pub magnitude: Magnitude,
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ExplicitParams>,
}

impl ErrorCondition {
    pub fn new(error_type: ErrorType, variables: Variables, magnitude: Magnitude, rate: f64) -> Self {
        Self {
            error_type,
            variables,
            magnitude,
            rate,
            params: None,
        }
    }

    pub fn with_params(mut self, params: ExplicitParams) -> Self {
        self.params = Some(params);
        self
    }

    /// Parameters `inject` needs for this condition on `d`-dimensional data.
    pub fn injection_params(&self, d: usize) -> Result<InjectionParams> {
        match (self.error_type, self.params) {
            (ErrorType::RandomIid | ErrorType::SystematicShift, _) => {
                resolve_noise_params(self, d).map(InjectionParams::Shift)
            }
            (ErrorType::CovariateDependent, Some(ExplicitParams::Covariate(p))) => {
                Ok(InjectionParams::Covariate(p))
            }
            (ErrorType::ValueDependent, Some(ExplicitParams::Value(p))) => Ok(InjectionParams::Value(p)),
            (t, _) => Err(Error::InvalidParams(format!("{t:?} requires matching explicit parameters"))),
        }
    }
}

/// Resolved parameters handed to [`inject`].
#[derive(Clone, Debug, PartialEq)]
pub enum InjectionParams {
    Shift(NoiseParams),
    Covariate(CovariateParams),
    Value(ValueParams),
}

const RANDOM_SD: [[f64; 3]; 3] = [[4.0, 8.0, 16.0], [2.0, 4.0, 16.0], [6.0, 12.0, 24.0]];
const SYSTEMATIC_MEAN: [[f64; 3]; 3] = [[2.5, 5.0, 10.0], [-2.5, -5.0, -10.0], [1.25, 2.5, 5.0]];
const SYSTEMATIC_SD: f64 = 2.0;

/// Looks up the study's noise grid for a random or systematic condition.
pub fn resolve_noise_params(condition: &ErrorCondition, d: usize) -> Result<NoiseParams> {
    let level = condition.magnitude.level();
    let entry: fn(usize, usize) -> Shift = match condition.error_type {
        ErrorType::RandomIid => |j, level| Shift::new(0.0, RANDOM_SD[j][level]),
        ErrorType::SystematicShift => |j, level| Shift::new(SYSTEMATIC_MEAN[j][level], SYSTEMATIC_SD),
        t => {
            return Err(Error::UnsupportedCondition(format!(
                "{t:?} takes explicit parameters, not magnitude levels"
            )))
        }
    };
    if d != 3 {
        return Err(Error::UnsupportedCondition(format!(
            "noise grids are defined for 3 variables, got {d}"
        )));
    }
    let mut per_variable = vec![Shift::NONE; d];
    for j in condition.variables.affected(d) {
        per_variable[j] = entry(j, level);
    }
    Ok(NoiseParams { per_variable })
}

/// Bernoulli mask with `mask[i] = U_i ≤ rate`, `U_i` uniform on `(0, 1]`.
pub fn select_affected_with<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Vec<bool> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.sample(OpenClosed01);
            u <= rate
        })
        .collect()
}

pub fn select_affected(n: usize, rate: f64, stream: &RngStream) -> Result<Vec<bool>> {
    check_rate(rate)?;
    Ok(select_affected_with(n, rate, &mut stream.rng()))
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidParams(format!("rate {rate} outside [0, 1]")));
    }
    Ok(())
}

fn check_sd(sd: f64) -> Result<()> {
    if !(sd >= 0.0) || !sd.is_finite() {
        return Err(Error::InvalidParams(format!("negative or non-finite sd {sd}")));
    }
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Returns a perturbed copy of `data`, along with the affected-row mask.
///
/// The generator first draws the `n` mask uniforms, then the error draws for
/// masked rows in row order. Unmasked rows are copied untouched.
pub fn inject_with_mask(
    data: &LabeledDataset,
    condition: &ErrorCondition,
    params: &InjectionParams,
    stream: &RngStream,
) -> Result<(LabeledDataset, Vec<bool>)> {
    if data.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    check_rate(condition.rate)?;
    let d = data.dim();
    let affected = condition.variables.affected(d);

    let type_ok = matches!(
        (condition.error_type, params),
        (ErrorType::RandomIid | ErrorType::SystematicShift, InjectionParams::Shift(_))
            | (ErrorType::CovariateDependent, InjectionParams::Covariate(_))
            | (ErrorType::ValueDependent, InjectionParams::Value(_))
    );
    if !type_ok {
        return Err(Error::InvalidParams(format!(
            "parameters do not match error type {:?}",
            condition.error_type
        )));
    }
    match params {
        InjectionParams::Shift(p) => {
            if p.per_variable.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.per_variable.len(),
                });
            }
            p.per_variable.iter().try_for_each(|s| check_sd(s.sd))?;
        }
        InjectionParams::Covariate(p) => {
            check_sd(p.when_zero.sd)?;
            check_sd(p.when_one.sd)?;
            if !(0.0..=1.0).contains(&p.pi_z) {
                return Err(Error::InvalidParams(format!("pi_z {} outside [0, 1]", p.pi_z)));
            }
        }
        InjectionParams::Value(p) => check_sd(p.sd)?,
    }

    let medians: Vec<f64> = match params {
        InjectionParams::Value(_) => (0..d).map(|j| median(&mut data.values.column(j))).collect(),
        _ => Vec::new(),
    };

    let mut rng = stream.rng();
    let mask = select_affected_with(data.len(), condition.rate, &mut rng);
    let mut out = data.clone();

    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let row = out.values.row_mut(i);
        match params {
            InjectionParams::Shift(p) => {
                for (j, s) in p.per_variable.iter().enumerate() {
                    if !s.is_none() {
                        row[j] += s.mean + s.sd * rng.sample::<f64, _>(StandardNormal);
                    }
                }
            }
            InjectionParams::Covariate(p) => {
                let z_one = rng.random::<f64>() < p.pi_z;
                let s = if z_one { p.when_one } else { p.when_zero };
                for &j in &affected {
                    row[j] += s.mean + s.sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            InjectionParams::Value(p) => {
                for &j in &affected {
                    let mean = p.slope * (row[j] - medians[j]);
                    row[j] += mean + p.sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }
    Ok((out, mask))
}

/// `Y = X + ε` on a random subset of rows; see [`inject_with_mask`].
pub fn inject(
    data: &LabeledDataset,
    condition: &ErrorCondition,
    params: &InjectionParams,
    stream: &RngStream,
) -> Result<LabeledDataset> {
    inject_with_mask(data, condition, params, stream).map(|(d, _)| d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_baseline;
    use crate::linalg::Matrix;

    fn zeros_dataset(n: usize, d: usize) -> LabeledDataset {
        LabeledDataset {
            values: Matrix::zeros(n, d),
            labels: vec![0; n],
        }
    }

    fn cond(t: ErrorType, v: Variables, m: Magnitude, rate: f64) -> ErrorCondition {
        ErrorCondition::new(t, v, m, rate)
    }

    #[test]
    fn random_one_low_lookup() {
        let p = resolve_noise_params(&cond(ErrorType::RandomIid, Variables::One, Magnitude::Low, 0.1), 3).unwrap();
        assert_eq!(p.per_variable, vec![Shift::new(0.0, 4.0), Shift::NONE, Shift::NONE]);
    }

    #[test]
    fn systematic_all_high_lookup() {
        let p = resolve_noise_params(
            &cond(ErrorType::SystematicShift, Variables::All, Magnitude::High, 0.4),
            3,
        )
        .unwrap();
        assert_eq!(
            p.per_variable,
            vec![Shift::new(10.0, 2.0), Shift::new(-10.0, 2.0), Shift::new(5.0, 2.0)]
        );
    }

    #[test]
    fn systematic_one_medium_lookup() {
        let p = resolve_noise_params(
            &cond(ErrorType::SystematicShift, Variables::One, Magnitude::Medium, 0.2),
            3,
        )
        .unwrap();
        assert_eq!(p.per_variable, vec![Shift::new(5.0, 2.0), Shift::NONE, Shift::NONE]);
    }

    #[test]
    fn random_all_grid_is_complete() {
        let expected = [
            (Magnitude::Low, [4.0, 2.0, 6.0]),
            (Magnitude::Medium, [8.0, 4.0, 12.0]),
            (Magnitude::High, [16.0, 16.0, 24.0]),
        ];
        for (m, sds) in expected {
            let p = resolve_noise_params(&cond(ErrorType::RandomIid, Variables::All, m, 0.1), 3).unwrap();
            let got: Vec<f64> = p.per_variable.iter().map(|s| s.sd).collect();
            assert_eq!(got, sds.to_vec());
            assert!(p.per_variable.iter().all(|s| s.mean == 0.0));
        }
    }

    #[test]
    fn explicit_laws_have_no_grid() {
        for t in [ErrorType::CovariateDependent, ErrorType::ValueDependent] {
            assert!(matches!(
                resolve_noise_params(&cond(t, Variables::All, Magnitude::Low, 0.1), 3),
                Err(Error::UnsupportedCondition(_))
            ));
        }
    }

    #[test]
    fn mask_extremes() {
        let s = RngStream::new(4);
        assert!(select_affected(500, 0.0, &s).unwrap().iter().all(|&m| !m));
        assert!(select_affected(500, 1.0, &s).unwrap().iter().all(|&m| m));
        assert!(select_affected(5, 1.5, &s).is_err());
    }

    #[test]
    fn mask_count_is_binomial() {
        // central 99.9% of Binomial(10000, 0.1): mean 1000, sd 30, z = 3.29
        for seed in 0..20 {
            let count = select_affected(10_000, 0.1, &RngStream::new(seed))
                .unwrap()
                .iter()
                .filter(|&&m| m)
                .count();
            assert!((901..=1100).contains(&count), "seed {seed}: {count}");
        }
    }

    #[test]
    fn zero_rate_is_identity() {
        let data = generate_baseline(&RngStream::new(1));
        let c = cond(ErrorType::RandomIid, Variables::All, Magnitude::High, 0.0);
        let p = c.injection_params(3).unwrap();
        assert_eq!(inject(&data, &c, &p, &RngStream::new(2)).unwrap(), data);
    }

    #[test]
    fn systematic_shift_full_rate() {
        let data = zeros_dataset(10_000, 3);
        let c = cond(ErrorType::SystematicShift, Variables::One, Magnitude::High, 1.0);
        let p = c.injection_params(3).unwrap();
        let out = inject(&data, &c, &p, &RngStream::new(8)).unwrap();
        let m = out.values.column_means();
        // N(10, 2) mean over 10⁴ draws: SE 0.02
        assert!((m[0] - 10.0).abs() < 0.06, "{}", m[0]);
        assert_eq!(out.values.column(1), data.values.column(1));
        assert_eq!(out.values.column(2), data.values.column(2));
    }

    #[test]
    fn unmasked_rows_bit_identical_and_input_untouched() {
        let data = generate_baseline(&RngStream::new(3));
        let before = data.clone();
        let c = cond(ErrorType::RandomIid, Variables::All, Magnitude::Medium, 0.2);
        let p = c.injection_params(3).unwrap();
        let (out, mask) = inject_with_mask(&data, &c, &p, &RngStream::new(4)).unwrap();
        assert_eq!(data, before);
        assert_eq!(out.labels, data.labels);
        for (i, &m) in mask.iter().enumerate() {
            if !m {
                assert_eq!(out.values.row(i), data.values.row(i));
            } else {
                assert_ne!(out.values.row(i), data.values.row(i));
            }
        }
    }

    #[test]
    fn negative_sd_rejected() {
        let data = zeros_dataset(10, 3);
        let c = cond(ErrorType::RandomIid, Variables::One, Magnitude::Low, 0.5);
        let p = InjectionParams::Shift(NoiseParams {
            per_variable: vec![Shift::new(0.0, -1.0), Shift::NONE, Shift::NONE],
        });
        assert!(matches!(inject(&data, &c, &p, &RngStream::new(1)), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn mismatched_params_rejected() {
        let data = zeros_dataset(10, 3);
        let c = cond(ErrorType::ValueDependent, Variables::One, Magnitude::Low, 0.5);
        let p = cond(ErrorType::RandomIid, Variables::One, Magnitude::Low, 0.5)
            .injection_params(3)
            .unwrap();
        assert!(inject(&data, &c, &p, &RngStream::new(1)).is_err());
        assert!(c.injection_params(3).is_err());
    }

    #[test]
    fn random_error_preserves_mean_in_expectation() {
        let data = generate_baseline(&RngStream::new(12));
        let clean = data.values.column_means()[0];
        let c = cond(ErrorType::RandomIid, Variables::One, Magnitude::High, 0.4);
        let p = c.injection_params(3).unwrap();
        let grand: f64 = (0..100)
            .map(|r| {
                inject(&data, &c, &p, &RngStream::new(12).child("rep", r))
                    .unwrap()
                    .values
                    .column_means()[0]
            })
            .sum::<f64>()
            / 100.0;
        assert!((grand - clean).abs() < 0.25, "{grand} vs {clean}");
    }

    #[test]
    fn systematic_shift_moves_mean_by_rate_times_shift() {
        let data = zeros_dataset(10_000, 3);
        let c = cond(ErrorType::SystematicShift, Variables::One, Magnitude::High, 0.4);
        let p = c.injection_params(3).unwrap();
        let out = inject(&data, &c, &p, &RngStream::new(77)).unwrap();
        let shift = out.values.column_means()[0];
        assert!((shift - 4.0).abs() < 0.4, "{shift}");
    }

    fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            let x = a[i].min(b[j]);
            while i < a.len() && a[i] <= x {
                i += 1;
            }
            while j < b.len() && b[j] <= x {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn covariate_law_collapses_to_shift_when_z_irrelevant() {
        let n = 10_000;
        let data = zeros_dataset(n, 3);
        let s = Shift::new(1.5, 3.0);
        let cov = ErrorCondition::new(ErrorType::CovariateDependent, Variables::One, Magnitude::Low, 1.0)
            .with_params(ExplicitParams::Covariate(CovariateParams {
                pi_z: 0.3,
                when_zero: s,
                when_one: s,
            }));
        let shift = cond(ErrorType::SystematicShift, Variables::One, Magnitude::Low, 1.0);
        let shift_params = InjectionParams::Shift(NoiseParams {
            per_variable: vec![s, Shift::NONE, Shift::NONE],
        });
        let a = inject(&data, &cov, &cov.injection_params(3).unwrap(), &RngStream::new(1)).unwrap();
        let b = inject(&data, &shift, &shift_params, &RngStream::new(2)).unwrap();
        let ks = ks_statistic(&mut a.values.column(0), &mut b.values.column(0));
        // two-sample critical value at α = 0.001: 1.95 · sqrt(2/n)
        let critical = 1.95 * (2.0 / n as f64).sqrt();
        assert!(ks < critical, "KS {ks} >= {critical}");
    }

    #[test]
    fn covariate_law_mixes_two_shifts() {
        let data = zeros_dataset(20_000, 3);
        let c = ErrorCondition::new(ErrorType::CovariateDependent, Variables::All, Magnitude::Low, 1.0)
            .with_params(ExplicitParams::Covariate(CovariateParams {
                pi_z: 0.25,
                when_zero: Shift::new(0.0, 0.0),
                when_one: Shift::new(8.0, 0.0),
            }));
        let out = inject(&data, &c, &c.injection_params(3).unwrap(), &RngStream::new(5)).unwrap();
        let ones = out.values.column(0).iter().filter(|&&v| v == 8.0).count() as f64 / 20_000.0;
        assert!((ones - 0.25).abs() < 0.015, "{ones}");
        // all variables of a row share one Z
        for row in out.values.iter_rows() {
            assert!(row.iter().all(|&v| v == row[0]));
        }
    }

    #[test]
    fn value_dependent_law_is_monotone_in_x() {
        let n = 1001;
        let values = Matrix::from_row_major(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let data = LabeledDataset { values, labels: vec![0; n] };
        let c = ErrorCondition::new(ErrorType::ValueDependent, Variables::All, Magnitude::Low, 1.0)
            .with_params(ExplicitParams::Value(ValueParams { slope: 0.5, sd: 0.0 }));
        let out = inject(&data, &c, &c.injection_params(1).unwrap(), &RngStream::new(5)).unwrap();
        // median 500: y = x + 0.5 (x - 500)
        for i in 0..n {
            let x = i as f64;
            assert!((out.values[(i, 0)] - (x + 0.5 * (x - 500.0))).abs() < 1e-12);
        }
    }

    #[test]
    fn condition_json_shape() {
        let c = cond(ErrorType::SystematicShift, Variables::All, Magnitude::Low, 0.1);
        let v: serde_json::Value = serde_json::to_value(&c).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"type": "SYSTEMATIC_SHIFT", "variables": "ALL", "magnitude": "LOW", "rate": 0.1})
        );
        let with = c.clone().with_params(ExplicitParams::Value(ValueParams { slope: 0.2, sd: 1.0 }));
        let text = serde_json::to_string(&with).unwrap();
        assert_eq!(serde_json::from_str::<ErrorCondition>(&text).unwrap(), with);
        let parsed: CovariateParams =
            serde_json::from_str(r#"{"when_zero":{"mean":0,"sd":1},"when_one":{"mean":2,"sd":1}}"#).unwrap();
        assert_eq!(parsed.pi_z, 0.5);
    }
}
