//! Parametric observation families over a finite parameter grid.
//!
//! The grid is split into a normal set and an anomalous set. Every quantity
//! here is in nats and evaluated in log space; products of likelihoods are
//! never formed directly.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observation density family. Exponential is parameterised by its rate,
/// Gaussian by its mean with unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Exponential,
    Gaussian,
}

/// A single-observation log-likelihood ratio in nats.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Llr(pub f64);

impl Llr {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Exponential => "exponential",
            Family::Gaussian => "gaussian",
        }
    }

    pub fn check_param(self, theta: f64) -> Result<()> {
        let ok = match self {
            Family::Exponential => theta.is_finite() && theta > 0.0,
            Family::Gaussian => theta.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "parameter {theta} is not valid for the {} family",
                self.name()
            )))
        }
    }

    pub fn in_support(self, y: f64) -> bool {
        match self {
            Family::Exponential => y.is_finite() && y >= 0.0,
            Family::Gaussian => y.is_finite(),
        }
    }

    /// Natural-log density at `y`.
    pub fn logpdf(self, theta: f64, y: f64) -> Result<f64> {
        self.check_param(theta)?;
        if !self.in_support(y) {
            return Err(Error::Domain(format!(
                "observation {y} is outside the support of the {} family",
                self.name()
            )));
        }
        Ok(self.logpdf_unchecked(theta, y))
    }

    /// Log density without domain checks; callers guarantee validity.
    #[inline]
    pub(crate) fn logpdf_unchecked(self, theta: f64, y: f64) -> f64 {
        match self {
            Family::Exponential => theta.ln() - theta * y,
            Family::Gaussian => {
                let d = y - theta;
                -0.5 * d * d - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }

    /// `logpdf(theta, y) - logpdf(phi, y)`.
    pub fn llr(self, theta: f64, phi: f64, y: f64) -> Result<Llr> {
        Ok(Llr(self.logpdf(theta, y)? - self.logpdf(phi, y)?))
    }

    /// Closed-form KL divergence `D(theta || phi)`.
    pub fn kl(self, theta: f64, phi: f64) -> Result<f64> {
        self.check_param(theta)?;
        self.check_param(phi)?;
        Ok(match self {
            Family::Exponential => (theta / phi).ln() + phi / theta - 1.0,
            Family::Gaussian => 0.5 * (theta - phi) * (theta - phi),
        })
    }

    /// Draws one observation. Exponential draws are `Exp(1) / rate` and
    /// Gaussian draws are `mean + N(0, 1)`, so a fixed RNG position maps to a
    /// monotone function of the parameter.
    pub fn sample<R: Rng + ?Sized>(self, theta: f64, rng: &mut R) -> f64 {
        match self {
            Family::Exponential => {
                let e: f64 = rng.sample(Exp1);
                e / theta
            }
            Family::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                theta + z
            }
        }
    }
}

/// Which grid indices an MLE may return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restrict {
    All,
    NullOnly,
}

/// Finite, strictly increasing parameter grid partitioned into a null
/// (normal) set and an alternative (anomalous) set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    values: Vec<f64>,
    is_null: Vec<bool>,
}

impl ParamGrid {
    /// Builds the grid from its two parameter sets. The sets must be
    /// non-empty and disjoint; values are merged into increasing order.
    pub fn from_sets(null_values: &[f64], alt_values: &[f64]) -> Result<Self> {
        if null_values.is_empty() {
            return Err(Error::config(
                "null_values",
                "the null parameter set is empty",
            ));
        }
        if alt_values.is_empty() {
            return Err(Error::config(
                "alt_values",
                "the anomalous parameter set is empty",
            ));
        }
        let mut tagged: Vec<(f64, bool)> = null_values
            .iter()
            .map(|&v| (v, true))
            .chain(alt_values.iter().map(|&v| (v, false)))
            .collect();
        if let Some(&(v, _)) = tagged.iter().find(|(v, _)| !v.is_finite()) {
            return Err(Error::config("grid", format!("non-finite grid value {v}")));
        }
        tagged.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in tagged.windows(2) {
            if values_match(pair[0].0, pair[1].0) {
                let field = if pair[0].1 != pair[1].1 {
                    "grid"
                } else if pair[0].1 {
                    "null_values"
                } else {
                    "alt_values"
                };
                let reason = if pair[0].1 != pair[1].1 {
                    format!(
                        "value {} appears in both the null and anomalous sets",
                        pair[0].0
                    )
                } else {
                    format!("duplicate value {}", pair[0].0)
                };
                return Err(Error::config(field, reason));
            }
        }
        Ok(ParamGrid {
            values: tagged.iter().map(|t| t.0).collect(),
            is_null: tagged.iter().map(|t| t.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn is_null(&self, index: usize) -> bool {
        self.is_null[index]
    }

    pub fn null_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_null[i]).collect()
    }

    pub fn alt_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_null[i]).collect()
    }

    pub fn null_values(&self) -> Vec<f64> {
        self.null_indices()
            .into_iter()
            .map(|i| self.values[i])
            .collect()
    }

    pub fn alt_values(&self) -> Vec<f64> {
        self.alt_indices()
            .into_iter()
            .map(|i| self.values[i])
            .collect()
    }

    /// Grid index of `value`, matched up to a relative tolerance of 1e-9.
    pub fn index_of(&self, value: f64) -> Option<usize> {
        self.values.iter().position(|&v| values_match(v, value))
    }

    pub fn check_family(&self, family: Family) -> Result<()> {
        for &v in &self.values {
            family
                .check_param(v)
                .map_err(|e| Error::config("grid", e.to_string()))?;
        }
        Ok(())
    }
}

pub(crate) fn values_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Running per-grid-value log-likelihood of a growing window. Sums are
/// accumulated in observation order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLikelihood {
    loglik: Vec<f64>,
    count: usize,
}

impl GridLikelihood {
    pub fn new(grid: &ParamGrid) -> Self {
        GridLikelihood {
            loglik: vec![0.0; grid.len()],
            count: 0,
        }
    }

    pub fn push(&mut self, family: Family, grid: &ParamGrid, y: f64) {
        for (acc, &theta) in self.loglik.iter_mut().zip(grid.values()) {
            *acc += family.logpdf_unchecked(theta, y);
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn loglik(&self, index: usize) -> f64 {
        self.loglik[index]
    }

    /// Index of the maximum over the allowed indices; ties go to the smallest
    /// parameter value. Log-likelihoods within a relative `1e-12` of the
    /// maximum count as tied, so exact ties survive rounding.
    pub fn argmax(&self, grid: &ParamGrid, restrict: Restrict) -> usize {
        let allowed = |i: &usize| restrict == Restrict::All || grid.is_null(*i);
        let max = (0..grid.len())
            .filter(allowed)
            .map(|i| self.loglik[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let tol = LL_TIE_TOL * max.abs().max(1.0);
        (0..grid.len())
            .filter(allowed)
            .find(|&i| self.loglik[i] >= max - tol)
            .expect("grid has a non-empty null set")
    }
}

const LL_TIE_TOL: f64 = 1e-12;

/// Grid maximum-likelihood estimate over `window`.
pub fn mle(family: Family, grid: &ParamGrid, window: &[f64], restrict: Restrict) -> Result<usize> {
    if window.is_empty() {
        return Err(Error::Precondition("MLE window is empty".into()));
    }
    if let Some(&y) = window.iter().find(|&&y| !family.in_support(y)) {
        return Err(Error::Domain(format!(
            "observation {y} is outside the support of the {} family",
            family.name()
        )));
    }
    let mut acc = GridLikelihood::new(grid);
    for &y in window {
        acc.push(family, grid, y);
    }
    Ok(acc.argmax(grid, restrict))
}

/// `min over null phi of D(theta1 || phi)` together with the minimising
/// parameter (smallest on ties).
pub fn min_null_kl(family: Family, grid: &ParamGrid, theta1: f64) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for phi in grid.null_values() {
        let d = family.kl(theta1, phi)?;
        match best {
            Some((bd, _)) if d >= bd => {}
            _ => best = Some((d, phi)),
        }
    }
    best.ok_or_else(|| Error::config("null_values", "the null parameter set is empty"))
}
