//! Weighted elastic-net paths for Gaussian and binomial responses.
//!
//! The solver minimises, on predictors standardised to weighted unit
//! variance,
//!
//! ```text
//! (1/n) * loss(w; beta0, beta) + lambda * ((1 - alpha)/2 * |beta|_2^2 + alpha * |beta|_1)
//! ```
//!
//! with `loss` half the weighted residual sum of squares (Gaussian) or the
//! weighted negative log-likelihood (binomial, through an IRLS outer loop).
//! The intercept is never penalised. Coefficients are reported on the
//! original predictor scale, with the intercept in position 0 to line up
//! with the design matrix.

mod cv;
mod path;
mod relax;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SvemError};

pub use cv::{repeated_kfold_cv, repeated_kfold_cv_with_folds, CvOptions, CvResult};
pub use path::fit_path;
pub use relax::{refit_active_set, relaxed_refit};
pub(crate) use relax::{blend, RefitCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Link,
    Response,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub alpha: f64,
    pub lambda: f64,
    pub gamma: f64,
    /// Original-scale coefficients, intercept first.
    pub coefficients: Vec<f64>,
    /// Non-zero coefficients, intercept included.
    pub k_lambda: usize,
    /// Set when a relaxed refit was singular and the penalised point was kept.
    #[serde(default)]
    pub degenerate: bool,
}

impl PathPoint {
    pub(crate) fn new(alpha: f64, lambda: f64, gamma: f64, coefficients: Vec<f64>) -> Self {
        let k_lambda = count_active(&coefficients);
        PathPoint {
            alpha,
            lambda,
            gamma,
            coefficients,
            k_lambda,
            degenerate: false,
        }
    }

    /// Non-intercept columns with a non-zero coefficient.
    pub fn active_set(&self) -> Vec<usize> {
        (1..self.coefficients.len()).filter(|&j| self.coefficients[j] != 0.0).collect()
    }
}

/// Intercept (always fitted) plus non-zero slopes.
pub(crate) fn count_active(coefficients: &[f64]) -> usize {
    1 + coefficients.iter().skip(1).filter(|c| **c != 0.0).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathFit {
    pub family: Family,
    pub alpha: f64,
    /// Strictly decreasing penalty values actually solved.
    pub lambdas: Vec<f64>,
    /// Relaxation values per lambda; `[1.0]` for an ordinary path.
    pub gammas: Vec<f64>,
    /// Points ordered by lambda, then by gamma.
    pub path: Vec<PathPoint>,
    /// Weighted column means and standard deviations (0 for the intercept
    /// and for constant columns, which are left out of the fit).
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Fraction of null deviance explained at each lambda.
    pub dev_ratio: Vec<f64>,
}

impl PathFit {
    /// Point for lambda index `l` and gamma index `g`.
    pub fn point(&self, l: usize, g: usize) -> &PathPoint {
        &self.path[l * self.gammas.len() + g]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathOptions {
    pub nlambda: usize,
    /// Defaults to 1e-4 when there are more rows than penalised columns, else 1e-2.
    pub lambda_min_ratio: Option<f64>,
    /// Explicit decreasing lambda sequence; overrides the automatic grid.
    pub lambdas: Option<Vec<f64>>,
    /// Stop the path once the fit saturates (deviance ratio above 0.999, or
    /// its relative gain below 1e-5 after the first five lambdas).
    pub early_stop: bool,
    /// Coordinate descent stops when the largest coefficient change on the
    /// standardised scale falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
    pub irls_tol: f64,
    pub irls_max_iter: usize,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions {
            nlambda: 100,
            lambda_min_ratio: None,
            lambdas: None,
            early_stop: true,
            tol: 1e-7,
            max_sweeps: 100_000,
            irls_tol: 1e-8,
            irls_max_iter: 25,
        }
    }
}

pub const DEFAULT_GAMMA_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

pub(crate) const PROB_CLAMP: f64 = 1e-5;

pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Linear predictor `X beta` for every row.
pub(crate) fn linear_predictor(x: &DMatrix<f64>, coefficients: &[f64]) -> Vec<f64> {
    let mut eta = vec![0.0; x.nrows()];
    for (j, &b) in coefficients.iter().enumerate() {
        if b != 0.0 {
            for (e, v) in eta.iter_mut().zip(x.column(j).iter()) {
                *e += b * v;
            }
        }
    }
    eta
}

/// Predictions from one path point.
pub fn predict_path_point(point: &PathPoint, x_new: &DMatrix<f64>, family: Family, scale: Scale) -> Result<Vec<f64>> {
    if x_new.ncols() != point.coefficients.len() {
        return Err(SvemError::ColumnMismatch {
            expected: point.coefficients.len(),
            got: x_new.ncols(),
        });
    }
    let eta = linear_predictor(x_new, &point.coefficients);
    Ok(match (family, scale) {
        (Family::Binomial, Scale::Response) => eta.into_iter().map(sigmoid).collect(),
        _ => eta,
    })
}

pub(crate) fn check_inputs(x: &DMatrix<f64>, y: &[f64], weights: &[f64], family: Family) -> Result<()> {
    let n = x.nrows();
    if n < 2 {
        return Err(SvemError::InvalidArgument("at least two observations are required".into()));
    }
    if y.len() != n || weights.len() != n {
        return Err(SvemError::InvalidArgument(format!(
            "length mismatch: X has {n} rows, y {} and weights {}",
            y.len(),
            weights.len()
        )));
    }
    if x.ncols() < 1 {
        return Err(SvemError::InvalidArgument("design matrix has no columns".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SvemError::NonFinite("design matrix"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(SvemError::NonFinite("response"));
    }
    if weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(SvemError::NonFinite("weights"));
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Err(SvemError::ZeroWeights);
    }
    if family == Family::Binomial {
        if let Some(bad) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(SvemError::NonBinaryResponse(*bad));
        }
    }
    Ok(())
}
