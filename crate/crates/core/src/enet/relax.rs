use nalgebra::DMatrix;

use super::{check_inputs, sigmoid, Family, PathFit, PathPoint, PROB_CLAMP};
use crate::error::{Result, SvemError};
use crate::linalg::weighted_least_squares;

/// Unpenalised refit restricted to the active set of `coefficients` (plus
/// the intercept). Returns original-scale coefficients of full length, or
/// `None` when the restricted problem is singular.
pub fn refit_active_set(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: &[f64],
    family: Family,
    coefficients: &[f64],
) -> Option<Vec<f64>> {
    let n = x.nrows();
    let active: Vec<usize> = std::iter::once(0)
        .chain((1..coefficients.len()).filter(|&j| coefficients[j] != 0.0))
        .collect();
    if active.len() > n {
        return None;
    }
    let xa = x.select_columns(&active);
    let sol = match family {
        Family::Gaussian => weighted_least_squares(&xa, y, weights)?,
        Family::Binomial => {
            let start: Vec<f64> = active.iter().map(|&j| coefficients[j]).collect();
            irls_unpenalized(&xa, y, weights, start)?
        }
    };
    let mut out = vec![0.0; coefficients.len()];
    for (k, &j) in active.iter().enumerate() {
        out[j] = sol[k];
    }
    Some(out)
}

/// Reuses the last refit while consecutive path points share an active set.
#[derive(Default)]
pub(crate) struct RefitCache {
    key: Option<Vec<usize>>,
    value: Option<Vec<f64>>,
}

impl RefitCache {
    pub fn get(
        &mut self,
        x: &DMatrix<f64>,
        y: &[f64],
        weights: &[f64],
        family: Family,
        coefficients: &[f64],
    ) -> Option<&Vec<f64>> {
        let active: Vec<usize> = (1..coefficients.len()).filter(|&j| coefficients[j] != 0.0).collect();
        if self.key.as_ref() != Some(&active) {
            self.value = refit_active_set(x, y, weights, family, coefficients);
            self.key = Some(active);
        }
        self.value.as_ref()
    }
}

fn irls_unpenalized(x: &DMatrix<f64>, y: &[f64], w: &[f64], start: Vec<f64>) -> Option<Vec<f64>> {
    let n = x.nrows();
    let wsum: f64 = w.iter().sum();
    let ybar = (y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / wsum).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let null_dev = -2.0 * wsum * (ybar * ybar.ln() + (1.0 - ybar) * (1.0 - ybar).ln());
    let mut beta = start;
    let mut dev_old = f64::INFINITY;
    let mut v = vec![0.0; n];
    let mut zw = vec![0.0; n];
    for _ in 0..25 {
        let eta = super::linear_predictor(x, &beta);
        let mut dev = 0.0;
        for i in 0..n {
            let p = sigmoid(eta[i]).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let vi = p * (1.0 - p);
            v[i] = w[i] * vi;
            zw[i] = eta[i] + (y[i] - p) / vi;
            dev -= 2.0 * w[i] * (y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln());
        }
        // stop once the fit is saturated, as on separable data
        if (dev_old - dev).abs() / (dev.abs() + 0.1) < 1e-8 || dev < 1e-3 * null_dev {
            break;
        }
        dev_old = dev;
        beta = weighted_least_squares(x, &zw, &v)?;
    }
    beta.iter().all(|b| b.is_finite()).then_some(beta)
}

/// Relaxed path: for each penalised point and each `gamma`, coefficients
/// `gamma * penalised + (1 - gamma) * unpenalised refit on the active set`.
///
/// A singular refit keeps the penalised coefficients for every gamma and
/// marks those points `degenerate`.
pub fn relaxed_refit(
    fit: &PathFit,
    x: &DMatrix<f64>,
    y: &[f64],
    weights: &[f64],
    gamma_grid: &[f64],
) -> Result<PathFit> {
    check_inputs(x, y, weights, fit.family)?;
    if gamma_grid.is_empty() || gamma_grid.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(SvemError::InvalidArgument("gamma values must lie in [0, 1]".into()));
    }
    if fit.gammas != [1.0] {
        return Err(SvemError::InvalidArgument("path is already relaxed".into()));
    }
    let mut path = Vec::with_capacity(fit.path.len() * gamma_grid.len());
    let mut cache = RefitCache::default();
    for point in &fit.path {
        let refit = if point.k_lambda > 1 {
            cache.get(x, y, weights, fit.family, &point.coefficients).cloned()
        } else {
            Some(point.coefficients.clone())
        };
        for &gamma in gamma_grid {
            let relaxed = match &refit {
                Some(r) => PathPoint::new(
                    point.alpha,
                    point.lambda,
                    gamma,
                    blend(&point.coefficients, r, gamma),
                ),
                None => {
                    let mut p = point.clone();
                    p.gamma = gamma;
                    p.degenerate = true;
                    p
                }
            };
            path.push(relaxed);
        }
    }
    Ok(PathFit {
        path,
        gammas: gamma_grid.to_vec(),
        ..fit.clone()
    })
}

pub(crate) fn blend(penalized: &[f64], refit: &[f64], gamma: f64) -> Vec<f64> {
    if gamma == 1.0 {
        return penalized.to_vec();
    }
    penalized
        .iter()
        .zip(refit)
        .map(|(p, r)| gamma * p + (1.0 - gamma) * r)
        .collect()
}
