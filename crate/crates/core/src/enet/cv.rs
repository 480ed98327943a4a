use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    check_inputs, fit_path, linear_predictor, relax::blend, sigmoid, Family, PathOptions, PathPoint, RefitCache,
};
use crate::error::{Result, SvemError};
use crate::rng::{derive_seed, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub path: PathOptions,
    /// Relaxation values tried when relaxed fits are requested.
    pub gamma_grid: Vec<f64>,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            k: 5,
            repeats: 3,
            seed: 1,
            path: PathOptions::default(),
            gamma_grid: super::DEFAULT_GAMMA_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// Minimiser of the mean out-of-fold loss, taken from the full-data fit.
    pub point: PathPoint,
    pub cv_loss: f64,
}

fn point_loss(family: Family, y: f64, eta: f64) -> f64 {
    match family {
        Family::Gaussian => (y - eta) * (y - eta),
        Family::Binomial => {
            let p = sigmoid(eta).clamp(1e-12, 1.0 - 1e-12);
            -2.0 * (y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        }
    }
}

fn fold_assignment(n: usize, k: usize, seed: u64, stream: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, stream));
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    folds
}

fn folds_have_both_classes(y: &[f64], folds: &[usize], k: usize) -> bool {
    (0..k).all(|f| {
        let train: Vec<f64> = y.iter().zip(folds).filter(|(_, &g)| g != f).map(|(v, _)| *v).collect();
        train.iter().any(|v| *v == 0.0) && train.iter().any(|v| *v == 1.0)
    })
}

/// Repeated k-fold cross-validation over the alpha grid (and the gamma
/// grid when `relax`), with independently shuffled folds per repeat.
pub fn repeated_kfold_cv(
    x: &DMatrix<f64>,
    y: &[f64],
    family: Family,
    alpha_grid: &[f64],
    relax: bool,
    opts: &CvOptions,
) -> Result<CvResult> {
    let n = x.nrows();
    if opts.k < 2 || n < 2 * opts.k {
        return Err(SvemError::InvalidArgument(format!(
            "k-fold CV needs k >= 2 and n >= 2k (k = {}, n = {n})",
            opts.k
        )));
    }
    let mut assignments = Vec::with_capacity(opts.repeats);
    for r in 0..opts.repeats as u64 {
        let mut folds = fold_assignment(n, opts.k, opts.seed, r);
        if family == Family::Binomial && !folds_have_both_classes(y, &folds, opts.k) {
            folds = fold_assignment(n, opts.k, derive_seed(opts.seed, 0xF01D), r);
            if !folds_have_both_classes(y, &folds, opts.k) {
                return Err(SvemError::SingleClassFold);
            }
        }
        assignments.push(folds);
    }
    repeated_kfold_cv_with_folds(x, y, family, alpha_grid, relax, &assignments, opts)
}

/// Cross-validation with caller-supplied fold labels, one vector per repeat.
pub fn repeated_kfold_cv_with_folds(
    x: &DMatrix<f64>,
    y: &[f64],
    family: Family,
    alpha_grid: &[f64],
    relax: bool,
    assignments: &[Vec<usize>],
    opts: &CvOptions,
) -> Result<CvResult> {
    let n = x.nrows();
    let unit = vec![1.0; n];
    check_inputs(x, y, &unit, family)?;
    if alpha_grid.is_empty() || assignments.is_empty() {
        return Err(SvemError::InvalidArgument("empty alpha grid or no repeats".into()));
    }
    let gammas: Vec<f64> = if relax { opts.gamma_grid.clone() } else { vec![1.0] };
    let mut best: Option<(f64, PathPoint)> = None;

    for &alpha in alpha_grid {
        let full = fit_path(x, y, &unit, family, alpha, &opts.path)?;
        let mut cache = RefitCache::default();
        let full_refits: Vec<Option<Vec<f64>>> = full
            .path
            .iter()
            .map(|p| {
                if relax && p.k_lambda > 1 {
                    cache.get(x, y, &unit, family, &p.coefficients).cloned()
                } else {
                    None
                }
            })
            .collect();
        let nl = full.lambdas.len();
        let fold_opts = PathOptions {
            lambdas: Some(full.lambdas.clone()),
            early_stop: false,
            ..opts.path.clone()
        };
        let mut loss = vec![0.0; nl * gammas.len()];
        for folds in assignments {
            let k = folds.iter().max().map_or(0, |m| m + 1);
            for f in 0..k {
                let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
                let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
                if test.is_empty() {
                    continue;
                }
                let xt = x.select_rows(&train);
                let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                let xv = x.select_rows(&test);
                let wt = vec![1.0; train.len()];
                let fit = fit_path(&xt, &yt, &wt, family, alpha, &fold_opts)?;
                let mut cache = RefitCache::default();
                for l in 0..nl {
                    // a fold path cut short reuses its last solution
                    let point = &fit.path[l.min(fit.path.len() - 1)];
                    let eta_pen = linear_predictor(&xv, &point.coefficients);
                    let refit = if relax && point.k_lambda > 1 {
                        cache.get(&xt, &yt, &wt, family, &point.coefficients)
                    } else {
                        None
                    };
                    let eta_ref = refit.as_ref().map(|r| linear_predictor(&xv, r));
                    for (g, &gamma) in gammas.iter().enumerate() {
                        let mut s = 0.0;
                        for (t, &i) in test.iter().enumerate() {
                            let eta = match &eta_ref {
                                Some(er) => gamma * eta_pen[t] + (1.0 - gamma) * er[t],
                                None => eta_pen[t],
                            };
                            s += point_loss(family, y[i], eta);
                        }
                        loss[l * gammas.len() + g] += s;
                    }
                }
            }
        }
        let denom = (n * assignments.len()) as f64;
        for l in 0..nl {
            for (g, &gamma) in gammas.iter().enumerate() {
                let cv = loss[l * gammas.len() + g] / denom;
                if best.as_ref().is_none_or(|(b, _)| cv < *b) {
                    let pen = &full.path[l];
                    let point = match &full_refits[l] {
                        Some(r) if gamma < 1.0 => PathPoint::new(alpha, pen.lambda, gamma, blend(&pen.coefficients, r, gamma)),
                        _ => {
                            let mut p = pen.clone();
                            p.gamma = gamma;
                            p.degenerate = relax && gamma < 1.0 && pen.k_lambda > 1;
                            p
                        }
                    };
                    best = Some((cv, point));
                }
            }
        }
    }
    let (cv_loss, point) = best.expect("non-empty grid");
    Ok(CvResult { point, cv_loss })
}
