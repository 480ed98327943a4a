use nalgebra::{DMatrix, DVector};

use super::{check_inputs, sigmoid, Family, PathFit, PathOptions, PathPoint, PROB_CLAMP};
use crate::error::{Result, SvemError};
use crate::linalg::solve_spd;

/// Predictors centred and scaled to weighted unit variance, stored column
/// by column. Column 0 of the design (the intercept) and constant columns
/// are not part of the problem.
pub(super) struct Standardized {
    pub n: usize,
    /// design column index of each usable predictor
    pub cols: Vec<usize>,
    pub z: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardized {
    pub fn new(x: &DMatrix<f64>, w: &[f64]) -> Self {
        let (n, p) = x.shape();
        let wsum: f64 = w.iter().sum();
        let mut means = vec![0.0; p];
        let mut scales = vec![0.0; p];
        let mut cols = Vec::new();
        let mut z = Vec::new();
        for j in 1..p {
            let c = x.column(j);
            let m = c.iter().zip(w).map(|(v, wi)| wi * v).sum::<f64>() / wsum;
            let var = c.iter().zip(w).map(|(v, wi)| wi * (v - m) * (v - m)).sum::<f64>() / wsum;
            let sd = var.sqrt();
            means[j] = m;
            if sd > 1e-10 * (1.0 + m.abs()) {
                scales[j] = sd;
                cols.push(j);
                z.extend(c.iter().map(|v| (v - m) / sd));
            }
        }
        Standardized {
            n,
            cols,
            z,
            means,
            scales,
        }
    }

    #[inline]
    pub fn col(&self, k: usize) -> &[f64] {
        &self.z[k * self.n..(k + 1) * self.n]
    }

    pub fn m(&self) -> usize {
        self.cols.len()
    }

    /// Original-scale coefficient vector of length `p`.
    pub fn back_transform(&self, p: usize, intercept: f64, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p];
        let mut b0 = intercept;
        for (k, &j) in self.cols.iter().enumerate() {
            if beta[k] != 0.0 {
                out[j] = beta[k] / self.scales[j];
                b0 -= out[j] * self.means[j];
            }
        }
        out[0] = b0;
        out
    }
}

#[inline]
fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Penalised weighted least squares on standardised columns:
/// `min (1/2n) sum v_i (res_i)^2 + l1 |b|_1 + l2/2 |b|^2`, updating `beta`,
/// the residual `res` and, when `fit_intercept`, the intercept in place.
struct CdProblem<'a> {
    std: &'a Standardized,
    /// observation weights times standardised column, per column
    vz: Vec<f64>,
    v: &'a [f64],
    /// (1/n) sum v z_j^2
    xv: Vec<f64>,
    vsum: f64,
}

impl<'a> CdProblem<'a> {
    fn new(std: &'a Standardized, v: &'a [f64]) -> Self {
        let n = std.n;
        let mut vz = Vec::with_capacity(std.z.len());
        let mut xv = Vec::with_capacity(std.m());
        for k in 0..std.m() {
            let c = std.col(k);
            let mut s = 0.0;
            for (zi, vi) in c.iter().zip(v) {
                vz.push(zi * vi);
                s += vi * zi * zi;
            }
            xv.push(s / n as f64);
        }
        CdProblem {
            std,
            vz,
            v,
            xv,
            vsum: v.iter().sum(),
        }
    }

    #[inline]
    fn update(&self, k: usize, beta: &mut [f64], res: &mut [f64], l1: f64, l2: f64) -> f64 {
        let n = self.std.n;
        let vzk = &self.vz[k * n..(k + 1) * n];
        let g = dot(vzk, res) / n as f64 + self.xv[k] * beta[k];
        let new = soft_threshold(g, l1) / (self.xv[k] + l2);
        let diff = new - beta[k];
        if diff != 0.0 {
            beta[k] = new;
            for (r, z) in res.iter_mut().zip(self.std.col(k)) {
                *r -= diff * z;
            }
        }
        diff.abs()
    }

    fn update_intercept(&self, intercept: &mut f64, res: &mut [f64]) -> f64 {
        let d = dot(self.v, res) / self.vsum;
        if d != 0.0 {
            *intercept += d;
            for r in res.iter_mut() {
                *r -= d;
            }
        }
        d.abs()
    }

    /// Moves toward the exact minimiser for the current active set and
    /// signs. When a coefficient would change sign the move stops where it
    /// reaches zero, that coefficient is dropped, and the smaller problem is
    /// solved again.
    #[allow(clippy::too_many_arguments)]
    fn active_set_step(
        &self,
        active: &[usize],
        beta: &mut [f64],
        intercept: &mut f64,
        res: &mut [f64],
        l1: f64,
        l2: f64,
        fit_intercept: bool,
    ) {
        let n = self.std.n;
        let nf = n as f64;
        if active.is_empty() {
            return;
        }
        let objective = |res: &[f64], beta: &[f64]| {
            let loss: f64 = res.iter().zip(self.v).map(|(r, v)| v * r * r).sum::<f64>() / (2.0 * nf);
            loss + active.iter().map(|&k| l1 * beta[k].abs() + 0.5 * l2 * beta[k] * beta[k]).sum::<f64>()
        };
        let before = objective(res, beta);
        let saved: Vec<f64> = active.iter().map(|&k| beta[k]).collect();
        // at least as many unknowns as rows: the system is singular without a ridge
        let ridge = if active.len() + fit_intercept as usize >= n { l2.max(1e-8) } else { l2 };
        // working response: residual plus the current fit
        let mut r0 = res.to_vec();
        for &k in active {
            for (r, z) in r0.iter_mut().zip(self.std.col(k)) {
                *r += beta[k] * z;
            }
        }
        if fit_intercept {
            r0.iter_mut().for_each(|r| *r += *intercept);
        }
        let off = fit_intercept as usize;
        let vr: Vec<f64> = active
            .iter()
            .map(|&k| dot(&self.vz[k * n..(k + 1) * n], &r0) / nf)
            .collect();
        let vbar: Vec<f64> = active
            .iter()
            .map(|&k| self.vz[k * n..(k + 1) * n].iter().sum::<f64>() / nf)
            .collect();
        let qa = active.len();
        let mut gram = DMatrix::<f64>::zeros(qa, qa);
        for i in 0..qa {
            let vzk = &self.vz[active[i] * n..(active[i] + 1) * n];
            for j in 0..=i {
                let s = dot(vzk, self.std.col(active[j])) / nf;
                gram[(i, j)] = s;
                gram[(j, i)] = s;
            }
        }
        let mut live: Vec<usize> = (0..qa).collect();
        let mut b0 = *intercept;
        let mut moved = false;
        while !live.is_empty() {
            let q = live.len() + off;
            let mut a = DMatrix::<f64>::zeros(q, q);
            let mut rhs = DVector::<f64>::zeros(q);
            if fit_intercept {
                a[(0, 0)] = self.vsum / nf;
                rhs[0] = dot(self.v, &r0) / nf;
            }
            for (i, &ii) in live.iter().enumerate() {
                if fit_intercept {
                    a[(0, i + 1)] = vbar[ii];
                    a[(i + 1, 0)] = vbar[ii];
                }
                for (j, &jj) in live.iter().enumerate() {
                    a[(i + off, j + off)] = gram[(ii, jj)];
                }
                a[(i + off, i + off)] += ridge;
                rhs[i + off] = vr[ii] - l1 * beta[active[ii]].signum();
            }
            let Some(sol) = solve_spd(a, &rhs) else { break };
            // largest step keeping every sign
            let mut t = 1.0;
            let mut block = None;
            for (i, &ii) in live.iter().enumerate() {
                let (cur, target) = (beta[active[ii]], sol[i + off]);
                if target * cur <= 0.0 {
                    let ti = cur / (cur - target);
                    if ti < t {
                        t = ti;
                        block = Some(i);
                    }
                }
            }
            if fit_intercept {
                b0 += t * (sol[0] - b0);
            }
            for (i, &ii) in live.iter().enumerate() {
                let k = active[ii];
                beta[k] += t * (sol[i + off] - beta[k]);
            }
            moved = true;
            match block {
                None => break,
                Some(i) => {
                    beta[active[live[i]]] = 0.0;
                    live.remove(i);
                }
            }
        }
        if !moved {
            return;
        }
        if fit_intercept {
            r0.iter_mut().for_each(|r| *r -= b0);
        }
        for &k in active {
            if beta[k] != 0.0 {
                for (r, z) in r0.iter_mut().zip(self.std.col(k)) {
                    *r -= beta[k] * z;
                }
            }
        }
        if objective(&r0, beta) <= before {
            *intercept = b0;
            res.copy_from_slice(&r0);
        } else {
            for (&k, b) in active.iter().zip(saved) {
                beta[k] = b;
            }
        }
    }

    /// Full sweep, then cycles over the non-zero set until it settles; done
    /// when a full sweep moves nothing by more than `tol`.
    #[allow(clippy::too_many_arguments)]
    fn solve(
        &self,
        beta: &mut [f64],
        intercept: &mut f64,
        res: &mut [f64],
        l1: f64,
        l2: f64,
        fit_intercept: bool,
        tol: f64,
        max_sweeps: usize,
    ) -> Result<usize> {
        let m = self.std.m();
        let mut sweeps = 0;
        loop {
            let mut max_change = 0.0_f64;
            for k in 0..m {
                max_change = max_change.max(self.update(k, beta, res, l1, l2));
            }
            if fit_intercept {
                max_change = max_change.max(self.update_intercept(intercept, res));
            }
            sweeps += 1;
            if max_change < tol {
                return Ok(sweeps);
            }
            let active: Vec<usize> = (0..m).filter(|&k| beta[k] != 0.0).collect();
            self.active_set_step(&active, beta, intercept, res, l1, l2, fit_intercept);
            let mut inner = 0usize;
            loop {
                let mut max_change = 0.0_f64;
                for &k in &active {
                    max_change = max_change.max(self.update(k, beta, res, l1, l2));
                }
                if fit_intercept {
                    max_change = max_change.max(self.update_intercept(intercept, res));
                }
                sweeps += 1;
                inner += 1;
                if max_change < tol {
                    break;
                }
                if inner % 10 == 0 {
                    self.active_set_step(&active, beta, intercept, res, l1, l2, fit_intercept);
                }
                if sweeps >= max_sweeps {
                    return Err(SvemError::Numeric(format!(
                        "coordinate descent did not converge in {max_sweeps} sweeps"
                    )));
                }
            }
            if sweeps >= max_sweeps {
                return Err(SvemError::Numeric(format!(
                    "coordinate descent did not converge in {max_sweeps} sweeps"
                )));
            }
        }
    }
}

fn lambda_sequence(lambda_max: f64, opts: &PathOptions, n: usize, m: usize) -> Vec<f64> {
    if !(lambda_max > 0.0) {
        return vec![0.0];
    }
    let ratio = opts
        .lambda_min_ratio
        .unwrap_or(if n > m { 1e-4 } else { 1e-2 });
    let nl = opts.nlambda.max(1);
    if nl == 1 {
        return vec![lambda_max];
    }
    (0..nl)
        .map(|k| lambda_max * ratio.powf(k as f64 / (nl - 1) as f64))
        .collect()
}

fn binomial_deviance(y: &[f64], w: &[f64], eta: impl Iterator<Item = f64>) -> f64 {
    let mut dev = 0.0;
    for ((yi, wi), e) in y.iter().zip(w).zip(eta) {
        let p = sigmoid(e).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        dev -= 2.0 * wi * (yi * p.ln() + (1.0 - yi) * (1.0 - p).ln());
    }
    dev
}

/// Solves the elastic-net path at a decreasing lambda grid with warm starts.
///
/// `weights` are rescaled to mean one internally. The first point of an
/// automatic grid is `lambda_max`, the smallest penalty at which every slope
/// is zero.
pub fn fit_path(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: &[f64],
    family: Family,
    alpha: f64,
    opts: &PathOptions,
) -> Result<PathFit> {
    check_inputs(x, y, weights, family)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(SvemError::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let (n, p) = x.shape();
    let wsum: f64 = weights.iter().sum();
    let w: Vec<f64> = weights.iter().map(|wi| wi * n as f64 / wsum).collect();
    let std = Standardized::new(x, &w);
    let m = std.m();
    let nf = n as f64;

    let ybar = if y.iter().all(|v| *v == y[0]) { y[0] } else { dot(&w, y) / nf };
    let centered: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let lambda_max = if m == 0 {
        0.0
    } else {
        let wc: Vec<f64> = centered.iter().zip(&w).map(|(c, wi)| c * wi).collect();
        (0..m).map(|k| dot(std.col(k), &wc).abs() / nf).fold(0.0, f64::max) / alpha
    };
    let (lambdas, auto) = match &opts.lambdas {
        Some(ls) => {
            if ls.is_empty() || ls.windows(2).any(|w| w[1] >= w[0]) || ls.iter().any(|l| *l < 0.0) {
                return Err(SvemError::InvalidArgument(
                    "lambda sequence must be non-negative and strictly decreasing".into(),
                ));
            }
            (ls.clone(), false)
        }
        None => (lambda_sequence(lambda_max, opts, n, m), true),
    };

    let mut beta = vec![0.0; m];
    let mut path = Vec::with_capacity(lambdas.len());
    let mut dev_ratio = Vec::with_capacity(lambdas.len());
    let mut solved = Vec::with_capacity(lambdas.len());

    match family {
        Family::Gaussian => {
            let null_dev: f64 = centered.iter().zip(&w).map(|(c, wi)| wi * c * c).sum();
            let problem = CdProblem::new(&std, &w);
            let mut res = centered.clone();
            let mut intercept = ybar;
            for (l, &lambda) in lambdas.iter().enumerate() {
                if !(auto && l == 0) {
                    let solved_here = problem.solve(
                        &mut beta,
                        &mut intercept,
                        &mut res,
                        alpha * lambda,
                        (1.0 - alpha) * lambda,
                        false,
                        opts.tol,
                        opts.max_sweeps,
                    );
                    // keep the solved part of the path when a later lambda stalls
                    match solved_here {
                        Err(e) if path.is_empty() => return Err(e),
                        Err(_) => break,
                        Ok(_) => {}
                    }
                }
                let rss: f64 = res.iter().zip(&w).map(|(r, wi)| wi * r * r).sum();
                let ratio = if null_dev > 0.0 { 1.0 - rss / null_dev } else { 0.0 };
                path.push(PathPoint::new(alpha, lambda, 1.0, std.back_transform(p, intercept, &beta)));
                solved.push(lambda);
                let prev = dev_ratio.last().copied().unwrap_or(0.0);
                dev_ratio.push(ratio);
                if stop_path(opts, l, ratio, prev, null_dev) {
                    break;
                }
            }
        }
        Family::Binomial => {
            let pbar = ybar.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let mut intercept = (pbar / (1.0 - pbar)).ln();
            let null_dev = binomial_deviance(y, &w, std::iter::repeat(intercept).take(n));
            let mut eta = vec![intercept; n];
            let mut v = vec![0.0; n];
            let mut res = vec![0.0; n];
            'lambdas: for (l, &lambda) in lambdas.iter().enumerate() {
                if !(auto && l == 0) {
                    let mut dev_old = binomial_deviance(y, &w, eta.iter().copied());
                    for _ in 0..opts.irls_max_iter {
                        for i in 0..n {
                            let pi = sigmoid(eta[i]).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                            let vi = pi * (1.0 - pi);
                            v[i] = w[i] * vi;
                            res[i] = (y[i] - pi) / vi;
                        }
                        let problem = CdProblem::new(&std, &v);
                        let solved_here = problem.solve(
                            &mut beta,
                            &mut intercept,
                            &mut res,
                            alpha * lambda,
                            (1.0 - alpha) * lambda,
                            true,
                            opts.tol,
                            opts.max_sweeps,
                        );
                        match solved_here {
                            Err(e) if path.is_empty() => return Err(e),
                            Err(_) => break 'lambdas,
                            Ok(_) => {}
                        }
                        for (i, e) in eta.iter_mut().enumerate() {
                            *e = intercept;
                            for (k, b) in beta.iter().enumerate() {
                                if *b != 0.0 {
                                    *e += b * std.z[k * n + i];
                                }
                            }
                        }
                        let dev = binomial_deviance(y, &w, eta.iter().copied());
                        let done = (dev - dev_old).abs() / (dev.abs() + 0.1) < opts.irls_tol;
                        dev_old = dev;
                        if done {
                            break;
                        }
                    }
                }
                let dev = binomial_deviance(y, &w, eta.iter().copied());
                let ratio = if null_dev > 0.0 { 1.0 - dev / null_dev } else { 0.0 };
                path.push(PathPoint::new(alpha, lambda, 1.0, std.back_transform(p, intercept, &beta)));
                solved.push(lambda);
                let prev = dev_ratio.last().copied().unwrap_or(0.0);
                dev_ratio.push(ratio);
                if stop_path(opts, l, ratio, prev, null_dev) {
                    break;
                }
            }
        }
    }

    Ok(PathFit {
        family,
        alpha,
        lambdas: solved,
        gammas: vec![1.0],
        path,
        means: std.means,
        scales: std.scales,
        dev_ratio,
    })
}

fn stop_path(opts: &PathOptions, l: usize, ratio: f64, prev: f64, null_dev: f64) -> bool {
    if !opts.early_stop || opts.lambdas.is_some() {
        return false;
    }
    if null_dev <= 0.0 {
        return true;
    }
    l + 1 >= 5 && (ratio - prev < 1e-5 * ratio || ratio > 0.999)
}
