use nalgebra::{DMatrix, DVector};

/// Largest accepted ratio between the extreme Cholesky pivots (squared),
/// i.e. a condition-number ceiling for column-scaled normal equations.
const MAX_CONDITION: f64 = 1e12;

/// Solves `A x = b` for symmetric positive definite `A`; `None` when the
/// system is singular or too ill-conditioned to trust.
pub fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = a.cholesky()?;
    let l = chol.l_dirty();
    let diag: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)]).collect();
    let max = diag.iter().copied().fold(0.0_f64, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || (max / min).powi(2) > MAX_CONDITION {
        return None;
    }
    let x = chol.solve(b);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Weighted least squares of `y` on the columns of `x` (no implicit
/// intercept); columns are rescaled internally for conditioning.
pub fn weighted_least_squares(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let (n, q) = x.shape();
    if q > n {
        return None;
    }
    let scale: Vec<f64> = (0..q)
        .map(|j| {
            let ss: f64 = x.column(j).iter().zip(w).map(|(v, wi)| wi * v * v).sum();
            if ss > 0.0 {
                (ss / n as f64).sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut a = DMatrix::<f64>::zeros(q, q);
    let mut b = DVector::<f64>::zeros(q);
    for j in 0..q {
        let cj = x.column(j);
        b[j] = cj.iter().zip(y).zip(w).map(|((v, yi), wi)| wi * v * yi).sum::<f64>() / scale[j];
        for k in 0..=j {
            let ck = x.column(k);
            let s: f64 = cj.iter().zip(ck.iter()).zip(w).map(|((a, b), wi)| wi * a * b).sum();
            a[(j, k)] = s / (scale[j] * scale[k]);
            a[(k, j)] = a[(j, k)];
        }
    }
    let sol = solve_spd(a, &b)?;
    Some((0..q).map(|j| sol[j] / scale[j]).collect())
}
