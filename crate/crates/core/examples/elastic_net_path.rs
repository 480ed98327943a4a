//! Weighted elastic-net path, its relaxed version, and prediction from a
//! single path point.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use svem::enet::{fit_path, predict_path_point, relaxed_refit, Family, PathOptions, Scale};

fn main() -> svem::Result<()> {
    let (n, p) = (30, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = DMatrix::from_fn(n, p + 1, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() * 2.0 - 1.0 });
    let y: Vec<f64> = (0..n)
        .map(|i| 1.0 + 3.0 * x[(i, 1)] - 2.0 * x[(i, 4)] + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let w = vec![1.0; n];

    let fit = fit_path(&x, &y, &w, Family::Gaussian, 1.0, &PathOptions::default())?;
    println!("lasso path: {} lambdas", fit.path.len());
    for pt in fit.path.iter().step_by(8) {
        println!("  lambda {:9.5}  k {:>2}  active {:?}", pt.lambda, pt.k_lambda, pt.active_set());
    }

    let relaxed = relaxed_refit(&fit, &x, &y, &w, &[0.0, 0.5, 1.0])?;
    let l = fit.path.iter().position(|p| p.k_lambda == 3).unwrap_or(fit.path.len() / 2);
    for g in 0..3 {
        let pt = relaxed.point(l, g);
        println!(
            "gamma {:.1}: beta_1 = {:.4}, beta_4 = {:.4}",
            pt.gamma, pt.coefficients[1], pt.coefficients[4]
        );
    }

    let yb: Vec<f64> = y.iter().map(|v| (*v > 1.0) as u8 as f64).collect();
    let logistic = fit_path(&x, &yb, &w, Family::Binomial, 0.5, &PathOptions::default())?;
    let last = logistic.path.last().expect("non-empty path");
    let probs = predict_path_point(last, &x.rows(0, 4).into_owned(), Family::Binomial, Scale::Response)?;
    println!("logistic path end (k = {}): p = {:.3?} for y = {:?}", last.k_lambda, probs, &yb[..4]);
    Ok(())
}
