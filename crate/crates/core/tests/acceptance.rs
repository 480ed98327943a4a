//! Acceptance criteria, one test each. Every test writes a single
//! `criterion N: PASS|FAIL ...` line to stderr (uncaptured) before asserting.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use indexmap::IndexMap;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, StudentsT};

use svem::enet::{fit_path, Family, PathOptions};
use svem::expand::{build_expansion_spec, expand_rows, term_count, Coding};
use svem::lnp::{lnp_expansion_settings, lnp_mixture, generate_lnp, LnpOptions};
use svem::optimize::{
    export_candidates_to, geometric_score, gower_matrix, sample_candidates, select_from_score_table, Direction,
    SelectionRequest, TopType, DEFAULT_EPSILON,
};
use svem::rng::substream;
use svem::simulate::{
    expected_p_full, gen_surface, make_holdout, make_lhs_design, noise_sd, paired_difference, run_cell,
    settings_for_order, summarize, RepRecord, Setting, SimCell,
};
use svem::svem::{
    criterion_gaussian, fit_ensembles, kish_neff, EnsembleOptions, Objective, Selector, SvemConfig,
};
use svem::wmt::{wmt_single, WmtSettings};
use svem::Dataset;

fn report(n: usize, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {n}: {status} {detail}");
}

fn t_quantile(p: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df).unwrap().inverse_cdf(p)
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_1_expansion_dimensions() {
    let mut rng = substream(11, 0);
    let ds = make_lhs_design(30, &mut rng);
    let mut got = Vec::new();
    for coding in [Coding::Treatment, Coding::Sum] {
        for order in 1..=3 {
            let spec = build_expansion_spec(&ds, &settings_for_order(order, coding)).unwrap();
            let dm = expand_rows(&spec, &ds).unwrap();
            assert_eq!(term_count(&spec), dm.p_full());
            got.push((order, dm.p_full()));
        }
    }
    let pass = got.iter().all(|(o, p)| expected_p_full(*o) == Some(*p)) && got[..3].iter().map(|g| g.1).eq([7, 25, 45]);
    report(1, pass, &format!("p_full by order (treatment, sum coding) = {:?}", got));
    assert!(pass);
}

// ---------------------------------------------------------------- 2

fn random_instance(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::<f64>::zeros(n, p + 1);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 1..=p {
            x[(i, j)] = rng.sample::<f64, _>(StandardNormal) * (0.5 + j as f64 / p as f64) + 0.3 * j as f64;
        }
    }
    let beta: Vec<f64> = (0..=p).map(|j| if j % 3 == 0 { 0.0 } else { rng.sample(StandardNormal) }).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| (0..=p).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let w: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().ln()).collect();
    (x, y, w)
}

/// Weighted normal equations by Gauss-Jordan elimination with partial pivoting.
fn normal_equations(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Vec<f64> {
    let (n, q) = x.shape();
    let mut a = vec![vec![0.0; q + 1]; q];
    for j in 0..q {
        for k in 0..q {
            a[j][k] = (0..n).map(|i| w[i] * x[(i, j)] * x[(i, k)]).sum();
        }
        a[j][q] = (0..n).map(|i| w[i] * x[(i, j)] * y[i]).sum();
    }
    for c in 0..q {
        let piv = (c..q).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for r in 0..q {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=q {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    (0..q).map(|j| a[j][q] / a[j][j]).collect()
}

/// Largest violation of the elastic-net stationarity conditions, with the
/// penalty on predictors standardised to weighted mean 0 and variance 1.
fn kkt_residual(x: &DMatrix<f64>, y: &[f64], w: &[f64], coef: &[f64], alpha: f64, lambda: f64) -> f64 {
    let (n, q) = x.shape();
    let wsum: f64 = w.iter().sum();
    let r: Vec<f64> = (0..n).map(|i| y[i] - (0..q).map(|j| x[(i, j)] * coef[j]).sum::<f64>()).collect();
    let mut worst = (0..n).map(|i| w[i] * r[i]).sum::<f64>().abs() / wsum;
    for j in 1..q {
        let m = (0..n).map(|i| w[i] * x[(i, j)]).sum::<f64>() / wsum;
        let sd = ((0..n).map(|i| w[i] * (x[(i, j)] - m).powi(2)).sum::<f64>() / wsum).sqrt();
        let g = (0..n).map(|i| w[i] * (x[(i, j)] - m) / sd * r[i]).sum::<f64>() / wsum;
        let b = coef[j] * sd;
        let v = if b != 0.0 {
            (g - lambda * alpha * b.signum() - lambda * (1.0 - alpha) * b).abs()
        } else {
            (g.abs() - lambda * alpha).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

#[test]
fn criterion_2_solver_oracles() {
    let mut ols_err: f64 = 0.0;
    let mut kkt: f64 = 0.0;
    let mut points = 0;
    for inst in 0..50 {
        let (x, y, w) = random_instance(40, 10, 100 + inst);
        let mut lambdas: Vec<f64> = (0..30).map(|k| 2.0 * 0.7f64.powi(k)).collect();
        lambdas.push(0.0);
        let opts = PathOptions {
            lambdas: Some(lambdas),
            ..Default::default()
        };
        let fit = fit_path(&x, &y, &w, Family::Gaussian, 1.0, &opts).unwrap();
        let ols = normal_equations(&x, &y, &w);
        let last = fit.path.last().unwrap();
        assert_eq!(last.lambda, 0.0);
        for (a, b) in last.coefficients.iter().zip(&ols) {
            ols_err = ols_err.max((a - b).abs());
        }
        for alpha in [1.0, 0.5] {
            let fit = fit_path(&x, &y, &w, Family::Gaussian, alpha, &PathOptions::default()).unwrap();
            for pt in &fit.path {
                kkt = kkt.max(kkt_residual(&x, &y, &w, &pt.coefficients, alpha, pt.lambda));
                points += 1;
            }
        }
    }

    // univariate lasso: beta = S(<z, y - ybar>_w / W, lambda) / sd(x)
    let mut st_err: f64 = 0.0;
    for inst in 0..20 {
        let (xfull, y, w) = random_instance(25, 1, 900 + inst);
        let x = xfull.columns(0, 2).into_owned();
        let wsum: f64 = w.iter().sum();
        let xs: Vec<f64> = x.column(1).iter().copied().collect();
        let mx = xs.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / wsum;
        let my = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / wsum;
        let sd = (xs.iter().zip(&w).map(|(a, b)| b * (a - mx).powi(2)).sum::<f64>() / wsum).sqrt();
        let c = (0..25).map(|i| w[i] * (xs[i] - mx) / sd * (y[i] - my)).sum::<f64>() / wsum;
        let lambdas = vec![c.abs() * 1.5, c.abs() * 0.8, c.abs() * 0.3, c.abs() * 0.05, 0.0];
        let opts = PathOptions {
            lambdas: Some(lambdas.clone()),
            ..Default::default()
        };
        let fit = fit_path(&x, &y, &w, Family::Gaussian, 1.0, &opts).unwrap();
        for (pt, l) in fit.path.iter().zip(&lambdas) {
            let s = c.signum() * (c.abs() - l).max(0.0);
            st_err = st_err.max((pt.coefficients[1] - s / sd).abs());
        }
    }
    let pass = ols_err <= 1e-6 && st_err <= 1e-8 && kkt <= 1e-6;
    report(
        2,
        pass,
        &format!(
            "max |path(0) - OLS| = {ols_err:.2e} (<= 1e-6), max soft-threshold error = {st_err:.2e} (<= 1e-8), \
             max KKT residual over {points} path points = {kkt:.2e} (<= 1e-6)"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_criterion_reductions_and_guardrail() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let n = 8 + case;
        let res: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * (1.0 + case as f64)).collect();
        let ones = vec![1.0; n];
        let k = 1 + rng.random_range(0..(n / 2));
        let rss: f64 = res.iter().map(|r| r * r).sum();
        let nf = n as f64;
        let aic = nf * (rss / nf).ln() + 2.0 * k as f64;
        let bic = nf * (rss / nf).ln() + nf.ln() * k as f64;
        let got_aic = criterion_gaussian(&res, &ones, k, Objective::WAic);
        let got_bic = criterion_gaussian(&res, &ones, k, Objective::WBic);
        worst = worst.max((got_aic - aic).abs() / aic.abs().max(1.0));
        worst = worst.max((got_bic - bic).abs() / bic.abs().max(1.0));
    }

    // 50 small problems x 100 replicates x 2 selectors, many columns per run
    let mut selections = 0;
    let mut violations = 0;
    for d in 0..50u64 {
        let mut rng = substream(30 + d, 0);
        let n = 10 + (d as usize % 4) * 3;
        let ds = make_lhs_design(n, &mut rng);
        let spec = build_expansion_spec(&ds, &settings_for_order(2, Coding::Treatment)).unwrap();
        let x = expand_rows(&spec, &ds).unwrap().values;
        let y: Vec<f64> = (0..n).map(|i| 2.0 * x[(i, 1)] - x[(i, 3)] + rng.sample::<f64, _>(StandardNormal)).collect();
        let selectors = [
            Selector { objective: Objective::WAic, relax: true },
            Selector { objective: Objective::WBic, relax: true },
        ];
        let opts = EnsembleOptions {
            n_boot: 100,
            seed: d,
            ..Default::default()
        };
        let ens = fit_ensembles(&x, &y, Family::Gaussian, &selectors, &opts).unwrap();
        for e in &ens {
            for s in &e.selections {
                selections += 1;
                if (s.k_lambda as f64 - 1.0) >= s.n_eff_adm {
                    violations += 1;
                }
            }
        }
    }
    // unit weights give n_eff_adm = n
    let unit = kish_neff(&[1.0; 17]);
    let pass = worst < 1e-12 && violations == 0 && selections == 10_000 && unit.n_eff_adm == 17.0;
    report(
        3,
        pass,
        &format!(
            "max relative wAIC/wBIC error vs hand computation over 20 cases = {worst:.1e}; \
             {violations} of {selections} selections with k - 1 >= n_eff_adm"
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 4

fn sample_se(records: &[RepRecord], n: usize, setting: &str, value: impl Fn(&RepRecord) -> f64) -> (f64, f64) {
    let v: Vec<f64> = records
        .iter()
        .filter(|r| r.n_total == n && r.setting == setting)
        .map(value)
        .collect();
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, (var / v.len() as f64).sqrt())
}

/// Excess of the n = 25 mean over the larger neighbour, in standard errors
/// of that difference (independent cells).
fn spike(records: &[RepRecord], setting: &str, value: impl Fn(&RepRecord) -> f64 + Copy) -> (f64, [f64; 3]) {
    let [a, b, c] = [20, 25, 30].map(|n| sample_se(records, n, setting, value));
    let z20 = (b.0 - a.0) / (a.1.powi(2) + b.1.powi(2)).sqrt();
    let z30 = (b.0 - c.0) / (c.1.powi(2) + b.1.powi(2)).sqrt();
    (z20.min(z30), [a.0, b.0, c.0])
}

#[test]
fn criterion_4_interpolation_peaking() {
    let start = Instant::now();
    let settings = vec![
        Setting::svem(Objective::WSse, true),
        Setting::svem(Objective::WAic, true),
        Setting::svem(Objective::WBic, true),
    ];
    let labels: Vec<String> = settings.iter().map(|s| s.label(&[0.5, 1.0])).collect();
    let mut records = Vec::new();
    for n in [20, 25, 30] {
        let mut cell = SimCell::new(Family::Gaussian, n, 0.9, 2, settings.clone());
        cell.n_reps = 100;
        cell.n_boot = 100;
        cell.seed = 4000 + n as u64;
        let out = run_cell(&cell).unwrap();
        assert!(out.skipped.is_empty(), "{:?}", out.skipped);
        records.extend(out.records);
    }
    let rows = summarize(&records);
    assert!(rows.iter().all(|r| r.count == 100));
    let mut pass = true;
    let mut detail = Vec::new();
    for (label, short) in labels.iter().zip(["wSSE", "wAIC", "wBIC"]) {
        let (zm, m) = spike(&records, label, |r| r.metric);
        let (zk, k) = spike(&records, label, |r| r.k_median);
        let ok = if short == "wSSE" { zm >= 3.0 && zk >= 3.0 } else { zm <= 2.0 && zk <= 2.0 };
        pass &= ok;
        detail.push(format!(
            "{short}: metric {:.3}/{:.3}/{:.3} spike {zm:.1} se, k_median {:.2}/{:.2}/{:.2} spike {zk:.1} se",
            m[0], m[1], m[2], k[0], k[1], k[2]
        ));
    }
    report(
        4,
        pass,
        &format!(
            "n = 20/25/30 (wSSE needs >= 3 se at n=25, wAIC/wBIC <= 2 se): {} [{:.0} s]",
            detail.join("; "),
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 5

fn pooled_cells(family: Family, settings: &[Setting], reps_per_cell: usize, seed: u64, n_boot: usize) -> Vec<RepRecord> {
    let mut records = Vec::new();
    let mut skipped = 0;
    for (i, n) in [20, 30, 40].into_iter().enumerate() {
        for (j, r2) in [0.5, 0.9].into_iter().enumerate() {
            let mut cell = SimCell::new(family, n, r2, 2, settings.to_vec());
            cell.n_reps = reps_per_cell;
            cell.n_boot = n_boot;
            cell.seed = seed + (10 * i + j) as u64;
            let out = run_cell(&cell).unwrap();
            skipped += out.skipped.len();
            records.extend(out.records);
        }
    }
    assert_eq!(skipped, 0, "skipped replicates");
    records
}

#[test]
fn criterion_5_selector_ordering() {
    let start = Instant::now();
    let aic = Setting::svem(Objective::WAic, true);
    let cv = Setting::cv(false);
    let sse = Setting::svem(Objective::WSse, true);
    let grid = [0.5, 1.0];
    let (la, lc, ls) = (aic.label(&grid), cv.label(&grid), sse.label(&grid));
    let records = pooled_cells(Family::Gaussian, &[aic, cv, sse], 34, 5000, 200);
    let metric = |r: &RepRecord| r.metric;
    let d_ac = paired_difference(&records, &la, &lc, metric);
    let d_as = paired_difference(&records, &la, &ls, metric);
    let d_cs = paired_difference(&records, &lc, &ls, metric);
    let crit = t_quantile(0.95, (d_ac.count - 1) as f64);
    let pass = d_ac.count >= 200 && [d_ac, d_as, d_cs].iter().all(|d| d.t() < -crit);
    report(
        5,
        pass,
        &format!(
            "{} paired reps; wAIC-relaxed - CV: {:.4} (t {:.2}), wAIC-relaxed - wSSE: {:.4} (t {:.2}), \
             CV - wSSE: {:.4} (t {:.2}); one-sided critical t {:.2} [{:.0} s]",
            d_ac.count,
            d_ac.mean,
            d_ac.t(),
            d_as.mean,
            d_as.t(),
            d_cs.mean,
            d_cs.t(),
            -crit,
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 6

/// Studentized range upper 5% point for six means and infinite df.
const Q_05_6: f64 = 4.030;

#[test]
fn criterion_6_binomial_relaxation() {
    let start = Instant::now();
    let grid = [0.5, 1.0];
    let settings = vec![
        Setting::svem(Objective::WAic, false),
        Setting::svem(Objective::WAic, true),
        Setting::svem(Objective::WBic, false),
        Setting::svem(Objective::WBic, true),
        Setting::cv(false),
        Setting::cv(true),
    ];
    let l: Vec<String> = settings.iter().map(|s| s.label(&grid)).collect();
    let records = pooled_cells(Family::Binomial, &settings, 34, 6000, 200);
    let metric = |r: &RepRecord| r.metric;
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, k) in [("wAIC", 0), ("wBIC", 2), ("CV", 4)] {
        let d = paired_difference(&records, &l[k], &l[k + 1], metric);
        pass &= d.mean < 0.0 && d.count >= 200;
        detail.push(format!("{name} nonrelaxed - relaxed {:.4} (t {:.2}, n {})", d.mean, d.t(), d.count));
    }
    let d = paired_difference(&records, &l[2], &l[4], metric);
    let hsd = Q_05_6 / 2f64.sqrt();
    pass &= d.t().abs() < hsd;
    detail.push(format!(
        "wBIC-nonrelaxed - CV-nonrelaxed {:.4} (|t| {:.2} < Tukey {:.2})",
        d.mean,
        d.t().abs(),
        hsd
    ));
    report(6, pass, &format!("{} [{:.0} s]", detail.join("; "), start.elapsed().as_secs_f64()));
    assert!(pass);
}

// ---------------------------------------------------------------- 7

fn wmt_run(n: usize, signal: bool, n_boot: usize, n_perm: usize, seed: u64) -> f64 {
    let mut rng = substream(seed, 0);
    let holdout = make_holdout(&mut rng);
    let surface = gen_surface(&mut rng, &holdout).unwrap();
    let mut ds = make_lhs_design(n, &mut rng);
    let eta = surface.eta(&ds).unwrap();
    let sd = noise_sd(surface.sigma_f, 0.9);
    let y: Vec<f64> = eta
        .iter()
        .map(|e| if signal { *e } else { 0.0 } + sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    ds.push_numeric("y", y).unwrap();
    let spec = build_expansion_spec(&ds, &settings_for_order(2, Coding::Treatment)).unwrap();
    let cfg = SvemConfig::new(Family::Gaussian).with_seed(seed).with_n_boot(n_boot);
    let settings = WmtSettings {
        n_perm,
        n_eval: 500,
        seed,
    };
    wmt_single(&spec, &ds, "y", &[], &cfg, &settings).unwrap().p_value
}

#[test]
fn criterion_7_wmt_calibration_and_power() {
    let start = Instant::now();
    let null: Vec<f64> = (0..200).map(|s| wmt_run(20, false, 10, 99, 7000 + s)).collect();
    let rate = null.iter().filter(|p| **p <= 0.05).count() as f64 / null.len() as f64;
    let power: Vec<f64> = (0..20).map(|s| wmt_run(40, true, 30, 150, 7500 + s)).collect();
    let hits = power.iter().filter(|p| **p < 0.01).count();
    let frac = hits as f64 / power.len() as f64;
    let pass = (0.01..=0.12).contains(&rate) && frac >= 0.95;
    report(
        7,
        pass,
        &format!(
            "null rejection rate at 0.05 = {rate:.3} over 200 runs (in [0.01, 0.12]); \
             strong signal p < 0.01 in {hits}/20 runs ({:.0}%, >= 95%) [{:.0} s]",
            100.0 * frac,
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 8

/// Exhaustive k-medoids over all subsets of size k <= 3.
fn brute_force_cost(d: &[f64], m: usize, k: usize) -> f64 {
    let cost = |meds: &[usize]| -> f64 {
        (0..m)
            .map(|i| meds.iter().map(|&c| d[i * m + c]).fold(f64::INFINITY, f64::min))
            .sum()
    };
    let mut best = f64::INFINITY;
    for a in 0..m {
        if k == 1 {
            best = best.min(cost(&[a]));
            continue;
        }
        for b in a + 1..m {
            if k == 2 {
                best = best.min(cost(&[a, b]));
                continue;
            }
            for c in b + 1..m {
                best = best.min(cost(&[a, b, c]));
            }
        }
    }
    best
}

#[test]
fn criterion_8_optimizer_properties() {
    // mixture sampling
    let ds = generate_lnp(&LnpOptions::default()).unwrap();
    let spec = build_expansion_spec(&ds, &lnp_expansion_settings()).unwrap();
    let group = lnp_mixture();
    let cand = sample_candidates(&spec, &[group.clone()], 100_000, 8).unwrap();
    let cols: Vec<&[f64]> = group.vars.iter().map(|v| cand.numeric(v).unwrap()).collect();
    let mut mix_bad = 0;
    for i in 0..cand.n_rows() {
        let s: f64 = cols.iter().map(|c| c[i]).sum();
        let in_bounds = (0..4).all(|k| cols[k][i] >= group.lower[k] - 1e-9 && cols[k][i] <= group.upper[k] + 1e-9);
        if !in_bounds || (s - group.total).abs() > 1e-9 {
            mix_bad += 1;
        }
    }

    // geometric-mean score spot values
    let spots = [
        (vec![0.25, 1.0], vec![0.5, 0.5], 0.5),
        (vec![1.0, 1.0, 1.0], vec![0.2, 0.3, 0.5], 1.0),
        (vec![0.25, 0.0625], vec![0.5, 0.5], 0.125),
    ];
    let score_err = spots
        .iter()
        .map(|(d, w, want)| (geometric_score(d, w, 0.0) - want).abs())
        .fold(0.0, f64::max)
        .max((geometric_score(&[0.0], &[1.0], DEFAULT_EPSILON) - DEFAULT_EPSILON).abs())
        .max((geometric_score(&[1.0, 1.0], &[0.5, 0.5], DEFAULT_EPSILON) - 1.0).abs());

    // medoid selections on 30-row tables against exhaustive search
    let mut pam_bad = 0;
    let mut pam_cases = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sub: Vec<usize> = (0..30).map(|_| rng.random_range(0..cand.n_rows())).collect();
        let mut table = cand.select_rows(&sub);
        let names: Vec<String> = table.names().map(str::to_string).collect();
        table.push_numeric("score", (0..30).map(|_| rng.random::<f64>()).collect()).unwrap();
        let rows: Vec<usize> = (0..30).collect();
        let d = gower_matrix(&table, &names, &rows).unwrap();
        for k in 1..=3 {
            let req = SelectionRequest {
                target: "score".into(),
                direction: Direction::Max,
                k,
                top_type: TopType::N,
                top: 30.0,
                label: "all".into(),
            };
            let sel = select_from_score_table(&table, &names, &req).unwrap();
            let cost: f64 = (0..30)
                .map(|i| sel.medoid_rows.iter().map(|&c| d[i * 30 + c]).fold(f64::INFINITY, f64::min))
                .sum();
            pam_cases += 1;
            if (cost - brute_force_cost(&d, 30, k)).abs() > 1e-12 || (sel.total_distance - cost).abs() > 1e-12 {
                pam_bad += 1;
            }
        }
    }

    // export round trip
    let mut table = cand.select_rows(&(0..200).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let score: Vec<f64> = (0..200).map(|_| rng.random::<f64>() * 1e-3 + 1e4 * rng.random::<f64>()).collect();
    table.push_numeric("score", score).unwrap();
    let names: Vec<String> = lnp_expansion_settings().main_effects;
    let req = SelectionRequest {
        target: "score".into(),
        direction: Direction::Max,
        k: 5,
        top_type: TopType::Frac,
        top: 0.1,
        label: "round1_score_optimal".into(),
    };
    let sel = select_from_score_table(&table, &names, &req).unwrap();
    let mut buf = Vec::new();
    export_candidates_to(&table, &[sel.clone()], &mut buf, Some("# header")).unwrap();
    let back = Dataset::from_csv_reader(buf.as_slice()).unwrap();
    let exported: Vec<usize> = std::iter::once(sel.best_row).chain(sel.medoid_rows.clone()).collect();
    let mut rt_err: f64 = 0.0;
    for c in table.columns() {
        if let Ok(orig) = table.numeric(&c.name) {
            let got = back.numeric(&c.name).unwrap();
            for (i, &r) in exported.iter().enumerate() {
                rt_err = rt_err.max((got[i] - orig[r]).abs() / orig[r].abs().max(1e-300));
            }
        }
    }
    let pass = mix_bad == 0 && score_err <= 1e-9 && pam_bad == 0 && rt_err <= 1e-12 && exported.len() == 6;
    report(
        8,
        pass,
        &format!(
            "{mix_bad} of 100000 mixture rows off bounds/sum; score spot error {score_err:.1e}; \
             PAM matched exhaustive search in {}/{pam_cases} cases; export relative error {rt_err:.1e}",
            pam_cases - pam_bad
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 9

fn svem_cmd(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_svem")).current_dir(dir).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "svem {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn criterion_9_lnp_workflow() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    svem_cmd(d, &["gen-lnp", "--out", "lnp.csv", "--write-config", "run.json", "--seed", "1"]);
    let mut cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("run.json")).unwrap()).unwrap();
    cfg["wmt"] = serde_json::json!({"n_perm": 99, "n_boot": 100});
    std::fs::write(d.join("run.json"), cfg.to_string()).unwrap();
    for step in ["fit", "wmt", "score", "select", "export"] {
        svem_cmd(d, &[step, "--config", "run.json"]);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let out = d.join("out");
    let table = Dataset::read_csv(out.join("score_table.csv")).unwrap();
    let cands = Dataset::read_csv(out.join("candidates.csv")).unwrap();
    let labels: Vec<String> = (0..cands.n_rows()).map(|i| cands.column("label").unwrap().data.cell(i)).collect();
    let kinds: Vec<String> = (0..cands.n_rows()).map(|i| cands.column("candidate_type").unwrap().data.cell(i)).collect();
    let best_of = |label: &str| (0..cands.n_rows()).find(|&i| labels[i] == label && kinds[i] == "best").unwrap();
    let per_label = |label: &str| {
        let rows: Vec<usize> = (0..cands.n_rows()).filter(|&i| labels[i] == label).collect();
        (rows.len(), rows.iter().filter(|&&i| kinds[i] == "medoid").count())
    };
    let in_spec = cands.numeric("p_joint_mean").unwrap()[best_of("round1_in_spec")];
    let explore_u = cands.numeric("uncertainty_measure").unwrap()[best_of("round1_explore")];
    let table_max_u = table
        .numeric("uncertainty_measure")
        .unwrap()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let shapes: IndexMap<&str, (usize, usize)> = ["round1_score_optimal", "round1_explore", "round1_in_spec"]
        .into_iter()
        .map(|l| (l, per_label(l)))
        .collect();
    let header_ok = std::fs::read_to_string(out.join("candidates.csv")).unwrap().starts_with("# svem ");
    let pass = elapsed <= 600.0
        && table.n_rows() == 25_000
        && shapes.values().all(|s| *s == (6, 5))
        && in_spec >= 0.95
        && explore_u == table_max_u
        && header_ok;
    report(
        9,
        pass,
        &format!(
            "gen-lnp -> fit x3 -> wmt -> score (25000) -> select -> export in {elapsed:.0} s (<= 600); \
             rows per selection (total, medoids) {shapes:?}; in-spec p_joint_mean {in_spec:.3} (>= 0.95); \
             exploration uncertainty {explore_u:.4} vs table max {table_max_u:.4}"
        ),
    );
    assert!(pass);
}
