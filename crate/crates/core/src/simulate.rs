//! Benchmarking harness on random sparse quadratic surfaces.
//!
//! Each replicate draws a fresh surface in four continuous factors and one
//! three-level factor, a Latin hypercube training design, and a 10,000
//! point holdout. Every setting of a cell is fitted to the same replicate
//! data, so settings can be compared pairwise.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{format_f64, Dataset};
use crate::enet::{linear_predictor, repeated_kfold_cv, sigmoid, CvOptions, Family};
use crate::error::{Result, SvemError};
use crate::expand::{build_expansion_spec, expand_rows, term_count, Coding, ExpansionSettings, ExpansionSpec};
use crate::rng::{derive_seed, substream, StreamRng};
use crate::stats::{mean, sd};
use crate::svem::{fit_ensembles, Calibration, EnsembleOptions, Objective, Selector};

pub const HOLDOUT_SIZE: usize = 10_000;
pub const LEVELS: [&str; 3] = ["L1", "L2", "L3"];
const METRIC_FLOOR: f64 = 1e-8;
const PROB_CLAMP: f64 = 1e-12;
const SVEM_TAG: u64 = 0x5356_454d;
const CV_TAG: u64 = 0x4356;

/// Column count of the order-1, order-2 and order-3 fitting expansions.
pub fn expected_p_full(order: usize) -> Option<usize> {
    match order {
        1 => Some(7),
        2 => Some(25),
        3 => Some(45),
        _ => None,
    }
}

/// Points on `[-1, 1]^d`, one per stratum in every coordinate, with
/// independently permuted strata.
fn lhs_columns<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..d)
        .map(|_| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(rng);
            perm.iter()
                .map(|&s| -1.0 + 2.0 * (s as f64 + rng.random::<f64>()) / n as f64)
                .collect()
        })
        .collect()
}

/// Latin hypercube in `X1..X4` plus a shuffled, balanced `X5` with levels
/// `L1..L3` (left-over runs go to the first levels).
pub fn make_lhs_design<R: Rng + ?Sized>(n_total: usize, rng: &mut R) -> Dataset {
    let cols = lhs_columns(n_total, 4, rng);
    let mut x5: Vec<&str> = (0..n_total).map(|i| LEVELS[i % 3]).collect();
    x5.sort_unstable();
    x5.shuffle(rng);
    let mut ds = Dataset::new();
    for (j, c) in cols.into_iter().enumerate() {
        ds.push_numeric(format!("X{}", j + 1), c).expect("equal lengths");
    }
    ds.push_categorical_with_levels("X5", &x5, LEVELS.iter().map(|s| s.to_string()).collect())
        .expect("known levels");
    ds
}

/// Holdout grid: Latin hypercube in `X1..X4`, `X5` cycled through its levels.
pub fn make_holdout<R: Rng + ?Sized>(rng: &mut R) -> Dataset {
    let cols = lhs_columns(HOLDOUT_SIZE, 4, rng);
    let x5: Vec<&str> = (0..HOLDOUT_SIZE).map(|i| LEVELS[i % 3]).collect();
    let mut ds = Dataset::new();
    for (j, c) in cols.into_iter().enumerate() {
        ds.push_numeric(format!("X{}", j + 1), c).expect("equal lengths");
    }
    ds.push_categorical_with_levels("X5", &x5, LEVELS.iter().map(|s| s.to_string()).collect())
        .expect("known levels");
    ds
}

pub fn settings_for_order(order: usize, coding: Coding) -> ExpansionSettings {
    ExpansionSettings {
        main_effects: ["X1", "X2", "X3", "X4", "X5"].iter().map(|s| s.to_string()).collect(),
        blocking: vec![],
        factorial_order: order,
        polynomial_order: order,
        include_pc_2way: false,
        coding,
    }
}

/// Random sparse truth on the order-2 expansion with sum-to-zero coding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub spec: ExpansionSpec,
    pub beta: Vec<f64>,
    /// Standard deviation of the noiseless surface over the holdout.
    pub sigma_f: f64,
    /// Number of all-zero draws that were discarded.
    pub redraws: usize,
}

impl Surface {
    pub fn eta(&self, data: &Dataset) -> Result<Vec<f64>> {
        Ok(linear_predictor(&expand_rows(&self.spec, data)?.values, &self.beta))
    }
}

/// `beta_j = Z_j E_j` with `Z_j ~ Bernoulli(pi_j)`, `pi_j ~ Beta(1/2, 1/2)`
/// and `E_j` standard Laplace.
fn draw_beta<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Vec<f64> {
    let beta = Beta::new(0.5, 0.5).expect("valid shape");
    (0..p)
        .map(|_| {
            let pi: f64 = beta.sample(rng);
            let z = rng.random::<f64>() < pi;
            let u: f64 = rng.random::<f64>() - 0.5;
            let e = -u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln();
            if z {
                e
            } else {
                0.0
            }
        })
        .collect()
}

pub fn gen_surface<R: Rng + ?Sized>(rng: &mut R, holdout: &Dataset) -> Result<Surface> {
    gen_surface_with(rng, holdout, |p, r| draw_beta(p, r))
}

fn gen_surface_with<R: Rng + ?Sized>(
    rng: &mut R,
    holdout: &Dataset,
    mut draw: impl FnMut(usize, &mut R) -> Vec<f64>,
) -> Result<Surface> {
    let spec = build_expansion_spec(holdout, &settings_for_order(2, Coding::Sum))?;
    let x = expand_rows(&spec, holdout)?.values;
    let mut redraws = 0;
    loop {
        let beta = draw(spec.p_full(), rng);
        let eta = linear_predictor(&x, &beta);
        let sigma_f = population_sd(&eta);
        if sigma_f > 0.0 && beta.iter().skip(1).any(|b| *b != 0.0) {
            return Ok(Surface {
                spec,
                beta,
                sigma_f,
                redraws,
            });
        }
        redraws += 1;
        if redraws > 1000 {
            return Err(SvemError::Numeric("could not draw a non-flat surface".into()));
        }
    }
}

fn population_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Fitting method of a setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    Svem { objective: Objective, relax: bool },
    Cv { relax: bool },
    /// The true coefficients; a sanity reference only meaningful at order 2.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Setting {
    #[serde(flatten)]
    pub method: Method,
    #[serde(default)]
    pub debias: bool,
}

fn flag(b: bool) -> &'static str {
    if b {
        "TRUE"
    } else {
        "FALSE"
    }
}

impl Setting {
    pub fn svem(objective: Objective, relax: bool) -> Self {
        Setting {
            method: Method::Svem { objective, relax },
            debias: false,
        }
    }

    pub fn cv(relax: bool) -> Self {
        Setting {
            method: Method::Cv { relax },
            debias: false,
        }
    }

    /// Label such as `SVEM_wAIC_relaxTRUE_default_dbFALSE`; the alpha grid
    /// token is `default` for {0.5, 1}, `lasso` for {1} and `custom` otherwise.
    pub fn label(&self, alpha_grid: &[f64]) -> String {
        let grid = match alpha_grid {
            [a, b] if *a == 0.5 && *b == 1.0 => "default",
            [a] if *a == 1.0 => "lasso",
            _ => "custom",
        };
        match self.method {
            Method::Svem { objective, relax } => format!(
                "SVEM_{}_relax{}_{grid}_db{}",
                objective.label(),
                flag(relax),
                flag(self.debias)
            ),
            Method::Cv { relax } => format!("CV_relax{}_{grid}_db{}", flag(relax), flag(self.debias)),
            Method::Oracle => "ORACLE".to_string(),
        }
    }
}

fn default_cv_k() -> usize {
    5
}

fn default_cv_repeats() -> usize {
    3
}

fn default_alpha_grid() -> Vec<f64> {
    crate::svem::DEFAULT_ALPHA_GRID.to_vec()
}

fn default_n_boot() -> usize {
    crate::svem::DEFAULT_N_BOOT
}

/// One grid cell: every setting is fitted on the same `n_reps` replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCell {
    pub family: Family,
    pub n_total: usize,
    pub target_r2: f64,
    pub fit_order: usize,
    pub settings: Vec<Setting>,
    pub n_reps: usize,
    pub seed: u64,
    #[serde(default = "default_n_boot")]
    pub n_boot: usize,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default = "default_cv_k")]
    pub cv_k: usize,
    #[serde(default = "default_cv_repeats")]
    pub cv_repeats: usize,
}

impl SimCell {
    pub fn new(family: Family, n_total: usize, target_r2: f64, fit_order: usize, settings: Vec<Setting>) -> Self {
        SimCell {
            family,
            n_total,
            target_r2,
            fit_order,
            settings,
            n_reps: 20,
            seed: 1,
            n_boot: default_n_boot(),
            alpha_grid: default_alpha_grid(),
            cv_k: default_cv_k(),
            cv_repeats: default_cv_repeats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub run_id: usize,
    pub family: Family,
    pub n_total: usize,
    pub target_r2: f64,
    pub order: usize,
    pub setting: String,
    /// Log normalised RMSE (Gaussian) or holdout cross-entropy (binomial).
    pub metric: f64,
    /// Median selected model size over ensemble members; the selected size
    /// for cross-validation and the true size for the oracle.
    pub k_median: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub run_id: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellOutput {
    pub records: Vec<RepRecord>,
    pub skipped: Vec<SkipRecord>,
    pub surface_redraws: usize,
}

/// Noise standard deviation giving the target R^2 for a surface with sd `sigma_f`.
pub fn noise_sd(sigma_f: f64, r2: f64) -> f64 {
    sigma_f * ((1.0 - r2) / r2).sqrt()
}

/// Logit scale giving the target signal strength for a unit-sd surface.
pub fn logit_scale(r2: f64) -> f64 {
    (r2 / (1.0 - r2)).sqrt()
}

/// Mean cross-entropy of predicted against true probabilities.
pub fn cross_entropy(p_true: &[f64], p_hat: &[f64]) -> f64 {
    p_true
        .iter()
        .zip(p_hat)
        .map(|(p, q)| {
            let q = q.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(p * q.ln() + (1.0 - p) * (1.0 - q).ln())
        })
        .sum::<f64>()
        / p_true.len() as f64
}

struct Replicate {
    x_train: DMatrix<f64>,
    y: Vec<f64>,
    x_holdout: DMatrix<f64>,
    /// Noiseless holdout truth: surface values or probabilities.
    truth: Vec<f64>,
    sigma_f: f64,
    beta_true: Vec<f64>,
    truth_on_fit_columns: bool,
    redraws: usize,
}

fn draw_replicate(cell: &SimCell, rng: &mut StreamRng) -> std::result::Result<Replicate, String> {
    let holdout = make_holdout(rng);
    let surface = gen_surface(rng, &holdout).map_err(|e| e.to_string())?;
    let eta_h = surface.eta(&holdout).map_err(|e| e.to_string())?;
    let design = make_lhs_design(cell.n_total, rng);
    let eta_t = surface.eta(&design).map_err(|e| e.to_string())?;
    let fit_spec =
        build_expansion_spec(&design, &settings_for_order(cell.fit_order, Coding::Treatment)).map_err(|e| e.to_string())?;
    if let Some(p) = expected_p_full(cell.fit_order) {
        assert_eq!(term_count(&fit_spec), p, "fitting expansion has an unexpected size");
    }
    let x_train = expand_rows(&fit_spec, &design).map_err(|e| e.to_string())?.values;
    let x_holdout = expand_rows(&fit_spec, &holdout).map_err(|e| e.to_string())?.values;
    // the truth re-expressed in treatment coding, used by the oracle
    let truth_on_fit_columns = cell.fit_order == 2;
    let beta_true = if truth_on_fit_columns {
        let truth_x = expand_rows(&surface.spec, &holdout).map_err(|e| e.to_string())?.values;
        let target = linear_predictor(&truth_x, &surface.beta);
        crate::linalg::weighted_least_squares(&x_holdout, &target, &vec![1.0; HOLDOUT_SIZE])
            .ok_or("oracle re-expression failed")?
    } else {
        Vec::new()
    };
    let (y, truth, sigma_f) = match cell.family {
        Family::Gaussian => {
            let s = noise_sd(surface.sigma_f, cell.target_r2);
            let y = eta_t
                .iter()
                .map(|e| e + s * rng.sample::<f64, _>(StandardNormal))
                .collect();
            (y, eta_h, surface.sigma_f)
        }
        Family::Binomial => {
            let (m, s) = (mean(&eta_h), population_sd(&eta_h));
            let scale = logit_scale(cell.target_r2);
            let prob = |e: f64| sigmoid(scale * (e - m) / s);
            let p_train: Vec<f64> = eta_t.iter().map(|e| prob(*e)).collect();
            let draw = |rng: &mut StreamRng| -> Vec<f64> {
                p_train.iter().map(|p| (rng.random::<f64>() < *p) as u8 as f64).collect()
            };
            let single = |y: &[f64]| y.iter().all(|v| *v == y[0]);
            let mut y = draw(rng);
            if single(&y) {
                y = draw(rng);
                if single(&y) {
                    return Err("single-class training labels after one redraw".into());
                }
            }
            (y, eta_h.iter().map(|e| prob(*e)).collect(), s)
        }
    };
    Ok(Replicate {
        x_train,
        y,
        x_holdout,
        truth,
        sigma_f,
        beta_true,
        truth_on_fit_columns,
        redraws: surface.redraws,
    })
}

fn metric(cell: &SimCell, rep: &Replicate, pred: &[f64]) -> f64 {
    match cell.family {
        Family::Gaussian => {
            let mse = rep.truth.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64;
            (mse.sqrt() / rep.sigma_f).max(METRIC_FLOOR).ln()
        }
        Family::Binomial => cross_entropy(&rep.truth, pred),
    }
}

fn run_replicate(cell: &SimCell, run_id: usize) -> std::result::Result<(Vec<RepRecord>, usize), String> {
    let rep_seed = derive_seed(cell.seed, run_id as u64);
    let mut rng = substream(cell.seed, run_id as u64);
    let rep = draw_replicate(cell, &mut rng)?;
    let family = cell.family;
    let to_response = |eta: Vec<f64>| -> Vec<f64> {
        match family {
            Family::Gaussian => eta,
            Family::Binomial => eta.into_iter().map(sigmoid).collect(),
        }
    };
    let calibrate = |debias: bool, train: &[f64], hold: Vec<f64>| -> Vec<f64> {
        if debias && family == Family::Gaussian {
            let c = Calibration::fit(train, &rep.y);
            hold.into_iter().map(|v| c.apply(v)).collect()
        } else {
            hold
        }
    };

    let mut out: Vec<Option<RepRecord>> = vec![None; cell.settings.len()];
    let record = |setting: &Setting, metric: f64, k_median: f64| RepRecord {
        run_id,
        family,
        n_total: cell.n_total,
        target_r2: cell.target_r2,
        order: cell.fit_order,
        setting: setting.label(&cell.alpha_grid),
        metric,
        k_median,
        seed: rep_seed,
    };

    let svem: Vec<(usize, Selector)> = cell
        .settings
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match s.method {
            Method::Svem { objective, relax } => Some((i, Selector { objective, relax })),
            _ => None,
        })
        .collect();
    if !svem.is_empty() {
        let selectors: Vec<Selector> = svem.iter().map(|(_, s)| *s).collect();
        let opts = EnsembleOptions {
            n_boot: cell.n_boot,
            alpha_grid: cell.alpha_grid.clone(),
            seed: derive_seed(rep_seed, SVEM_TAG),
            ..Default::default()
        };
        let ens = fit_ensembles(&rep.x_train, &rep.y, family, &selectors, &opts).map_err(|e| e.to_string())?;
        for ((i, _), e) in svem.iter().zip(ens) {
            let hold = e.member_predictions(&rep.x_holdout, family).map_err(|e| e.to_string())?;
            let hold: Vec<f64> = hold.row_iter().map(|r| r.mean()).collect();
            let train = e.member_predictions(&rep.x_train, family).map_err(|e| e.to_string())?;
            let train: Vec<f64> = train.row_iter().map(|r| r.mean()).collect();
            let pred = calibrate(cell.settings[*i].debias, &train, hold);
            out[*i] = Some(record(&cell.settings[*i], metric(cell, &rep, &pred), e.k_median()));
        }
    }
    for (i, setting) in cell.settings.iter().enumerate() {
        match setting.method {
            Method::Cv { relax } => {
                let opts = CvOptions {
                    k: cell.cv_k,
                    repeats: cell.cv_repeats,
                    seed: derive_seed(rep_seed, CV_TAG),
                    ..Default::default()
                };
                let res = repeated_kfold_cv(&rep.x_train, &rep.y, family, &cell.alpha_grid, relax, &opts)
                    .map_err(|e| e.to_string())?;
                let hold = to_response(linear_predictor(&rep.x_holdout, &res.point.coefficients));
                let train = to_response(linear_predictor(&rep.x_train, &res.point.coefficients));
                let pred = calibrate(setting.debias, &train, hold);
                out[i] = Some(record(setting, metric(cell, &rep, &pred), res.point.k_lambda as f64));
            }
            Method::Oracle => {
                if !rep.truth_on_fit_columns {
                    return Err("the oracle setting needs fit_order = 2".into());
                }
                let pred = to_response(linear_predictor(&rep.x_holdout, &rep.beta_true));
                let k = rep.beta_true.iter().filter(|b| b.abs() > 1e-9).count() as f64;
                out[i] = Some(record(setting, metric(cell, &rep, &pred), k));
            }
            Method::Svem { .. } => {}
        }
    }
    Ok((out.into_iter().map(|r| r.expect("every setting fitted")).collect(), rep.redraws))
}

fn check_cell(cell: &SimCell) -> Result<()> {
    if cell.n_total < 3 || cell.n_reps == 0 || cell.settings.is_empty() {
        return Err(SvemError::InvalidArgument(
            "a cell needs n_total >= 3, at least one replicate and one setting".into(),
        ));
    }
    if !(cell.target_r2 > 0.0 && cell.target_r2 < 1.0) {
        return Err(SvemError::InvalidArgument("target R^2 must lie in (0, 1)".into()));
    }
    if expected_p_full(cell.fit_order).is_none() {
        return Err(SvemError::InvalidArgument("fit order must be 1, 2 or 3".into()));
    }
    Ok(())
}

/// Runs every replicate of a cell; failed replicates are reported, not fatal.
pub fn run_cell(cell: &SimCell) -> Result<CellOutput> {
    check_cell(cell)?;
    let results: Vec<_> = (0..cell.n_reps).into_par_iter().map(|r| run_replicate(cell, r)).collect();
    let mut out = CellOutput::default();
    for (run_id, r) in results.into_iter().enumerate() {
        match r {
            Ok((records, redraws)) => {
                out.records.extend(records);
                out.surface_redraws += redraws;
            }
            Err(reason) => out.skipped.push(SkipRecord { run_id, reason }),
        }
    }
    Ok(out)
}

pub fn run_gaussian_cell(cell: &SimCell) -> Result<CellOutput> {
    if cell.family != Family::Gaussian {
        return Err(SvemError::InvalidArgument("expected a Gaussian cell".into()));
    }
    run_cell(cell)
}

pub fn run_binomial_cell(cell: &SimCell) -> Result<CellOutput> {
    if cell.family != Family::Binomial {
        return Err(SvemError::InvalidArgument("expected a binomial cell".into()));
    }
    run_cell(cell)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n_total: usize,
    pub target_r2: f64,
    pub order: usize,
    pub setting: String,
    pub count: usize,
    pub mean_metric: f64,
    pub se_metric: f64,
    pub mean_k_median: f64,
}

/// Mean metric, its standard error and mean `k_median` per
/// `(n_total, target_r2, order, setting)`, in sorted key order.
pub fn summarize(records: &[RepRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, u64, usize, String), Vec<&RepRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.n_total, r.target_r2.to_bits(), r.order, r.setting.clone()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((n_total, r2, order, setting), rs)| {
            let m: Vec<f64> = rs.iter().map(|r| r.metric).collect();
            let k: Vec<f64> = rs.iter().map(|r| r.k_median).collect();
            SummaryRow {
                n_total,
                target_r2: f64::from_bits(r2),
                order,
                setting,
                count: rs.len(),
                mean_metric: mean(&m),
                se_metric: sd(&m) / (m.len() as f64).sqrt(),
                mean_k_median: mean(&k),
            }
        })
        .collect()
}

/// Paired comparison of two settings over replicates present for both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub count: usize,
    /// Mean of `a - b`.
    pub mean: f64,
    pub se: f64,
}

impl PairedDifference {
    pub fn t(&self) -> f64 {
        self.mean / self.se
    }
}

pub fn paired_difference(records: &[RepRecord], a: &str, b: &str, value: impl Fn(&RepRecord) -> f64) -> PairedDifference {
    let key = |r: &RepRecord| (r.run_id, r.n_total, r.target_r2.to_bits(), r.order, r.seed);
    let bs: BTreeMap<_, f64> = records.iter().filter(|r| r.setting == b).map(|r| (key(r), value(r))).collect();
    let d: Vec<f64> = records
        .iter()
        .filter(|r| r.setting == a)
        .filter_map(|r| bs.get(&key(r)).map(|vb| value(r) - vb))
        .collect();
    PairedDifference {
        count: d.len(),
        mean: mean(&d),
        se: sd(&d) / (d.len() as f64).sqrt(),
    }
}

pub fn write_records_csv<W: Write>(records: &[RepRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["run_id", "family", "n_total", "target_R2", "order", "setting", "metric", "k_median", "seed"])?;
    for r in records {
        w.write_record([
            r.run_id.to_string(),
            serde_json::to_value(r.family)?.as_str().unwrap_or_default().to_string(),
            r.n_total.to_string(),
            format_f64(r.target_r2),
            r.order.to_string(),
            r.setting.clone(),
            format_f64(r.metric),
            format_f64(r.k_median),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n_total", "target_R2", "order", "setting", "count", "mean_metric", "se_metric", "mean_k_median"])?;
    for r in rows {
        w.write_record([
            r.n_total.to_string(),
            format_f64(r.target_r2),
            r.order.to_string(),
            r.setting.clone(),
            r.count.to_string(),
            format_f64(r.mean_metric),
            format_f64(r.se_metric),
            format_f64(r.mean_k_median),
        ])?;
    }
    w.flush()?;
    Ok(())
}
