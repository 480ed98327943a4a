//! Self-validated ensembles.
//!
//! Each replicate draws a fractional-random-weight pair, fits elastic-net
//! paths (optionally relaxed) under the training weights, and keeps the
//! path point that minimises a criterion computed under the validation
//! weights. The ensemble prediction averages the replicate fits.

mod criterion;
mod frw;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use criterion::{criterion_binomial, criterion_gaussian, inadmissible, CriterionConfig, Objective};
pub use frw::{draw_frw, frw_from_uniforms, kish_neff, EffectiveSize, FrwPair};

use crate::data::Dataset;
use crate::enet::{
    count_active, fit_path, linear_predictor, sigmoid, Family, PathOptions, RefitCache, DEFAULT_GAMMA_GRID,
};
use crate::error::{Result, SvemError};
use crate::expand::{expand_rows, ExpansionSpec};
use crate::rng::substream;
use crate::stats::quantile_sorted;

pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_N_BOOT: usize = 200;
pub const DEFAULT_ALPHA_GRID: [f64; 2] = [0.5, 1.0];

/// One way of choosing a path point per replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Selector {
    pub objective: Objective,
    pub relax: bool,
}

impl Selector {
    pub fn default_for(family: Family) -> Self {
        Selector {
            objective: Objective::default_for(family),
            relax: family == Family::Gaussian,
        }
    }
}

/// Resampling settings shared by every selector fitted together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub n_boot: usize,
    pub alpha_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub seed: u64,
    #[serde(default)]
    pub path: PathOptions,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            n_boot: DEFAULT_N_BOOT,
            alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
            gamma_grid: DEFAULT_GAMMA_GRID.to_vec(),
            seed: 1,
            path: PathOptions::default(),
        }
    }
}

/// What replicate `b` selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSelection {
    pub alpha: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub k_lambda: usize,
    pub criterion: f64,
    /// Effective size of the validation weights after clamping.
    pub n_eff_adm: f64,
    /// Every admissible point was rejected and the wSSE minimiser was kept.
    #[serde(default)]
    pub fallback: bool,
    /// The relaxed refit at the selected lambda was singular.
    #[serde(default)]
    pub degenerate: bool,
}

/// Selected coefficients for each replicate (rows of the B x p matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub coefficients: Vec<Vec<f64>>,
    pub selections: Vec<ReplicateSelection>,
}

impl Ensemble {
    pub fn n_boot(&self) -> usize {
        self.coefficients.len()
    }

    /// Median number of non-zero coefficients across replicates.
    pub fn k_median(&self) -> f64 {
        let k: Vec<f64> = self.selections.iter().map(|s| s.k_lambda as f64).collect();
        crate::stats::median(&k)
    }

    /// Member predictions, one column per replicate.
    pub fn member_predictions(&self, x: &DMatrix<f64>, family: Family) -> Result<DMatrix<f64>> {
        let p = self.coefficients[0].len();
        if x.ncols() != p {
            return Err(SvemError::ColumnMismatch {
                expected: p,
                got: x.ncols(),
            });
        }
        let c = DMatrix::from_fn(p, self.n_boot(), |j, b| self.coefficients[b][j]);
        let mut m = x * c;
        if family == Family::Binomial {
            m.apply(|v| *v = sigmoid(*v));
        }
        Ok(m)
    }
}

#[derive(Clone)]
struct Best {
    score: f64,
    alpha: f64,
    lambda: f64,
    gamma: f64,
    coefficients: Vec<f64>,
    degenerate: bool,
}

impl Best {
    fn empty() -> Self {
        Best {
            score: f64::INFINITY,
            alpha: f64::NAN,
            lambda: f64::NAN,
            gamma: f64::NAN,
            coefficients: Vec::new(),
            degenerate: false,
        }
    }
}

/// Fits one ensemble per selector from the same weight draws and paths, so
/// settings that differ only in criterion or relaxation are paired.
pub fn fit_ensembles(
    x: &DMatrix<f64>,
    y: &[f64],
    family: Family,
    selectors: &[Selector],
    opts: &EnsembleOptions,
) -> Result<Vec<Ensemble>> {
    if opts.n_boot == 0 || selectors.is_empty() || opts.alpha_grid.is_empty() {
        return Err(SvemError::InvalidArgument(
            "need at least one replicate, one selector and one alpha".into(),
        ));
    }
    if opts.gamma_grid.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(SvemError::InvalidArgument("gamma values must lie in [0, 1]".into()));
    }
    crate::enet::check_inputs(x, y, &vec![1.0; x.nrows()], family)?;
    let reps: Vec<Vec<(Vec<f64>, ReplicateSelection)>> = (0..opts.n_boot as u64)
        .into_par_iter()
        .map(|b| fit_replicate(x, y, family, selectors, opts, b))
        .collect::<Result<_>>()?;
    let mut out: Vec<Ensemble> = selectors
        .iter()
        .map(|_| Ensemble {
            coefficients: Vec::with_capacity(opts.n_boot),
            selections: Vec::with_capacity(opts.n_boot),
        })
        .collect();
    for rep in reps {
        for (s, (coefs, sel)) in rep.into_iter().enumerate() {
            out[s].coefficients.push(coefs);
            out[s].selections.push(sel);
        }
    }
    Ok(out)
}

fn fit_replicate(
    x: &DMatrix<f64>,
    y: &[f64],
    family: Family,
    selectors: &[Selector],
    opts: &EnsembleOptions,
    b: u64,
) -> Result<Vec<(Vec<f64>, ReplicateSelection)>> {
    let n = x.nrows();
    let frw = draw_frw(n, &mut substream(opts.seed, b));
    let ess = kish_neff(&frw.w_valid);
    let any_relax = selectors.iter().any(|s| s.relax);
    let gammas: Vec<f64> = if any_relax { opts.gamma_grid.clone() } else { vec![1.0] };
    let mut best = vec![Best::empty(); selectors.len()];
    let mut best_loss = vec![Best::empty(); selectors.len()];
    let loss_of = |eta: &[f64]| match family {
        Family::Gaussian => criterion::weighted_sse(y, eta, &frw.w_valid),
        Family::Binomial => criterion::twice_nll_eta(y, eta, &frw.w_valid),
    };

    for &alpha in &opts.alpha_grid {
        let fit = fit_path(x, y, &frw.w_train, family, alpha, &opts.path)?;
        let mut cache = RefitCache::default();
        for point in &fit.path {
            let eta_pen = linear_predictor(x, &point.coefficients);
            let (refit, singular) = if any_relax && point.k_lambda > 1 {
                match cache.get(x, y, &frw.w_train, family, &point.coefficients) {
                    Some(r) => (Some(r), false),
                    None => (None, true),
                }
            } else {
                (None, false)
            };
            let eta_ref = refit.as_ref().map(|r| linear_predictor(x, r));
            for &gamma in &gammas {
                let relaxed = gamma != 1.0;
                if relaxed && eta_ref.is_none() {
                    continue;
                }
                let loss = match &eta_ref {
                    Some(er) if relaxed => {
                        let eta: Vec<f64> = eta_pen.iter().zip(er).map(|(p, r)| gamma * p + (1.0 - gamma) * r).collect();
                        loss_of(&eta)
                    }
                    _ => loss_of(&eta_pen),
                };
                for (s, sel) in selectors.iter().enumerate() {
                    if relaxed && !sel.relax {
                        continue;
                    }
                    let cfg = CriterionConfig {
                        objective: sel.objective,
                        family,
                    };
                    let score = criterion::score_from_loss(loss, n, point.k_lambda, &ess, cfg);
                    let candidates = [(score, &mut best[s]), (loss, &mut best_loss[s])];
                    for (value, slot) in candidates {
                        if value < slot.score {
                            *slot = Best {
                                score: value,
                                alpha,
                                lambda: point.lambda,
                                gamma,
                                coefficients: match &refit {
                                    Some(r) if relaxed => crate::enet::blend(&point.coefficients, r, gamma),
                                    _ => point.coefficients.clone(),
                                },
                                degenerate: sel.relax && singular,
                            };
                        }
                    }
                }
            }
        }
    }

    Ok(selectors
        .iter()
        .enumerate()
        .map(|(s, sel)| {
            let fallback = !best[s].score.is_finite();
            let chosen = if fallback { best_loss[s].clone() } else { best[s].clone() };
            let k_lambda = count_active(&chosen.coefficients);
            if !fallback && sel.objective != Objective::WSse {
                assert!(!inadmissible(k_lambda, &ess), "selected an inadmissible point");
            }
            let selection = ReplicateSelection {
                alpha: chosen.alpha,
                lambda: chosen.lambda,
                gamma: chosen.gamma,
                k_lambda,
                criterion: chosen.score,
                n_eff_adm: ess.n_eff_adm,
                fallback,
                degenerate: chosen.degenerate,
            };
            (chosen.coefficients, selection)
        })
        .collect())
}

/// Linear recalibration `y ~ a + b * ensemble mean` for Gaussian models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub intercept: f64,
    pub slope: f64,
}

impl Calibration {
    /// Least-squares calibration; a constant predictor gives `(mean y, 0)`.
    pub fn fit(predicted: &[f64], y: &[f64]) -> Self {
        let n = y.len() as f64;
        let mp = predicted.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxx: f64 = predicted.iter().map(|p| (p - mp) * (p - mp)).sum();
        let sxy: f64 = predicted.iter().zip(y).map(|(p, v)| (p - mp) * (v - my)).sum();
        if !(sxx > 1e-12 * (1.0 + mp * mp) * n) {
            return Calibration {
                intercept: my,
                slope: 0.0,
            };
        }
        let slope = sxy / sxx;
        Calibration {
            intercept: my - slope * mp,
            slope,
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        self.intercept + self.slope * v
    }
}

/// Settings for a single-response fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvemConfig {
    pub family: Family,
    pub objective: Objective,
    pub relax: bool,
    pub debias: bool,
    #[serde(flatten)]
    pub ensemble: EnsembleOptions,
}

impl SvemConfig {
    /// Family defaults: Gaussian uses wAIC with relaxed paths, binomial
    /// uses wBIC with ordinary paths; debiasing off.
    pub fn new(family: Family) -> Self {
        let sel = Selector::default_for(family);
        SvemConfig {
            family,
            objective: sel.objective,
            relax: sel.relax,
            debias: false,
            ensemble: EnsembleOptions::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.ensemble.seed = seed;
        self
    }

    pub fn with_n_boot(mut self, n_boot: usize) -> Self {
        self.ensemble.n_boot = n_boot;
        self
    }

    pub fn selector(&self) -> Selector {
        Selector {
            objective: self.objective,
            relax: self.relax,
        }
    }
}

/// A fitted ensemble together with everything needed to predict from raw
/// factor settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvemModel {
    pub version: u32,
    pub package_version: String,
    pub response: String,
    pub family: Family,
    pub objective: Objective,
    pub relax: bool,
    pub n_boot: usize,
    pub alpha_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub seed: u64,
    pub debias: Option<Calibration>,
    pub spec: ExpansionSpec,
    pub column_names: Vec<String>,
    /// B rows of original-scale coefficients, intercept first.
    pub coefficients: Vec<Vec<f64>>,
    pub selections: Vec<ReplicateSelection>,
}

/// Response values checked against the family.
pub fn response_values(data: &Dataset, response: &str, family: Family) -> Result<Vec<f64>> {
    let y = data.numeric(response)?.to_vec();
    if family == Family::Binomial {
        if let Some(bad) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(SvemError::NonBinaryResponse(*bad));
        }
    }
    Ok(y)
}

pub fn fit_svem(spec: &ExpansionSpec, data: &Dataset, response: &str, cfg: &SvemConfig) -> Result<SvemModel> {
    let y = response_values(data, response, cfg.family)?;
    let dm = expand_rows(spec, data)?;
    let ens = fit_ensembles(&dm.values, &y, cfg.family, &[cfg.selector()], &cfg.ensemble)?
        .pop()
        .expect("one selector");
    let debias = (cfg.debias && cfg.family == Family::Gaussian).then(|| {
        let m = ens.member_predictions(&dm.values, cfg.family).expect("training columns");
        let mean: Vec<f64> = m.row_iter().map(|r| r.mean()).collect();
        Calibration::fit(&mean, &y)
    });
    Ok(SvemModel {
        version: MODEL_VERSION,
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        response: response.to_string(),
        family: cfg.family,
        objective: cfg.objective,
        relax: cfg.relax,
        n_boot: cfg.ensemble.n_boot,
        alpha_grid: cfg.ensemble.alpha_grid.clone(),
        gamma_grid: cfg.ensemble.gamma_grid.clone(),
        seed: cfg.ensemble.seed,
        debias,
        spec: spec.clone(),
        column_names: dm.column_names,
        coefficients: ens.coefficients,
        selections: ens.selections,
    })
}

/// Ensemble predictions with optional percentile intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct SvemPrediction {
    pub mean: Vec<f64>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    /// Member predictions (after calibration), one column per replicate.
    pub members: DMatrix<f64>,
}

impl SvemModel {
    pub fn ensemble(&self) -> Ensemble {
        Ensemble {
            coefficients: self.coefficients.clone(),
            selections: self.selections.clone(),
        }
    }

    pub fn k_median(&self) -> f64 {
        let k: Vec<f64> = self.selections.iter().map(|s| s.k_lambda as f64).collect();
        crate::stats::median(&k)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: SvemModel = serde_json::from_str(text)?;
        if model.version != MODEL_VERSION {
            return Err(SvemError::Version {
                expected: MODEL_VERSION,
                found: model.version,
            });
        }
        model.spec.validate()?;
        let p = model.spec.p_full();
        if model.coefficients.len() != model.n_boot || model.coefficients.iter().any(|c| c.len() != p) {
            return Err(SvemError::Config("coefficient matrix does not match the model header".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Predicts every row of `new_data`; `interval_level` of e.g. 0.95 adds the
/// 2.5% and 97.5% percentiles of the member predictions.
pub fn predict_svem(model: &SvemModel, new_data: &Dataset, interval_level: Option<f64>) -> Result<SvemPrediction> {
    let dm = expand_rows(&model.spec, new_data)?;
    predict_design(model, &dm.values, interval_level)
}

/// As [`predict_svem`] for an already expanded design matrix.
pub fn predict_design(model: &SvemModel, x: &DMatrix<f64>, interval_level: Option<f64>) -> Result<SvemPrediction> {
    if let Some(l) = interval_level {
        if !(l > 0.0 && l < 1.0) {
            return Err(SvemError::InvalidArgument(format!("interval level must lie in (0, 1), got {l}")));
        }
    }
    let mut members = model.ensemble().member_predictions(x, model.family)?;
    if let Some(cal) = model.debias {
        members.apply(|v| *v = cal.apply(*v));
    }
    let mean: Vec<f64> = members.row_iter().map(|r| r.mean()).collect();
    let (lower, upper) = match interval_level {
        Some(level) => {
            let a = (1.0 - level) / 2.0;
            let mut lo = Vec::with_capacity(x.nrows());
            let mut hi = Vec::with_capacity(x.nrows());
            let mut buf = vec![0.0; members.ncols()];
            for r in members.row_iter() {
                buf.iter_mut().zip(r.iter()).for_each(|(d, s)| *d = *s);
                buf.sort_by(f64::total_cmp);
                lo.push(quantile_sorted(&buf, a));
                hi.push(quantile_sorted(&buf, 1.0 - a));
            }
            (Some(lo), Some(hi))
        }
        None => (None, None),
    };
    Ok(SvemPrediction {
        mean,
        lower,
        upper,
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expand::{build_expansion_spec, Coding, ExpansionSettings};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ds = Dataset::new();
        let x1: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let y: Vec<f64> = (0..n).map(|i| 1.0 + 2.0 * x1[i] - x2[i] * x1[i] + 0.2 * rng.random::<f64>()).collect();
        let yb: Vec<f64> = (0..n).map(|i| (y[i] + 0.5 * rng.random::<f64>() > 1.2) as u8 as f64).collect();
        ds.push_numeric("X1", x1).unwrap();
        ds.push_numeric("X2", x2).unwrap();
        ds.push_numeric("y", y).unwrap();
        ds.push_numeric("yb", yb).unwrap();
        ds
    }

    fn spec(ds: &Dataset) -> ExpansionSpec {
        build_expansion_spec(
            ds,
            &ExpansionSettings {
                main_effects: vec!["X1".into(), "X2".into()],
                blocking: vec![],
                factorial_order: 2,
                polynomial_order: 2,
                include_pc_2way: false,
                coding: Coding::Treatment,
            },
        )
        .unwrap()
    }

    #[test]
    fn reproducible_under_seed() {
        let ds = data(20, 1);
        let sp = spec(&ds);
        let cfg = SvemConfig::new(Family::Gaussian).with_n_boot(5).with_seed(9);
        let a = fit_svem(&sp, &ds, "y", &cfg).unwrap();
        let b = fit_svem(&sp, &ds, "y", &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        for (c, s) in a.coefficients.iter().zip(&a.selections) {
            assert_eq!(count_active(c), s.k_lambda);
        }
    }

    #[test]
    fn family_defaults() {
        let g = SvemConfig::new(Family::Gaussian);
        assert_eq!((g.objective, g.relax, g.debias), (Objective::WAic, true, false));
        let b = SvemConfig::new(Family::Binomial);
        assert_eq!((b.objective, b.relax), (Objective::WBic, false));
        assert_eq!(g.ensemble.n_boot, 200);
        assert_eq!(g.ensemble.alpha_grid, vec![0.5, 1.0]);
    }

    #[test]
    fn constant_response_is_intercept_only() {
        let mut ds = data(15, 2);
        ds.set_numeric("y", vec![4.0; 15]).unwrap();
        let m = fit_svem(&spec(&ds), &ds, "y", &SvemConfig::new(Family::Gaussian).with_n_boot(10)).unwrap();
        assert!(m.selections.iter().all(|s| s.k_lambda == 1));
        let p = predict_svem(&m, &ds, Some(0.9)).unwrap();
        assert!(p.mean.iter().all(|v| (v - 4.0).abs() < 1e-12));
    }

    #[test]
    fn mean_is_member_average_and_intervals_bracket() {
        let ds = data(25, 3);
        let m = fit_svem(&spec(&ds), &ds, "y", &SvemConfig::new(Family::Gaussian).with_n_boot(30)).unwrap();
        let p = predict_svem(&m, &ds, Some(0.95)).unwrap();
        let (lo, hi) = (p.lower.unwrap(), p.upper.unwrap());
        for i in 0..25 {
            let avg = p.members.row(i).iter().sum::<f64>() / 30.0;
            assert!((p.mean[i] - avg).abs() < 1e-12);
            assert!(lo[i] <= hi[i]);
        }
    }

    #[test]
    fn identical_members_have_zero_width() {
        let ds = data(20, 4);
        let mut m = fit_svem(&spec(&ds), &ds, "y", &SvemConfig::new(Family::Gaussian).with_n_boot(4)).unwrap();
        let row = m.coefficients[0].clone();
        m.coefficients.iter_mut().for_each(|c| *c = row.clone());
        let p = predict_svem(&m, &ds, Some(0.95)).unwrap();
        assert!(p.lower.unwrap().iter().zip(p.upper.unwrap()).all(|(a, b)| *a == b));
    }

    #[test]
    fn binomial_predictions_are_probabilities() {
        let ds = data(40, 5);
        let m = fit_svem(&spec(&ds), &ds, "yb", &SvemConfig::new(Family::Binomial).with_n_boot(10)).unwrap();
        let p = predict_svem(&m, &ds, Some(0.9)).unwrap();
        assert!(p.mean.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(m.debias.is_none());
        assert!(matches!(
            fit_svem(&spec(&ds), &ds, "y", &SvemConfig::new(Family::Binomial)),
            Err(SvemError::NonBinaryResponse(_))
        ));
    }

    #[test]
    fn identity_calibration_for_perfect_predictions() {
        let y = [1.0, 3.0, 2.0, 5.0];
        let c = Calibration::fit(&y, &y);
        assert!((c.intercept).abs() < 1e-12 && (c.slope - 1.0).abs() < 1e-12);
        let flat = Calibration::fit(&[2.0; 4], &y);
        assert_eq!((flat.intercept, flat.slope), (2.75, 0.0));
    }

    #[test]
    fn json_roundtrip() {
        let ds = data(20, 6);
        let mut cfg = SvemConfig::new(Family::Gaussian).with_n_boot(3);
        cfg.debias = true;
        let m = fit_svem(&spec(&ds), &ds, "y", &cfg).unwrap();
        assert!(m.debias.is_some());
        let back = SvemModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let bumped = m.to_json().unwrap().replacen("\"version\": 1", "\"version\": 9", 1);
        assert!(matches!(SvemModel::from_json(&bumped), Err(SvemError::Version { .. })));
    }

    #[test]
    fn selectors_share_draws() {
        let ds = data(20, 7);
        let dm = expand_rows(&spec(&ds), &ds).unwrap();
        let y = ds.numeric("y").unwrap();
        let opts = EnsembleOptions {
            n_boot: 6,
            ..Default::default()
        };
        let sels = [
            Selector { objective: Objective::WAic, relax: true },
            Selector { objective: Objective::WSse, relax: false },
        ];
        let both = fit_ensembles(&dm.values, y, Family::Gaussian, &sels, &opts).unwrap();
        let alone = fit_ensembles(&dm.values, y, Family::Gaussian, &sels[1..], &opts).unwrap();
        assert_eq!(both[1], alone[0]);
        assert!(both[1].selections.iter().all(|s| s.gamma == 1.0));
    }
}
