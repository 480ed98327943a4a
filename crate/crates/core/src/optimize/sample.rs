use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Result, SvemError};
use crate::expand::{ExpansionSpec, FactorKind, FactorRole};
use crate::rng::substream;

const SUM_TOL: f64 = 1e-9;

/// Factors constrained to lie within bounds and sum to `total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureGroup {
    pub vars: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub total: f64,
}

impl MixtureGroup {
    pub fn validate(&self) -> Result<()> {
        let k = self.vars.len();
        if k == 0 || self.lower.len() != k || self.upper.len() != k {
            return Err(SvemError::InvalidArgument(
                "mixture group needs one lower and one upper bound per variable".into(),
            ));
        }
        let all_finite = self.lower.iter().chain(&self.upper).all(|v| v.is_finite()) && self.total.is_finite();
        let lo: f64 = self.lower.iter().sum();
        let hi: f64 = self.upper.iter().sum();
        if !all_finite
            || !(self.total > 0.0)
            || self.lower.iter().zip(&self.upper).any(|(l, u)| l > u)
            || lo > self.total + SUM_TOL
            || hi < self.total - SUM_TOL
        {
            return Err(SvemError::InfeasibleMixture(format!(
                "{:?}: need lower <= upper and sum(lower) <= total <= sum(upper)",
                self.vars
            )));
        }
        Ok(())
    }

    /// One composition drawn uniformly from the bounded simplex, or `None`
    /// when the draw broke an upper bound.
    pub(crate) fn try_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<f64>> {
        let lo: f64 = self.lower.iter().sum();
        let rest = self.total - lo;
        if rest <= SUM_TOL * self.total.max(1.0) {
            return Some(self.lower.clone());
        }
        let e: Vec<f64> = (0..self.vars.len()).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let s: f64 = e.iter().sum();
        let x: Vec<f64> = self.lower.iter().zip(&e).map(|(l, ei)| l + rest * ei / s).collect();
        x.iter().zip(&self.upper).all(|(v, u)| *v <= *u).then_some(x)
    }
}

enum Plan<'a> {
    Uniform(f64, f64),
    Level(&'a [String]),
    Fixed(f64),
    FixedLevel(&'a str),
    Group(usize, usize),
}

/// Random feasible factor settings. Mixture variables are drawn jointly per
/// group, other numeric factors uniformly over their training range and
/// categorical factors uniformly over their levels. Blocking factors are
/// held at their most frequent level (categorical) or range midpoint.
pub fn sample_candidates(
    spec: &ExpansionSpec,
    groups: &[MixtureGroup],
    n_candidates: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_candidates == 0 {
        return Err(SvemError::InvalidArgument("n_candidates must be at least 1".into()));
    }
    let mut owner: Vec<Option<(usize, usize)>> = vec![None; spec.factors.len()];
    for (g, group) in groups.iter().enumerate() {
        group.validate()?;
        for (v, name) in group.vars.iter().enumerate() {
            let f = spec
                .factors
                .iter()
                .position(|f| &f.name == name)
                .ok_or_else(|| SvemError::UnknownFactor(name.clone()))?;
            let factor = &spec.factors[f];
            if factor.role != FactorRole::Main || !factor.is_numeric() || owner[f].is_some() {
                return Err(SvemError::InvalidArgument(format!(
                    "mixture variable '{name}' must be a numeric main effect in one group only"
                )));
            }
            owner[f] = Some((g, v));
        }
    }
    let plans: Vec<Plan> = spec
        .factors
        .iter()
        .zip(&owner)
        .map(|(f, own)| match (&f.kind, f.role, own) {
            (_, _, Some((g, v))) => Plan::Group(*g, *v),
            (FactorKind::Numeric { min, max }, FactorRole::Main, None) => Plan::Uniform(*min, *max),
            (FactorKind::Numeric { min, max }, FactorRole::Blocking, None) => Plan::Fixed((min + max) / 2.0),
            (FactorKind::Categorical { levels, .. }, FactorRole::Main, None) => Plan::Level(levels),
            (FactorKind::Categorical { most_frequent, .. }, FactorRole::Blocking, None) => {
                Plan::FixedLevel(most_frequent)
            }
        })
        .collect();

    let budget = 100 * n_candidates.max(10_000);
    let mut attempts = 0usize;
    let mut rng = substream(seed, 0);
    let mut numeric: Vec<Vec<f64>> = vec![Vec::with_capacity(n_candidates); plans.len()];
    let mut labels: Vec<Vec<&str>> = vec![Vec::new(); plans.len()];
    let mut draws: Vec<Vec<f64>> = vec![Vec::new(); groups.len()];
    for row in 0..n_candidates {
        for (g, group) in groups.iter().enumerate() {
            draws[g] = loop {
                attempts += 1;
                if attempts > budget {
                    return Err(SvemError::RejectionBudget { attempts, accepted: row });
                }
                if let Some(x) = group.try_draw(&mut rng) {
                    break x;
                }
            };
        }
        for (f, plan) in plans.iter().enumerate() {
            match plan {
                Plan::Uniform(lo, hi) => numeric[f].push(lo + (hi - lo) * rng.random::<f64>()),
                Plan::Level(levels) => labels[f].push(&levels[rng.random_range(0..levels.len())]),
                Plan::Fixed(v) => numeric[f].push(*v),
                Plan::FixedLevel(l) => labels[f].push(l),
                Plan::Group(g, v) => numeric[f].push(draws[*g][*v]),
            }
        }
    }
    let mut out = Dataset::new();
    for ((factor, plan), (num, lab)) in spec.factors.iter().zip(&plans).zip(numeric.into_iter().zip(labels)) {
        match (plan, &factor.kind) {
            (Plan::Level(_) | Plan::FixedLevel(_), FactorKind::Categorical { levels, .. }) => {
                out.push_categorical_with_levels(factor.name.clone(), &lab, levels.clone())?
            }
            _ => out.push_numeric(factor.name.clone(), num)?,
        }
    }
    Ok(out)
}
