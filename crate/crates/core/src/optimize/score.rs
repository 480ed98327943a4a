use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Result, SvemError};
use crate::expand::expand_rows;
use crate::stats::quantile;
use crate::svem::{predict_design, SvemModel, SvemPrediction};
use crate::wmt::WmtResult;

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_INTERVAL_LEVEL: f64 = 0.95;
pub const ANCHOR_QUANTILES: (f64, f64) = (0.02, 0.98);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalKind {
    Max,
    Min,
    Target,
}

/// Optimisation goal for one response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub goal: GoalKind,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    /// Explicit desirability anchors; by default the 2% and 98% quantiles
    /// of the predictions over the candidate set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
}

impl Goal {
    pub fn new(goal: GoalKind, weight: f64) -> Self {
        Goal {
            goal,
            weight,
            target: None,
            low: None,
            high: None,
        }
    }
}

/// Specification limits; either side may be open.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpecLimit {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

impl SpecLimit {
    pub fn contains(&self, v: f64) -> bool {
        self.lower.is_none_or(|l| v >= l) && self.upper.is_none_or(|u| v <= u)
    }
}

/// Linear desirability on `[low, high]`. Degenerate anchors (`high <= low`)
/// carry no information and give 1.
pub fn desirability(value: f64, goal: GoalKind, target: Option<f64>, low: f64, high: f64) -> f64 {
    if !(high > low) {
        return 1.0;
    }
    let d = match goal {
        GoalKind::Max => (value - low) / (high - low),
        GoalKind::Min => (high - value) / (high - low),
        GoalKind::Target => {
            let t = target.unwrap_or((low + high) / 2.0).clamp(low, high);
            if value <= t {
                if t > low {
                    (value - low) / (t - low)
                } else {
                    (value >= t) as u8 as f64
                }
            } else if high > t {
                (high - value) / (high - t)
            } else {
                0.0
            }
        }
    };
    d.clamp(0.0, 1.0)
}

/// Weighted geometric mean `exp(sum w ln(d + eps (1 - d)))`.
pub fn geometric_score(d: &[f64], weights: &[f64], epsilon: f64) -> f64 {
    d.iter()
        .zip(weights)
        .map(|(di, w)| w * (di + epsilon * (1.0 - di)).ln())
        .sum::<f64>()
        .exp()
}

/// How interval widths are put on a common scale for the uncertainty measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthNormalization {
    /// `(W - q02(W)) / (q98(W) - q02(W))` over the candidate widths.
    #[default]
    WidthQuantiles,
    /// `W / (q98(pred) - q02(pred))` over the candidate predictions.
    ResponseQuantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub interval_level: f64,
    pub epsilon: f64,
    pub width_normalization: WidthNormalization,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            interval_level: DEFAULT_INTERVAL_LEVEL,
            epsilon: DEFAULT_EPSILON,
            width_normalization: WidthNormalization::WidthQuantiles,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseScores {
    pub name: String,
    /// Normalised goal weight.
    pub weight: f64,
    pub anchors: (f64, f64),
    pub pred: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub width: Vec<f64>,
    pub desirability: Vec<f64>,
    pub prob_in_spec: Option<Vec<f64>>,
}

/// Candidates joined with predictions, desirabilities and summary scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub candidates: Dataset,
    pub responses: Vec<ResponseScores>,
    pub score: Vec<f64>,
    pub wmt_score: Option<Vec<f64>>,
    pub uncertainty: Vec<f64>,
    pub p_joint_mean: Option<Vec<f64>>,
    /// Set when `p_joint_mean` is a product of marginals because the models
    /// do not share replicate indices.
    pub p_joint_independent: bool,
}

impl ScoreTable {
    pub fn n_rows(&self) -> usize {
        self.score.len()
    }

    pub fn predictor_names(&self) -> Vec<String> {
        self.candidates.names().map(str::to_string).collect()
    }

    /// Flat table: factor columns, per-response columns, then the scores.
    pub fn to_dataset(&self) -> Dataset {
        let mut ds = self.candidates.clone();
        let push = |ds: &mut Dataset, name: String, v: &[f64]| ds.push_numeric(name, v.to_vec()).expect("row count");
        for r in &self.responses {
            push(&mut ds, format!("{}_pred", r.name), &r.pred);
            push(&mut ds, format!("{}_lwr", r.name), &r.lower);
            push(&mut ds, format!("{}_upr", r.name), &r.upper);
            push(&mut ds, format!("{}_width", r.name), &r.width);
            push(&mut ds, format!("{}_d", r.name), &r.desirability);
            if let Some(p) = &r.prob_in_spec {
                push(&mut ds, format!("{}_prob_in_spec", r.name), p);
            }
        }
        push(&mut ds, "score".into(), &self.score);
        if let Some(w) = &self.wmt_score {
            push(&mut ds, "wmt_score".into(), w);
        }
        push(&mut ds, "uncertainty_measure".into(), &self.uncertainty);
        if let Some(p) = &self.p_joint_mean {
            push(&mut ds, "p_joint_mean".into(), p);
            if self.p_joint_independent {
                push(&mut ds, "p_joint_independent".into(), &vec![1.0; p.len()]);
            }
        }
        ds
    }
}

fn normalized(weights: &[f64]) -> Vec<f64> {
    let s: f64 = weights.iter().sum();
    weights.iter().map(|w| w / s).collect()
}

/// Scores every candidate against the goals.
///
/// `models` and `goals` must name the same responses; the goal order sets
/// the column order. `specs` adds per-response and joint probabilities
/// that the mean lies inside the limits; `wmt` adds `wmt_score`.
pub fn score_candidates(
    models: &IndexMap<String, SvemModel>,
    goals: &IndexMap<String, Goal>,
    candidates: &Dataset,
    wmt: Option<&WmtResult>,
    specs: Option<&IndexMap<String, SpecLimit>>,
    opts: &ScoreOptions,
) -> Result<ScoreTable> {
    if candidates.n_rows() == 0 {
        return Err(SvemError::EmptyCandidates);
    }
    for name in goals.keys() {
        if !models.contains_key(name) {
            return Err(SvemError::NameMismatch(format!("goal '{name}' has no model")));
        }
    }
    for name in models.keys() {
        if !goals.contains_key(name) {
            return Err(SvemError::NameMismatch(format!("model '{name}' has no goal")));
        }
    }
    if let Some(specs) = specs {
        for name in specs.keys() {
            if !models.contains_key(name) {
                return Err(SvemError::NameMismatch(format!("spec limits for '{name}' have no model")));
            }
        }
    }
    for (name, g) in goals {
        if !(g.weight > 0.0 && g.weight.is_finite()) {
            return Err(SvemError::Config(format!("goal weight for '{name}' must be positive")));
        }
    }
    let n = candidates.n_rows();
    let weights = normalized(&goals.values().map(|g| g.weight).collect::<Vec<_>>());

    let preds: Vec<SvemPrediction> = goals
        .keys()
        .map(|name| {
            let model = &models[name];
            let dm = expand_rows(&model.spec, candidates)?;
            predict_design(model, &dm.values, Some(opts.interval_level))
        })
        .collect::<Result<_>>()?;

    let mut responses = Vec::with_capacity(goals.len());
    for (((name, goal), pred), &weight) in goals.iter().zip(&preds).zip(&weights) {
        let lower = pred.lower.clone().expect("interval requested");
        let upper = pred.upper.clone().expect("interval requested");
        let width: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| u - l).collect();
        let low = goal.low.unwrap_or_else(|| quantile(&pred.mean, ANCHOR_QUANTILES.0));
        let high = goal.high.unwrap_or_else(|| quantile(&pred.mean, ANCHOR_QUANTILES.1));
        if goal.goal == GoalKind::Target && goal.target.is_none() {
            return Err(SvemError::Config(format!("target goal for '{name}' needs a target value")));
        }
        let desirability = pred.mean.iter().map(|v| desirability(*v, goal.goal, goal.target, low, high)).collect();
        let prob_in_spec = specs
            .and_then(|s| s.get(name))
            .map(|limit| member_fraction(pred, |v| limit.contains(v)));
        responses.push(ResponseScores {
            name: name.clone(),
            weight,
            anchors: (low, high),
            pred: pred.mean.clone(),
            lower,
            upper,
            width,
            desirability,
            prob_in_spec,
        });
    }

    let score: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d: Vec<f64> = responses.iter().map(|r| r.desirability[i]).collect();
            geometric_score(&d, &weights, opts.epsilon)
        })
        .collect();

    let wmt_score = wmt.map(|w| {
        let raw: Vec<f64> = responses
            .iter()
            .map(|r| r.weight * w.multiplier(&r.name).unwrap_or(1.0))
            .collect();
        let ww = normalized(&raw);
        (0..n)
            .map(|i| {
                let d: Vec<f64> = responses.iter().map(|r| r.desirability[i]).collect();
                geometric_score(&d, &ww, opts.epsilon)
            })
            .collect()
    });

    let mut uncertainty = vec![0.0; n];
    for r in &responses {
        let (lo, hi) = match opts.width_normalization {
            WidthNormalization::WidthQuantiles => (Some(quantile(&r.width, 0.02)), quantile(&r.width, 0.98)),
            WidthNormalization::ResponseQuantiles => {
                (None, quantile(&r.pred, ANCHOR_QUANTILES.1) - quantile(&r.pred, ANCHOR_QUANTILES.0))
            }
        };
        let (offset, span) = match lo {
            Some(l) => (l, hi - l),
            None => (0.0, hi),
        };
        if !(span > 0.0) {
            continue;
        }
        for (u, w) in uncertainty.iter_mut().zip(&r.width) {
            *u += r.weight * ((w - offset) / span).clamp(0.0, 1.0);
        }
    }

    let (p_joint_mean, p_joint_independent) = match specs {
        Some(specs) if !specs.is_empty() => {
            let listed: Vec<usize> = goals
                .keys()
                .enumerate()
                .filter(|(_, name)| specs.contains_key(*name))
                .map(|(i, _)| i)
                .collect();
            let first = &models[&responses[listed[0]].name];
            let paired = listed.iter().all(|&i| {
                let m = &models[&responses[i].name];
                m.n_boot == first.n_boot && m.seed == first.seed
            });
            if paired {
                let b = preds[listed[0]].members.ncols();
                let joint = (0..n)
                    .map(|row| {
                        let inside = (0..b)
                            .filter(|&m| {
                                listed.iter().all(|&i| specs[&responses[i].name].contains(preds[i].members[(row, m)]))
                            })
                            .count();
                        inside as f64 / b as f64
                    })
                    .collect();
                (Some(joint), false)
            } else {
                let joint = (0..n)
                    .map(|row| {
                        listed
                            .iter()
                            .map(|&i| responses[i].prob_in_spec.as_ref().expect("spec listed")[row])
                            .product()
                    })
                    .collect();
                (Some(joint), true)
            }
        }
        _ => (None, false),
    };

    Ok(ScoreTable {
        candidates: candidates.clone(),
        responses,
        score,
        wmt_score,
        uncertainty,
        p_joint_mean,
        p_joint_independent,
    })
}

/// Fraction of replicate predictions satisfying `inside`, per candidate.
fn member_fraction(pred: &SvemPrediction, inside: impl Fn(f64) -> bool) -> Vec<f64> {
    let b = pred.members.ncols();
    pred.members
        .row_iter()
        .map(|row| row.iter().filter(|v| inside(**v)).count() as f64 / b as f64)
        .collect()
}

/// Per-response probability that the mean lies inside the limits, plus
/// the joint probability, from member predictions alone.
pub fn estimate_spec_probs(
    models: &IndexMap<String, SvemModel>,
    specs: &IndexMap<String, SpecLimit>,
    candidates: &Dataset,
) -> Result<(IndexMap<String, Vec<f64>>, Vec<f64>, bool)> {
    let goals: IndexMap<String, Goal> = specs
        .keys()
        .map(|k| (k.clone(), Goal::new(GoalKind::Max, 1.0)))
        .collect();
    let subset: IndexMap<String, SvemModel> = specs
        .keys()
        .map(|k| {
            models
                .get(k)
                .cloned()
                .map(|m| (k.clone(), m))
                .ok_or_else(|| SvemError::NameMismatch(format!("spec limits for '{k}' have no model")))
        })
        .collect::<Result<_>>()?;
    let table = score_candidates(&subset, &goals, candidates, None, Some(specs), &ScoreOptions::default())?;
    let marginal = table
        .responses
        .into_iter()
        .map(|r| (r.name, r.prob_in_spec.expect("listed")))
        .collect();
    Ok((marginal, table.p_joint_mean.expect("specs given"), table.p_joint_independent))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desirability_endpoints() {
        assert_eq!(desirability(10.0, GoalKind::Max, None, 0.0, 10.0), 1.0);
        assert_eq!(desirability(0.0, GoalKind::Max, None, 0.0, 10.0), 0.0);
        assert_eq!(desirability(5.0, GoalKind::Max, None, 0.0, 10.0), 0.5);
        assert_eq!(desirability(2.0, GoalKind::Min, None, 0.0, 10.0), 0.8);
        assert_eq!(desirability(-3.0, GoalKind::Min, None, 0.0, 10.0), 1.0);
        assert_eq!(desirability(4.0, GoalKind::Target, Some(4.0), 0.0, 10.0), 1.0);
        assert_eq!(desirability(2.0, GoalKind::Target, Some(4.0), 0.0, 10.0), 0.5);
        assert_eq!(desirability(7.0, GoalKind::Target, Some(4.0), 0.0, 10.0), 0.5);
        assert_eq!(desirability(7.0, GoalKind::Max, None, 3.0, 3.0), 1.0);
    }

    #[test]
    fn geometric_mean_examples() {
        assert_eq!(geometric_score(&[1.0, 1.0], &[0.3, 0.7], 1e-6), 1.0);
        assert!((geometric_score(&[0.0], &[1.0], 1e-6) - 1e-6).abs() < 1e-18);
        let s = geometric_score(&[0.25, 1.0], &[0.5, 0.5], 0.0);
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spec_limits() {
        let l = SpecLimit {
            lower: None,
            upper: Some(2.5),
        };
        assert!(l.contains(2.5) && !l.contains(3.0));
        assert!(SpecLimit::default().contains(f64::MAX));
    }
}
