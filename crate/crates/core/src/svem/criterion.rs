use serde::{Deserialize, Serialize};

use super::frw::{kish_neff, EffectiveSize};
use crate::enet::{sigmoid, Family};

const SSE_FLOOR: f64 = 1e-12;
const P_CLAMP: f64 = 1e-12;

/// Validation criterion used to pick one path point per replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "wAIC")]
    WAic,
    #[serde(rename = "wBIC")]
    WBic,
    #[serde(rename = "wSSE")]
    WSse,
}

impl Objective {
    pub fn label(self) -> &'static str {
        match self {
            Objective::WAic => "wAIC",
            Objective::WBic => "wBIC",
            Objective::WSse => "wSSE",
        }
    }

    /// Complexity multiplier `g`.
    pub fn penalty(self, ess: &EffectiveSize) -> f64 {
        match self {
            Objective::WAic => 2.0,
            Objective::WBic => ess.n_eff_adm.ln(),
            Objective::WSse => 0.0,
        }
    }

    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Gaussian => Objective::WAic,
            Family::Binomial => Objective::WBic,
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "waic" => Ok(Objective::WAic),
            "wbic" => Ok(Objective::WBic),
            "wsse" => Ok(Objective::WSse),
            _ => Err(format!("unknown objective '{s}' (expected wAIC, wBIC or wSSE)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionConfig {
    pub objective: Objective,
    pub family: Family,
}

/// True when a model with `k_lambda` coefficients is too large for the
/// effective validation size.
pub fn inadmissible(k_lambda: usize, ess: &EffectiveSize) -> bool {
    (k_lambda as f64 - 1.0) >= ess.n_eff_adm
}

/// Criterion value from a precomputed validation loss: the weighted SSE
/// for Gaussian fits, twice the weighted negative log-likelihood for
/// binomial fits.
pub(crate) fn score_from_loss(loss: f64, n: usize, k_lambda: usize, ess: &EffectiveSize, cfg: CriterionConfig) -> f64 {
    if cfg.objective == Objective::WSse {
        return loss;
    }
    if inadmissible(k_lambda, ess) {
        return f64::INFINITY;
    }
    let g = cfg.objective.penalty(ess);
    match cfg.family {
        Family::Gaussian => n as f64 * (loss.max(SSE_FLOOR) / n as f64).ln() + g * k_lambda as f64,
        Family::Binomial => loss + g * k_lambda as f64,
    }
}

pub(crate) fn weighted_sse(y: &[f64], eta: &[f64], w: &[f64]) -> f64 {
    y.iter().zip(eta).zip(w).map(|((a, b), wi)| wi * (a - b) * (a - b)).sum()
}

/// Twice the weighted negative log-likelihood, from linear predictors.
pub(crate) fn twice_nll_eta(y: &[f64], eta: &[f64], w: &[f64]) -> f64 {
    let p: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
    2.0 * weighted_nll(y, &p, w)
}

fn weighted_nll(y: &[f64], p: &[f64], w: &[f64]) -> f64 {
    -y.iter()
        .zip(p)
        .zip(w)
        .map(|((yi, pi), wi)| {
            let q = pi.clamp(P_CLAMP, 1.0 - P_CLAMP);
            wi * (yi * q.ln() + (1.0 - yi) * (1.0 - q).ln())
        })
        .sum::<f64>()
}

/// Gaussian criterion from validation residuals: the weighted SSE for
/// `wSSE`, otherwise `n ln(SSE_w / n) + g k`, or `+inf` when inadmissible.
pub fn criterion_gaussian(residuals: &[f64], w_valid: &[f64], k_lambda: usize, objective: Objective) -> f64 {
    let sse: f64 = residuals.iter().zip(w_valid).map(|(r, w)| w * r * r).sum();
    let cfg = CriterionConfig {
        objective,
        family: Family::Gaussian,
    };
    score_from_loss(sse, residuals.len(), k_lambda, &kish_neff(w_valid), cfg)
}

/// Binomial criterion from fitted probabilities: `2 NLL_w + g k`, with the
/// same admissibility rule; `wSSE` reduces to `2 NLL_w`.
pub fn criterion_binomial(y: &[f64], p_hat: &[f64], w_valid: &[f64], k_lambda: usize, objective: Objective) -> f64 {
    let cfg = CriterionConfig {
        objective,
        family: Family::Binomial,
    };
    score_from_loss(2.0 * weighted_nll(y, p_hat, w_valid), y.len(), k_lambda, &kish_neff(w_valid), cfg)
}
