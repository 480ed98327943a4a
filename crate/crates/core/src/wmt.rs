//! Permutation whole-model test.
//!
//! The ensemble is refitted to the observed response and to independently
//! permuted copies of it, and each fit is summarised by its prediction
//! vector over a shared space-filling set of feasible points. A flat
//! response surface makes the observed vector look like the permuted ones.
//! The test statistic is a diagonal Mahalanobis-type distance from the
//! centre of the permuted vectors.

use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{format_f64, Dataset};
use crate::enet::Family;
use crate::error::{Result, SvemError};
use crate::expand::{expand_rows, ExpansionSpec};
use crate::optimize::{sample_candidates, MixtureGroup};
use crate::rng::{derive_seed, substream};
use crate::stats::{mean, sd};
use crate::svem::{fit_ensembles, SvemConfig};

pub const DEFAULT_N_PERM: usize = 150;
pub const DEFAULT_N_EVAL: usize = 500;
pub const MULTIPLIER_FLOOR: f64 = 0.05;
const RIDGE: f64 = 1e-8;
const EVAL_TAG: u64 = 0x5745_5641_4c;
const PERM_TAG: u64 = 0x5045_524d;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WmtSettings {
    pub n_perm: usize,
    pub n_eval: usize,
    pub seed: u64,
}

impl Default for WmtSettings {
    fn default() -> Self {
        WmtSettings {
            n_perm: DEFAULT_N_PERM,
            n_eval: DEFAULT_N_EVAL,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmtResponse {
    pub response: String,
    pub p_value: f64,
    pub multiplier: f64,
    pub original_distance: f64,
    pub permuted_distances: Vec<f64>,
    /// The response was constant, so no test was run and `p_value` is 1.
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmtResult {
    pub settings: WmtSettings,
    pub responses: Vec<WmtResponse>,
}

impl WmtResult {
    pub fn multiplier(&self, response: &str) -> Option<f64> {
        self.responses.iter().find(|r| r.response == response).map(|r| r.multiplier)
    }

    pub fn p_value(&self, response: &str) -> Option<f64> {
        self.responses.iter().find(|r| r.response == response).map(|r| r.p_value)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Long-format distances: `response,kind,index,distance`.
    pub fn write_distances_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["response", "kind", "index", "distance"])?;
        for r in &self.responses {
            w.write_record([r.response.as_str(), "original", "0", &format_f64(r.original_distance)])?;
            for (i, d) in r.permuted_distances.iter().enumerate() {
                w.write_record([r.response.as_str(), "permuted", &(i + 1).to_string(), &format_f64(*d)])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Add-one permutation p-value.
pub fn permutation_p_value(original: f64, permuted: &[f64]) -> f64 {
    let ge = permuted.iter().filter(|d| **d >= original).count();
    (1 + ge) as f64 / (1 + permuted.len()) as f64
}

/// Distance of `v` from the column means of `reference` (rows are
/// vectors), scaled per coordinate by the population variance plus a ridge.
pub fn diagonal_distance(v: &[f64], mu: &[f64], var: &[f64]) -> f64 {
    v.iter()
        .zip(mu)
        .zip(var)
        .map(|((x, m), s)| (x - m) * (x - m) / (s + RIDGE))
        .sum::<f64>()
        .sqrt()
}

fn column_moments(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let m = rows[0].len();
    let k = rows.len() as f64;
    let mut mu = vec![0.0; m];
    for r in rows {
        mu.iter_mut().zip(r).for_each(|(a, b)| *a += b / k);
    }
    let mut var = vec![0.0; m];
    for r in rows {
        var.iter_mut()
            .zip(r)
            .zip(&mu)
            .for_each(|((s, x), mu)| *s += (x - mu) * (x - mu) / k);
    }
    (mu, var)
}

/// Whole-model test for one Gaussian response.
///
/// The response is standardised by its mean and standard deviation before
/// fitting, so distances are comparable across responses. Every fit uses
/// the ensemble seed of `cfg`.
pub fn wmt_single(
    spec: &ExpansionSpec,
    data: &Dataset,
    response: &str,
    groups: &[MixtureGroup],
    cfg: &SvemConfig,
    settings: &WmtSettings,
) -> Result<WmtResponse> {
    if cfg.family != Family::Gaussian {
        return Err(SvemError::InvalidArgument(
            "the whole-model test applies to Gaussian responses only".into(),
        ));
    }
    if settings.n_perm < 19 || settings.n_eval == 0 {
        return Err(SvemError::InvalidArgument(
            "whole-model test needs n_perm >= 19 and at least one evaluation point".into(),
        ));
    }
    let y = data.numeric(response)?;
    let (my, sy) = (mean(y), sd(y));
    if !(sy > 1e-12 * (1.0 + my.abs())) {
        return Ok(WmtResponse {
            response: response.to_string(),
            p_value: 1.0,
            multiplier: 1.0,
            original_distance: 0.0,
            permuted_distances: Vec::new(),
            degenerate: true,
        });
    }
    let z: Vec<f64> = y.iter().map(|v| (v - my) / sy).collect();
    let x = expand_rows(spec, data)?.values;
    let eval = sample_candidates(spec, groups, settings.n_eval, derive_seed(settings.seed, EVAL_TAG))?;
    let xe = expand_rows(spec, &eval)?.values;
    let perm_seed = derive_seed(settings.seed, PERM_TAG);

    let vectors: Vec<Vec<f64>> = (0..=settings.n_perm)
        .into_par_iter()
        .map(|j| {
            let mut yj = z.clone();
            if j > 0 {
                yj.shuffle(&mut substream(perm_seed, j as u64));
            }
            let ens = fit_ensembles(&x, &yj, Family::Gaussian, &[cfg.selector()], &cfg.ensemble)?
                .pop()
                .expect("one selector");
            let members = ens.member_predictions(&xe, Family::Gaussian)?;
            Ok(members.row_iter().map(|r| r.mean()).collect())
        })
        .collect::<Result<_>>()?;

    let (mu, var) = column_moments(&vectors[1..]);
    let original_distance = diagonal_distance(&vectors[0], &mu, &var);
    let permuted_distances: Vec<f64> = vectors[1..].iter().map(|v| diagonal_distance(v, &mu, &var)).collect();
    Ok(WmtResponse {
        response: response.to_string(),
        p_value: permutation_p_value(original_distance, &permuted_distances),
        multiplier: 1.0,
        original_distance,
        permuted_distances,
        degenerate: false,
    })
}

/// `max(-log10 p, 0.05)` per response, rescaled to mean one.
pub fn multipliers(p_values: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = p_values.iter().map(|p| (-p.log10()).max(MULTIPLIER_FLOOR)).collect();
    let m = mean(&raw);
    raw.iter().map(|r| r / m).collect()
}

/// Runs [`wmt_single`] for every listed response with the same settings
/// and attaches score multipliers.
pub fn wmt_multi(
    specs: &IndexMap<String, ExpansionSpec>,
    data: &Dataset,
    groups: &[MixtureGroup],
    configs: &IndexMap<String, SvemConfig>,
    settings: &WmtSettings,
) -> Result<WmtResult> {
    if specs.is_empty() {
        return Err(SvemError::InvalidArgument("no responses to test".into()));
    }
    let mut responses = specs
        .iter()
        .map(|(name, spec)| {
            let cfg = configs
                .get(name)
                .ok_or_else(|| SvemError::NameMismatch(format!("no model settings for '{name}'")))?;
            wmt_single(spec, data, name, groups, cfg, settings)
        })
        .collect::<Result<Vec<_>>>()?;
    let m = multipliers(&responses.iter().map(|r| r.p_value).collect::<Vec<_>>());
    for (r, mult) in responses.iter_mut().zip(m) {
        r.multiplier = mult;
    }
    Ok(WmtResult {
        settings: *settings,
        responses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiplier_rule() {
        let m = multipliers(&[0.001, 0.1]);
        assert!((m[0] - 1.5).abs() < 1e-12 && (m[1] - 0.5).abs() < 1e-12);
        assert_eq!(multipliers(&[0.3]), vec![1.0]);
        let floor = multipliers(&[1.0, 0.01]);
        assert!((floor[0] - 2.0 * 0.05 / 2.05).abs() < 1e-12);
    }

    #[test]
    fn add_one_p_value() {
        assert_eq!(permutation_p_value(5.0, &[1.0, 2.0, 3.0]), 0.25);
        assert_eq!(permutation_p_value(2.0, &[1.0, 2.0, 3.0]), 0.75);
    }

    #[test]
    fn distance_uses_population_moments() {
        let rows = vec![vec![0.0, 1.0], vec![2.0, 1.0]];
        let (mu, var) = column_moments(&rows);
        assert_eq!(mu, vec![1.0, 1.0]);
        assert_eq!(var, vec![1.0, 0.0]);
        let d = diagonal_distance(&[3.0, 1.0], &mu, &var);
        assert!((d - 2.0 / (1.0 + RIDGE).sqrt()).abs() < 1e-12);
    }
}
