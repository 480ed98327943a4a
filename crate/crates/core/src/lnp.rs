//! Synthetic lipid nanoparticle formulation screen.
//!
//! Four mixture components (PEG, Helper, Ionizable, Cholesterol), an
//! ionizable lipid type with three levels, two process factors, an
//! operator blocking factor and three responses. Potency and Size carry
//! strong planted effects; PDI is noise around 0.2.

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Result, SvemError};
use crate::expand::{Coding, ExpansionSettings};
use crate::optimize::{Goal, GoalKind, MixtureGroup, SpecLimit};
use crate::rng::substream;

pub const MIXTURE: [&str; 4] = ["PEG", "Helper", "Ionizable", "Cholesterol"];
pub const LIPID_TYPES: [&str; 3] = ["H101", "H102", "H103"];
pub const OPERATORS: [&str; 2] = ["A", "B"];
pub const RESPONSES: [&str; 3] = ["Potency", "Size", "PDI"];
pub const DEFAULT_RUNS: usize = 23;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LnpOptions {
    pub n_runs: usize,
    pub seed: u64,
}

impl Default for LnpOptions {
    fn default() -> Self {
        LnpOptions {
            n_runs: DEFAULT_RUNS,
            seed: 1,
        }
    }
}

/// Composition bounds: PEG in [0.01, 0.05], the others in [0.10, 0.60],
/// summing to one.
pub fn lnp_mixture() -> MixtureGroup {
    MixtureGroup {
        vars: MIXTURE.iter().map(|s| s.to_string()).collect(),
        lower: vec![0.01, 0.10, 0.10, 0.10],
        upper: vec![0.05, 0.60, 0.60, 0.60],
        total: 1.0,
    }
}

/// Third-order expansion with partial cubics and Operator as a blocking factor.
pub fn lnp_expansion_settings() -> ExpansionSettings {
    let mut main: Vec<String> = MIXTURE.iter().map(|s| s.to_string()).collect();
    main.extend(["Ionizable_Lipid_Type", "N_P_ratio", "flow_rate"].map(String::from));
    ExpansionSettings {
        main_effects: main,
        blocking: vec!["Operator".into()],
        factorial_order: 3,
        polynomial_order: 3,
        include_pc_2way: true,
        coding: Coding::Treatment,
    }
}

pub fn lnp_goals() -> IndexMap<String, Goal> {
    IndexMap::from([
        ("Potency".to_string(), Goal::new(GoalKind::Max, 0.6)),
        ("Size".to_string(), Goal::new(GoalKind::Min, 0.3)),
        ("PDI".to_string(), Goal::new(GoalKind::Min, 0.1)),
    ])
}

pub fn lnp_specs() -> IndexMap<String, SpecLimit> {
    IndexMap::from([
        ("Potency".to_string(), SpecLimit { lower: Some(78.0), upper: None }),
        ("Size".to_string(), SpecLimit { lower: None, upper: Some(100.0) }),
        ("PDI".to_string(), SpecLimit { lower: None, upper: Some(0.25) }),
    ])
}

/// Noiseless Potency and Size for one formulation.
#[allow(clippy::too_many_arguments)]
pub fn lnp_truth(
    peg: f64,
    _helper: f64,
    ionizable: f64,
    cholesterol: f64,
    lipid_type: &str,
    np_ratio: f64,
    flow_rate: f64,
    operator: &str,
) -> (f64, f64) {
    let type_shift = match lipid_type {
        "H102" => 8.0,
        "H103" => -6.0,
        _ => 0.0,
    };
    let op_b = (operator == "B") as u8 as f64;
    let potency = 50.0 + 70.0 * (ionizable - 0.1) - 25.0 * (ionizable - 0.4).powi(2)
        + type_shift
        + 1.5 * (np_ratio - 8.0)
        + 1.5 * op_b;
    let size = 105.0 - 900.0 * (peg - 0.03) - 12.0 * (flow_rate - 2.0) + 40.0 * (cholesterol - 0.3) + 2.0 * op_b;
    (potency, size)
}

/// Screening data with columns `PEG, Helper, Ionizable, Cholesterol,
/// Ionizable_Lipid_Type, N_P_ratio, flow_rate, Operator, Potency, Size, PDI`.
pub fn generate_lnp(opts: &LnpOptions) -> Result<Dataset> {
    let n = opts.n_runs;
    if n < 6 {
        return Err(SvemError::InvalidArgument("the screen needs at least 6 runs".into()));
    }
    let mut rng = substream(opts.seed, 0);
    let group = lnp_mixture();
    let mut mix: Vec<Vec<f64>> = vec![Vec::with_capacity(n); 4];
    for _ in 0..n {
        let x = loop {
            if let Some(x) = group.try_draw(&mut rng) {
                break x;
            }
        };
        for (c, v) in mix.iter_mut().zip(x) {
            c.push(v);
        }
    }
    let mut types: Vec<&str> = (0..n).map(|i| LIPID_TYPES[i % 3]).collect();
    types.shuffle(&mut rng);
    let np: Vec<f64> = (0..n).map(|_| 4.0 + 8.0 * rng.random::<f64>()).collect();
    let flow: Vec<f64> = (0..n).map(|_| 1.0 + 2.0 * rng.random::<f64>()).collect();
    let ops: Vec<&str> = (0..n).map(|i| OPERATORS[(2 * i >= n) as usize]).collect();

    let mut potency = Vec::with_capacity(n);
    let mut size = Vec::with_capacity(n);
    let mut pdi = Vec::with_capacity(n);
    for i in 0..n {
        let (p, s) = lnp_truth(mix[0][i], mix[1][i], mix[2][i], mix[3][i], types[i], np[i], flow[i], ops[i]);
        potency.push(p + 2.0 * rng.sample::<f64, _>(StandardNormal));
        size.push(s + 3.0 * rng.sample::<f64, _>(StandardNormal));
        pdi.push(0.2 + 0.03 * rng.sample::<f64, _>(StandardNormal));
    }

    let mut ds = Dataset::new();
    for (name, col) in MIXTURE.iter().zip(mix) {
        ds.push_numeric(*name, col)?;
    }
    ds.push_categorical_with_levels(
        "Ionizable_Lipid_Type",
        &types,
        LIPID_TYPES.iter().map(|s| s.to_string()).collect(),
    )?;
    ds.push_numeric("N_P_ratio", np)?;
    ds.push_numeric("flow_rate", flow)?;
    ds.push_categorical_with_levels("Operator", &ops, OPERATORS.iter().map(|s| s.to_string()).collect())?;
    ds.push_numeric("Potency", potency)?;
    ds.push_numeric("Size", size)?;
    ds.push_numeric("PDI", pdi)?;
    Ok(ds)
}
