//! Deterministic model expansion.
//!
//! An [`ExpansionSpec`] is built once from the training data and a list of
//! main effects, and then reused for every response and every new table of
//! settings. The ordered term list is a pure function of the recorded
//! settings, levels and ranges, so two sessions that load the same spec
//! always produce identical design matrices.
//!
//! Term order: intercept, numeric mains, categorical mains, blocking mains,
//! interactions of increasing order (lexicographic in factor index), pure
//! polynomial powers (by degree, then factor), partial cubics `X^2:Z`.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnData, Dataset};
use crate::error::{Result, SvemError};

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Coding {
    /// Dummy columns for every level except the first (reference) level.
    #[default]
    Treatment,
    /// Sum-to-zero contrasts: the last level is coded -1 in every column.
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorKind {
    Numeric {
        min: f64,
        max: f64,
    },
    Categorical {
        levels: Vec<String>,
        /// Most common training level (first in sorted order on ties).
        most_frequent: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorRole {
    Main,
    Blocking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub role: FactorRole,
    #[serde(flatten)]
    pub kind: FactorKind,
}

impl Factor {
    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, FactorKind::Numeric { .. })
    }

    /// Number of model-matrix columns contributed by one linear occurrence.
    fn width(&self) -> usize {
        match &self.kind {
            FactorKind::Numeric { .. } => 1,
            FactorKind::Categorical { levels, .. } => levels.len() - 1,
        }
    }
}

/// Product of factor powers; an empty product is the intercept.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Term {
    /// `(factor index, power)` sorted by factor index.
    pub factors: Vec<(usize, u32)>,
}

impl Term {
    fn new(mut factors: Vec<(usize, u32)>) -> Self {
        factors.sort_unstable();
        Term { factors }
    }

    pub fn intercept() -> Self {
        Term { factors: Vec::new() }
    }

    pub fn is_intercept(&self) -> bool {
        self.factors.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionSpec {
    pub version: u32,
    pub main_effects: Vec<String>,
    pub blocking: Vec<String>,
    pub factorial_order: usize,
    pub polynomial_order: usize,
    pub include_pc_2way: bool,
    #[serde(default)]
    pub coding: Coding,
    /// Main effects in the order given, then blocking factors.
    pub factors: Vec<Factor>,
    pub terms: Vec<Term>,
}

/// Settings accepted by [`build_expansion_spec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionSettings {
    pub main_effects: Vec<String>,
    #[serde(default)]
    pub blocking: Vec<String>,
    pub factorial_order: usize,
    pub polynomial_order: usize,
    #[serde(default)]
    pub include_pc_2way: bool,
    #[serde(default)]
    pub coding: Coding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub column_names: Vec<String>,
    pub values: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn p_full(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(&self.column_names)?;
        for i in 0..self.values.nrows() {
            wtr.write_record(self.values.row(i).iter().map(|v| crate::data::format_f64(*v)))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn describe_factor(data: &Dataset, name: &str, role: FactorRole) -> Result<Factor> {
    let column = data
        .column(name)
        .ok_or_else(|| SvemError::UnknownFactor(name.to_string()))?;
    let kind = match &column.data {
        ColumnData::Numeric(v) => {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(SvemError::NonFinite("numeric factor"));
            }
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(max > min) {
                return Err(SvemError::ConstantColumn(name.to_string()));
            }
            FactorKind::Numeric { min, max }
        }
        ColumnData::Categorical { levels, codes } => {
            // only levels that occur in the training rows are recorded
            let mut counts = vec![0usize; levels.len()];
            for &c in codes {
                counts[c] += 1;
            }
            let used: Vec<(String, usize)> = levels
                .iter()
                .zip(&counts)
                .filter(|(_, &n)| n > 0)
                .map(|(l, &n)| (l.clone(), n))
                .collect();
            if used.len() < 2 {
                return Err(SvemError::TooFewLevels(name.to_string()));
            }
            let mut best = 0;
            for (i, (_, n)) in used.iter().enumerate() {
                if *n > used[best].1 {
                    best = i;
                }
            }
            let mut sorted: Vec<String> = used.iter().map(|(l, _)| l.clone()).collect();
            sorted.sort();
            FactorKind::Categorical {
                most_frequent: used[best].0.clone(),
                levels: sorted,
            }
        }
    };
    Ok(Factor {
        name: name.to_string(),
        role,
        kind,
    })
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Ordered, deduplicated term list for a set of factors and orders.
fn derive_terms(
    factors: &[Factor],
    factorial_order: usize,
    polynomial_order: usize,
    include_pc_2way: bool,
) -> Vec<Term> {
    let mains: Vec<usize> = (0..factors.len()).filter(|&i| factors[i].role == FactorRole::Main).collect();
    let blocks: Vec<usize> = (0..factors.len())
        .filter(|&i| factors[i].role == FactorRole::Blocking)
        .collect();
    let numeric_mains: Vec<usize> = mains.iter().copied().filter(|&i| factors[i].is_numeric()).collect();

    let mut seen = HashSet::new();
    let mut terms = Vec::new();
    let mut add = |t: Term, terms: &mut Vec<Term>| {
        if seen.insert(t.clone()) {
            terms.push(t);
        }
    };

    add(Term::intercept(), &mut terms);
    for &i in &numeric_mains {
        add(Term::new(vec![(i, 1)]), &mut terms);
    }
    for &i in mains.iter().filter(|&&i| !factors[i].is_numeric()) {
        add(Term::new(vec![(i, 1)]), &mut terms);
    }
    for &i in &blocks {
        add(Term::new(vec![(i, 1)]), &mut terms);
    }
    for order in 2..=factorial_order.min(mains.len()) {
        for combo in combinations(mains.len(), order) {
            add(Term::new(combo.iter().map(|&c| (mains[c], 1)).collect()), &mut terms);
        }
    }
    for degree in 2..=polynomial_order {
        for &i in &numeric_mains {
            add(Term::new(vec![(i, degree as u32)]), &mut terms);
        }
    }
    if include_pc_2way {
        for &i in &numeric_mains {
            for &j in &mains {
                if i != j {
                    add(Term::new(vec![(i, 2), (j, 1)]), &mut terms);
                }
            }
        }
    }
    terms
}

/// Builds the recipe mapping main effects (and additive blocking factors) to
/// model-matrix columns.
pub fn build_expansion_spec(data: &Dataset, settings: &ExpansionSettings) -> Result<ExpansionSpec> {
    if settings.factorial_order < 1 || settings.polynomial_order < 1 {
        return Err(SvemError::InvalidArgument("expansion orders must be at least 1".into()));
    }
    if settings.main_effects.is_empty() {
        return Err(SvemError::InvalidArgument("at least one main effect is required".into()));
    }
    let mut names = HashSet::new();
    for n in settings.main_effects.iter().chain(&settings.blocking) {
        if !names.insert(n.as_str()) {
            return Err(SvemError::InvalidArgument(format!(
                "factor `{n}` listed more than once (blocking factors must be disjoint from main effects)"
            )));
        }
    }
    let mut factors = Vec::new();
    for n in &settings.main_effects {
        factors.push(describe_factor(data, n, FactorRole::Main)?);
    }
    for n in &settings.blocking {
        factors.push(describe_factor(data, n, FactorRole::Blocking)?);
    }
    let terms = derive_terms(
        &factors,
        settings.factorial_order,
        settings.polynomial_order,
        settings.include_pc_2way,
    );
    Ok(ExpansionSpec {
        version: SPEC_VERSION,
        main_effects: settings.main_effects.clone(),
        blocking: settings.blocking.clone(),
        factorial_order: settings.factorial_order,
        polynomial_order: settings.polynomial_order,
        include_pc_2way: settings.include_pc_2way,
        coding: settings.coding,
        factors,
        terms,
    })
}

/// Number of model-matrix columns, intercept included.
pub fn term_count(spec: &ExpansionSpec) -> usize {
    spec.terms
        .iter()
        .map(|t| t.factors.iter().map(|&(f, _)| spec.factors[f].width()).product::<usize>())
        .sum()
}

/// Per-row view of one factor, resolved against the spec.
enum FactorValues<'a> {
    Numeric(&'a [f64]),
    /// Index into the spec's level list.
    Categorical(Vec<usize>),
}

impl ExpansionSpec {
    pub fn settings(&self) -> ExpansionSettings {
        ExpansionSettings {
            main_effects: self.main_effects.clone(),
            blocking: self.blocking.clone(),
            factorial_order: self.factorial_order,
            polynomial_order: self.polynomial_order,
            include_pc_2way: self.include_pc_2way,
            coding: self.coding,
        }
    }

    pub fn factor(&self, name: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }

    pub fn p_full(&self) -> usize {
        term_count(self)
    }

    fn contrast(&self, n_levels: usize, level: usize, column: usize) -> f64 {
        match self.coding {
            // column c codes level c + 1
            Coding::Treatment => (level == column + 1) as u8 as f64,
            Coding::Sum => {
                if level == n_levels - 1 {
                    -1.0
                } else {
                    (level == column) as u8 as f64
                }
            }
        }
    }

    fn contrast_label<'a>(&self, levels: &'a [String], column: usize) -> &'a str {
        match self.coding {
            Coding::Treatment => &levels[column + 1],
            Coding::Sum => &levels[column],
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.p_full());
        for term in &self.terms {
            if term.is_intercept() {
                names.push("(Intercept)".to_string());
                continue;
            }
            let mut parts: Vec<String> = vec![String::new()];
            for &(f, power) in &term.factors {
                let factor = &self.factors[f];
                let labels: Vec<String> = match &factor.kind {
                    FactorKind::Numeric { .. } if power == 1 => vec![factor.name.clone()],
                    FactorKind::Numeric { .. } => vec![format!("I({}^{})", factor.name, power)],
                    FactorKind::Categorical { levels, .. } => (0..levels.len() - 1)
                        .map(|c| format!("{}[{}]", factor.name, self.contrast_label(levels, c)))
                        .collect(),
                };
                parts = parts
                    .iter()
                    .flat_map(|p| {
                        labels.iter().map(move |l| if p.is_empty() { l.clone() } else { format!("{p}:{l}") })
                    })
                    .collect();
            }
            names.extend(parts);
        }
        names
    }

    fn resolve<'a>(&self, data: &'a Dataset) -> Result<Vec<FactorValues<'a>>> {
        self.factors
            .iter()
            .map(|factor| {
                let column = data
                    .column(&factor.name)
                    .ok_or_else(|| SvemError::MissingFactor(factor.name.clone()))?;
                match (&factor.kind, &column.data) {
                    (FactorKind::Numeric { .. }, ColumnData::Numeric(v)) => {
                        if v.iter().any(|x| !x.is_finite()) {
                            return Err(SvemError::NonFinite("numeric factor"));
                        }
                        Ok(FactorValues::Numeric(v))
                    }
                    (FactorKind::Categorical { levels, .. }, ColumnData::Categorical { levels: dl, codes }) => {
                        let map: Vec<Option<usize>> =
                            dl.iter().map(|l| levels.iter().position(|s| s == l)).collect();
                        codes
                            .iter()
                            .map(|&c| {
                                map[c].ok_or_else(|| SvemError::UnseenLevel {
                                    factor: factor.name.clone(),
                                    level: dl[c].clone(),
                                })
                            })
                            .collect::<Result<Vec<_>>>()
                            .map(FactorValues::Categorical)
                    }
                    (FactorKind::Numeric { .. }, other) => Err(SvemError::KindMismatch {
                        factor: factor.name.clone(),
                        expected: "numeric",
                        found: other.kind_name(),
                    }),
                    (FactorKind::Categorical { .. }, other) => Err(SvemError::KindMismatch {
                        factor: factor.name.clone(),
                        expected: "categorical",
                        found: other.kind_name(),
                    }),
                }
            })
            .collect()
    }

    /// Checks that the stored term list is what the recorded settings derive.
    pub fn validate(&self) -> Result<()> {
        if self.version != SPEC_VERSION {
            return Err(SvemError::Version {
                expected: SPEC_VERSION,
                found: self.version,
            });
        }
        let derived = derive_terms(
            &self.factors,
            self.factorial_order,
            self.polynomial_order,
            self.include_pc_2way,
        );
        if derived != self.terms {
            return Err(SvemError::Config(
                "expansion spec term list does not match its settings".into(),
            ));
        }
        for f in &self.factors {
            if let FactorKind::Categorical { levels, .. } = &f.kind {
                if levels.len() < 2 {
                    return Err(SvemError::TooFewLevels(f.name.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExpansionSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Applies the recorded recipe to a table of runs or candidate settings.
pub fn expand_rows(spec: &ExpansionSpec, data: &Dataset) -> Result<DesignMatrix> {
    let values = spec.resolve(data)?;
    let n = data.n_rows();
    let p = spec.p_full();
    let mut m = DMatrix::<f64>::zeros(n, p);
    let mut col = 0;
    let mut block: Vec<Vec<f64>> = Vec::new();
    for term in &spec.terms {
        // columns of this term, built as products factor by factor
        block.clear();
        block.push(vec![1.0; n]);
        for &(f, power) in &term.factors {
            match &values[f] {
                FactorValues::Numeric(x) => {
                    for c in block.iter_mut() {
                        for (ci, xi) in c.iter_mut().zip(x.iter()) {
                            *ci *= xi.powi(power as i32);
                        }
                    }
                }
                FactorValues::Categorical(codes) => {
                    let n_levels = match &spec.factors[f].kind {
                        FactorKind::Categorical { levels, .. } => levels.len(),
                        _ => unreachable!(),
                    };
                    let mut next = Vec::with_capacity(block.len() * (n_levels - 1));
                    for c in block.iter() {
                        for k in 0..n_levels - 1 {
                            next.push(
                                c.iter()
                                    .zip(codes)
                                    .map(|(ci, &lvl)| ci * spec.contrast(n_levels, lvl, k))
                                    .collect(),
                            );
                        }
                    }
                    block = next;
                }
            }
        }
        for c in &block {
            m.column_mut(col).copy_from_slice(c);
            col += 1;
        }
    }
    debug_assert_eq!(col, p);
    Ok(DesignMatrix {
        column_names: spec.column_names(),
        values: m,
    })
}
