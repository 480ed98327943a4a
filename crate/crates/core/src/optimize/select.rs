use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ColumnData, Dataset};
use crate::error::{Result, SvemError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopType {
    /// Keep the best `ceil(top * n)` rows.
    Frac,
    /// Keep the best `top` rows.
    N,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRequest {
    pub target: String,
    pub direction: Direction,
    pub k: usize,
    pub top_type: TopType,
    pub top: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub label: String,
    pub target: String,
    pub direction: Direction,
    /// Row index (in the scored table) of the single best candidate.
    pub best_row: usize,
    /// Row indices of the medoids of the retained subset.
    pub medoid_rows: Vec<usize>,
    pub subset_size: usize,
    /// Sum of Gower distances from each retained row to its nearest medoid.
    pub total_distance: f64,
}

enum GowerColumn<'a> {
    Numeric(&'a [f64], f64),
    Categorical(&'a [usize]),
}

/// Dense Gower distances between `rows` over the named columns. Numeric
/// differences are scaled by the range within `rows`; categorical columns
/// contribute 0 or 1; the result averages over columns.
pub fn gower_matrix(table: &Dataset, columns: &[String], rows: &[usize]) -> Result<Vec<f64>> {
    let cols: Vec<GowerColumn> = columns
        .iter()
        .map(|name| {
            let c = table.column(name).ok_or_else(|| SvemError::MissingColumn(name.clone()))?;
            Ok(match &c.data {
                ColumnData::Numeric(v) => {
                    let (lo, hi) = rows
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(v[r]), b.max(v[r])));
                    GowerColumn::Numeric(v, hi - lo)
                }
                ColumnData::Categorical { codes, .. } => GowerColumn::Categorical(codes),
            })
        })
        .collect::<Result<_>>()?;
    let m = rows.len();
    let nc = cols.len().max(1) as f64;
    let mut d = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..i {
            let (a, b) = (rows[i], rows[j]);
            let mut s = 0.0;
            for c in &cols {
                s += match c {
                    GowerColumn::Numeric(v, range) if *range > 0.0 => (v[a] - v[b]).abs() / range,
                    GowerColumn::Numeric(..) => 0.0,
                    GowerColumn::Categorical(codes) => (codes[a] != codes[b]) as u8 as f64,
                };
            }
            d[i * m + j] = s / nc;
            d[j * m + i] = s / nc;
        }
    }
    Ok(d)
}

fn total_cost(d: &[f64], m: usize, medoids: &[usize]) -> f64 {
    (0..m)
        .map(|i| medoids.iter().map(|&c| d[i * m + c]).fold(f64::INFINITY, f64::min))
        .sum()
}

/// Medoid sets at most this numerous are also searched exhaustively.
pub const EXACT_SEARCH_LIMIT: usize = 50_000;

/// Partitioning around medoids on a dense `m x m` distance matrix: greedy
/// BUILD followed by best-improvement SWAP until no swap lowers the total
/// distance. Ties go to the lowest index. When there are at most
/// [`EXACT_SEARCH_LIMIT`] possible medoid sets, a set with strictly lower
/// total distance found by enumerating them all replaces the SWAP result.
pub fn pam(d: &[f64], m: usize, k: usize) -> Vec<usize> {
    let medoids = build_swap(d, m, k);
    if n_choose_k(m, k) <= EXACT_SEARCH_LIMIT {
        let cost = total_cost(d, m, &medoids);
        let exact = exhaustive(d, m, k);
        if total_cost(d, m, &exact) < cost - 1e-12 * (1.0 + cost) {
            return exact;
        }
    }
    medoids
}

fn n_choose_k(m: usize, k: usize) -> usize {
    let k = k.min(m - k);
    let mut c: usize = 1;
    for i in 0..k {
        c = match c.checked_mul(m - i) {
            Some(v) => v / (i + 1),
            None => return usize::MAX,
        };
    }
    c
}

/// Lowest-cost medoid set in lexicographic order of enumeration.
fn exhaustive(d: &[f64], m: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best = (total_cost(d, m, &idx), idx.clone());
    loop {
        let Some(pos) = (0..k).rev().find(|&i| idx[i] < m - k + i) else {
            return best.1;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
        let c = total_cost(d, m, &idx);
        if c < best.0 {
            best = (c, idx.clone());
        }
    }
}

fn build_swap(d: &[f64], m: usize, k: usize) -> Vec<usize> {
    assert!(k >= 1 && k <= m && d.len() == m * m);
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; m];
    // BUILD
    for _ in 0..k {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for c in 0..m {
            if medoids.contains(&c) {
                continue;
            }
            let gain: f64 = if medoids.is_empty() {
                -(0..m).map(|i| d[i * m + c]).sum::<f64>()
            } else {
                (0..m).map(|i| (nearest[i] - d[i * m + c]).max(0.0)).sum()
            };
            if gain > best.0 {
                best = (gain, c);
            }
        }
        medoids.push(best.1);
        for i in 0..m {
            nearest[i] = nearest[i].min(d[i * m + best.1]);
        }
    }
    // SWAP
    let mut cost = total_cost(d, m, &medoids);
    let tol = 1e-12 * (1.0 + cost.abs());
    loop {
        let mut best = (cost, usize::MAX, usize::MAX);
        for slot in 0..k {
            for h in 0..m {
                if medoids.contains(&h) {
                    continue;
                }
                let old = medoids[slot];
                medoids[slot] = h;
                let c = total_cost(d, m, &medoids);
                medoids[slot] = old;
                if c < best.0 - tol {
                    best = (c, slot, h);
                }
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        medoids[best.1] = best.2;
        cost = best.0;
    }
    medoids
}

/// Ranks rows by `target`, keeps the top subset, and returns the best row
/// plus `k` PAM medoids of the subset under Gower distance on `predictors`.
pub fn select_from_score_table(
    table: &Dataset,
    predictors: &[String],
    request: &SelectionRequest,
) -> Result<SelectionResult> {
    if request.k == 0 {
        return Err(SvemError::InvalidArgument("k must be at least 1".into()));
    }
    let n = table.n_rows();
    if n == 0 {
        return Err(SvemError::EmptyCandidates);
    }
    let target = table.numeric(&request.target)?;
    if target.iter().any(|v| v.is_nan()) {
        return Err(SvemError::NonFinite("selection target"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    match request.direction {
        Direction::Max => order.sort_by(|&a, &b| target[b].total_cmp(&target[a])),
        Direction::Min => order.sort_by(|&a, &b| target[a].total_cmp(&target[b])),
    }
    let size = match request.top_type {
        TopType::Frac => {
            if !(request.top > 0.0 && request.top <= 1.0) {
                return Err(SvemError::InvalidArgument("top fraction must lie in (0, 1]".into()));
            }
            ((request.top * n as f64).ceil() as usize).min(n)
        }
        TopType::N => {
            if !(request.top >= 1.0) {
                return Err(SvemError::InvalidArgument("top count must be at least 1".into()));
            }
            (request.top as usize).min(n)
        }
    };
    if request.k > size {
        return Err(SvemError::InvalidArgument(format!(
            "k = {} exceeds the retained subset of {size} rows",
            request.k
        )));
    }
    let mut subset = order[..size].to_vec();
    subset.sort_unstable();
    let d = gower_matrix(table, predictors, &subset)?;
    let medoids = pam(&d, size, request.k);
    Ok(SelectionResult {
        label: request.label.clone(),
        target: request.target.clone(),
        direction: request.direction,
        best_row: order[0],
        medoid_rows: medoids.iter().map(|&i| subset[i]).collect(),
        subset_size: size,
        total_distance: total_cost(&d, size, &medoids),
    })
}

/// One CSV holding, per selection, the best row then its medoids, with
/// `label` and `candidate_type` ahead of every table column.
pub fn export_candidates(table: &Dataset, selections: &[SelectionResult], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    export_candidates_to(table, selections, file, None)
}

pub fn export_candidates_to<W: std::io::Write>(
    table: &Dataset,
    selections: &[SelectionResult],
    writer: W,
    header_comment: Option<&str>,
) -> Result<()> {
    if selections.is_empty() {
        return Err(SvemError::InvalidArgument("nothing to export".into()));
    }
    if selections.iter().any(|s| s.medoid_rows.is_empty()) {
        return Err(SvemError::InvalidArgument("selection without medoids".into()));
    }
    let mut writer = writer;
    if let Some(c) = header_comment {
        writeln!(writer, "{c}")?;
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["label".to_string(), "candidate_type".to_string()];
    header.extend(table.names().map(str::to_string));
    w.write_record(&header)?;
    for s in selections {
        let rows = std::iter::once((s.best_row, "best")).chain(s.medoid_rows.iter().map(|&r| (r, "medoid")));
        for (row, kind) in rows {
            let mut rec = vec![s.label.clone(), kind.to_string()];
            rec.extend(table.columns().iter().map(|c| c.data.cell(row)));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
