//! Command-line front end.
//!
//! Every subcommand except `gen-lnp` reads one JSON run configuration.
//! Relative paths inside it resolve against the directory of the
//! configuration file, and all outputs land in `output_dir`. Each output
//! carries a header row `# svem <version> seed=<seed> config=<hash>`; JSON
//! outputs hold the same text under a top-level `"header"` key.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{format_f64, Dataset};
use crate::enet::Family;
use crate::error::{Result, SvemError};
use crate::expand::{build_expansion_spec, expand_rows, ExpansionSettings, ExpansionSpec};
use crate::lnp::{generate_lnp, lnp_expansion_settings, lnp_goals, lnp_mixture, lnp_specs, LnpOptions, RESPONSES};
use crate::optimize::{
    export_candidates_to, sample_candidates, score_candidates, select_from_score_table, Direction, Goal,
    MixtureGroup, ScoreOptions, SelectionRequest, SelectionResult, SpecLimit, TopType, WidthNormalization,
    DEFAULT_EPSILON, DEFAULT_INTERVAL_LEVEL, DEFAULT_N_CANDIDATES,
};
use crate::rng::derive_seed;
use crate::simulate::{run_cell, summarize, write_records_csv, write_summary_csv, Setting, SimCell};
use crate::svem::{fit_svem, predict_svem, Objective, SvemConfig, SvemModel, DEFAULT_ALPHA_GRID, DEFAULT_N_BOOT};
use crate::wmt::{wmt_multi, WmtResult, WmtSettings, DEFAULT_N_EVAL, DEFAULT_N_PERM};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
const CANDIDATE_TAG: u64 = 0x4341_4e44;

/// Convention used by the binomial simulation cells, echoed into their outputs.
pub const BINOMIAL_ETA_CONVENTION: &str =
    "eta standardised to unit sd over the holdout, then scaled by s = sqrt(R2 / (1 - R2))";

#[derive(Debug, Parser)]
#[command(name = "svem", version, about = "Self-validated elastic-net ensembles for designed experiments")]
pub struct Cli {
    /// Worker threads for fitting, permutation and simulation loops.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the expansion from the data and write it with the design matrix.
    Expand(ConfigArgs),
    /// Fit one ensemble per configured response.
    Fit(ConfigArgs),
    /// Predict new rows with every fitted model.
    Predict(PredictArgs),
    /// Whole-model permutation tests for the Gaussian responses.
    Wmt(ConfigArgs),
    /// Sample random candidates and score them against the goals.
    Score(ConfigArgs),
    /// Best row plus diverse medoids for every configured selection.
    Select(ConfigArgs),
    /// Write the selected candidates to one CSV.
    Export(ConfigArgs),
    /// Run a simulation grid.
    Simulate(ConfigArgs),
    /// Generate a synthetic lipid nanoparticle screen.
    GenLnp(GenLnpArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(short, long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    /// Rows to predict.
    #[arg(short, long)]
    pub input: PathBuf,
    /// Defaults to `predictions.csv` in the output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Percentile interval level for the member predictions.
    #[arg(long, default_value_t = DEFAULT_INTERVAL_LEVEL)]
    pub level: f64,
}

#[derive(Debug, Args)]
pub struct GenLnpArgs {
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = crate::lnp::DEFAULT_RUNS)]
    pub n_runs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also write a run configuration for the screen.
    #[arg(long)]
    pub write_config: Option<PathBuf>,
    /// Output directory recorded in the written configuration.
    #[arg(long, default_value = "out")]
    pub output_dir: PathBuf,
}

fn default_seed() -> u64 {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Per-response fitting settings; unset fields take the family defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    #[serde(default = "gaussian")]
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<Objective>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relax: Option<bool>,
    #[serde(default)]
    pub debias: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_boot: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_grid: Option<Vec<f64>>,
    /// Defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn gaussian() -> Family {
    Family::Gaussian
}

impl ModelSettings {
    pub fn new(family: Family) -> Self {
        ModelSettings {
            family,
            objective: None,
            relax: None,
            debias: false,
            n_boot: None,
            alpha_grid: None,
            gamma_grid: None,
            seed: None,
        }
    }

    pub fn to_config(&self, run_seed: u64) -> SvemConfig {
        let mut cfg = SvemConfig::new(self.family).with_seed(self.seed.unwrap_or(run_seed));
        if let Some(o) = self.objective {
            cfg.objective = o;
        }
        if let Some(r) = self.relax {
            cfg.relax = r;
        }
        cfg.debias = self.debias;
        if let Some(b) = self.n_boot {
            cfg.ensemble.n_boot = b;
        }
        if let Some(a) = &self.alpha_grid {
            cfg.ensemble.alpha_grid = a.clone();
        }
        if let Some(g) = &self.gamma_grid {
            cfg.ensemble.gamma_grid = g.clone();
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WmtConfig {
    #[serde(default = "default_n_perm")]
    pub n_perm: usize,
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Replicates per refit; defaults to each model's own setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_boot: Option<usize>,
}

fn default_n_perm() -> usize {
    DEFAULT_N_PERM
}

fn default_n_eval() -> usize {
    DEFAULT_N_EVAL
}

impl Default for WmtConfig {
    fn default() -> Self {
        WmtConfig {
            n_perm: DEFAULT_N_PERM,
            n_eval: DEFAULT_N_EVAL,
            seed: None,
            n_boot: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreConfig {
    #[serde(default = "default_n_candidates")]
    pub n_candidates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_level")]
    pub interval_level: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub width_normalization: WidthNormalization,
}

fn default_n_candidates() -> usize {
    DEFAULT_N_CANDIDATES
}

fn default_level() -> f64 {
    DEFAULT_INTERVAL_LEVEL
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            n_candidates: DEFAULT_N_CANDIDATES,
            seed: None,
            interval_level: DEFAULT_INTERVAL_LEVEL,
            epsilon: DEFAULT_EPSILON,
            width_normalization: WidthNormalization::default(),
        }
    }
}

/// A grid of simulation cells: every combination of `n_total`,
/// `target_r2` and `fit_order`, all sharing the settings and the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub family: Family,
    pub n_total: Vec<usize>,
    pub target_r2: Vec<f64>,
    #[serde(default = "default_orders")]
    pub fit_order: Vec<usize>,
    pub settings: Vec<Setting>,
    #[serde(default = "default_n_reps")]
    pub n_reps: usize,
    #[serde(default = "default_n_boot")]
    pub n_boot: usize,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default = "default_cv_k")]
    pub cv_k: usize,
    #[serde(default = "default_cv_repeats")]
    pub cv_repeats: usize,
}

fn default_orders() -> Vec<usize> {
    vec![2]
}

fn default_n_reps() -> usize {
    20
}

fn default_n_boot() -> usize {
    DEFAULT_N_BOOT
}

fn default_alpha_grid() -> Vec<f64> {
    DEFAULT_ALPHA_GRID.to_vec()
}

fn default_cv_k() -> usize {
    5
}

fn default_cv_repeats() -> usize {
    3
}

impl SimulateConfig {
    pub fn cells(&self, seed: u64) -> Vec<SimCell> {
        let mut out = Vec::new();
        for &n_total in &self.n_total {
            for &r2 in &self.target_r2 {
                for &order in &self.fit_order {
                    let mut cell = SimCell::new(self.family, n_total, r2, order, self.settings.clone());
                    cell.n_reps = self.n_reps;
                    cell.seed = seed;
                    cell.n_boot = self.n_boot;
                    cell.alpha_grid = self.alpha_grid.clone();
                    cell.cv_k = self.cv_k;
                    cell.cv_repeats = self.cv_repeats;
                    out.push(cell);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion: Option<ExpansionSettings>,
    #[serde(default)]
    pub models: IndexMap<String, ModelSettings>,
    #[serde(default)]
    pub mixture: Vec<MixtureGroup>,
    #[serde(default)]
    pub goals: IndexMap<String, Goal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specs: Option<IndexMap<String, SpecLimit>>,
    /// Present: `wmt` tests with these settings and `score` adds `wmt_score`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wmt: Option<WmtConfig>,
    #[serde(default)]
    pub score: ScoreConfig,
    #[serde(default)]
    pub selections: Vec<SelectionRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
}

/// A parsed configuration with its location and content hash.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub hash: String,
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))[..12].to_string()
}

pub fn header_line(seed: u64, hash: &str) -> String {
    format!("# svem {VERSION} seed={seed} config={hash}")
}

fn config_error(path: &Path, e: impl std::fmt::Display) -> SvemError {
    SvemError::Config(format!("{}: {e}", path.display()))
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| config_error(path, e))?;
        let config: RunConfig = serde_json::from_slice(&bytes).map_err(|e| config_error(path, e))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig {
            config,
            base_dir,
            hash: content_hash(&bytes),
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn header(&self) -> String {
        header_line(self.config.seed, &self.hash)
    }

    pub fn output_dir(&self) -> Result<PathBuf> {
        let dir = self.resolve(&self.config.output_dir);
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    pub fn output(&self, name: &str) -> Result<PathBuf> {
        Ok(self.output_dir()?.join(name))
    }

    /// An existing output file from an earlier step.
    fn previous_output(&self, name: &str, step: &str) -> Result<PathBuf> {
        let p = self.resolve(&self.config.output_dir).join(name);
        if !p.is_file() {
            return Err(SvemError::Config(format!("{} not found; run `svem {step}` first", p.display())));
        }
        Ok(p)
    }

    pub fn data_path(&self) -> Result<PathBuf> {
        let p = self
            .config
            .data
            .as_ref()
            .ok_or_else(|| SvemError::Config("`data` is not set".into()))?;
        let p = self.resolve(p);
        if !p.is_file() {
            return Err(SvemError::Config(format!("data file {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn expansion(&self) -> Result<&ExpansionSettings> {
        self.config
            .expansion
            .as_ref()
            .ok_or_else(|| SvemError::Config("`expansion` is not set".into()))
    }

    fn require_models(&self) -> Result<()> {
        if self.config.models.is_empty() {
            return Err(SvemError::Config("`models` is empty".into()));
        }
        Ok(())
    }

    pub fn model_path(&self, response: &str) -> Result<PathBuf> {
        self.output(&format!("model_{response}.json"))
    }

    pub fn load_models(&self) -> Result<IndexMap<String, SvemModel>> {
        self.require_models()?;
        self.config
            .models
            .keys()
            .map(|name| {
                let p = self.previous_output(&format!("model_{name}.json"), "fit")?;
                let model = SvemModel::load(&p)?;
                if &model.response != name {
                    return Err(SvemError::NameMismatch(format!(
                        "{} holds a model for '{}'",
                        p.display(),
                        model.response
                    )));
                }
                Ok((name.clone(), model))
            })
            .collect()
    }
}

/// Writes `header` as the first line, then the body.
pub fn write_with_header(path: &Path, header: &str, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{header}")?;
    body(&mut f)?;
    f.flush()?;
    Ok(())
}

/// Pretty JSON with the header text under `"header"`.
pub fn write_json_with_header<T: Serialize>(path: &Path, header: &str, value: &T) -> Result<()> {
    let v = match serde_json::to_value(value)? {
        serde_json::Value::Object(map) => {
            let mut out = serde_json::Map::new();
            out.insert("header".into(), header.into());
            out.extend(map);
            serde_json::Value::Object(out)
        }
        other => other,
    };
    std::fs::write(path, serde_json::to_string_pretty(&v)? + "\n")?;
    Ok(())
}

fn print_written(path: &Path) {
    println!("wrote {}", path.display());
}

fn load_data(cfg: &LoadedConfig) -> Result<(Dataset, ExpansionSpec)> {
    let data = Dataset::read_csv(cfg.data_path()?)?;
    let spec = build_expansion_spec(&data, cfg.expansion()?)?;
    Ok((data, spec))
}

pub fn cmd_expand(cfg: &LoadedConfig) -> Result<()> {
    let (data, spec) = load_data(cfg)?;
    let dm = expand_rows(&spec, &data)?;
    let header = cfg.header();
    let spec_path = cfg.output("expansion_spec.json")?;
    write_json_with_header(&spec_path, &header, &spec)?;
    let dm_path = cfg.output("design_matrix.csv")?;
    write_with_header(&dm_path, &header, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(&dm.column_names)?;
        for row in dm.values.row_iter() {
            csv.write_record(row.iter().map(|v| format_f64(*v)))?;
        }
        csv.flush()?;
        Ok(())
    })?;
    println!("expansion: {} rows, p_full = {}", dm.n_rows(), dm.p_full());
    print_written(&spec_path);
    print_written(&dm_path);
    Ok(())
}

pub fn cmd_fit(cfg: &LoadedConfig) -> Result<()> {
    cfg.require_models()?;
    let (data, spec) = load_data(cfg)?;
    let header = cfg.header();
    for (name, settings) in &cfg.config.models {
        let sc = settings.to_config(cfg.config.seed);
        let model = fit_svem(&spec, &data, name, &sc)?;
        let path = cfg.model_path(name)?;
        write_json_with_header(&path, &header, &model)?;
        let rep_path = cfg.output(&format!("fit_{name}_replicates.csv"))?;
        write_with_header(&rep_path, &header, |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["replicate", "alpha", "lambda", "gamma", "k_lambda", "criterion", "n_eff_adm", "fallback"])?;
            for (b, s) in model.selections.iter().enumerate() {
                csv.write_record([
                    (b + 1).to_string(),
                    format_f64(s.alpha),
                    format_f64(s.lambda),
                    format_f64(s.gamma),
                    s.k_lambda.to_string(),
                    format_f64(s.criterion),
                    format_f64(s.n_eff_adm),
                    s.fallback.to_string(),
                ])?;
            }
            csv.flush()?;
            Ok(())
        })?;
        let ks: Vec<f64> = model.selections.iter().map(|s| s.k_lambda as f64).collect();
        let fallbacks = model.selections.iter().filter(|s| s.fallback).count();
        println!(
            "{name}: {:?} {} relax={} B={} mean k_lambda={:.2} median k_lambda={} fallbacks={fallbacks}",
            model.family,
            model.objective.label(),
            model.relax,
            model.n_boot,
            crate::stats::mean(&ks),
            model.k_median(),
        );
        print_written(&path);
    }
    Ok(())
}

pub fn cmd_predict(cfg: &LoadedConfig, args: &PredictArgs) -> Result<()> {
    let models = cfg.load_models()?;
    let input = cfg.resolve(&args.input);
    if !input.is_file() {
        return Err(SvemError::Config(format!("input file {} does not exist", input.display())));
    }
    let mut out = Dataset::read_csv(&input)?;
    for (name, model) in &models {
        let pred = predict_svem(model, &out, Some(args.level))?;
        out.push_numeric(format!("{name}_pred"), pred.mean)?;
        out.push_numeric(format!("{name}_lwr"), pred.lower.expect("interval"))?;
        out.push_numeric(format!("{name}_upr"), pred.upper.expect("interval"))?;
    }
    let path = match &args.out {
        Some(p) => p.clone(),
        None => cfg.output("predictions.csv")?,
    };
    write_with_header(&path, &cfg.header(), |w| out.write_csv_to(w))?;
    print_written(&path);
    Ok(())
}

pub fn cmd_wmt(cfg: &LoadedConfig) -> Result<()> {
    cfg.require_models()?;
    let wc = cfg.config.wmt.clone().unwrap_or_default();
    let (data, spec) = load_data(cfg)?;
    let mut specs = IndexMap::new();
    let mut configs = IndexMap::new();
    for (name, settings) in &cfg.config.models {
        if settings.family != Family::Gaussian {
            println!("{name}: skipped (whole-model test is for Gaussian responses)");
            continue;
        }
        let mut sc = settings.to_config(cfg.config.seed);
        if let Some(b) = wc.n_boot {
            sc.ensemble.n_boot = b;
        }
        specs.insert(name.clone(), spec.clone());
        configs.insert(name.clone(), sc);
    }
    let settings = WmtSettings {
        n_perm: wc.n_perm,
        n_eval: wc.n_eval,
        seed: wc.seed.unwrap_or(cfg.config.seed),
    };
    let result = wmt_multi(&specs, &data, &cfg.config.mixture, &configs, &settings)?;
    let header = cfg.header();
    let path = cfg.output("wmt.json")?;
    write_json_with_header(&path, &header, &result)?;
    let dist_path = cfg.output("wmt_distances.csv")?;
    write_with_header(&dist_path, &header, |w| result.write_distances_csv(w))?;
    for r in &result.responses {
        println!("{}: p = {:.4} multiplier = {:.3}", r.response, r.p_value, r.multiplier);
    }
    print_written(&path);
    print_written(&dist_path);
    Ok(())
}

pub fn cmd_score(cfg: &LoadedConfig) -> Result<()> {
    let models = cfg.load_models()?;
    let c = &cfg.config;
    if c.goals.is_empty() {
        return Err(SvemError::Config("`goals` is empty".into()));
    }
    let wmt = match c.wmt {
        Some(_) => Some(WmtResult::load(cfg.previous_output("wmt.json", "wmt")?)?),
        None => None,
    };
    let spec = &models[0].spec;
    let seed = c.score.seed.unwrap_or_else(|| derive_seed(c.seed, CANDIDATE_TAG));
    let candidates = sample_candidates(spec, &c.mixture, c.score.n_candidates, seed)?;
    let opts = ScoreOptions {
        interval_level: c.score.interval_level,
        epsilon: c.score.epsilon,
        width_normalization: c.score.width_normalization,
    };
    let table = score_candidates(&models, &c.goals, &candidates, wmt.as_ref(), c.specs.as_ref(), &opts)?;
    let path = cfg.output("score_table.csv")?;
    write_with_header(&path, &cfg.header(), |w| table.to_dataset().write_csv_to(w))?;
    let best = table.score.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("scored {} candidates, best score {:.4}", table.n_rows(), best);
    if let Some(p) = &table.p_joint_mean {
        let n95 = p.iter().filter(|v| **v >= 0.95).count();
        println!("{n95} candidates with p_joint_mean >= 0.95");
    }
    print_written(&path);
    Ok(())
}

fn load_score_table(cfg: &LoadedConfig) -> Result<Dataset> {
    Dataset::read_csv(cfg.previous_output("score_table.csv", "score")?)
}

/// Factor columns used for Gower distances: the configured main effects.
fn predictor_columns(cfg: &LoadedConfig, table: &Dataset) -> Result<Vec<String>> {
    let names = cfg.expansion()?.main_effects.clone();
    for n in &names {
        if table.column(n).is_none() {
            return Err(SvemError::MissingColumn(n.clone()));
        }
    }
    Ok(names)
}

pub fn cmd_select(cfg: &LoadedConfig) -> Result<()> {
    let c = &cfg.config;
    if c.selections.is_empty() {
        return Err(SvemError::Config("`selections` is empty".into()));
    }
    let table = load_score_table(cfg)?;
    let predictors = predictor_columns(cfg, &table)?;
    let results: Vec<SelectionResult> = c
        .selections
        .iter()
        .map(|req| select_from_score_table(&table, &predictors, req))
        .collect::<Result<_>>()?;
    let header = cfg.header();
    let json_path = cfg.output("selections.json")?;
    write_json_with_header(&json_path, &header, &SelectionFile { selections: results.clone() })?;
    let csv_path = cfg.output("selections.csv")?;
    write_with_header(&csv_path, &header, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["label", "target", "direction", "candidate_type", "row", "target_value"])?;
        for s in &results {
            let target = table.numeric(&s.target)?;
            let rows = std::iter::once((s.best_row, "best")).chain(s.medoid_rows.iter().map(|&r| (r, "medoid")));
            for (row, kind) in rows {
                csv.write_record([
                    s.label.clone(),
                    s.target.clone(),
                    format!("{:?}", s.direction).to_lowercase(),
                    kind.to_string(),
                    row.to_string(),
                    format_f64(target[row]),
                ])?;
            }
        }
        csv.flush()?;
        Ok(())
    })?;
    for s in &results {
        println!(
            "{}: best row {} + {} medoids from the top {} rows by {}",
            s.label,
            s.best_row,
            s.medoid_rows.len(),
            s.subset_size,
            s.target
        );
    }
    print_written(&json_path);
    print_written(&csv_path);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionFile {
    pub selections: Vec<SelectionResult>,
}

pub fn cmd_export(cfg: &LoadedConfig) -> Result<()> {
    let table = load_score_table(cfg)?;
    let text = std::fs::read_to_string(cfg.previous_output("selections.json", "select")?)?;
    let file: SelectionFile = serde_json::from_str(&text)?;
    if let Some(bad) = file
        .selections
        .iter()
        .flat_map(|s| std::iter::once(s.best_row).chain(s.medoid_rows.iter().copied()))
        .find(|r| *r >= table.n_rows())
    {
        return Err(SvemError::Data(format!("selected row {bad} is outside the score table")));
    }
    let path = cfg.output("candidates.csv")?;
    let f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    export_candidates_to(&table, &file.selections, f, Some(&cfg.header()))?;
    print_written(&path);
    Ok(())
}

pub fn cmd_simulate(cfg: &LoadedConfig) -> Result<()> {
    let sim = cfg
        .config
        .simulate
        .as_ref()
        .ok_or_else(|| SvemError::Config("`simulate` is not set".into()))?;
    let cells = sim.cells(cfg.config.seed);
    if cells.is_empty() {
        return Err(SvemError::Config("the simulation grid is empty".into()));
    }
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut redraws = 0;
    for cell in &cells {
        let out = run_cell(cell)?;
        for s in out.skipped {
            eprintln!(
                "n_total={} R2={} order={}: replicate {} skipped: {}",
                cell.n_total, cell.target_r2, cell.fit_order, s.run_id, s.reason
            );
            skipped.push((cell.clone(), s));
        }
        redraws += out.surface_redraws;
        records.extend(out.records);
    }
    let mut header = cfg.header();
    if sim.family == Family::Binomial {
        header.push_str(" binomial_eta=unit_sd_holdout");
    }
    let rec_path = cfg.output("sim_records.csv")?;
    write_with_header(&rec_path, &header, |w| write_records_csv(&records, w))?;
    let sum_path = cfg.output("sim_summary.csv")?;
    write_with_header(&sum_path, &header, |w| write_summary_csv(&summarize(&records), w))?;
    let meta_path = cfg.output("sim_meta.json")?;
    let meta = SimMeta {
        cells: cells.len(),
        records: records.len(),
        skipped: skipped
            .iter()
            .map(|(c, s)| SkippedReplicate {
                n_total: c.n_total,
                target_r2: c.target_r2,
                order: c.fit_order,
                run_id: s.run_id,
                reason: s.reason.clone(),
            })
            .collect(),
        surface_redraws: redraws,
        binomial_eta: (sim.family == Family::Binomial).then(|| BINOMIAL_ETA_CONVENTION.to_string()),
        grid: sim.clone(),
    };
    write_json_with_header(&meta_path, &header, &meta)?;
    println!(
        "{} cells, {} replicate records, {} skipped replicates",
        cells.len(),
        records.len(),
        meta.skipped.len()
    );
    print_written(&rec_path);
    print_written(&sum_path);
    print_written(&meta_path);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedReplicate {
    pub n_total: usize,
    pub target_r2: f64,
    pub order: usize,
    pub run_id: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMeta {
    pub cells: usize,
    pub records: usize,
    pub skipped: Vec<SkippedReplicate>,
    pub surface_redraws: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub binomial_eta: Option<String>,
    pub grid: SimulateConfig,
}

/// Configuration for the synthetic screen: three Gaussian responses,
/// desirability goals, specification limits and three selections.
pub fn lnp_run_config(data: PathBuf, output_dir: PathBuf, seed: u64) -> RunConfig {
    let selection = |target: &str, label: &str| SelectionRequest {
        target: target.into(),
        direction: Direction::Max,
        k: 5,
        top_type: TopType::Frac,
        top: 0.1,
        label: label.into(),
    };
    RunConfig {
        data: Some(data),
        seed,
        output_dir,
        expansion: Some(lnp_expansion_settings()),
        models: RESPONSES
            .iter()
            .map(|r| (r.to_string(), ModelSettings::new(Family::Gaussian)))
            .collect(),
        mixture: vec![lnp_mixture()],
        goals: lnp_goals(),
        specs: Some(lnp_specs()),
        wmt: Some(WmtConfig::default()),
        score: ScoreConfig::default(),
        selections: vec![
            selection("score", "round1_score_optimal"),
            selection("uncertainty_measure", "round1_explore"),
            selection("p_joint_mean", "round1_in_spec"),
        ],
        simulate: None,
    }
}

pub fn cmd_gen_lnp(args: &GenLnpArgs) -> Result<()> {
    let opts = LnpOptions {
        n_runs: args.n_runs,
        seed: args.seed,
    };
    let ds = generate_lnp(&opts)?;
    let header = header_line(args.seed, &content_hash(serde_json::to_string(&opts)?.as_bytes()));
    write_with_header(&args.out, &header, |w| ds.write_csv_to(w))?;
    print_written(&args.out);
    if let Some(cfg_path) = &args.write_config {
        let same_dir = cfg_path.parent().map(|p| p.to_path_buf()).unwrap_or_default()
            == args.out.parent().map(|p| p.to_path_buf()).unwrap_or_default();
        let data = if same_dir {
            PathBuf::from(args.out.file_name().expect("output file name"))
        } else {
            std::path::absolute(&args.out)?
        };
        let rc = lnp_run_config(data, args.output_dir.clone(), args.seed);
        std::fs::write(cfg_path, serde_json::to_string_pretty(&rc)? + "\n")?;
        print_written(cfg_path);
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(SvemError::InvalidArgument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| SvemError::Config(e.to_string()))?;
    }
    let load = |p: &PathBuf| LoadedConfig::load(p);
    match &cli.command {
        Command::Expand(a) => cmd_expand(&load(&a.config)?),
        Command::Fit(a) => cmd_fit(&load(&a.config)?),
        Command::Predict(a) => cmd_predict(&load(&a.config)?, a),
        Command::Wmt(a) => cmd_wmt(&load(&a.config)?),
        Command::Score(a) => cmd_score(&load(&a.config)?),
        Command::Select(a) => cmd_select(&load(&a.config)?),
        Command::Export(a) => cmd_export(&load(&a.config)?),
        Command::Simulate(a) => cmd_simulate(&load(&a.config)?),
        Command::GenLnp(a) => cmd_gen_lnp(a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults() {
        let rc: RunConfig = serde_json::from_str(r#"{"data": "d.csv"}"#).unwrap();
        assert_eq!(rc.seed, 1);
        assert_eq!(rc.output_dir, PathBuf::from("out"));
        assert_eq!(rc.score.n_candidates, DEFAULT_N_CANDIDATES);
        assert!(serde_json::from_str::<RunConfig>(r#"{"dat": "d.csv"}"#).is_err());
    }

    #[test]
    fn model_settings_fill_family_defaults() {
        let m: ModelSettings = serde_json::from_str(r#"{"family": "binomial", "n_boot": 7}"#).unwrap();
        let c = m.to_config(9);
        assert_eq!(c.objective, Objective::WBic);
        assert!(!c.relax);
        assert_eq!(c.ensemble.n_boot, 7);
        assert_eq!(c.ensemble.seed, 9);
    }

    #[test]
    fn lnp_config_roundtrip() {
        let rc = lnp_run_config("lnp.csv".into(), "out".into(), 3);
        let text = serde_json::to_string(&rc).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), rc);
    }

    #[test]
    fn grid_cells() {
        let sim: SimulateConfig = serde_json::from_str(
            r#"{"family": "gaussian", "n_total": [20, 25], "target_r2": [0.5, 0.9],
                "settings": [{"method": "svem", "objective": "wAIC", "relax": true}]}"#,
        )
        .unwrap();
        let cells = sim.cells(4);
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|c| c.seed == 4 && c.fit_order == 2 && c.n_reps == 20));
    }

    #[test]
    fn hash_prefix() {
        assert_eq!(content_hash(b"abc"), "ba7816bf8f01");
    }
}
