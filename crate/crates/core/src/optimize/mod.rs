//! Candidate generation, desirability scoring and diverse shortlists.
//!
//! Random feasible settings are scored with every response model, combined
//! into a weighted geometric-mean desirability, and annotated with an
//! interval-width uncertainty measure and optional specification
//! probabilities. Shortlists keep the best rows by any numeric column and
//! spread picks across the retained region with Gower-distance medoids.

mod sample;
mod score;
mod select;

pub use sample::{sample_candidates, MixtureGroup};
pub use score::{
    desirability, estimate_spec_probs, geometric_score, score_candidates, Goal, GoalKind, ResponseScores,
    ScoreOptions, ScoreTable, SpecLimit, WidthNormalization, ANCHOR_QUANTILES, DEFAULT_EPSILON,
    DEFAULT_INTERVAL_LEVEL,
};
pub use select::{
    export_candidates, export_candidates_to, gower_matrix, pam, select_from_score_table, Direction,
    SelectionRequest, SelectionResult, TopType,
};

pub const DEFAULT_N_CANDIDATES: usize = 25_000;
