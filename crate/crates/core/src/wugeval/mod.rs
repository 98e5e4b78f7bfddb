//! Evaluation against gold data and human wug judgments: exact-match
//! accuracy, per-class F1, ensemble production probabilities, model ratings
//! and their rank correlation with human ratings.

mod classes;
mod correlate;
pub mod reference;
mod stats;
mod wugs;

pub use classes::{accuracy_by_class, class_f1, ClassAccuracy, ClassMetrics, ClassScore, Outcome};
pub use correlate::{accuracy_vs_correlation, spearman_by_class, AccCorrSummary, ClassCorrelation, CorrelationTable, GridCell};
pub use stats::{average_ranks, pearson, spearman, summarize, Correlation, Summary};
pub use wugs::{
    aggregate_ratings, classify_production, production_probabilities, production_summary, score_candidates,
    CandidateRating, LemmaProductions, ProductionCell, UNFINISHED,
};

use thiserror::Error;

use crate::seq2seq::ModelError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {min} pairs, got {n}")]
    TooFew { n: usize, min: usize },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("scoring `{lemma}` -> `{form}`: {source}")]
    Candidate {
        lemma: String,
        form: String,
        #[source]
        source: ModelError,
    },
}
