//! Inflection datasets, wug candidate files, alphabets and source encoding.

mod alphabet;
mod class;
mod dataset;
mod split;
mod wug;

pub use alphabet::{Alphabet, Symbol, SymbolId, BOS, EOS, PAD};
pub use class::{classify_german_suffix, normalize_umlauts, InflectionClass};
pub use dataset::{parse_dataset, write_dataset, InflectionExample};
pub use split::{split_dataset, DatasetSplit, SplitRatios};
pub use wug::{parse_wug_file, write_wug_file, Context, WugCandidate, WugSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    De,
}

impl Language {
    pub fn code(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::De => "de",
        }
    }

    /// Tags attached to wug lemmas when a wug file does not declare its own.
    pub fn default_wug_tags(self) -> Vec<String> {
        match self {
            Language::En => vec!["PST".into()],
            Language::De => vec!["PL".into(), "NEUT".into()],
        }
    }

    /// Inflection classes that can appear in gold data, in report order.
    pub fn classes(self) -> &'static [InflectionClass] {
        match self {
            Language::En => &[InflectionClass::Regular, InflectionClass::Irregular],
            Language::De => &[
                InflectionClass::En,
                InflectionClass::E,
                InflectionClass::Null,
                InflectionClass::Er,
                InflectionClass::S,
                InflectionClass::Other,
            ],
        }
    }
}

impl std::str::FromStr for Language {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en" => Ok(Language::En),
            "de" => Ok(Language::De),
            other => Err(CorpusError::Header(format!("unknown language `{other}`"))),
        }
    }
}

impl std::fmt::Display for Language {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: {msg}")]
    Validation { line: usize, msg: String },

    #[error("header: {0}")]
    Header(String),

    #[error("unknown symbol `{symbol}` in `{context}`")]
    UnknownSymbol { symbol: String, context: String },

    #[error("split: {0}")]
    Split(String),
}

/// Parses the `key=value` pairs of a `# ...` header line.
fn parse_header(line: &str) -> Result<Vec<(String, String)>, CorpusError> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| CorpusError::Header("first line must start with `#`".into()))?;
    body.split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| CorpusError::Header(format!("expected key=value, found `{kv}`")))
        })
        .collect()
}

/// Non-empty, non-comment lines after the header, with 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}
