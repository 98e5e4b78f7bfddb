use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{data_lines, parse_header, CorpusError, InflectionClass, Language};

/// Phonological context of a German wug: rhyme (resembles real words) or
/// non-rhyme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Context {
    #[serde(rename = "R")]
    Rhyme,
    #[serde(rename = "NR")]
    NonRhyme,
}

impl Context {
    pub fn label(self) -> &'static str {
        match self {
            Context::Rhyme => "R",
            Context::NonRhyme => "NR",
        }
    }

    fn parse(s: &str) -> Option<Option<Self>> {
        match s {
            "R" | "rhyme" => Some(Some(Context::Rhyme)),
            "NR" | "non-rhyme" | "nonrhyme" => Some(Some(Context::NonRhyme)),
            "" | "-" => Some(None),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WugCandidate {
    pub lemma: String,
    pub form: String,
    pub class: InflectionClass,
    pub human_rating: f64,
    pub human_prod_prob: f64,
    pub context: Option<Context>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WugSet {
    pub language: Language,
    pub rating_scale: (f64, f64),
    /// Tags prepended to every wug lemma when encoding.
    pub tags: Vec<String>,
    pub candidates: Vec<WugCandidate>,
}

impl WugSet {
    /// Distinct lemmas in first-appearance order.
    pub fn lemmas(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for c in &self.candidates {
            if !seen.contains(&c.lemma.as_str()) {
                seen.push(c.lemma.as_str());
            }
        }
        seen
    }

    pub fn context_of(&self, lemma: &str) -> Option<Context> {
        self.candidates
            .iter()
            .find(|c| c.lemma == lemma)
            .and_then(|c| c.context)
    }
}

/// Parses a `wugs.tsv` stream.
///
/// Header: `# lang=<en|de> rating_scale=<lo>,<hi> [tags=PL;NEUT]`. Rows:
/// lemma, form, class, rating, prod_prob and an optional context (`R`/`NR`).
pub fn parse_wug_file(text: &str) -> Result<WugSet, CorpusError> {
    let header = text
        .lines()
        .next()
        .ok_or_else(|| CorpusError::Header("empty wug file".into()))?;
    let (mut language, mut scale, mut tags) = (None, None, None);
    for (k, v) in parse_header(header)? {
        match k.as_str() {
            "lang" => language = Some(v.parse::<Language>()?),
            "rating_scale" => {
                let (lo, hi) = v
                    .split_once(',')
                    .and_then(|(a, b)| Some((a.parse::<f64>().ok()?, b.parse::<f64>().ok()?)))
                    .ok_or_else(|| CorpusError::Header(format!("bad rating_scale `{v}`")))?;
                if !(lo < hi) {
                    return Err(CorpusError::Header(format!("empty rating_scale `{v}`")));
                }
                scale = Some((lo, hi));
            }
            "tags" => tags = Some(v.split(';').filter(|t| !t.is_empty()).map(str::to_string).collect()),
            _ => {}
        }
    }
    let language = language.ok_or_else(|| CorpusError::Header("missing lang=".into()))?;
    let (lo, hi) = scale.ok_or_else(|| CorpusError::Header("missing rating_scale=".into()))?;
    let tags = tags.unwrap_or_else(|| language.default_wug_tags());

    let mut candidates = Vec::new();
    let mut mass: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (line, row) in data_lines(text) {
        let cols: Vec<&str> = row.split('\t').map(str::trim).collect();
        if !(5..=6).contains(&cols.len()) {
            return Err(CorpusError::Parse {
                line,
                msg: format!("expected 5 or 6 tab-separated columns, found {}", cols.len()),
            });
        }
        let invalid = |msg: String| CorpusError::Validation { line, msg };
        if cols[0].is_empty() || cols[1].is_empty() {
            return Err(invalid("empty lemma or form".into()));
        }
        let class = InflectionClass::parse(cols[2]).ok_or_else(|| invalid(format!("unknown class `{}`", cols[2])))?;
        if class.is_german() != (language == Language::De) {
            return Err(invalid(format!("class `{class}` does not belong to lang={language}")));
        }
        let num = |s: &str, what: &str| -> Result<f64, CorpusError> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CorpusError::Parse {
                    line,
                    msg: format!("{what} `{s}` is not a number"),
                })
        };
        let rating = num(cols[3], "rating")?;
        let prob = num(cols[4], "prod_prob")?;
        if !(lo..=hi).contains(&rating) {
            return Err(invalid(format!("rating {rating} outside scale [{lo}, {hi}]")));
        }
        if !(0.0..=1.0).contains(&prob) {
            return Err(invalid(format!("production probability {prob} outside [0, 1]")));
        }
        let context = match cols.get(5) {
            Some(s) => Context::parse(s).ok_or_else(|| invalid(format!("unknown context `{s}`")))?,
            None => None,
        };
        let entry = mass.entry(cols[0].to_string()).or_insert((0.0, line));
        entry.0 += prob;
        candidates.push(WugCandidate {
            lemma: cols[0].to_string(),
            form: cols[1].to_string(),
            class,
            human_rating: rating,
            human_prod_prob: prob,
            context,
        });
    }
    for (lemma, (total, line)) in mass {
        if total > 1.0 + 1e-9 {
            return Err(CorpusError::Validation {
                line,
                msg: format!("production probabilities for `{lemma}` sum to {total} > 1"),
            });
        }
    }
    Ok(WugSet {
        language,
        rating_scale: (lo, hi),
        tags,
        candidates,
    })
}

/// Canonical `wugs.tsv` rendering.
pub fn write_wug_file(set: &WugSet) -> String {
    let mut s = format!(
        "# lang={} rating_scale={},{} tags={}\n",
        set.language,
        set.rating_scale.0,
        set.rating_scale.1,
        set.tags.join(";")
    );
    for c in &set.candidates {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            c.lemma,
            c.form,
            c.class.label(),
            c.human_rating,
            c.human_prod_prob,
            c.context.map_or("-", Context::label)
        ));
    }
    s
}
