use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{classify_german_suffix, Context, InflectionClass, Language, WugSet};
use crate::decode::{force_score, ScoredForm};
use crate::seq2seq::Model;

/// Stands in for a decode that never emitted EOS.
pub const UNFINISHED: &str = "<unfinished>";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaProductions {
    pub lemma: String,
    /// `(form, count, probability)`, sorted by form.
    pub forms: Vec<(String, usize, f64)>,
    pub draws: usize,
}

impl LemmaProductions {
    pub fn probability(&self, form: &str) -> f64 {
        self.forms
            .iter()
            .find(|(f, _, _)| f == form)
            .map_or(0.0, |&(_, _, p)| p)
    }
}

/// Ensemble production probabilities.
///
/// `outputs[m][i]` holds the forms model `m` produced for `lemmas[i]`: one
/// beam-top form per model for the default aggregation, or `s` samples per
/// model for the sampling variant. Each lemma's counts are divided by the
/// total number of draws (n, or n·s).
pub fn production_probabilities(
    lemmas: &[String],
    outputs: &[Vec<Vec<String>>],
) -> Result<Vec<LemmaProductions>, EvalError> {
    if outputs.is_empty() {
        return Err(EvalError::EmptyEnsemble);
    }
    for per_model in outputs {
        if per_model.len() != lemmas.len() {
            return Err(EvalError::LengthMismatch {
                left: lemmas.len(),
                right: per_model.len(),
            });
        }
    }
    Ok(lemmas
        .iter()
        .enumerate()
        .map(|(i, lemma)| {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            let mut draws = 0;
            for per_model in outputs {
                for form in &per_model[i] {
                    *counts.entry(form).or_default() += 1;
                    draws += 1;
                }
            }
            LemmaProductions {
                lemma: lemma.clone(),
                forms: counts
                    .into_iter()
                    .map(|(f, c)| (f.to_string(), c, c as f64 / draws as f64))
                    .collect(),
                draws,
            }
        })
        .collect())
}

/// Forced-decoding scores of every candidate in `wugs` under one model, in
/// file order.
pub fn score_candidates(model: &Model, wugs: &WugSet) -> Result<Vec<ScoredForm>, EvalError> {
    wugs.candidates
        .iter()
        .map(|c| {
            let wrap = |source| EvalError::Candidate {
                lemma: c.lemma.clone(),
                form: c.form.clone(),
                source,
            };
            let (src, tgt) = model.encode_pair(&c.lemma, &wugs.tags, &c.form).map_err(wrap)?;
            force_score(model, &src, &tgt).map_err(wrap)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRating {
    pub lemma: String,
    pub form: String,
    pub class: InflectionClass,
    pub context: Option<Context>,
    pub human_rating: f64,
    pub human_prod_prob: f64,
    /// Mean over the ensemble of the length-normalized probability.
    pub rating: f64,
    pub per_seed: Vec<f64>,
    pub raw_per_seed: Vec<f64>,
}

/// Model rating of each candidate: the ensemble mean of its normalized
/// probability. `per_model[m][j]` scores candidate `j` under model `m`.
pub fn aggregate_ratings(wugs: &WugSet, per_model: &[Vec<ScoredForm>]) -> Result<Vec<CandidateRating>, EvalError> {
    if per_model.is_empty() {
        return Err(EvalError::EmptyEnsemble);
    }
    for scores in per_model {
        if scores.len() != wugs.candidates.len() {
            return Err(EvalError::LengthMismatch {
                left: wugs.candidates.len(),
                right: scores.len(),
            });
        }
    }
    let n = per_model.len() as f64;
    Ok(wugs
        .candidates
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let per_seed: Vec<f64> = per_model.iter().map(|s| s[j].normalized_prob).collect();
            CandidateRating {
                lemma: c.lemma.clone(),
                form: c.form.clone(),
                class: c.class,
                context: c.context,
                human_rating: c.human_rating,
                human_prod_prob: c.human_prod_prob,
                rating: per_seed.iter().sum::<f64>() / n,
                raw_per_seed: per_model.iter().map(|s| s[j].raw_logprob).collect(),
                per_seed,
            }
        })
        .collect())
}

/// Class of a produced form: the class of the matching candidate when the
/// form is listed, otherwise the suffix class (German) or `Other` (English).
pub fn classify_production(wugs: &WugSet, lemma: &str, form: &str) -> InflectionClass {
    if let Some(c) = wugs.candidates.iter().find(|c| c.lemma == lemma && c.form == form) {
        return c.class;
    }
    match wugs.language {
        Language::De if form != UNFINISHED => classify_german_suffix(lemma, form),
        _ => InflectionClass::Other,
    }
}

/// One bar of the production plot: how often the ensemble's productions fall
/// into `class` within `context`, and the mean model rating of that class's
/// candidates there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductionCell {
    pub class: InflectionClass,
    pub context: Option<Context>,
    pub count: usize,
    /// Share of all productions in this context, in [0, 1].
    pub probability: f64,
    pub mean_rating: Option<f64>,
}

pub fn production_summary(
    wugs: &WugSet,
    productions: &[LemmaProductions],
    ratings: &[CandidateRating],
) -> Vec<ProductionCell> {
    let mut contexts: Vec<Option<Context>> = wugs.candidates.iter().map(|c| c.context).collect();
    contexts.sort();
    contexts.dedup();
    let mut classes = wugs.language.classes().to_vec();
    if !classes.contains(&InflectionClass::Other) {
        classes.push(InflectionClass::Other);
    }
    let mut cells = Vec::new();
    for &ctx in &contexts {
        let in_ctx: Vec<&LemmaProductions> = productions
            .iter()
            .filter(|p| wugs.context_of(&p.lemma) == ctx)
            .collect();
        let total: usize = in_ctx.iter().map(|p| p.draws).sum();
        for &class in &classes {
            let count: usize = in_ctx
                .iter()
                .flat_map(|p| p.forms.iter().map(move |(f, c, _)| (p.lemma.as_str(), f, c)))
                .filter(|(lemma, f, _)| classify_production(wugs, lemma, f) == class)
                .map(|(_, _, c)| c)
                .sum();
            let rated: Vec<f64> = ratings
                .iter()
                .filter(|r| r.class == class && r.context == ctx)
                .map(|r| r.rating)
                .collect();
            cells.push(ProductionCell {
                class,
                context: ctx,
                count,
                probability: if total == 0 { 0.0 } else { count as f64 / total as f64 },
                mean_rating: (!rated.is_empty()).then(|| rated.iter().sum::<f64>() / rated.len() as f64),
            });
        }
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_wug_file;

    fn tops(forms: &[&str]) -> Vec<Vec<Vec<String>>> {
        forms.iter().map(|f| vec![vec![f.to_string()]]).collect()
    }

    #[test]
    fn seven_three_split() {
        let mut forms = vec!["rifed"; 7];
        forms.extend(["rofe"; 3]);
        let p = production_probabilities(&["rife".into()], &tops(&forms)).unwrap();
        assert_eq!(p[0].probability("rifed"), 0.7);
        assert_eq!(p[0].probability("rofe"), 0.3);
        let all = production_probabilities(&["rife".into()], &tops(&["rifed"; 10])).unwrap();
        assert_eq!(all[0].probability("rifed"), 1.0);
    }

    #[test]
    fn sampling_normalizes_by_all_draws() {
        let outputs = vec![
            vec![vec!["a".to_string(), "b".into(), "b".into(), "b".into()]],
            vec![vec!["a".to_string(), "a".into(), "c".into(), "b".into()]],
        ];
        let p = production_probabilities(&["x".into()], &outputs).unwrap();
        assert_eq!(p[0].draws, 8);
        assert_eq!(p[0].probability("b"), 0.5);
        let total: f64 = p[0].forms.iter().map(|f| f.2).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    fn wugs() -> WugSet {
        parse_wug_file(
            "# lang=de rating_scale=1,5\n\
             Bral\tBrale\t/-e/\t3\t0.5\tR\n\
             Bral\tBrals\t/-s/\t2\t0.5\tR\n\
             Pleik\tPleiken\t/-(e)n/\t4\t1\tNR\n",
        )
        .unwrap()
    }

    fn scored(p: f64) -> ScoredForm {
        ScoredForm {
            form: vec![],
            raw_logprob: p.ln(),
            normalized_prob: p,
        }
    }

    #[test]
    fn rating_is_ensemble_mean() {
        let w = wugs();
        let per_model = vec![
            vec![scored(0.2), scored(0.4), scored(0.9)],
            vec![scored(0.6), scored(0.1), scored(0.5)],
        ];
        let r = aggregate_ratings(&w, &per_model).unwrap();
        assert!((r[0].rating - 0.4).abs() < 1e-15);
        assert_eq!(r[2].per_seed, vec![0.9, 0.5]);
        let mut reversed = per_model.clone();
        reversed.reverse();
        let r2 = aggregate_ratings(&w, &reversed).unwrap();
        for (a, b) in r.iter().zip(&r2) {
            assert!((a.rating - b.rating).abs() < 1e-15);
        }
        assert!(aggregate_ratings(&w, &[]).is_err());
    }

    #[test]
    fn production_cells_split_by_context() {
        let w = wugs();
        let outputs = vec![
            vec![vec!["Brale".to_string()], vec!["Pleiken".to_string()]],
            vec![vec!["Bralen".to_string()], vec![UNFINISHED.to_string()]],
        ];
        let prods = production_probabilities(&["Bral".into(), "Pleik".into()], &outputs).unwrap();
        let ratings = aggregate_ratings(&w, &[vec![scored(0.2), scored(0.4), scored(0.9)]]).unwrap();
        let cells = production_summary(&w, &prods, &ratings);
        let get = |class, ctx| cells.iter().find(|c| c.class == class && c.context == Some(ctx)).unwrap();
        assert_eq!(get(InflectionClass::E, Context::Rhyme).count, 1);
        assert_eq!(get(InflectionClass::En, Context::Rhyme).count, 1);
        assert_eq!(get(InflectionClass::En, Context::NonRhyme).probability, 0.5);
        assert_eq!(get(InflectionClass::Other, Context::NonRhyme).count, 1);
        assert_eq!(get(InflectionClass::S, Context::Rhyme).mean_rating, Some(0.4));
        assert_eq!(get(InflectionClass::S, Context::NonRhyme).mean_rating, None);
    }
}
