//! Synthetic corpora shaped like the real ones: English past tenses with a
//! small irregular class, German plurals spread over the suffix classes, and
//! wug files with human-like ratings.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use ndiff::SeededRng;
use wugbench::corpus::{write_dataset, write_wug_file, Context, InflectionClass, InflectionExample, Language, WugCandidate, WugSet};

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "br", "gl", "pl", "sp", "st", "tr"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "i", "i"];
const CODAS: &[&str] = &["b", "d", "g", "k", "l", "m", "n", "p", "t", "nk", "ng", "st", "ft"];

fn pick<'a>(rng: &mut SeededRng, xs: &[&'a str]) -> &'a str {
    xs[rng.below(xs.len())]
}

fn syllable(rng: &mut SeededRng) -> String {
    format!("{}{}{}", pick(rng, ONSETS), pick(rng, VOWELS), pick(rng, CODAS))
}

fn fresh_words(rng: &mut SeededRng, n: usize, taken: &mut BTreeSet<String>, make: impl Fn(&mut SeededRng) -> String) -> Vec<String> {
    let mut out = Vec::new();
    while out.len() < n {
        let w = make(rng);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// `i` → `a` in the last syllable: the one irregular pattern.
fn ablaut(lemma: &str) -> Option<String> {
    let pos = lemma.rfind('i')?;
    let mut s = lemma.to_string();
    s.replace_range(pos..pos + 1, "a");
    Some(s)
}

fn english_regular(lemma: &str) -> String {
    if lemma.ends_with('e') {
        format!("{lemma}d")
    } else {
        format!("{lemma}ed")
    }
}

pub fn english_examples(n: usize, seed: u64) -> Vec<InflectionExample> {
    let mut rng = SeededRng::new(seed);
    let mut taken = BTreeSet::new();
    let words = fresh_words(&mut rng, n, &mut taken, |r| {
        let mut w = syllable(r);
        if r.below(4) == 0 {
            w.push('e');
        }
        w
    });
    let mut irregular_left = n / 10;
    words
        .into_iter()
        .map(|lemma| {
            let irr = irregular_left > 0 && lemma.ends_with("ng") && lemma.contains('i');
            let (form, class) = if irr {
                irregular_left -= 1;
                (ablaut(&lemma).expect("has i"), InflectionClass::Irregular)
            } else {
                (english_regular(&lemma), InflectionClass::Regular)
            };
            InflectionExample {
                lemma,
                form,
                tags: vec!["PST".into()],
                class,
            }
        })
        .collect()
}

fn german_plural(lemma: &str, r: u64) -> (String, InflectionClass) {
    use InflectionClass::*;
    if let Some(stem) = lemma.strip_suffix("um") {
        return (format!("{stem}en"), Other);
    }
    if lemma.ends_with('e') {
        return (format!("{lemma}n"), En);
    }
    if lemma.ends_with("el") || lemma.ends_with("er") {
        return (lemma.to_string(), Null);
    }
    if lemma.ends_with('a') || lemma.ends_with('o') {
        return (format!("{lemma}s"), S);
    }
    match r % 3 {
        0 => (format!("{lemma}e"), E),
        1 => (format!("{lemma}er"), Er),
        _ => (format!("{lemma}en"), En),
    }
}

pub fn german_examples(n: usize, seed: u64) -> Vec<InflectionExample> {
    let mut rng = SeededRng::new(seed);
    let mut taken = BTreeSet::new();
    let endings = ["", "", "e", "el", "er", "a", "o", "um", ""];
    let words = fresh_words(&mut rng, n, &mut taken, |r| {
        let e = pick(r, &endings);
        format!("{}{e}", syllable(r))
    });
    words
        .into_iter()
        .map(|lemma| {
            let r = rng.next_u64();
            let (form, class) = german_plural(&lemma, r);
            InflectionExample {
                lemma,
                form,
                tags: vec!["PL".into(), "NEUT".into()],
                class,
            }
        })
        .collect()
}

/// Splits `1 - slack` of probability mass over `k` forms.
fn masses(rng: &mut SeededRng, k: usize, slack: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| 0.2 + rng.uniform()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| ((1.0 - slack) * x / total * 1000.0).floor() / 1000.0).collect()
}

fn rating(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    (rng.uniform_range(lo, hi) * 100.0).round() / 100.0
}

pub fn english_wugs(lemmas: usize, seed: u64) -> WugSet {
    let mut rng = SeededRng::new(seed);
    let mut taken = BTreeSet::new();
    let words = fresh_words(&mut rng, lemmas, &mut taken, |r| format!("{}ing", pick(r, ONSETS)));
    let mut candidates = Vec::new();
    for lemma in words {
        let m = masses(&mut rng, 2, 0.05);
        for (k, (form, class)) in [
            (english_regular(&lemma), InflectionClass::Regular),
            (ablaut(&lemma).expect("has i"), InflectionClass::Irregular),
        ]
        .into_iter()
        .enumerate()
        {
            candidates.push(WugCandidate {
                lemma: lemma.clone(),
                form,
                class,
                human_rating: rating(&mut rng, 1.0, 7.0),
                human_prod_prob: m[k],
                context: None,
            });
        }
    }
    WugSet {
        language: Language::En,
        rating_scale: (1.0, 7.0),
        tags: vec!["PST".into()],
        candidates,
    }
}

pub fn german_wugs(lemmas: usize, seed: u64) -> WugSet {
    use InflectionClass::*;
    let mut rng = SeededRng::new(seed);
    let mut taken = BTreeSet::new();
    let words = fresh_words(&mut rng, lemmas, &mut taken, syllable);
    let mut candidates = Vec::new();
    for (i, lemma) in words.into_iter().enumerate() {
        let context = if i % 2 == 0 { Context::Rhyme } else { Context::NonRhyme };
        let m = masses(&mut rng, 5, 0.1);
        let forms = [
            (format!("{lemma}en"), En),
            (format!("{lemma}e"), E),
            (lemma.clone(), Null),
            (format!("{lemma}er"), Er),
            (format!("{lemma}s"), S),
        ];
        for (k, (form, class)) in forms.into_iter().enumerate() {
            candidates.push(WugCandidate {
                lemma: lemma.clone(),
                form,
                class,
                human_rating: rating(&mut rng, 1.0, 5.0),
                human_prod_prob: m[k],
                context: Some(context),
            });
        }
    }
    WugSet {
        language: Language::De,
        rating_scale: (1.0, 5.0),
        tags: vec!["PL".into(), "NEUT".into()],
        candidates,
    }
}

/// Writes `data.tsv`, `wugs.tsv` and `config.json` for a small experiment
/// into `dir` and returns the config path. `extra` is merged into the
/// config object.
pub fn write_experiment(dir: &Path, language: Language, examples: usize, extra: serde_json::Value) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let (data, wugs) = match language {
        Language::En => (english_examples(examples, 11), english_wugs(12, 12)),
        Language::De => (german_examples(examples, 21), german_wugs(12, 22)),
    };
    std::fs::write(dir.join("data.tsv"), write_dataset(&data, language)).unwrap();
    std::fs::write(dir.join("wugs.tsv"), write_wug_file(&wugs)).unwrap();
    let mut cfg = serde_json::json!({
        "language": language,
        "data": {"raw": "data.tsv", "split": {"seed": 5, "stratify_irregular": language == Language::En}},
        "wugs": "wugs.tsv",
        "output_dir": "out",
    });
    if let (Some(base), serde_json::Value::Object(add)) = (cfg.as_object_mut(), extra) {
        base.extend(add);
    }
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

/// Every file under `dir`, relative path → bytes, sorted.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
