use serde::{Deserialize, Serialize};

use crate::corpus::{classify_german_suffix, InflectionClass, Language};

/// One test item: the gold row and the model's top prediction (`None` when
/// decoding never emitted EOS).
#[derive(Clone, Debug)]
pub struct Outcome<'a> {
    pub lemma: &'a str,
    pub gold_form: &'a str,
    pub gold_class: InflectionClass,
    pub predicted: Option<&'a str>,
}

impl Outcome<'_> {
    pub fn correct(&self) -> bool {
        self.predicted == Some(self.gold_form)
    }
}

/// Exact-match accuracy in percent, overall and per gold class. A class with
/// no gold items has `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub overall: Option<f64>,
    pub per_class: Vec<(InflectionClass, Option<f64>)>,
}

fn percent(hits: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| 100.0 * hits as f64 / n as f64)
}

pub fn accuracy_by_class(outcomes: &[Outcome], language: Language) -> ClassAccuracy {
    let hits = outcomes.iter().filter(|o| o.correct()).count();
    let per_class = language
        .classes()
        .iter()
        .map(|&c| {
            let subset: Vec<_> = outcomes.iter().filter(|o| o.gold_class == c).collect();
            let acc = percent(subset.iter().filter(|o| o.correct()).count(), subset.len());
            if acc.is_none() {
                log::warn!("no gold items of class {c}; accuracy omitted");
            }
            (c, acc)
        })
        .collect();
    ClassAccuracy {
        overall: percent(hits, outcomes.len()),
        per_class,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: InflectionClass,
    pub precision: f64,
    pub recall: f64,
    /// In percent.
    pub f1: f64,
    /// Number of gold items of this class.
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    /// Classes with neither gold nor predicted items are left out.
    pub per_class: Vec<ClassScore>,
    /// Fraction of items whose predicted class equals the gold class, in percent.
    pub class_accuracy: f64,
    /// Micro-averaged F1 in percent.
    pub micro_f1: f64,
}

impl ClassMetrics {
    pub fn f1(&self, class: InflectionClass) -> Option<f64> {
        self.per_class.iter().find(|s| s.class == class).map(|s| s.f1)
    }
}

/// Per-class precision, recall and F1.
///
/// German forms are classified by suffix, both prediction and gold; a
/// prediction that never finished counts as `Other`. English predictions
/// take the gold class when exactly right and `Other` otherwise.
pub fn class_f1(outcomes: &[Outcome], language: Language) -> ClassMetrics {
    let pairs: Vec<(InflectionClass, InflectionClass)> = outcomes
        .iter()
        .map(|o| match language {
            Language::De => (
                classify_german_suffix(o.lemma, o.gold_form),
                o.predicted
                    .map_or(InflectionClass::Other, |p| classify_german_suffix(o.lemma, p)),
            ),
            Language::En => (
                o.gold_class,
                if o.correct() { o.gold_class } else { InflectionClass::Other },
            ),
        })
        .collect();
    let mut inventory = language.classes().to_vec();
    if !inventory.contains(&InflectionClass::Other) {
        inventory.push(InflectionClass::Other);
    }
    let mut per_class = Vec::new();
    let (mut tp_all, mut fp_all, mut fn_all) = (0usize, 0usize, 0usize);
    for c in inventory {
        let tp = pairs.iter().filter(|&&(g, p)| g == c && p == c).count();
        let fp = pairs.iter().filter(|&&(g, p)| g != c && p == c).count();
        let fne = pairs.iter().filter(|&&(g, p)| g == c && p != c).count();
        tp_all += tp;
        fp_all += fp;
        fn_all += fne;
        if tp + fp + fne == 0 {
            continue;
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        per_class.push(ClassScore {
            class: c,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fne),
            f1: 100.0 * ratio(2 * tp, 2 * tp + fp + fne),
            support: tp + fne,
        });
    }
    let n = pairs.len();
    ClassMetrics {
        per_class,
        class_accuracy: percent(pairs.iter().filter(|(g, p)| g == p).count(), n).unwrap_or(0.0),
        micro_f1: 100.0 * if tp_all == 0 { 0.0 } else { 2.0 * tp_all as f64 / (2 * tp_all + fp_all + fn_all) as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use InflectionClass::*;

    fn o<'a>(lemma: &'a str, gold: &'a str, pred: Option<&'a str>) -> Outcome<'a> {
        Outcome {
            lemma,
            gold_form: gold,
            gold_class: classify_german_suffix(lemma, gold),
            predicted: pred,
        }
    }

    #[test]
    fn hand_built_confusion() {
        // gold:  En  En  E   S   Null
        // pred:  En  E   E   En  Other
        let items = [
            o("Frau", "Frauen", Some("Frauen")),
            o("Tür", "Türen", Some("Türe")),
            o("Tag", "Tage", Some("Tage")),
            o("Auto", "Autos", Some("Autoen")),
            o("Lehrer", "Lehrer", Some("Lehrxyz")),
        ];
        let m = class_f1(&items, Language::De);
        // En: tp 1, fp 1, fn 1 -> P = R = 1/2, F1 = 50.
        let en = m.per_class.iter().find(|s| s.class == En).unwrap();
        assert_eq!((en.precision, en.recall, en.f1, en.support), (0.5, 0.5, 50.0, 2));
        // E: tp 1, fp 1, fn 0 -> P 1/2, R 1, F1 = 2/3.
        assert!((m.f1(E).unwrap() - 200.0 / 3.0).abs() < 1e-12);
        // S, Null: tp 0 -> F1 0. Other: fp only -> F1 0, support 0.
        assert_eq!(m.f1(S), Some(0.0));
        assert_eq!(m.f1(Null), Some(0.0));
        assert_eq!(m.per_class.iter().find(|s| s.class == Other).unwrap().support, 0);
        assert_eq!(m.f1(Er), None);
        assert_eq!(m.class_accuracy, 40.0);
        assert_eq!(m.micro_f1, 40.0);
    }

    #[test]
    fn perfect_predictions() {
        let items = [o("Tag", "Tage", Some("Tage")), o("Kind", "Kinder", Some("Kinder"))];
        let m = class_f1(&items, Language::De);
        assert!(m.per_class.iter().all(|s| s.f1 == 100.0));
        let acc = accuracy_by_class(&items, Language::De);
        assert_eq!(acc.overall, Some(100.0));
    }

    #[test]
    fn english_wrong_prediction_counts_as_other() {
        let items = [
            Outcome { lemma: "walk", gold_form: "walked", gold_class: Regular, predicted: Some("walked") },
            Outcome { lemma: "sing", gold_form: "sang", gold_class: Irregular, predicted: Some("singed") },
            Outcome { lemma: "go", gold_form: "went", gold_class: Irregular, predicted: None },
        ];
        let m = class_f1(&items, Language::En);
        assert_eq!(m.f1(Regular), Some(100.0));
        assert_eq!(m.f1(Irregular), Some(0.0));
        let acc = accuracy_by_class(&items, Language::En);
        assert_eq!(acc.per_class, vec![(Regular, Some(100.0)), (Irregular, Some(0.0))]);
        let empty = accuracy_by_class(&[], Language::En);
        assert_eq!(empty.overall, None);
    }
}
