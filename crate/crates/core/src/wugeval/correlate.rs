use serde::{Deserialize, Serialize};

use super::stats::{pearson, spearman, Correlation};
use crate::corpus::InflectionClass;
use crate::seq2seq::Architecture;

/// Fewer pairs than this and a class gets no correlation.
pub const MIN_CLASS_SIZE: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCorrelation {
    pub class: InflectionClass,
    pub n: usize,
    /// `None` when the class has fewer than three pairs.
    pub rho: Option<Correlation>,
}

impl ClassCorrelation {
    pub fn value(&self) -> Option<f64> {
        self.rho.and_then(|c| c.value)
    }

    /// Why there is no value, if there is none.
    pub fn missing_reason(&self) -> Option<&'static str> {
        match self.rho {
            None => Some("too few pairs"),
            Some(c) if c.value.is_none() => Some("zero variance"),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub rows: Vec<ClassCorrelation>,
    /// Unweighted mean of the defined per-class values.
    pub macro_avg: Option<f64>,
}

impl CorrelationTable {
    pub fn get(&self, class: InflectionClass) -> Option<&ClassCorrelation> {
        self.rows.iter().find(|r| r.class == class)
    }
}

/// Spearman's ρ between model and human values within each class of
/// `inventory`. `Other` is never correlated.
pub fn spearman_by_class(
    model: &[f64],
    human: &[f64],
    classes: &[InflectionClass],
    inventory: &[InflectionClass],
) -> CorrelationTable {
    assert_eq!(model.len(), human.len(), "model and human vectors differ in length");
    assert_eq!(model.len(), classes.len(), "class labels do not match values");
    let rows: Vec<ClassCorrelation> = inventory
        .iter()
        .filter(|&&c| c != InflectionClass::Other)
        .map(|&class| {
            let idx: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == class).collect();
            let x: Vec<f64> = idx.iter().map(|&i| model[i]).collect();
            let y: Vec<f64> = idx.iter().map(|&i| human[i]).collect();
            let rho = if idx.len() >= MIN_CLASS_SIZE {
                spearman(&x, &y).ok()
            } else {
                log::warn!("class {class} has {} rated pairs; correlation omitted", idx.len());
                None
            };
            ClassCorrelation {
                class,
                n: idx.len(),
                rho,
            }
        })
        .collect();
    let defined: Vec<f64> = rows.iter().filter_map(ClassCorrelation::value).collect();
    CorrelationTable {
        macro_avg: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        rows,
    }
}

/// The class cells crossed with architectures in the accuracy-vs-correlation
/// grid.
pub const GRID_CLASSES: [InflectionClass; 7] = [
    InflectionClass::Regular,
    InflectionClass::Irregular,
    InflectionClass::En,
    InflectionClass::E,
    InflectionClass::Null,
    InflectionClass::Er,
    InflectionClass::S,
];

/// One architecture × class cell: accuracy (English) or F1 (German) and the
/// rating correlation with humans.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub arch: Architecture,
    pub class: InflectionClass,
    pub accuracy: Option<f64>,
    pub rho: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccCorrSummary {
    pub per_model: Vec<(Architecture, Option<Correlation>)>,
    pub per_class: Vec<(InflectionClass, Option<Correlation>)>,
    pub pooled: Option<Correlation>,
    /// Cells of the 5 × 7 grid that are absent or lack a value.
    pub gaps: Vec<(Architecture, InflectionClass)>,
}

fn pearson_of(cells: &[&GridCell]) -> Option<Correlation> {
    let (x, y): (Vec<f64>, Vec<f64>) = cells
        .iter()
        .filter_map(|c| Some((c.accuracy?, c.rho?)))
        .unzip();
    pearson(&x, &y).ok()
}

/// Pearson's r between accuracy and correlation within each model (over
/// class cells), within each class (over models) and pooled.
pub fn accuracy_vs_correlation(cells: &[GridCell]) -> AccCorrSummary {
    let complete = |c: &&GridCell| c.accuracy.is_some() && c.rho.is_some();
    let mut gaps = Vec::new();
    for arch in Architecture::ALL {
        for class in GRID_CLASSES {
            if !cells.iter().any(|c| c.arch == arch && c.class == class && complete(&c)) {
                gaps.push((arch, class));
            }
        }
    }
    let per_model = Architecture::ALL
        .iter()
        .map(|&a| (a, pearson_of(&cells.iter().filter(|c| c.arch == a).collect::<Vec<_>>())))
        .collect();
    let per_class = GRID_CLASSES
        .iter()
        .map(|&k| (k, pearson_of(&cells.iter().filter(|c| c.class == k).collect::<Vec<_>>())))
        .collect();
    AccCorrSummary {
        per_model,
        per_class,
        pooled: pearson_of(&cells.iter().collect::<Vec<_>>()),
        gaps,
    }
}
