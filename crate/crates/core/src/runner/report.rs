use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::experiment::{ArchResults, ExperimentResults};
use super::RunError;
use crate::corpus::{InflectionClass, Language};
use crate::seq2seq::Architecture;
use crate::wugeval::reference;
use crate::wugeval::{accuracy_vs_correlation, summarize, AccCorrSummary, CorrelationTable, GridCell};

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

struct Table {
    path: PathBuf,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(dir: &Path, name: &str, header: &[&str]) -> Result<Self, RunError> {
        let mut t = Self {
            path: dir.join(name),
            writer: csv::Writer::from_writer(Vec::new()),
        };
        t.row(header)?;
        Ok(t)
    }

    fn row<S: AsRef<[u8]>>(&mut self, fields: &[S]) -> Result<(), RunError> {
        self.writer
            .write_record(fields)
            .map_err(|e| RunError::io(&self.path, std::io::Error::other(e)))
    }

    fn finish(self) -> Result<PathBuf, RunError> {
        let bytes = self
            .writer
            .into_inner()
            .map_err(|e| RunError::io(&self.path, std::io::Error::other(e.to_string())))?;
        std::fs::write(&self.path, bytes).map_err(|e| RunError::io(&self.path, e))?;
        Ok(self.path)
    }
}

/// Per-seed rows, then `mean` and `stdev` rows. Failed seeds get `NA`.
fn seed_rows(
    t: &mut Table,
    prefix: &[&str],
    a: &ArchResults,
    values: &[(u64, Option<f64>)],
) -> Result<(), RunError> {
    let mut seeds: Vec<(u64, Option<f64>)> = values.to_vec();
    seeds.extend(a.failed.iter().map(|(s, _)| (*s, None)));
    seeds.sort_by_key(|p| p.0);
    for (s, v) in &seeds {
        let mut r: Vec<String> = prefix.iter().map(|x| x.to_string()).collect();
        r.extend([s.to_string(), num(*v)]);
        t.row(&r)?;
    }
    let defined: Vec<f64> = values.iter().filter_map(|p| p.1).collect();
    let s = summarize(&defined);
    for (label, v) in [("mean", s.map(|s| s.mean)), ("stdev", s.and_then(|s| s.stdev))] {
        let mut r: Vec<String> = prefix.iter().map(|x| x.to_string()).collect();
        r.extend([label.to_string(), num(v)]);
        t.row(&r)?;
    }
    Ok(())
}

fn class_labels(lang: Language) -> Vec<&'static str> {
    lang.classes().iter().map(|c| c.label()).collect()
}

fn write_accuracy(res: &ExperimentResults, dir: &Path) -> Result<PathBuf, RunError> {
    let lang = res.config.language;
    let mut t = Table::new(dir, "accuracy.csv", &["architecture", "split", "class", "seed", "value"])?;
    for a in &res.archs {
        let id = a.arch.id();
        let dev: Vec<_> = a.records.iter().map(|(s, r)| (*s, Some(r.dev_accuracy))).collect();
        seed_rows(&mut t, &[id, "dev", "all"], a, &dev)?;
        let all: Vec<_> = a.test_accuracy.iter().map(|(s, c)| (*s, c.overall)).collect();
        seed_rows(&mut t, &[id, "test", "all"], a, &all)?;
        for (k, label) in class_labels(lang).into_iter().enumerate() {
            let v: Vec<_> = a.test_accuracy.iter().map(|(s, c)| (*s, c.per_class[k].1)).collect();
            seed_rows(&mut t, &[id, "test", label], a, &v)?;
        }
    }
    t.finish()
}

fn write_f1(res: &ExperimentResults, dir: &Path) -> Result<PathBuf, RunError> {
    let lang = res.config.language;
    let mut t = Table::new(dir, "f1.csv", &["architecture", "split", "class", "seed", "value"])?;
    for a in &res.archs {
        let id = a.arch.id();
        for &class in lang.classes() {
            let v: Vec<_> = a.f1.iter().map(|(s, m)| (*s, m.f1(class))).collect();
            seed_rows(&mut t, &[id, "test", class.label()], a, &v)?;
        }
        let micro: Vec<_> = a.f1.iter().map(|(s, m)| (*s, Some(m.micro_f1))).collect();
        seed_rows(&mut t, &[id, "test", "micro"], a, &micro)?;
    }
    t.finish()
}

fn write_curves(res: &ExperimentResults, dir: &Path) -> Result<PathBuf, RunError> {
    let mut t = Table::new(
        dir,
        "training_curves.csv",
        &["architecture", "seed", "epoch", "train_loss", "dev_accuracy", "selected"],
    )?;
    for a in &res.archs {
        for (seed, r) in &a.records {
            for e in &r.curve {
                t.row(&[
                    a.arch.id().to_string(),
                    seed.to_string(),
                    e.epoch.to_string(),
                    e.train_loss.to_string(),
                    e.dev_accuracy.to_string(),
                    (e.epoch == r.selected_epoch).to_string(),
                ])?;
            }
        }
    }
    t.finish()
}

fn write_ratings(res: &ExperimentResults, dir: &Path) -> Result<PathBuf, RunError> {
    let mut t = Table::new(
        dir,
        "ratings.csv",
        &[
            "architecture",
            "lemma",
            "form",
            "class",
            "context",
            "seed",
            "normalized_prob",
            "raw_logprob",
            "human_rating",
            "human_prod_prob",
        ],
    )?;
    for a in &res.archs {
        let Some(ratings) = &a.ratings else { continue };
        for r in ratings {
            let ctx = r.context.map_or("-", |c| c.label());
            let mut rows: Vec<(String, f64, f64)> = a
                .seeds
                .iter()
                .zip(r.per_seed.iter().zip(&r.raw_per_seed))
                .map(|(s, (p, raw))| (s.to_string(), *p, *raw))
                .collect();
            let raw_mean = r.raw_per_seed.iter().sum::<f64>() / r.raw_per_seed.len() as f64;
            rows.push(("mean".into(), r.rating, raw_mean));
            for (seed, p, raw) in rows {
                t.row(&[
                    a.arch.id(),
                    &r.lemma,
                    &r.form,
                    r.class.label(),
                    ctx,
                    &seed,
                    &p.to_string(),
                    &raw.to_string(),
                    &r.human_rating.to_string(),
                    &r.human_prod_prob.to_string(),
                ])?;
            }
        }
    }
    t.finish()
}

fn corr_rows(t: &mut Table, arch: Architecture, measure: &str, seed: &str, table: &CorrelationTable) -> Result<(), RunError> {
    for row in &table.rows {
        t.row(&[
            arch.id(),
            measure,
            row.class.label(),
            seed,
            &row.n.to_string(),
            &num(row.value()),
            &num(row.rho.and_then(|c| c.p_value)),
        ])?;
    }
    t.row(&[arch.id(), measure, "macro", seed, "NA", &num(table.macro_avg), "NA"])
}

fn write_correlations(res: &ExperimentResults, dir: &Path) -> Result<PathBuf, RunError> {
    let mut t = Table::new(
        dir,
        "correlations.csv",
        &["architecture", "measure", "class", "seed", "n", "rho", "p_value"],
    )?;
    for a in &res.archs {
        if let Some(c) = &a.rating_corr {
            corr_rows(&mut t, a.arch, "rating", "mean", c)?;
        }
        for (s, c) in &a.rating_corr_per_seed {
            corr_rows(&mut t, a.arch, "rating", &s.to_string(), c)?;
        }
        if let Some(c) = &a.production_corr {
            corr_rows(&mut t, a.arch, "production", "ensemble", c)?;
        }
    }
    t.finish()
}

/// Written in place of a zero-length production, which a CSV cell cannot
/// tell apart from a missing value.
const EMPTY_FORM: &str = "<empty>";

fn write_productions(res: &ExperimentResults, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let mut cells = Table::new(
        dir,
        "productions.csv",
        &["architecture", "context", "class", "count", "probability", "mean_rating"],
    )?;
    let mut forms = Table::new(
        dir,
        "lemma_productions.csv",
        &["architecture", "lemma", "form", "count", "probability"],
    )?;
    for a in &res.archs {
        for c in a.production_cells.iter().flatten() {
            cells.row(&[
                a.arch.id(),
                c.context.map_or("-", |x| x.label()),
                c.class.label(),
                &c.count.to_string(),
                &c.probability.to_string(),
                &num(c.mean_rating),
            ])?;
        }
        for p in a.productions.iter().flatten() {
            for (form, count, prob) in &p.forms {
                let form = if form.is_empty() { EMPTY_FORM } else { form };
                forms.row(&[a.arch.id(), &p.lemma, form, &count.to_string(), &prob.to_string()])?;
            }
        }
    }
    Ok(vec![cells.finish()?, forms.finish()?])
}

/// Accuracy (English) or F1 (German) per class, averaged over seeds, paired
/// with the seed-averaged rating correlation.
pub fn grid_cells(res: &ExperimentResults) -> Vec<GridCell> {
    let lang = res.config.language;
    let mut cells = Vec::new();
    for a in &res.archs {
        for (k, &class) in lang.classes().iter().enumerate() {
            if class == InflectionClass::Other {
                continue;
            }
            let scores: Vec<f64> = match lang {
                Language::En => a.test_accuracy.iter().filter_map(|(_, c)| c.per_class[k].1).collect(),
                Language::De => a.f1.iter().filter_map(|(_, m)| m.f1(class)).collect(),
            };
            cells.push(GridCell {
                arch: a.arch,
                class,
                accuracy: summarize(&scores).map(|s| s.mean),
                rho: a.rating_corr.as_ref().and_then(|t| t.get(class)).and_then(|r| r.value()),
            });
        }
    }
    cells
}

fn write_acc_corr(summary: &AccCorrSummary, cells: &[GridCell], dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let mut t = Table::new(dir, "acc_vs_corr.csv", &["scope", "key", "n", "r", "p_value", "reference_r"])?;
    let corr = |c: &Option<crate::wugeval::Correlation>| {
        (
            c.map_or("0".to_string(), |c| c.n.to_string()),
            num(c.and_then(|c| c.value)),
            num(c.and_then(|c| c.p_value)),
        )
    };
    for (arch, c) in &summary.per_model {
        let (n, r, p) = corr(c);
        t.row(&["model", arch.id(), &n, &r, &p, &reference::ACC_CORR_PER_MODEL[ref_model_index(*arch)].to_string()])?;
    }
    for (i, (class, c)) in summary.per_class.iter().enumerate() {
        let (n, r, p) = corr(c);
        t.row(&["class", class.label(), &n, &r, &p, &reference::ACC_CORR_PER_CLASS[i].to_string()])?;
    }
    let (n, r, p) = corr(&summary.pooled);
    t.row(&["pooled", "all", &n, &r, &p, &reference::ACC_CORR_POOLED.to_string()])?;
    let out = t.finish()?;
    let mut g = Table::new(dir, "grid.csv", &["architecture", "class", "score", "rho"])?;
    for c in cells {
        g.row(&[c.arch.id(), c.class.label(), &num(c.accuracy), &num(c.rho)])?;
    }
    Ok(vec![out, g.finish()?])
}

/// Reference tables list models as BiLSTMAttn, BiLSTMNoAttn, UniLSTMAttn,
/// UniLSTMNoAttn, Transformer.
fn ref_model_index(arch: Architecture) -> usize {
    match arch {
        Architecture::BilstmAttn => 0,
        Architecture::BilstmNoattn => 1,
        Architecture::UnilstmAttn => 2,
        Architecture::UnilstmNoattn => 3,
        Architecture::Transformer => 4,
    }
}

fn summary_value(s: Option<crate::wugeval::Summary>) -> Value {
    match s {
        Some(s) => json!({"mean": s.mean, "stdev": s.stdev, "n": s.n}),
        None => Value::Null,
    }
}

fn corr_value(t: &Option<CorrelationTable>) -> Value {
    match t {
        None => Value::Null,
        Some(t) => {
            let mut m = serde_json::Map::new();
            for r in &t.rows {
                m.insert(r.class.label().to_string(), json!({"rho": r.value(), "n": r.n, "missing": r.missing_reason()}));
            }
            m.insert("macro".into(), json!(t.macro_avg));
            Value::Object(m)
        }
    }
}

fn arch_summary(res: &ExperimentResults, a: &ArchResults) -> Value {
    let lang = res.config.language;
    let mut test = serde_json::Map::new();
    test.insert(
        "all".into(),
        summary_value(summarize(&a.test_accuracy.iter().filter_map(|(_, c)| c.overall).collect::<Vec<_>>())),
    );
    let mut f1 = serde_json::Map::new();
    for (k, &class) in lang.classes().iter().enumerate() {
        let acc: Vec<f64> = a.test_accuracy.iter().filter_map(|(_, c)| c.per_class[k].1).collect();
        test.insert(class.label().into(), summary_value(summarize(&acc)));
        let v: Vec<f64> = a.f1.iter().filter_map(|(_, m)| m.f1(class)).collect();
        f1.insert(class.label().into(), summary_value(summarize(&v)));
    }
    let dev: Vec<f64> = a.records.iter().map(|(_, r)| r.dev_accuracy).collect();
    json!({
        "architecture": a.arch.id(),
        "display_name": a.arch.display_name(),
        "num_params": a.num_params,
        "seeds_completed": a.seeds,
        "failed_seeds": a.failed.iter().map(|(s, e)| json!({"seed": s, "error": e})).collect::<Vec<_>>(),
        "selected_epochs": a.records.iter().map(|(_, r)| r.selected_epoch).collect::<Vec<_>>(),
        "dev_accuracy": summary_value(summarize(&dev)),
        "test_accuracy": test,
        "f1": f1,
        "rating_correlation": corr_value(&a.rating_corr),
        "production_correlation": corr_value(&a.production_corr),
    })
}

fn reference_value(lang: Language) -> Value {
    match lang {
        Language::En => json!(reference::ENGLISH
            .iter()
            .map(|r| json!({
                "system": r.system,
                "test_accuracy": {"regular": r.test_acc[0], "irregular": r.test_acc[1]},
                "production_rho": {"regular": r.prod_prob_rho[0], "irregular": r.prod_prob_rho[1]},
                "rating_rho": {"regular": r.rating_rho[0], "irregular": r.rating_rho[1]},
            }))
            .collect::<Vec<_>>()),
        Language::De => {
            let labels = ["/-(e)n/", "/-e/", "/-∅/", "/-er/", "/-s/", "other"];
            let f1: serde_json::Map<String, Value> = labels
                .iter()
                .zip(reference::GERMAN_F1.f1)
                .map(|(l, v)| (l.to_string(), json!(v)))
                .collect();
            let (system, rho) = reference::GERMAN_PROD_PROB_RHO;
            let mut prod: serde_json::Map<String, Value> =
                labels[..5].iter().zip(rho).map(|(l, v)| (l.to_string(), json!(v))).collect();
            prod.insert("macro".into(), json!(rho[5]));
            json!([{
                "system": reference::GERMAN_F1.system,
                "dev_accuracy": reference::GERMAN_F1.dev_acc,
                "f1": f1,
            }, {"system": system, "production_rho": prod}])
        }
    }
}

fn acc_corr_value(s: &AccCorrSummary) -> Value {
    let c = |c: &Option<crate::wugeval::Correlation>| json!(c.and_then(|c| c.value));
    json!({
        "per_model": s.per_model.iter().map(|(a, r)| json!({"architecture": a.id(), "r": c(r)})).collect::<Vec<_>>(),
        "per_class": s.per_class.iter().map(|(k, r)| json!({"class": k.label(), "r": c(r)})).collect::<Vec<_>>(),
        "pooled": c(&s.pooled),
        "missing_cells": s.gaps.iter().map(|(a, k)| format!("{}/{}", a.id(), k.label())).collect::<Vec<_>>(),
    })
}

fn acc_corr_notes(s: &AccCorrSummary) -> Vec<String> {
    let why = |c: &Option<crate::wugeval::Correlation>| match c {
        None => Some("fewer than three cells"),
        Some(c) if c.value.is_none() => Some("zero variance"),
        _ => None,
    };
    let models = s.per_model.iter().map(|(a, c)| (format!("model {}", a.id()), c));
    let classes = s.per_class.iter().map(|(k, c)| (format!("class {}", k.label()), c));
    models
        .chain(classes)
        .chain(std::iter::once(("pooled".to_string(), &s.pooled)))
        .filter_map(|(key, c)| why(c).map(|w| format!("accuracy vs correlation, {key}: {w}")))
        .collect()
}

fn incomplete(res: &ExperimentResults) -> Vec<String> {
    let mut notes = Vec::new();
    if let Some((_, acc)) = res.archs.iter().find_map(|a| a.test_accuracy.first()) {
        for (class, v) in &acc.per_class {
            if v.is_none() {
                notes.push(format!("test accuracy, class {}: no gold items", class.label()));
            }
        }
    }
    for a in &res.archs {
        for (s, e) in &a.failed {
            notes.push(format!("{}-seed{s}: {e}", a.arch.id()));
        }
        let tables = a
            .rating_corr
            .iter()
            .map(|t| ("rating".to_string(), t))
            .chain(a.rating_corr_per_seed.iter().map(|(s, t)| (format!("rating seed {s}"), t)))
            .chain(a.production_corr.iter().map(|t| ("production".to_string(), t)));
        for (scope, t) in tables {
            for r in &t.rows {
                if let Some(why) = r.missing_reason() {
                    notes.push(format!("{} {scope} {}: {why}", a.arch.id(), r.class.label()));
                }
            }
            if t.macro_avg.is_none() {
                notes.push(format!("{} {scope} macro: no class correlation defined", a.arch.id()));
            }
        }
    }
    if res.stages.wug && res.wugs.is_none() {
        notes.push("no wug file configured; wug analyses skipped".into());
    }
    notes.dedup();
    notes
}

/// Writes every report file the completed stages support into `dir` and
/// returns their paths.
pub fn write_reports(res: &ExperimentResults, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    std::fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    let mut files = vec![write_curves(res, dir)?];
    if res.stages.test {
        files.push(write_accuracy(res, dir)?);
        files.push(write_f1(res, dir)?);
    }
    if res.stages.wug && res.wugs.is_some() {
        files.push(write_ratings(res, dir)?);
        files.push(write_correlations(res, dir)?);
        files.extend(write_productions(res, dir)?);
    }
    if res.stages.test && res.stages.wug {
        let cells = grid_cells(res);
        let acc_corr = accuracy_vs_correlation(&cells);
        files.extend(write_acc_corr(&acc_corr, &cells, dir)?);
        let summary = json!({
            "config": res.config,
            "config_hash": res.config_hash,
            "language": res.config.language.code(),
            "architectures": res.archs.iter().map(|a| arch_summary(res, a)).collect::<Vec<_>>(),
            "accuracy_vs_correlation": acc_corr_value(&acc_corr),
            "reference": reference_value(res.config.language),
            "incomplete": ([incomplete(res), acc_corr_notes(&acc_corr)].concat()),
        });
        let path = dir.join("summary.json");
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        std::fs::write(&path, text + "\n").map_err(|e| RunError::io(&path, e))?;
        files.push(path);
    }
    Ok(files)
}

/// Accuracy-vs-correlation over several experiments (typically one per
/// language), written to `dir`.
pub fn write_combined(results: &[ExperimentResults], dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    std::fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    let cells: Vec<GridCell> = results.iter().flat_map(grid_cells).collect();
    let acc_corr = accuracy_vs_correlation(&cells);
    let mut files = write_acc_corr(&acc_corr, &cells, dir)?;
    let summary = json!({
        "experiments": results.iter().map(|r| json!({"language": r.config.language.code(), "config_hash": r.config_hash})).collect::<Vec<_>>(),
        "accuracy_vs_correlation": acc_corr_value(&acc_corr),
        "reference": {
            "pooled": reference::ACC_CORR_POOLED,
            "per_class": reference::ACC_CORR_PER_CLASS,
            "per_model": reference::ACC_CORR_PER_MODEL,
        },
        "incomplete": acc_corr_notes(&acc_corr),
    });
    let path = dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n")
        .map_err(|e| RunError::io(&path, e))?;
    files.push(path);
    Ok(files)
}
