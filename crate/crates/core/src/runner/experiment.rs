use std::path::{Path, PathBuf};
use std::time::Instant;

use ndiff::{Checkpoint, SeededRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{sha256_hex, DataSpec, ExperimentConfig, ProductionMode};
use super::train::{derive_seed, train, EncodedPair, TrainOptions, TrainRecord};
use super::RunError;
use crate::corpus::{
    parse_dataset, parse_wug_file, split_dataset, Alphabet, InflectionClass, InflectionExample, Language, SymbolId,
    WugSet,
};
use crate::decode::{predict_form, predict_forms, sample, ScoredForm};
use crate::seq2seq::{build_model, Architecture, Model};
use crate::wugeval::{
    accuracy_by_class, aggregate_ratings, class_f1, production_probabilities, production_summary, score_candidates,
    spearman_by_class, CandidateRating, ClassAccuracy, ClassMetrics, CorrelationTable, LemmaProductions, Outcome,
    ProductionCell, UNFINISHED,
};

const SAMPLING_STREAM: u64 = 3;
const SUBSET_STREAM: u64 = 4;

/// Loaded data shared by every run of an experiment.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub alphabet: Alphabet,
    pub train: Vec<InflectionExample>,
    pub dev: Vec<InflectionExample>,
    pub test: Vec<InflectionExample>,
    pub wugs: Option<WugSet>,
    /// Digest of everything training depends on besides the model config.
    pub data_digest: String,
}

fn read(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))
}

fn load_dataset(path: &Path, language: Language) -> Result<Vec<InflectionExample>, RunError> {
    parse_dataset(&read(path)?, language).map_err(|source| RunError::Corpus {
        path: path.to_path_buf(),
        source,
    })
}

/// Seeded subset of `n` examples, in input order.
fn take_subset(data: Vec<InflectionExample>, n: usize, seed: u64) -> Vec<InflectionExample> {
    if n >= data.len() {
        return data;
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    SeededRng::new(derive_seed(seed, SUBSET_STREAM)).shuffle(&mut idx);
    let mut keep = idx[..n].to_vec();
    keep.sort_unstable();
    let mut data: Vec<Option<InflectionExample>> = data.into_iter().map(Some).collect();
    keep.into_iter().map(|i| data[i].take().expect("indices are distinct")).collect()
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, RunError> {
    let lang = config.language;
    let (train, dev, test) = match &config.data {
        DataSpec::Split { train, dev, test } => {
            let mut tr = load_dataset(train, lang)?;
            if let Some(n) = config.subset {
                tr = take_subset(tr, n, 0);
            }
            (tr, load_dataset(dev, lang)?, load_dataset(test, lang)?)
        }
        DataSpec::Raw { raw, split } => {
            let mut all = load_dataset(raw, lang)?;
            if let Some(n) = config.subset {
                all = take_subset(all, n, split.seed);
            }
            let s = split_dataset(&all, split.ratios, split.seed, split.stratify_irregular).map_err(|source| {
                RunError::Corpus {
                    path: raw.clone(),
                    source,
                }
            })?;
            (s.train, s.dev, s.test)
        }
    };
    let wugs = match &config.wugs {
        Some(path) => {
            let set = parse_wug_file(&read(path)?).map_err(|source| RunError::Corpus {
                path: path.clone(),
                source,
            })?;
            if set.language != lang {
                return Err(RunError::Config(format!(
                    "{}: wug file is {} but the experiment is {lang}",
                    path.display(),
                    set.language
                )));
            }
            Some(set)
        }
        None => None,
    };
    let mut alphabet = Alphabet::from_examples(train.iter().chain(&dev).chain(&test));
    if let Some(w) = &wugs {
        alphabet.observe_text(w.candidates.iter().flat_map(|c| [c.lemma.as_str(), c.form.as_str()]));
        for t in &w.tags {
            alphabet.add_tag(t);
        }
    }
    let digest_input = serde_json::to_string(&(&train, &dev, &alphabet)).expect("data serializes");
    Ok(Prepared {
        config: config.clone(),
        data_digest: sha256_hex(digest_input.as_bytes()),
        alphabet,
        train,
        dev,
        test,
        wugs,
    })
}

fn encode_all(alphabet: &Alphabet, data: &[InflectionExample]) -> Result<Vec<EncodedPair>, RunError> {
    data.iter()
        .map(|ex| {
            Ok(EncodedPair {
                source: alphabet.encode_source(&ex.lemma, &ex.tags).map_err(crate::seq2seq::ModelError::from)?,
                target: alphabet.encode_chars(&ex.form).map_err(crate::seq2seq::ModelError::from)?,
                form: ex.form.clone(),
            })
        })
        .collect()
}

/// Which evaluations to run after training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stages {
    pub test: bool,
    pub wug: bool,
}

impl Stages {
    pub const TRAIN: Stages = Stages {
        test: false,
        wug: false,
    };
    pub const ALL: Stages = Stages { test: true, wug: true };
}

/// Everything one trained model contributes to the reports.
#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub arch: Architecture,
    pub seed: u64,
    pub num_params: usize,
    pub record: TrainRecord,
    pub reused: bool,
    /// Top prediction per test example; `None` when decoding did not finish.
    pub test_predictions: Option<Vec<Option<String>>>,
    /// Forms produced per wug lemma (one, or one per sample).
    pub wug_productions: Option<Vec<Vec<String>>>,
    pub wug_scores: Option<Vec<ScoredForm>>,
}

#[derive(Serialize, Deserialize)]
struct RecordMeta {
    record: TrainRecord,
}

pub fn checkpoint_path(out: &Path, arch: Architecture, seed: u64) -> PathBuf {
    out.join("checkpoints").join(format!("{}-seed{seed}.ckpt", arch.id()))
}

fn checkpoint_key(prep: &Prepared, arch: Architecture, seed: u64) -> String {
    let c = &prep.config;
    let key = serde_json::json!({
        "model": c.model_config(arch, seed),
        "epochs": c.epochs,
        "batch_size": c.batch_size,
        "optimizer": c.optimizer,
        "dev_decode": c.dev_decode,
        "beam_width": if c.dev_decode == super::DecodeMode::Beam { Some(c.beam_width) } else { None },
        "data": prep.data_digest,
    });
    sha256_hex(key.to_string().as_bytes())
}

fn load_reusable(path: &Path, key: &str) -> Option<(Model, TrainRecord)> {
    let ckpt = Checkpoint::load(path).ok()?;
    if ckpt.config_hash != key {
        return None;
    }
    let record: RecordMeta = serde_json::from_value(ckpt.meta.clone()).ok()?;
    let model = Model::from_checkpoint(&ckpt).ok()?;
    Some((model, record.record))
}

fn save_checkpoint(path: &Path, model: &Model, key: &str, record: &TrainRecord) -> Result<(), RunError> {
    let dir = path.parent().expect("checkpoint path has a parent");
    std::fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    let mut ckpt = model.to_checkpoint(key)?;
    if let serde_json::Value::Object(m) = &mut ckpt.meta {
        m.insert("record".into(), serde_json::to_value(record).expect("record serializes"));
    }
    let tmp = path.with_extension("ckpt.tmp");
    ckpt.save(&tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| RunError::io(path, e))
}

/// Trains (or reloads) one model and runs the requested evaluations.
fn run_one(prep: &Prepared, arch: Architecture, seed: u64, stages: Stages) -> Result<SeedOutcome, RunError> {
    let cfg = &prep.config;
    let key = checkpoint_key(prep, arch, seed);
    let path = checkpoint_path(&cfg.output_dir, arch, seed);
    let (model, record, reused) = match load_reusable(&path, &key) {
        Some((m, r)) => {
            log::info!("{arch}-seed{seed}: reusing {}", path.display());
            (m, r, true)
        }
        None => {
            let started = Instant::now();
            let model = build_model(cfg.model_config(arch, seed), prep.alphabet.clone())?;
            let opts = TrainOptions {
                epochs: cfg.epochs,
                batch_size: cfg.batch_size,
                optimizer: cfg.optimizer.clone(),
                dev_decode: cfg.dev_decode,
                beam_width: cfg.beam_width,
            };
            let tr = encode_all(&prep.alphabet, &prep.train)?;
            let dv = encode_all(&prep.alphabet, &prep.dev)?;
            let (model, record) = train(model, &tr, &dv, &opts)?;
            log::info!(
                "{arch}-seed{seed}: trained in {:.1}s, selected epoch {}",
                started.elapsed().as_secs_f64(),
                record.selected_epoch
            );
            save_checkpoint(&path, &model, &key, &record)?;
            (model, record, false)
        }
    };
    let width = match cfg.test_decode {
        super::DecodeMode::Greedy => 1,
        super::DecodeMode::Beam => cfg.beam_width,
    };
    let test_predictions = if stages.test {
        let pairs = encode_all(&prep.alphabet, &prep.test)?;
        let sources: Vec<&[SymbolId]> = pairs.iter().map(|p| p.source.as_slice()).collect();
        Some(predict_forms(&model, &sources, width)?)
    } else {
        None
    };
    let (wug_productions, wug_scores) = match (&prep.wugs, stages.wug) {
        (Some(w), true) => (Some(wug_productions(&model, w, cfg, width)?), Some(score_candidates(&model, w)?)),
        _ => (None, None),
    };
    Ok(SeedOutcome {
        arch,
        seed,
        num_params: model.num_params(),
        record,
        reused,
        test_predictions,
        wug_productions,
        wug_scores,
    })
}

fn wug_productions(model: &Model, wugs: &WugSet, cfg: &ExperimentConfig, width: usize) -> Result<Vec<Vec<String>>, RunError> {
    let mut out = Vec::new();
    for lemma in wugs.lemmas() {
        let src = model
            .alphabet()
            .encode_source(lemma, &wugs.tags)
            .map_err(crate::seq2seq::ModelError::from)?;
        let forms = match &cfg.production {
            ProductionMode::Top => {
                vec![predict_form(model, &src, width)?.unwrap_or_else(|| UNFINISHED.to_string())]
            }
            ProductionMode::Sample { samples, seed } => {
                let stream = derive_seed(*seed, SAMPLING_STREAM);
                let mut rng = SeededRng::new(derive_seed(model.config().seed, stream ^ sha_u64(lemma)));
                let max_len = model.max_decode_len(src.len());
                (0..*samples)
                    .map(|_| {
                        let h = sample(model, &src, max_len, &mut rng)?;
                        Ok(if h.finished {
                            model.alphabet().decode_chars(&h.symbols)
                        } else {
                            UNFINISHED.to_string()
                        })
                    })
                    .collect::<Result<Vec<_>, RunError>>()?
            }
        };
        out.push(forms);
    }
    Ok(out)
}

fn sha_u64(s: &str) -> u64 {
    let h = sha256_hex(s.as_bytes());
    u64::from_str_radix(&h[..16], 16).expect("hex digest")
}

/// Aggregated results for one architecture.
#[derive(Clone, Debug)]
pub struct ArchResults {
    pub arch: Architecture,
    pub num_params: Option<usize>,
    /// Successful runs, in seed order.
    pub seeds: Vec<u64>,
    pub failed: Vec<(u64, String)>,
    pub records: Vec<(u64, TrainRecord)>,
    pub test_accuracy: Vec<(u64, ClassAccuracy)>,
    pub f1: Vec<(u64, ClassMetrics)>,
    pub ratings: Option<Vec<CandidateRating>>,
    /// Seed-averaged rating vs human rating.
    pub rating_corr: Option<CorrelationTable>,
    pub rating_corr_per_seed: Vec<(u64, CorrelationTable)>,
    /// Ensemble production probability vs human production probability.
    pub production_corr: Option<CorrelationTable>,
    pub productions: Option<Vec<LemmaProductions>>,
    pub production_cells: Option<Vec<ProductionCell>>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub stages: Stages,
    pub test: Vec<InflectionExample>,
    pub wugs: Option<WugSet>,
    pub archs: Vec<ArchResults>,
}

fn thread_pool() -> Result<rayon::ThreadPool, RunError> {
    let threads = match std::env::var("WUGBENCH_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .map_err(|_| RunError::Config(format!("WUGBENCH_THREADS must be a positive integer, got `{v}`")))?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| RunError::Config(format!("thread pool: {e}")))
}

/// Trains every (architecture, seed) pair, reusing matching checkpoints,
/// and aggregates the requested evaluations. Individual run failures are
/// recorded; the call fails only when every run fails.
pub fn run_experiment(config: &ExperimentConfig, stages: Stages) -> Result<ExperimentResults, RunError> {
    config.validate()?;
    let prep = prepare(config)?;
    log::info!(
        "{}: {} train / {} dev / {} test, {} symbols",
        config.language,
        prep.train.len(),
        prep.dev.len(),
        prep.test.len(),
        prep.alphabet.len()
    );
    let jobs: Vec<(Architecture, u64)> = config
        .architectures
        .iter()
        .flat_map(|&a| config.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let pool = thread_pool()?;
    let outcomes: Vec<Result<SeedOutcome, RunError>> =
        pool.install(|| jobs.par_iter().map(|&(a, s)| run_one(&prep, a, s, stages)).collect());
    if outcomes.iter().all(Result::is_err) {
        let (arch, seed) = jobs[0];
        let message = outcomes.into_iter().next().and_then(Result::err).map(|e| e.to_string()).unwrap_or_default();
        return Err(RunError::AllFailed { arch, seed, message });
    }
    let mut archs = Vec::new();
    for &arch in &config.architectures {
        let mut ok = Vec::new();
        let mut failed = Vec::new();
        for ((a, s), r) in jobs.iter().zip(&outcomes) {
            if *a != arch {
                continue;
            }
            match r {
                Ok(o) => ok.push(o),
                Err(e) => {
                    log::warn!("{arch}-seed{s} failed: {e}");
                    failed.push((*s, e.to_string()));
                }
            }
        }
        archs.push(aggregate(arch, &ok, failed, &prep)?);
    }
    Ok(ExperimentResults {
        config: config.clone(),
        config_hash: config.hash(),
        stages,
        test: prep.test,
        wugs: prep.wugs,
        archs,
    })
}

fn aggregate(
    arch: Architecture,
    ok: &[&SeedOutcome],
    failed: Vec<(u64, String)>,
    prep: &Prepared,
) -> Result<ArchResults, RunError> {
    let lang = prep.config.language;
    let mut test_accuracy = Vec::new();
    let mut f1 = Vec::new();
    for o in ok {
        if let Some(preds) = &o.test_predictions {
            let outcomes: Vec<Outcome> = prep
                .test
                .iter()
                .zip(preds)
                .map(|(ex, p)| Outcome {
                    lemma: &ex.lemma,
                    gold_form: &ex.form,
                    gold_class: ex.class,
                    predicted: p.as_deref(),
                })
                .collect();
            test_accuracy.push((o.seed, accuracy_by_class(&outcomes, lang)));
            f1.push((o.seed, class_f1(&outcomes, lang)));
        }
    }
    let mut res = ArchResults {
        arch,
        num_params: ok.first().map(|o| o.num_params),
        seeds: ok.iter().map(|o| o.seed).collect(),
        failed,
        records: ok.iter().map(|o| (o.seed, o.record.clone())).collect(),
        test_accuracy,
        f1,
        ratings: None,
        rating_corr: None,
        rating_corr_per_seed: Vec::new(),
        production_corr: None,
        productions: None,
        production_cells: None,
    };
    let Some(wugs) = &prep.wugs else {
        return Ok(res);
    };
    let scored: Vec<&SeedOutcome> = ok.iter().copied().filter(|o| o.wug_scores.is_some()).collect();
    if scored.is_empty() {
        return Ok(res);
    }
    let per_model: Vec<Vec<ScoredForm>> = scored.iter().map(|o| o.wug_scores.clone().expect("filtered")).collect();
    let ratings = aggregate_ratings(wugs, &per_model)?;
    let classes: Vec<InflectionClass> = ratings.iter().map(|r| r.class).collect();
    let inventory = lang.classes();
    let human_rating: Vec<f64> = ratings.iter().map(|r| r.human_rating).collect();
    let model_rating: Vec<f64> = ratings.iter().map(|r| r.rating).collect();
    res.rating_corr = Some(spearman_by_class(&model_rating, &human_rating, &classes, inventory));
    res.rating_corr_per_seed = scored
        .iter()
        .enumerate()
        .map(|(m, o)| {
            let v: Vec<f64> = ratings.iter().map(|r| r.per_seed[m]).collect();
            (o.seed, spearman_by_class(&v, &human_rating, &classes, inventory))
        })
        .collect();
    let lemmas: Vec<String> = wugs.lemmas().into_iter().map(String::from).collect();
    let outputs: Vec<Vec<Vec<String>>> = scored
        .iter()
        .map(|o| o.wug_productions.clone().expect("produced with scores"))
        .collect();
    let productions = production_probabilities(&lemmas, &outputs)?;
    let model_prod: Vec<f64> = ratings
        .iter()
        .map(|r| {
            productions
                .iter()
                .find(|p| p.lemma == r.lemma)
                .map_or(0.0, |p| p.probability(&r.form))
        })
        .collect();
    let human_prod: Vec<f64> = ratings.iter().map(|r| r.human_prod_prob).collect();
    res.production_corr = Some(spearman_by_class(&model_prod, &human_prod, &classes, inventory));
    res.production_cells = Some(production_summary(wugs, &productions, &ratings));
    res.productions = Some(productions);
    res.ratings = Some(ratings);
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(i: usize) -> InflectionExample {
        InflectionExample {
            lemma: format!("w{i}"),
            form: format!("w{i}d"),
            tags: vec!["PST".into()],
            class: InflectionClass::Regular,
        }
    }

    #[test]
    fn subset_is_seeded_and_order_preserving() {
        let data: Vec<_> = (0..50).map(ex).collect();
        let a = take_subset(data.clone(), 10, 7);
        let b = take_subset(data.clone(), 10, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let pos: Vec<usize> = a.iter().map(|e| data.iter().position(|d| d == e).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(take_subset(data.clone(), 80, 7), data);
    }

    #[test]
    fn derived_streams_differ() {
        assert_ne!(derive_seed(1, 1), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 1), derive_seed(2, 1));
    }
}
