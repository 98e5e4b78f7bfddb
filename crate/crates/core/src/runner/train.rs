use std::time::Instant;

use ndiff::{clip_global_norm, Adam, AdamConfig, GradBuffer, Graph, ParamStore, SeededRng};
use serde::{Deserialize, Serialize};

use super::config::{DecodeMode, OptimizerConfig};
use super::RunError;
use crate::corpus::SymbolId;
use crate::decode::predict_forms;
use crate::seq2seq::Model;

/// A training pair already mapped to symbol ids.
#[derive(Clone, Debug)]
pub struct EncodedPair {
    pub source: Vec<SymbolId>,
    pub target: Vec<SymbolId>,
    pub form: String,
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub dev_decode: DecodeMode,
    pub beam_width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-example loss over the epoch.
    pub train_loss: f64,
    /// Dev exact-match accuracy in percent.
    pub dev_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub curve: Vec<EpochRecord>,
    pub selected_epoch: usize,
    pub dev_accuracy: f64,
}

/// Independent stream derived from a run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const SHUFFLE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// Exact-match accuracy (percent) of `model` on `pairs`.
pub fn accuracy(model: &Model, pairs: &[EncodedPair], mode: DecodeMode, beam_width: usize) -> Result<f64, RunError> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let width = match mode {
        DecodeMode::Greedy => 1,
        DecodeMode::Beam => beam_width,
    };
    let sources: Vec<&[SymbolId]> = pairs.iter().map(|p| p.source.as_slice()).collect();
    let predicted = predict_forms(model, &sources, width)?;
    let hits = pairs
        .iter()
        .zip(&predicted)
        .filter(|(p, f)| f.as_deref() == Some(p.form.as_str()))
        .count();
    Ok(100.0 * hits as f64 / pairs.len() as f64)
}

/// Mini-batch Adam training with per-epoch dev evaluation. The returned
/// model carries the parameters of the epoch with the best dev accuracy
/// (earliest on ties).
pub fn train(
    mut model: Model,
    train: &[EncodedPair],
    dev: &[EncodedPair],
    opts: &TrainOptions,
) -> Result<(Model, TrainRecord), RunError> {
    if train.is_empty() {
        return Err(RunError::Config("training set is empty".into()));
    }
    let seed = model.config().seed;
    let name = model.identity();
    let mut shuffle_rng = SeededRng::new(derive_seed(seed, SHUFFLE_STREAM));
    let mut dropout_rng = SeededRng::new(derive_seed(seed, DROPOUT_STREAM));
    let o = &opts.optimizer;
    let adam_cfg = AdamConfig {
        lr: o.lr,
        beta1: o.beta1,
        beta2: o.beta2,
        eps: o.eps,
    };
    let mut adam = Adam::new(adam_cfg, model.params());
    let mut grads = GradBuffer::zeros_like(model.params());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(opts.epochs);
    let mut best: Option<(usize, f64, ParamStore)> = None;

    for epoch in 1..=opts.epochs {
        let started = Instant::now();
        shuffle_rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let mut g = Graph::new();
            let p = model.params().bind(&mut g);
            let pairs: Vec<(&[SymbolId], &[SymbolId])> = batch
                .iter()
                .map(|&i| (train[i].source.as_slice(), train[i].target.as_slice()))
                .collect();
            let sum = model.batch_loss_graph(&mut g, &p, &pairs, Some(&mut dropout_rng))?;
            let batch_total = g.value(sum).item()?;
            if !batch_total.is_finite() {
                return Err(RunError::Diverged {
                    model: name,
                    epoch,
                });
            }
            total += batch_total;
            let mean = g.scale(sum, 1.0 / batch.len() as f64);
            g.backward(mean)?;
            grads.reset();
            grads.absorb(&mut g, &p);
            if o.clip_norm > 0.0 {
                clip_global_norm(grads.grads_mut(), o.clip_norm);
            }
            adam.step(model.params_mut(), grads.grads())?;
        }
        let dev_accuracy = accuracy(&model, dev, opts.dev_decode, opts.beam_width)?;
        let train_loss = total / train.len() as f64;
        log::info!(
            "{name} epoch {epoch}/{}: loss {train_loss:.4}, dev {dev_accuracy:.2}% ({:.1}s)",
            opts.epochs,
            started.elapsed().as_secs_f64()
        );
        curve.push(EpochRecord {
            epoch,
            train_loss,
            dev_accuracy,
        });
        if best.as_ref().map_or(true, |b| dev_accuracy > b.1) {
            best = Some((epoch, dev_accuracy, model.params().clone()));
        }
    }
    let (selected_epoch, dev_accuracy, params) = best.expect("at least one epoch");
    *model.params_mut() = params;
    model.trained_epochs = selected_epoch;
    Ok((
        model,
        TrainRecord {
            curve,
            selected_epoch,
            dev_accuracy,
        },
    ))
}
