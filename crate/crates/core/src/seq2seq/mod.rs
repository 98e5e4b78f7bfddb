//! Character-level encoder-decoder models: four LSTM variants (uni- or
//! bidirectional encoder, with or without additive attention) and a
//! pre-norm Transformer.
//!
//! Every model reads a source of symbol ids (tags then lemma characters) and
//! predicts over the target vocabulary of [`Alphabet`]: EOS at index 0, then
//! the character symbols. Training builds one differentiable graph per batch
//! via [`Model::loss_graph`]; inference advances an explicit
//! [`DecoderState`] one symbol at a time via [`Model::decode_step`].

mod config;
mod lstm;
mod transformer;

pub use config::{Architecture, LossReduction, ModelConfig, ModelOverrides};

use std::sync::Arc;

use ndiff::{Array, Checkpoint, Graph, NdError, ParamStore, SeededRng, Var};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Alphabet, CorpusError, SymbolId, BOS};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config: {0}")]
    Config(String),

    #[error("empty source sequence")]
    EmptySource,

    #[error("source length {len} exceeds maximum {max}")]
    SourceTooLong { len: usize, max: usize },

    #[error("symbol id {0} is not valid here")]
    UnknownSymbol(SymbolId),

    #[error("decoder state was produced by a different architecture")]
    StateMismatch,

    #[error(transparent)]
    Corpus(#[from] CorpusError),

    #[error(transparent)]
    Numeric(#[from] NdError),
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Init {
    Uniform(f64),
    Normal(f64),
    Zeros,
    Ones,
}

pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: [usize; 2],
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: [usize; 2], init: Init) -> Self {
        Self {
            name: name.into(),
            shape,
            init,
        }
    }
}

/// Dropout that is active only when an RNG is supplied.
pub(crate) struct Dropout<'a> {
    p: f64,
    rng: Option<&'a mut SeededRng>,
}

impl<'a> Dropout<'a> {
    pub fn new(p: f64, rng: Option<&'a mut SeededRng>) -> Self {
        Self { p, rng }
    }

    pub fn off() -> Self {
        Self { p: 0.0, rng: None }
    }

    pub fn apply(&mut self, g: &mut Graph, x: Var) -> Result<Var, NdError> {
        match self.rng.as_deref_mut() {
            Some(rng) => g.dropout(x, self.p, true, rng),
            None => Ok(x),
        }
    }
}

#[derive(Clone, Debug)]
enum Layout {
    Lstm(lstm::Layout),
    Transformer(transformer::Layout),
}

/// Recurrent state (LSTM) or key/value cache (Transformer) of a decoder,
/// together with the encoder memory it attends to.
#[derive(Clone, Debug)]
pub struct DecoderState {
    kind: StateKind,
    steps: usize,
}

#[derive(Clone, Debug)]
enum StateKind {
    Lstm(lstm::State),
    Transformer(transformer::State),
}

impl DecoderState {
    /// Number of symbols fed to the decoder so far.
    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// Encoder output: one row per source position, plus the decoder's start
/// state.
#[derive(Clone, Debug)]
pub struct Encoding {
    pub outputs: Arc<Array>,
    pub state: DecoderState,
}

/// Number of scalar parameters `build` would create, without allocating them.
pub fn param_count(config: &ModelConfig, vocab: usize, targets: usize) -> usize {
    param_specs(config, vocab, targets)
        .iter()
        .map(|s| s.shape[0] * s.shape[1])
        .sum()
}

fn param_specs(config: &ModelConfig, vocab: usize, targets: usize) -> Vec<ParamSpec> {
    if config.arch.is_lstm() {
        lstm::param_specs(config, vocab, targets)
    } else {
        transformer::param_specs(config, vocab, targets)
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    alphabet: Alphabet,
    params: ParamStore,
    layout: Layout,
    pub trained_epochs: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    config: ModelConfig,
    alphabet: Alphabet,
    trained_epochs: usize,
}

/// Builds a freshly initialized model; see [`Model::build`].
pub fn build_model(config: ModelConfig, alphabet: Alphabet) -> Result<Model, ModelError> {
    Model::build(config, alphabet)
}

impl Model {
    /// Initializes all parameters from `config.seed`. LSTM weights are drawn
    /// from U(-init_scale, init_scale); Transformer weight matrices from
    /// N(0, 1/fan_in), embeddings from N(0, 1/model_dim), with zero biases and
    /// unit layer-norm gains.
    pub fn build(config: ModelConfig, alphabet: Alphabet) -> Result<Self, ModelError> {
        config.validate()?;
        if alphabet.num_targets() < 2 {
            return Err(ModelError::Config("alphabet has no character symbols".into()));
        }
        let mut rng = SeededRng::new(config.seed);
        let mut params = ParamStore::new();
        for spec in param_specs(&config, alphabet.len(), alphabet.num_targets()) {
            let n = spec.shape[0] * spec.shape[1];
            let data: Vec<f64> = match spec.init {
                Init::Uniform(s) => (0..n).map(|_| rng.uniform_range(-s, s)).collect(),
                Init::Normal(sd) => (0..n).map(|_| sd * rng.gaussian()).collect(),
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
            };
            params.insert(spec.name, Array::new(spec.shape.to_vec(), data)?)?;
        }
        Self::from_parts(config, alphabet, params, 0)
    }

    /// Assembles a model from existing parameters, checking that every
    /// expected parameter is present with the right shape.
    pub fn from_parts(
        config: ModelConfig,
        alphabet: Alphabet,
        params: ParamStore,
        trained_epochs: usize,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        for spec in param_specs(&config, alphabet.len(), alphabet.num_targets()) {
            let got = params.get(&spec.name)?;
            if got.shape() != spec.shape {
                return Err(ModelError::Config(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    spec.name,
                    got.shape(),
                    spec.shape
                )));
            }
        }
        let layout = if config.arch.is_lstm() {
            Layout::Lstm(lstm::Layout::resolve(&config, &params)?)
        } else {
            Layout::Transformer(transformer::Layout::resolve(&config, &params)?)
        };
        Ok(Self {
            config,
            alphabet,
            params,
            layout,
            trained_epochs,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// `<arch>-seed<k>`.
    pub fn identity(&self) -> String {
        format!("{}-seed{}", self.config.arch.id(), self.config.seed)
    }

    pub fn max_decode_len(&self, source_len: usize) -> usize {
        self.config.max_decode_len(source_len)
    }

    /// Source ids for `(lemma, tags)` and character ids for `form`.
    pub fn encode_pair(
        &self,
        lemma: &str,
        tags: &[String],
        form: &str,
    ) -> Result<(Vec<SymbolId>, Vec<SymbolId>), ModelError> {
        Ok((
            self.alphabet.encode_source(lemma, tags)?,
            self.alphabet.encode_chars(form)?,
        ))
    }

    fn check_source(&self, source: &[SymbolId]) -> Result<(), ModelError> {
        if source.is_empty() {
            return Err(ModelError::EmptySource);
        }
        if source.len() > self.config.max_source_len {
            return Err(ModelError::SourceTooLong {
                len: source.len(),
                max: self.config.max_source_len,
            });
        }
        match source.iter().find(|&&s| s >= self.alphabet.len()) {
            Some(&s) => Err(ModelError::UnknownSymbol(s)),
            None => Ok(()),
        }
    }

    /// Target-vocabulary indices of `target` followed by EOS (index 0).
    fn gold_indices(&self, target: &[SymbolId]) -> Result<Vec<usize>, ModelError> {
        let mut gold = Vec::with_capacity(target.len() + 1);
        for &s in target {
            match self.alphabet.target_index(s) {
                Some(t) if t != 0 => gold.push(t),
                _ => return Err(ModelError::UnknownSymbol(s)),
            }
        }
        gold.push(0);
        Ok(gold)
    }

    pub fn encode(&self, source: &[SymbolId]) -> Result<Encoding, ModelError> {
        self.check_source(source)?;
        let mut g = Graph::no_grad();
        let p = self.params.bind(&mut g);
        let (outputs, kind) = match &self.layout {
            Layout::Lstm(lay) => {
                let enc = lstm::encode_graph(&mut g, &p, lay, source, &mut Dropout::off())?;
                let state = lstm::State::capture(&g, &enc);
                (Arc::clone(&state.mem.enc), StateKind::Lstm(state))
            }
            Layout::Transformer(lay) => {
                let (mem, _) = transformer::encode_graph(&mut g, &p, lay, &[source], &mut Dropout::off())?;
                let state = transformer::State::capture(&mut g, &p, lay, mem)?;
                (Arc::clone(&state.mem.memory), StateKind::Transformer(state))
            }
        };
        Ok(Encoding {
            outputs,
            state: DecoderState { kind, steps: 0 },
        })
    }

    pub fn initial_state(&self, source: &[SymbolId]) -> Result<DecoderState, ModelError> {
        Ok(self.encode(source)?.state)
    }

    /// Feeds `prev` (BOS at the first step) and returns the natural-log
    /// distribution over the target vocabulary together with the advanced
    /// state. The input state is left untouched.
    pub fn decode_step(
        &self,
        state: &DecoderState,
        prev: SymbolId,
    ) -> Result<(Vec<f64>, DecoderState), ModelError> {
        Ok(self.decode_step_batch(&[state], &[prev])?.swap_remove(0))
    }

    /// [`Model::decode_step`] for several states in one pass. Rows are
    /// independent: each result equals the single-state call.
    pub fn decode_step_batch(
        &self,
        states: &[&DecoderState],
        prev: &[SymbolId],
    ) -> Result<Vec<(Vec<f64>, DecoderState)>, ModelError> {
        if states.len() != prev.len() {
            return Err(ModelError::Config(format!(
                "{} states but {} previous symbols",
                states.len(),
                prev.len()
            )));
        }
        if states.is_empty() {
            return Ok(Vec::new());
        }
        // Larger products switch kernels, and with them rounding.
        if states.len() > ndiff::DIRECT_MAX_ROWS {
            let mut out = Vec::with_capacity(states.len());
            for (s, p) in states.chunks(ndiff::DIRECT_MAX_ROWS).zip(prev.chunks(ndiff::DIRECT_MAX_ROWS)) {
                out.extend(self.decode_step_batch(s, p)?);
            }
            return Ok(out);
        }
        if let Some(&bad) = prev.iter().find(|&&s| s != BOS && self.alphabet.target_index(s).is_none()) {
            return Err(ModelError::UnknownSymbol(bad));
        }
        let mut g = Graph::no_grad();
        let p = self.params.bind(&mut g);
        let (logits, kinds) = match &self.layout {
            Layout::Lstm(lay) => {
                let mut rows = Vec::with_capacity(states.len());
                let mut kinds = Vec::with_capacity(states.len());
                for (st, &sym) in states.iter().zip(prev) {
                    let StateKind::Lstm(s) = &st.kind else {
                        return Err(ModelError::StateMismatch);
                    };
                    let (logits, next) = lstm::step_inference(&mut g, &p, lay, s, sym)?;
                    rows.push(logits);
                    kinds.push(StateKind::Lstm(next));
                }
                (g.concat(&rows, 0)?, kinds)
            }
            Layout::Transformer(lay) => {
                let inner = states
                    .iter()
                    .map(|st| match &st.kind {
                        StateKind::Transformer(s) => Ok(s),
                        _ => Err(ModelError::StateMismatch),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let (logits, next) = transformer::step_batch(&mut g, &p, lay, &inner, prev)?;
                (logits, next.into_iter().map(StateKind::Transformer).collect())
            }
        };
        let lsm = g.log_softmax(logits)?;
        let t = self.alphabet.num_targets();
        let data = g.value(lsm).data();
        Ok(kinds
            .into_iter()
            .enumerate()
            .map(|(i, kind)| {
                (
                    data[i * t..(i + 1) * t].to_vec(),
                    DecoderState {
                        kind,
                        steps: states[i].steps + 1,
                    },
                )
            })
            .collect())
    }

    /// Attention of a decoder query over a matrix of encoder outputs.
    /// LSTM models use their additive attention parameters (the query is a
    /// decoder hidden state); the Transformer uses unprojected scaled
    /// dot-product attention. Returns the context vector and the weights.
    pub fn attend(&self, query: &[f64], enc_outputs: &Array) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let mut g = Graph::no_grad();
        let p = self.params.bind(&mut g);
        let q = g.constant(Array::row_vector(query.to_vec()));
        let enc = g.constant(enc_outputs.clone());
        let (ctx, w) = match &self.layout {
            Layout::Lstm(lay) => {
                let a = lay
                    .attn
                    .as_ref()
                    .ok_or_else(|| ModelError::Config(format!("{} has no attention", self.config.arch)))?;
                let proj = lstm::project_memory(&mut g, &p, a, enc)?;
                lstm::attend_graph(&mut g, &p, a, enc, proj, q)?
            }
            Layout::Transformer(_) => g.scaled_dot_product(q, enc, enc, None)?,
        };
        Ok((g.value(ctx).data().to_vec(), g.value(w).data().to_vec()))
    }

    /// Teacher-forced negative log-likelihood of `target` (character ids)
    /// plus EOS, recorded on `g`. `p` are the parameters bound to `g` in
    /// store order. Dropout is applied when `rng` is given.
    pub fn loss_graph(
        &self,
        g: &mut Graph,
        p: &[Var],
        source: &[SymbolId],
        target: &[SymbolId],
        rng: Option<&mut SeededRng>,
    ) -> Result<Var, ModelError> {
        self.batch_loss_graph(g, p, &[(source, target)], rng)
    }

    /// Sum of [`Model::loss_graph`] over a batch of `(source, target)`
    /// pairs. The Transformer runs the whole batch through each layer at
    /// once; the recurrent models go pair by pair.
    pub fn batch_loss_graph(
        &self,
        g: &mut Graph,
        p: &[Var],
        batch: &[(&[SymbolId], &[SymbolId])],
        rng: Option<&mut SeededRng>,
    ) -> Result<Var, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::Config("empty batch".into()));
        }
        let mut gold = Vec::new();
        let mut spans = Vec::with_capacity(batch.len());
        for (source, target) in batch {
            self.check_source(source)?;
            let gi = self.gold_indices(target)?;
            spans.push((gold.len(), gi.len()));
            gold.extend(gi);
        }
        let mut drop = Dropout::new(self.config.dropout, rng);
        let logits = match &self.layout {
            Layout::Lstm(lay) => {
                let mut parts = Vec::with_capacity(batch.len());
                for (source, target) in batch {
                    parts.push(lstm::teacher_forced_logits(g, p, lay, source, target, &mut drop)?);
                }
                if parts.len() == 1 {
                    parts[0]
                } else {
                    g.concat(&parts, 0)?
                }
            }
            Layout::Transformer(lay) => transformer::teacher_forced_logits(g, p, lay, batch, &mut drop)?,
        };
        let lsm = g.log_softmax(logits)?;
        let picked = g.pick(lsm, &gold)?;
        let mut total: Option<Var> = None;
        for &(start, len) in &spans {
            let part = if spans.len() == 1 {
                picked
            } else {
                g.slice(picked, 0, start, len)?
            };
            let sum = g.sum(part);
            let factor = match self.config.loss_reduction {
                LossReduction::Sum => -1.0,
                LossReduction::Mean => -1.0 / len as f64,
            };
            let loss = g.scale(sum, factor);
            total = Some(match total {
                None => loss,
                Some(t) => g.add(t, loss)?,
            });
        }
        Ok(total.expect("batch is non-empty"))
    }

    /// Loss value without dropout or gradient tracking.
    pub fn loss(&self, source: &[SymbolId], target: &[SymbolId]) -> Result<f64, ModelError> {
        let mut g = Graph::no_grad();
        let p = self.params.bind(&mut g);
        let l = self.loss_graph(&mut g, &p, source, target, None)?;
        Ok(g.value(l).item()?)
    }

    pub fn to_checkpoint(&self, config_hash: &str) -> Result<Checkpoint, ModelError> {
        let meta = CheckpointMeta {
            config: self.config.clone(),
            alphabet: self.alphabet.clone(),
            trained_epochs: self.trained_epochs,
        };
        let meta = serde_json::to_value(meta).map_err(NdError::from)?;
        Ok(Checkpoint::from_store(&self.params, config_hash, meta))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        let meta: CheckpointMeta = serde_json::from_value(ckpt.meta.clone()).map_err(NdError::from)?;
        Self::from_parts(meta.config, meta.alphabet, ckpt.to_store()?, meta.trained_epochs)
    }
}

#[cfg(test)]
mod tests;
