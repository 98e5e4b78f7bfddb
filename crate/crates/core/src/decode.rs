//! Greedy decoding, beam search, forced scoring and ancestral sampling over
//! any model that exposes a step-wise distribution through [`StepModel`].

use std::cmp::Ordering;

use ndiff::SeededRng;

use crate::corpus::{SymbolId, BOS, EOS};
use crate::seq2seq::{DecoderState, Model, ModelError};

/// A left-to-right conditional distribution over a target vocabulary whose
/// index 0 is EOS.
pub trait StepModel {
    type State: Clone;

    fn start(&self, source: &[SymbolId]) -> Result<Self::State, ModelError>;

    /// Natural-log probabilities over the target vocabulary after feeding
    /// `prev`, and the advanced state.
    fn step(&self, state: &Self::State, prev: SymbolId) -> Result<(Vec<f64>, Self::State), ModelError>;

    /// One step for several states at once; row `i` equals
    /// `step(states[i], prev[i])`.
    fn step_batch(
        &self,
        states: &[&Self::State],
        prev: &[SymbolId],
    ) -> Result<Vec<(Vec<f64>, Self::State)>, ModelError> {
        states.iter().zip(prev).map(|(s, &p)| self.step(s, p)).collect()
    }

    fn target_symbol(&self, index: usize) -> SymbolId;

    fn target_index(&self, symbol: SymbolId) -> Option<usize>;
}

impl StepModel for Model {
    type State = DecoderState;

    fn start(&self, source: &[SymbolId]) -> Result<DecoderState, ModelError> {
        self.initial_state(source)
    }

    fn step(&self, state: &DecoderState, prev: SymbolId) -> Result<(Vec<f64>, DecoderState), ModelError> {
        self.decode_step(state, prev)
    }

    fn step_batch(
        &self,
        states: &[&DecoderState],
        prev: &[SymbolId],
    ) -> Result<Vec<(Vec<f64>, DecoderState)>, ModelError> {
        self.decode_step_batch(states, prev)
    }

    fn target_symbol(&self, index: usize) -> SymbolId {
        self.alphabet().target_symbol(index)
    }

    fn target_index(&self, symbol: SymbolId) -> Option<usize> {
        self.alphabet().target_index(symbol)
    }
}

/// A decoded sequence. `symbols` holds the generated characters only (no
/// BOS, no EOS); `finished` records whether EOS was emitted.
#[derive(Clone, Debug)]
pub struct Hypothesis<S = DecoderState> {
    pub symbols: Vec<SymbolId>,
    pub logprob: f64,
    pub state: S,
    pub finished: bool,
}

/// Forced-decoding score of one form.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredForm {
    pub form: Vec<SymbolId>,
    /// Sum of log-probabilities of the k characters and the final EOS.
    pub raw_logprob: f64,
    /// Geometric mean of the k + 1 factors: `exp(raw_logprob / (k + 1))`.
    pub normalized_prob: f64,
}

fn last_or_bos(symbols: &[SymbolId]) -> SymbolId {
    symbols.last().copied().unwrap_or(BOS)
}

/// Index of the largest entry; the lowest index wins ties.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if x.total_cmp(&xs[best]) == Ordering::Greater {
            best = i;
        }
    }
    best
}

pub fn greedy_decode<M: StepModel>(
    model: &M,
    source: &[SymbolId],
    max_len: usize,
) -> Result<Hypothesis<M::State>, ModelError> {
    let mut state = model.start(source)?;
    let mut symbols = Vec::new();
    let mut logprob = 0.0;
    for _ in 0..max_len {
        let (dist, next) = model.step(&state, last_or_bos(&symbols))?;
        let t = argmax(&dist);
        logprob += dist[t];
        state = next;
        if t == 0 {
            return Ok(Hypothesis {
                symbols,
                logprob,
                state,
                finished: true,
            });
        }
        symbols.push(model.target_symbol(t));
    }
    Ok(Hypothesis {
        symbols,
        logprob,
        state,
        finished: false,
    })
}

/// Orders by descending log-probability, then by symbol sequence.
fn rank(a_lp: f64, a: impl Iterator<Item = SymbolId>, b_lp: f64, b: impl Iterator<Item = SymbolId>) -> Ordering {
    b_lp.total_cmp(&a_lp).then_with(|| a.cmp(b))
}

/// Beam search of the given width.
///
/// At every step all one-symbol extensions of the live hypotheses are
/// pooled, ranked by accumulated log-probability (ties by symbol-id
/// sequence, EOS counting as its own id) and cut to `width`; zero-probability
/// extensions are never kept. Extensions
/// ending in EOS leave the beam as finished hypotheses; the rest continue.
/// Search stops when nothing is alive or after `max_len` steps.
///
/// Returns the finished hypotheses in rank order. If none finished, the
/// surviving live hypotheses are returned instead, marked unfinished.
pub fn beam_decode<M: StepModel>(
    model: &M,
    source: &[SymbolId],
    width: usize,
    max_len: usize,
) -> Result<Vec<Hypothesis<M::State>>, ModelError> {
    if width == 0 {
        return Err(ModelError::Config("beam width must be at least 1".into()));
    }
    let mut alive = vec![Hypothesis {
        symbols: Vec::new(),
        logprob: 0.0,
        state: model.start(source)?,
        finished: false,
    }];
    let mut finished = Vec::new();
    for _ in 0..max_len {
        if alive.is_empty() {
            break;
        }
        let states: Vec<&M::State> = alive.iter().map(|h| &h.state).collect();
        let prev: Vec<SymbolId> = alive.iter().map(|h| last_or_bos(&h.symbols)).collect();
        let mut steps = Vec::with_capacity(alive.len());
        let mut pool: Vec<(f64, usize, usize)> = Vec::new();
        for (i, (dist, next)) in model.step_batch(&states, &prev)?.into_iter().enumerate() {
            let base = alive[i].logprob;
            pool.extend(
                dist.iter()
                    .enumerate()
                    .filter(|(_, lp)| **lp > f64::NEG_INFINITY)
                    .map(|(t, lp)| (base + lp, i, t)),
            );
            steps.push(next);
        }
        let key = |&(_, i, t): &(f64, usize, usize)| {
            let sym = if t == 0 { EOS } else { model.target_symbol(t) };
            alive[i].symbols.iter().copied().chain(std::iter::once(sym))
        };
        pool.sort_by(|a, b| rank(a.0, key(a), b.0, key(b)));
        pool.truncate(width);

        let mut next_alive = Vec::with_capacity(width);
        for (lp, i, t) in pool {
            let mut symbols = alive[i].symbols.clone();
            if t != 0 {
                symbols.push(model.target_symbol(t));
            }
            let h = Hypothesis {
                symbols,
                logprob: lp,
                state: steps[i].clone(),
                finished: t == 0,
            };
            if h.finished {
                finished.push(h);
            } else {
                next_alive.push(h);
            }
        }
        alive = next_alive;
    }
    let mut out = if finished.is_empty() { alive } else { finished };
    out.sort_by(|a, b| rank(a.logprob, a.symbols.iter().copied(), b.logprob, b.symbols.iter().copied()));
    Ok(out)
}

/// Log-probability of generating exactly `target` (character symbols)
/// followed by EOS, read off the step chain.
pub fn force_score<M: StepModel>(
    model: &M,
    source: &[SymbolId],
    target: &[SymbolId],
) -> Result<ScoredForm, ModelError> {
    let mut indices = Vec::with_capacity(target.len() + 1);
    for &s in target {
        match model.target_index(s) {
            Some(t) if t != 0 => indices.push(t),
            _ => return Err(ModelError::UnknownSymbol(s)),
        }
    }
    indices.push(0);
    let mut state = model.start(source)?;
    let mut prev = BOS;
    let mut raw = 0.0;
    for (k, &t) in indices.iter().enumerate() {
        let (dist, next) = model.step(&state, prev)?;
        raw += dist[t];
        state = next;
        if k < target.len() {
            prev = target[k];
        }
    }
    Ok(ScoredForm {
        form: target.to_vec(),
        raw_logprob: raw,
        normalized_prob: (raw / indices.len() as f64).exp(),
    })
}

/// Draws one sequence by ancestral sampling.
pub fn sample<M: StepModel>(
    model: &M,
    source: &[SymbolId],
    max_len: usize,
    rng: &mut SeededRng,
) -> Result<Hypothesis<M::State>, ModelError> {
    let mut state = model.start(source)?;
    let mut symbols = Vec::new();
    let mut logprob = 0.0;
    for _ in 0..max_len {
        let (dist, next) = model.step(&state, last_or_bos(&symbols))?;
        let probs: Vec<f64> = dist.iter().map(|lp| lp.exp()).collect();
        let t = rng.categorical(&probs);
        logprob += dist[t];
        state = next;
        if t == 0 {
            return Ok(Hypothesis {
                symbols,
                logprob,
                state,
                finished: true,
            });
        }
        symbols.push(model.target_symbol(t));
    }
    Ok(Hypothesis {
        symbols,
        logprob,
        state,
        finished: false,
    })
}

/// Greedy decoding of several sources in lockstep; element `i` equals
/// `greedy_decode(model, sources[i], max_lens[i])`.
pub fn greedy_decode_many<M: StepModel>(
    model: &M,
    sources: &[&[SymbolId]],
    max_lens: &[usize],
) -> Result<Vec<Hypothesis<M::State>>, ModelError> {
    let mut hyps = sources
        .iter()
        .map(|s| {
            Ok(Hypothesis {
                symbols: Vec::new(),
                logprob: 0.0,
                state: model.start(s)?,
                finished: false,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let mut steps = vec![0; hyps.len()];
    loop {
        let active: Vec<usize> = (0..hyps.len())
            .filter(|&i| !hyps[i].finished && steps[i] < max_lens[i])
            .collect();
        if active.is_empty() {
            break;
        }
        let states: Vec<&M::State> = active.iter().map(|&i| &hyps[i].state).collect();
        let prev: Vec<SymbolId> = active.iter().map(|&i| last_or_bos(&hyps[i].symbols)).collect();
        let out = model.step_batch(&states, &prev)?;
        for (&i, (dist, next)) in active.iter().zip(out) {
            let t = argmax(&dist);
            let h = &mut hyps[i];
            h.logprob += dist[t];
            h.state = next;
            steps[i] += 1;
            if t == 0 {
                h.finished = true;
            } else {
                h.symbols.push(model.target_symbol(t));
            }
        }
    }
    Ok(hyps)
}

/// Top predictions for many sources: batched greedy decoding for width 1,
/// otherwise one beam search per source.
pub fn predict_forms(model: &Model, sources: &[&[SymbolId]], width: usize) -> Result<Vec<Option<String>>, ModelError> {
    let render = |h: &Hypothesis| h.finished.then(|| model.alphabet().decode_chars(&h.symbols));
    if width == 1 {
        let max_lens: Vec<usize> = sources.iter().map(|s| model.max_decode_len(s.len())).collect();
        return Ok(greedy_decode_many(model, sources, &max_lens)?.iter().map(render).collect());
    }
    sources.iter().map(|s| predict_form(model, s, width)).collect()
}

/// Top beam prediction rendered as a string, or `None` when decoding did not
/// finish.
pub fn predict_form(model: &Model, source: &[SymbolId], width: usize) -> Result<Option<String>, ModelError> {
    let max_len = model.max_decode_len(source.len());
    let hyp = if width == 1 {
        greedy_decode(model, source, max_len)?
    } else {
        beam_decode(model, source, width, max_len)?.swap_remove(0)
    };
    Ok(hyp.finished.then(|| model.alphabet().decode_chars(&hyp.symbols)))
}
