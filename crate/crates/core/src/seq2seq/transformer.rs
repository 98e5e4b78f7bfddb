use std::sync::Arc;

use ndiff::{Array, Graph, NdError, ParamStore, Var};

use super::{Dropout, Init, ModelConfig, ModelError, ParamSpec};
use crate::corpus::{SymbolId, BOS};

type R<T> = Result<T, NdError>;

const LN_EPS: f64 = 1e-5;
const MASKED: f64 = -1e9;

#[derive(Clone, Debug)]
struct Norm {
    g: usize,
    b: usize,
}

#[derive(Clone, Debug)]
struct Linear {
    w: usize,
    b: usize,
}

/// The key projection has no bias: it would add a per-query constant to
/// every score and cancel in the softmax.
#[derive(Clone, Debug)]
struct Mha {
    q: Linear,
    k: usize,
    v: Linear,
    o: Linear,
}

#[derive(Clone, Debug)]
struct Ffn {
    l1: Linear,
    l2: Linear,
}

#[derive(Clone, Debug)]
struct EncLayer {
    ln1: Norm,
    attn: Mha,
    ln2: Norm,
    ffn: Ffn,
}

#[derive(Clone, Debug)]
struct DecLayer {
    ln1: Norm,
    self_attn: Mha,
    ln2: Norm,
    cross: Mha,
    ln3: Norm,
    ffn: Ffn,
}

#[derive(Clone, Debug)]
pub(super) struct Layout {
    src_embed: usize,
    tgt_embed: usize,
    enc: Vec<EncLayer>,
    enc_ln: Norm,
    dec: Vec<DecLayer>,
    dec_ln: Norm,
    out: Linear,
    dim: usize,
    heads: usize,
}

pub(super) fn param_specs(c: &ModelConfig, vocab: usize, targets: usize) -> Vec<ParamSpec> {
    let (d, f) = (c.model_dim, c.ffn_dim);
    let w = |fan_in: usize| Init::Normal(1.0 / (fan_in as f64).sqrt());
    let emb = Init::Normal(1.0 / (d as f64).sqrt());
    let mut s = vec![
        ParamSpec::new("src_embed", [vocab, d], emb),
        ParamSpec::new("tgt_embed", [vocab, d], emb),
    ];
    let linear = |s: &mut Vec<ParamSpec>, name: String, i: usize, o: usize| {
        s.push(ParamSpec::new(format!("{name}.w"), [i, o], w(i)));
        s.push(ParamSpec::new(format!("{name}.b"), [1, o], Init::Zeros));
    };
    let norm = |s: &mut Vec<ParamSpec>, name: String| {
        s.push(ParamSpec::new(format!("{name}.g"), [1, d], Init::Ones));
        s.push(ParamSpec::new(format!("{name}.b"), [1, d], Init::Zeros));
    };
    let mha = |s: &mut Vec<ParamSpec>, name: String| {
        linear(s, format!("{name}.q"), d, d);
        s.push(ParamSpec::new(format!("{name}.k.w"), [d, d], w(d)));
        linear(s, format!("{name}.v"), d, d);
        linear(s, format!("{name}.o"), d, d);
    };
    let ffn = |s: &mut Vec<ParamSpec>, name: String| {
        linear(s, format!("{name}.1"), d, f);
        linear(s, format!("{name}.2"), f, d);
    };
    for l in 0..c.num_layers {
        norm(&mut s, format!("enc.l{l}.ln1"));
        mha(&mut s, format!("enc.l{l}.attn"));
        norm(&mut s, format!("enc.l{l}.ln2"));
        ffn(&mut s, format!("enc.l{l}.ffn"));
    }
    norm(&mut s, "enc.ln".into());
    for l in 0..c.num_layers {
        norm(&mut s, format!("dec.l{l}.ln1"));
        mha(&mut s, format!("dec.l{l}.self"));
        norm(&mut s, format!("dec.l{l}.ln2"));
        mha(&mut s, format!("dec.l{l}.cross"));
        norm(&mut s, format!("dec.l{l}.ln3"));
        ffn(&mut s, format!("dec.l{l}.ffn"));
    }
    norm(&mut s, "dec.ln".into());
    linear(&mut s, "out".into(), d, targets);
    s
}

impl Layout {
    pub(super) fn resolve(c: &ModelConfig, p: &ParamStore) -> Result<Self, ModelError> {
        let id = |n: String| p.id(&n);
        let linear = |n: String| -> R<Linear> {
            Ok(Linear {
                w: id(format!("{n}.w"))?,
                b: id(format!("{n}.b"))?,
            })
        };
        let norm = |n: String| -> R<Norm> {
            Ok(Norm {
                g: id(format!("{n}.g"))?,
                b: id(format!("{n}.b"))?,
            })
        };
        let mha = |n: String| -> R<Mha> {
            Ok(Mha {
                q: linear(format!("{n}.q"))?,
                k: id(format!("{n}.k.w"))?,
                v: linear(format!("{n}.v"))?,
                o: linear(format!("{n}.o"))?,
            })
        };
        let ffn = |n: String| -> R<Ffn> {
            Ok(Ffn {
                l1: linear(format!("{n}.1"))?,
                l2: linear(format!("{n}.2"))?,
            })
        };
        let enc = (0..c.num_layers)
            .map(|l| {
                Ok(EncLayer {
                    ln1: norm(format!("enc.l{l}.ln1"))?,
                    attn: mha(format!("enc.l{l}.attn"))?,
                    ln2: norm(format!("enc.l{l}.ln2"))?,
                    ffn: ffn(format!("enc.l{l}.ffn"))?,
                })
            })
            .collect::<R<_>>()?;
        let dec = (0..c.num_layers)
            .map(|l| {
                Ok(DecLayer {
                    ln1: norm(format!("dec.l{l}.ln1"))?,
                    self_attn: mha(format!("dec.l{l}.self"))?,
                    ln2: norm(format!("dec.l{l}.ln2"))?,
                    cross: mha(format!("dec.l{l}.cross"))?,
                    ln3: norm(format!("dec.l{l}.ln3"))?,
                    ffn: ffn(format!("dec.l{l}.ffn"))?,
                })
            })
            .collect::<R<_>>()?;
        Ok(Self {
            src_embed: id("src_embed".into())?,
            tgt_embed: id("tgt_embed".into())?,
            enc,
            enc_ln: norm("enc.ln".into())?,
            dec,
            dec_ln: norm("dec.ln".into())?,
            out: linear("out".into())?,
            dim: c.model_dim,
            heads: c.num_heads,
        })
    }
}

/// Sinusoidal position table for positions `start..start + n`.
pub fn positional_encoding(start: usize, n: usize, dim: usize) -> Array {
    let mut data = Vec::with_capacity(n * dim);
    for pos in start..start + n {
        for j in 0..dim {
            let rate = 10000f64.powf((2 * (j / 2)) as f64 / dim as f64);
            let angle = pos as f64 / rate;
            data.push(if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Array::new(vec![n, dim], data).expect("positional table shape")
}

fn affine(g: &mut Graph, p: &[Var], x: Var, l: &Linear) -> R<Var> {
    let y = g.matmul(x, p[l.w])?;
    g.add(y, p[l.b])
}

fn norm(g: &mut Graph, p: &[Var], x: Var, n: &Norm) -> R<Var> {
    let y = g.layer_norm(x, LN_EPS)?;
    let y = g.mul(y, p[n.g])?;
    g.add(y, p[n.b])
}

/// Multi-head attention over already projected queries, keys and values.
fn heads(g: &mut Graph, lay: &Layout, q: Var, k: Var, v: Var, mask: Option<Var>) -> R<Var> {
    let dh = lay.dim / lay.heads;
    let mut outs = Vec::with_capacity(lay.heads);
    for h in 0..lay.heads {
        let qh = g.slice(q, 1, h * dh, dh)?;
        let kh = g.slice(k, 1, h * dh, dh)?;
        let vh = g.slice(v, 1, h * dh, dh)?;
        outs.push(g.scaled_dot_product(qh, kh, vh, mask)?.0);
    }
    g.concat(&outs, 1)
}

fn ffn(g: &mut Graph, p: &[Var], x: Var, f: &Ffn, drop: &mut Dropout) -> R<Var> {
    let h = affine(g, p, x, &f.l1)?;
    let h = g.relu(h);
    let h = drop.apply(g, h)?;
    affine(g, p, h, &f.l2)
}

fn residual(g: &mut Graph, x: Var, y: Var, drop: &mut Dropout) -> R<Var> {
    let y = drop.apply(g, y)?;
    g.add(x, y)
}

/// Several sequences packed row-wise into one matrix: `(start, len)` per
/// sequence.
type Segments = [(usize, usize)];

fn segments<T>(seqs: &[&[T]], extra: usize) -> Vec<(usize, usize)> {
    let mut start = 0;
    seqs.iter()
        .map(|s| {
            let seg = (start, s.len() + extra);
            start += seg.1;
            seg
        })
        .collect()
}

fn rows(g: &mut Graph, x: Var, seg: (usize, usize), whole: bool) -> R<Var> {
    if whole {
        Ok(x)
    } else {
        g.slice(x, 0, seg.0, seg.1)
    }
}

/// Attention of each query segment over the matching key/value segment,
/// with an optional mask per segment.
fn packed_heads(
    g: &mut Graph,
    lay: &Layout,
    (q, q_segs): (Var, &Segments),
    (k, v, kv_segs): (Var, Var, &Segments),
    masks: Option<&[Var]>,
) -> R<Var> {
    let whole = q_segs.len() == 1;
    let mut outs = Vec::with_capacity(q_segs.len());
    for (i, (&qs, &ks)) in q_segs.iter().zip(kv_segs).enumerate() {
        let qi = rows(g, q, qs, whole)?;
        let ki = rows(g, k, ks, whole)?;
        let vi = rows(g, v, ks, whole)?;
        outs.push(heads(g, lay, qi, ki, vi, masks.map(|m| m[i]))?);
    }
    if whole {
        Ok(outs[0])
    } else {
        g.concat(&outs, 0)
    }
}

fn embed_packed(g: &mut Graph, p: &[Var], lay: &Layout, table: usize, seqs: &[Vec<SymbolId>]) -> R<Var> {
    let ids: Vec<SymbolId> = seqs.iter().flatten().copied().collect();
    let e = g.embedding(p[table], &ids)?;
    let e = g.scale(e, (lay.dim as f64).sqrt());
    let mut pe = Vec::with_capacity(ids.len() * lay.dim);
    for s in seqs {
        pe.extend_from_slice(positional_encoding(0, s.len(), lay.dim).data());
    }
    let pe = g.constant(Array::new(vec![ids.len(), lay.dim], pe)?);
    g.add(e, pe)
}

/// Encoder over one or more sources packed row-wise. Returns the memory
/// rows and each source's segment.
pub(super) fn encode_graph(
    g: &mut Graph,
    p: &[Var],
    lay: &Layout,
    sources: &[&[SymbolId]],
    drop: &mut Dropout,
) -> R<(Var, Vec<(usize, usize)>)> {
    let segs = segments(sources, 0);
    let seqs: Vec<Vec<SymbolId>> = sources.iter().map(|s| s.to_vec()).collect();
    let x = embed_packed(g, p, lay, lay.src_embed, &seqs)?;
    let mut x = drop.apply(g, x)?;
    for layer in &lay.enc {
        let y = norm(g, p, x, &layer.ln1)?;
        let q = affine(g, p, y, &layer.attn.q)?;
        let k = g.matmul(y, p[layer.attn.k])?;
        let v = affine(g, p, y, &layer.attn.v)?;
        let a = packed_heads(g, lay, (q, &segs), (k, v, &segs), None)?;
        let a = affine(g, p, a, &layer.attn.o)?;
        x = residual(g, x, a, drop)?;
        let y = norm(g, p, x, &layer.ln2)?;
        let f = ffn(g, p, y, &layer.ffn, drop)?;
        x = residual(g, x, f, drop)?;
    }
    Ok((norm(g, p, x, &lay.enc_ln)?, segs))
}

fn cross_kv(g: &mut Graph, p: &[Var], lay: &Layout, mem: Var) -> R<Vec<(Var, Var)>> {
    lay.dec
        .iter()
        .map(|l| Ok((g.matmul(mem, p[l.cross.k])?, affine(g, p, mem, &l.cross.v)?)))
        .collect()
}

fn causal_mask(n: usize) -> Array {
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            data[i * n + j] = MASKED;
        }
    }
    Array::new(vec![n, n], data).expect("mask shape")
}

/// Teacher-forced logits for a batch of `(source, target)` pairs, one row
/// per decoder input (BOS then the target symbols), packed in batch order.
pub(super) fn teacher_forced_logits(
    g: &mut Graph,
    p: &[Var],
    lay: &Layout,
    batch: &[(&[SymbolId], &[SymbolId])],
    drop: &mut Dropout,
) -> R<Var> {
    let sources: Vec<&[SymbolId]> = batch.iter().map(|b| b.0).collect();
    let (mem, mem_segs) = encode_graph(g, p, lay, &sources, drop)?;
    let cross = cross_kv(g, p, lay, mem)?;
    let inputs: Vec<Vec<SymbolId>> = batch
        .iter()
        .map(|b| std::iter::once(BOS).chain(b.1.iter().copied()).collect())
        .collect();
    let dec_segs: Vec<(usize, usize)> = segments(&inputs.iter().map(Vec::as_slice).collect::<Vec<_>>(), 0);
    let masks: Vec<Var> = inputs.iter().map(|i| g.constant(causal_mask(i.len()))).collect();
    let x = embed_packed(g, p, lay, lay.tgt_embed, &inputs)?;
    let mut x = drop.apply(g, x)?;
    for (l, layer) in lay.dec.iter().enumerate() {
        let y = norm(g, p, x, &layer.ln1)?;
        let q = affine(g, p, y, &layer.self_attn.q)?;
        let k = g.matmul(y, p[layer.self_attn.k])?;
        let v = affine(g, p, y, &layer.self_attn.v)?;
        let a = packed_heads(g, lay, (q, &dec_segs), (k, v, &dec_segs), Some(&masks))?;
        let a = affine(g, p, a, &layer.self_attn.o)?;
        x = residual(g, x, a, drop)?;

        let y = norm(g, p, x, &layer.ln2)?;
        let q = affine(g, p, y, &layer.cross.q)?;
        let (mk, mv) = cross[l];
        let a = packed_heads(g, lay, (q, &dec_segs), (mk, mv, &mem_segs), None)?;
        let a = affine(g, p, a, &layer.cross.o)?;
        x = residual(g, x, a, drop)?;

        let y = norm(g, p, x, &layer.ln3)?;
        let f = ffn(g, p, y, &layer.ffn, drop)?;
        x = residual(g, x, f, drop)?;
    }
    let x = norm(g, p, x, &lay.dec_ln)?;
    affine(g, p, x, &lay.out)
}

#[derive(Debug)]
pub(super) struct Memory {
    pub(super) memory: Arc<Array>,
    cross: Vec<(Arc<Array>, Arc<Array>)>,
}

#[derive(Clone, Debug)]
pub(super) struct State {
    /// Per-layer self-attention keys and values of the prefix fed so far.
    cache: Vec<(Arc<Array>, Arc<Array>)>,
    pos: usize,
    pub(super) mem: Arc<Memory>,
}

impl State {
    pub(super) fn capture(g: &mut Graph, p: &[Var], lay: &Layout, mem: Var) -> R<Self> {
        let cross = cross_kv(g, p, lay, mem)?;
        Ok(Self {
            cache: Vec::new(),
            pos: 0,
            mem: Arc::new(Memory {
                memory: g.value_arc(mem),
                cross: cross.iter().map(|&(k, v)| (g.value_arc(k), g.value_arc(v))).collect(),
            }),
        })
    }
}

/// One decoding step for several independent prefixes. Row `i` feeds
/// `prev[i]` to the prefix summarized by `states[i]`; position-wise layers
/// run on all rows together, attention runs per row over its own cache and
/// memory. Returns `[rows, targets]` logits and the advanced states.
pub(super) fn step_batch(
    g: &mut Graph,
    p: &[Var],
    lay: &Layout,
    states: &[&State],
    prev: &[SymbolId],
) -> R<(Var, Vec<State>)> {
    let n = states.len();
    let e = g.embedding(p[lay.tgt_embed], prev)?;
    let e = g.scale(e, (lay.dim as f64).sqrt());
    let mut pe = Vec::with_capacity(n * lay.dim);
    for s in states {
        pe.extend_from_slice(positional_encoding(s.pos, 1, lay.dim).data());
    }
    let pe = g.constant(Array::new(vec![n, lay.dim], pe)?);
    let mut x = g.add(e, pe)?;
    let mut caches: Vec<Vec<(Arc<Array>, Arc<Array>)>> = vec![Vec::with_capacity(lay.dec.len()); n];
    for (l, layer) in lay.dec.iter().enumerate() {
        let y = norm(g, p, x, &layer.ln1)?;
        let q = affine(g, p, y, &layer.self_attn.q)?;
        let k = g.matmul(y, p[layer.self_attn.k])?;
        let v = affine(g, p, y, &layer.self_attn.v)?;
        let mut rows = Vec::with_capacity(n);
        for (i, s) in states.iter().enumerate() {
            let qi = g.slice(q, 0, i, 1)?;
            let mut ki = g.slice(k, 0, i, 1)?;
            let mut vi = g.slice(v, 0, i, 1)?;
            if let Some((ck, cv)) = s.cache.get(l) {
                let (ck, cv) = (g.constant(Arc::clone(ck)), g.constant(Arc::clone(cv)));
                ki = g.concat(&[ck, ki], 0)?;
                vi = g.concat(&[cv, vi], 0)?;
            }
            caches[i].push((g.value_arc(ki), g.value_arc(vi)));
            rows.push(heads(g, lay, qi, ki, vi, None)?);
        }
        let a = g.concat(&rows, 0)?;
        let a = affine(g, p, a, &layer.self_attn.o)?;
        x = g.add(x, a)?;

        let y = norm(g, p, x, &layer.ln2)?;
        let q = affine(g, p, y, &layer.cross.q)?;
        let mut rows = Vec::with_capacity(n);
        for (i, s) in states.iter().enumerate() {
            let qi = g.slice(q, 0, i, 1)?;
            let (mk, mv) = &s.mem.cross[l];
            let (mk, mv) = (g.constant(Arc::clone(mk)), g.constant(Arc::clone(mv)));
            rows.push(heads(g, lay, qi, mk, mv, None)?);
        }
        let a = g.concat(&rows, 0)?;
        let a = affine(g, p, a, &layer.cross.o)?;
        x = g.add(x, a)?;

        let y = norm(g, p, x, &layer.ln3)?;
        let f = ffn(g, p, y, &layer.ffn, &mut Dropout::off())?;
        x = g.add(x, f)?;
    }
    let x = norm(g, p, x, &lay.dec_ln)?;
    let logits = affine(g, p, x, &lay.out)?;
    let next = states
        .iter()
        .zip(caches)
        .map(|(s, cache)| State {
            cache,
            pos: s.pos + 1,
            mem: Arc::clone(&s.mem),
        })
        .collect();
    Ok((logits, next))
}
