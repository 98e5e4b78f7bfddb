use std::sync::Arc;

use ndiff::{Array, Graph, NdError, ParamStore, Var};

use super::{Dropout, Init, ModelConfig, ModelError, ParamSpec};
use crate::corpus::{SymbolId, BOS};

type R<T> = Result<T, NdError>;

#[derive(Clone, Debug)]
pub(super) struct Cell {
    w_ih: usize,
    w_hh: usize,
    bias: usize,
    hidden: usize,
}

#[derive(Clone, Debug)]
pub(super) struct Linear {
    w: usize,
    b: usize,
}

#[derive(Clone, Debug)]
pub(super) struct Attention {
    w_enc: usize,
    w_dec: usize,
    bias: usize,
    v: usize,
}

#[derive(Clone, Debug)]
pub(super) struct Layout {
    src_embed: usize,
    tgt_embed: usize,
    /// `enc[layer][direction]`
    enc: Vec<Vec<Cell>>,
    /// `(h, c)` projections from concatenated directions, bidirectional only.
    bridge: Vec<(Linear, Linear)>,
    dec: Vec<Cell>,
    pub(super) attn: Option<Attention>,
    out: Linear,
}

fn directions(c: &ModelConfig) -> &'static [&'static str] {
    if c.arch.bidirectional() {
        &["fwd", "bwd"]
    } else {
        &["fwd"]
    }
}

pub(super) fn param_specs(c: &ModelConfig, vocab: usize, targets: usize) -> Vec<ParamSpec> {
    let u = Init::Uniform(c.init_scale);
    let (e, h, a) = (c.embedding_dim, c.hidden_dim, c.attention_dim);
    let dirs = directions(c);
    let d = c.encoder_dim();
    let mut s = vec![
        ParamSpec::new("src_embed", [vocab, e], u),
        ParamSpec::new("tgt_embed", [vocab, e], u),
    ];
    let cell = |s: &mut Vec<ParamSpec>, prefix: String, input: usize| {
        s.push(ParamSpec::new(format!("{prefix}.w_ih"), [input, 4 * h], u));
        s.push(ParamSpec::new(format!("{prefix}.w_hh"), [h, 4 * h], u));
        s.push(ParamSpec::new(format!("{prefix}.bias"), [1, 4 * h], u));
    };
    for l in 0..c.lstm_layers {
        let input = if l == 0 { e } else { h * dirs.len() };
        for dir in dirs {
            cell(&mut s, format!("enc.l{l}.{dir}"), input);
        }
    }
    if c.arch.bidirectional() {
        for l in 0..c.lstm_layers {
            for part in ["h", "c"] {
                s.push(ParamSpec::new(format!("bridge.l{l}.{part}.w"), [2 * h, h], u));
                s.push(ParamSpec::new(format!("bridge.l{l}.{part}.b"), [1, h], u));
            }
        }
    }
    for l in 0..c.lstm_layers {
        cell(&mut s, format!("dec.l{l}"), if l == 0 { e + d } else { h });
    }
    if c.arch.has_attention() {
        s.push(ParamSpec::new("attn.w_enc", [d, a], u));
        s.push(ParamSpec::new("attn.w_dec", [h, a], u));
        s.push(ParamSpec::new("attn.bias", [1, a], u));
        s.push(ParamSpec::new("attn.v", [a, 1], u));
    }
    let feat = if c.arch.has_attention() { h + d } else { h };
    s.push(ParamSpec::new("out.w", [feat, targets], u));
    s.push(ParamSpec::new("out.b", [1, targets], u));
    s
}

impl Layout {
    pub(super) fn resolve(c: &ModelConfig, p: &ParamStore) -> Result<Self, ModelError> {
        let id = |n: String| p.id(&n);
        let cell = |prefix: String| -> Result<Cell, NdError> {
            Ok(Cell {
                w_ih: id(format!("{prefix}.w_ih"))?,
                w_hh: id(format!("{prefix}.w_hh"))?,
                bias: id(format!("{prefix}.bias"))?,
                hidden: c.hidden_dim,
            })
        };
        let linear = |prefix: String| -> Result<Linear, NdError> {
            Ok(Linear {
                w: id(format!("{prefix}.w"))?,
                b: id(format!("{prefix}.b"))?,
            })
        };
        let enc = (0..c.lstm_layers)
            .map(|l| directions(c).iter().map(|d| cell(format!("enc.l{l}.{d}"))).collect())
            .collect::<R<Vec<Vec<Cell>>>>()?;
        let bridge = if c.arch.bidirectional() {
            (0..c.lstm_layers)
                .map(|l| Ok((linear(format!("bridge.l{l}.h"))?, linear(format!("bridge.l{l}.c"))?)))
                .collect::<R<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let attn = if c.arch.has_attention() {
            Some(Attention {
                w_enc: id("attn.w_enc".into())?,
                w_dec: id("attn.w_dec".into())?,
                bias: id("attn.bias".into())?,
                v: id("attn.v".into())?,
            })
        } else {
            None
        };
        Ok(Self {
            src_embed: id("src_embed".into())?,
            tgt_embed: id("tgt_embed".into())?,
            enc,
            bridge,
            dec: (0..c.lstm_layers).map(|l| cell(format!("dec.l{l}"))).collect::<R<_>>()?,
            attn,
            out: linear("out".into())?,
        })
    }
}

fn affine(g: &mut Graph, p: &[Var], x: Var, lin: &Linear) -> R<Var> {
    let y = g.matmul(x, p[lin.w])?;
    g.add(y, p[lin.b])
}

/// One LSTM update given the precomputed input projection `xw = x·W_ih + b`.
/// Gate order in the 4H columns: input, forget, candidate, output.
fn cell_step(g: &mut Graph, p: &[Var], cell: &Cell, xw: Var, h: Var, c: Var) -> R<(Var, Var)> {
    let hd = cell.hidden;
    let hh = g.matmul(h, p[cell.w_hh])?;
    let gates = g.add(xw, hh)?;
    let i = g.slice(gates, 1, 0, hd)?;
    let f = g.slice(gates, 1, hd, hd)?;
    let cand = g.slice(gates, 1, 2 * hd, hd)?;
    let o = g.slice(gates, 1, 3 * hd, hd)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let cand = g.tanh(cand);
    let o = g.sigmoid(o);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c2 = g.add(keep, write)?;
    let tc = g.tanh(c2);
    let h2 = g.mul(o, tc)?;
    Ok((h2, c2))
}

/// Runs one direction over all rows of `x`. Outputs are in position order.
fn run_direction(g: &mut Graph, p: &[Var], cell: &Cell, x: Var, reverse: bool) -> R<(Var, Var, Var)> {
    let len = g.value(x).shape()[0];
    let xw = g.matmul(x, p[cell.w_ih])?;
    let xw = g.add(xw, p[cell.bias])?;
    let mut h = g.constant(Array::zeros(&[1, cell.hidden]));
    let mut c = g.constant(Array::zeros(&[1, cell.hidden]));
    let mut outs = vec![h; len];
    for k in 0..len {
        let t = if reverse { len - 1 - k } else { k };
        let row = g.slice(xw, 0, t, 1)?;
        (h, c) = cell_step(g, p, cell, row, h, c)?;
        outs[t] = h;
    }
    let stacked = g.concat(&outs, 0)?;
    Ok((stacked, h, c))
}

pub(super) struct Encoded {
    enc: Var,
    proj: Option<Var>,
    summary: Var,
    h: Vec<Var>,
    c: Vec<Var>,
}

pub(super) fn project_memory(g: &mut Graph, p: &[Var], a: &Attention, enc: Var) -> R<Var> {
    let proj = g.matmul(enc, p[a.w_enc])?;
    g.add(proj, p[a.bias])
}

pub(super) fn encode_graph(
    g: &mut Graph,
    p: &[Var],
    lay: &Layout,
    source: &[SymbolId],
    drop: &mut Dropout,
) -> R<Encoded> {
    let emb = g.embedding(p[lay.src_embed], source)?;
    let mut x = drop.apply(g, emb)?;
    let (mut h0, mut c0) = (Vec::new(), Vec::new());
    let mut summary = x;
    for (l, cells) in lay.enc.iter().enumerate() {
        if l > 0 {
            x = drop.apply(g, x)?;
        }
        let (fo, fh, fc) = run_direction(g, p, &cells[0], x, false)?;
        if let Some(bwd) = cells.get(1) {
            let (bo, bh, bc) = run_direction(g, p, bwd, x, true)?;
            x = g.concat(&[fo, bo], 1)?;
            let hcat = g.concat(&[fh, bh], 1)?;
            let ccat = g.concat(&[fc, bc], 1)?;
            let (hb, cb) = &lay.bridge[l];
            let hi = affine(g, p, hcat, hb)?;
            h0.push(g.tanh(hi));
            c0.push(affine(g, p, ccat, cb)?);
            summary = hcat;
        } else {
            x = fo;
            h0.push(fh);
            c0.push(fc);
            summary = fh;
        }
    }
    let proj = match &lay.attn {
        Some(a) => Some(project_memory(g, p, a, x)?),
        None => None,
    };
    Ok(Encoded {
        enc: x,
        proj,
        summary,
        h: h0,
        c: c0,
    })
}

/// Additive attention: `softmax(v · tanh(W_enc e_j + b + W_dec q))`.
pub(super) fn attend_graph(
    g: &mut Graph,
    p: &[Var],
    a: &Attention,
    enc: Var,
    proj: Var,
    query: Var,
) -> R<(Var, Var)> {
    let q = g.matmul(query, p[a.w_dec])?;
    let s = g.add(proj, q)?;
    let s = g.tanh(s);
    let e = g.matmul(s, p[a.v])?;
    let e = g.transpose(e)?;
    let w = g.softmax(e)?;
    let ctx = g.matmul(w, enc)?;
    Ok((ctx, w))
}

/// One decoder step: returns `[1, targets]` logits and the new per-layer
/// `(h, c)`. Attention models query with the previous top-layer `h`;
/// no-attention models read the fixed encoder summary instead.
fn step_graph(
    g: &mut Graph,
    p: &[Var],
    lay: &Layout,
    mem: &Encoded,
    h: &[Var],
    c: &[Var],
    prev: SymbolId,
    drop: &mut Dropout,
) -> R<(Var, Vec<Var>, Vec<Var>)> {
    let emb = g.embedding(p[lay.tgt_embed], &[prev])?;
    let emb = drop.apply(g, emb)?;
    let ctx = match (&lay.attn, mem.proj) {
        (Some(a), Some(proj)) => attend_graph(g, p, a, mem.enc, proj, h[h.len() - 1])?.0,
        _ => mem.summary,
    };
    let mut x = g.concat(&[emb, ctx], 1)?;
    let (mut nh, mut nc) = (Vec::with_capacity(h.len()), Vec::with_capacity(c.len()));
    for (l, cell) in lay.dec.iter().enumerate() {
        if l > 0 {
            x = drop.apply(g, x)?;
        }
        let xw = g.matmul(x, p[cell.w_ih])?;
        let xw = g.add(xw, p[cell.bias])?;
        let (h2, c2) = cell_step(g, p, cell, xw, h[l], c[l])?;
        nh.push(h2);
        nc.push(c2);
        x = h2;
    }
    let top = drop.apply(g, x)?;
    let feat = if lay.attn.is_some() {
        g.concat(&[top, ctx], 1)?
    } else {
        top
    };
    Ok((affine(g, p, feat, &lay.out)?, nh, nc))
}

/// Logits for every step of the teacher-forced pass, stacked `[k+1, targets]`.
pub(super) fn teacher_forced_logits(
    g: &mut Graph,
    p: &[Var],
    lay: &Layout,
    source: &[SymbolId],
    target: &[SymbolId],
    drop: &mut Dropout,
) -> R<Var> {
    let mem = encode_graph(g, p, lay, source, drop)?;
    let (mut h, mut c) = (mem.h.clone(), mem.c.clone());
    let mut rows = Vec::with_capacity(target.len() + 1);
    let inputs = std::iter::once(BOS).chain(target.iter().copied());
    for prev in inputs {
        let (logits, nh, nc) = step_graph(g, p, lay, &mem, &h, &c, prev, drop)?;
        rows.push(logits);
        h = nh;
        c = nc;
    }
    g.concat(&rows, 0)
}

#[derive(Debug)]
pub(super) struct Memory {
    pub(super) enc: Arc<Array>,
    proj: Option<Arc<Array>>,
    summary: Arc<Array>,
}

#[derive(Clone, Debug)]
pub(super) struct State {
    h: Vec<Arc<Array>>,
    c: Vec<Arc<Array>>,
    pub(super) mem: Arc<Memory>,
}

impl State {
    pub(super) fn capture(g: &Graph, e: &Encoded) -> Self {
        Self {
            h: e.h.iter().map(|&v| g.value_arc(v)).collect(),
            c: e.c.iter().map(|&v| g.value_arc(v)).collect(),
            mem: Arc::new(Memory {
                enc: g.value_arc(e.enc),
                proj: e.proj.map(|v| g.value_arc(v)),
                summary: g.value_arc(e.summary),
            }),
        }
    }
}

pub(super) fn step_inference(
    g: &mut Graph,
    p: &[Var],
    lay: &Layout,
    s: &State,
    prev: SymbolId,
) -> R<(Var, State)> {
    let mem = Encoded {
        enc: g.constant(Arc::clone(&s.mem.enc)),
        proj: s.mem.proj.as_ref().map(|a| g.constant(Arc::clone(a))),
        summary: g.constant(Arc::clone(&s.mem.summary)),
        h: Vec::new(),
        c: Vec::new(),
    };
    let h: Vec<Var> = s.h.iter().map(|a| g.constant(Arc::clone(a))).collect();
    let c: Vec<Var> = s.c.iter().map(|a| g.constant(Arc::clone(a))).collect();
    let (logits, nh, nc) = step_graph(g, p, lay, &mem, &h, &c, prev, &mut Dropout::off())?;
    Ok((
        logits,
        State {
            h: nh.iter().map(|&v| g.value_arc(v)).collect(),
            c: nc.iter().map(|&v| g.value_arc(v)).collect(),
            mem: Arc::clone(&s.mem),
        },
    ))
}
