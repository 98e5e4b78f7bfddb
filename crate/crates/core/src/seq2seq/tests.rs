use super::*;
use crate::corpus::{Alphabet, BOS};
use ndiff::{grad_check_params, Graph, SeededRng};

fn toy_alphabet() -> Alphabet {
    let mut a = Alphabet::new();
    a.observe_text(["abcde"]);
    a.add_tag("PST");
    a
}

fn tiny(arch: Architecture, seed: u64) -> ModelConfig {
    ModelConfig {
        embedding_dim: 4,
        hidden_dim: 3,
        attention_dim: 3,
        model_dim: 8,
        ffn_dim: 12,
        num_layers: 2,
        num_heads: 2,
        dropout: 0.0,
        init_scale: 1.0,
        ..ModelConfig::new(arch, seed)
    }
}

fn tiny_model(arch: Architecture, seed: u64) -> Model {
    Model::build(tiny(arch, seed), toy_alphabet()).unwrap()
}

fn src(m: &Model, lemma: &str) -> Vec<SymbolId> {
    m.alphabet().encode_source(lemma, &["PST".into()]).unwrap()
}

fn chain_logprob(m: &Model, source: &[SymbolId], target: &[SymbolId]) -> f64 {
    let mut state = m.initial_state(source).unwrap();
    let mut prev = BOS;
    let mut total = 0.0;
    for &s in target.iter().chain(std::iter::once(&crate::corpus::EOS)) {
        let (lp, next) = m.decode_step(&state, prev).unwrap();
        total += lp[m.alphabet().target_index(s).unwrap()];
        state = next;
        prev = s;
    }
    total
}

#[test]
fn same_seed_gives_identical_parameters() {
    for arch in Architecture::ALL {
        let a = tiny_model(arch, 5);
        let b = tiny_model(arch, 5);
        assert!(a.params().bit_eq(b.params()), "{arch}");
        let c = tiny_model(arch, 6);
        assert!(!a.params().bit_eq(c.params()), "{arch}");
    }
}

#[test]
fn param_count_matches_built_model() {
    for arch in Architecture::ALL {
        let m = tiny_model(arch, 1);
        let a = m.alphabet();
        assert_eq!(param_count(m.config(), a.len(), a.num_targets()), m.num_params());
    }
}

#[test]
fn encoder_width_follows_directionality() {
    let bi = tiny_model(Architecture::BilstmAttn, 1);
    let uni = tiny_model(Architecture::UnilstmAttn, 1);
    let s = src(&bi, "abc");
    assert_eq!(bi.encode(&s).unwrap().outputs.shape(), &[4, 6]);
    assert_eq!(uni.encode(&s).unwrap().outputs.shape(), &[4, 3]);
}

#[test]
fn unidirectional_encoder_is_causal() {
    for arch in [Architecture::UnilstmAttn, Architecture::UnilstmNoattn] {
        let m = tiny_model(arch, 3);
        let a = m.encode(&src(&m, "abcd")).unwrap().outputs;
        let b = m.encode(&src(&m, "abed")).unwrap().outputs;
        let width = a.shape()[1];
        assert_eq!(a.data()[..3 * width], b.data()[..3 * width]);
        assert_ne!(a.data()[3 * width..4 * width], b.data()[3 * width..4 * width]);
    }
}

#[test]
fn bidirectional_encoder_sees_the_future() {
    let m = tiny_model(Architecture::BilstmAttn, 3);
    let a = m.encode(&src(&m, "abcd")).unwrap().outputs;
    let b = m.encode(&src(&m, "abce")).unwrap().outputs;
    assert_ne!(a.row(0), b.row(0));
}

#[test]
fn transformer_is_order_sensitive() {
    let m = tiny_model(Architecture::Transformer, 2);
    let ab = m.encode(&src(&m, "ab")).unwrap().outputs;
    let ba = m.encode(&src(&m, "ba")).unwrap().outputs;
    // Without positions, "ba" would give the rows of "ab" permuted.
    assert_ne!(ab.row(1), ba.row(2));
    assert_ne!(ab.row(2), ba.row(1));
}

#[test]
fn attention_weights_are_distributions() {
    let mut rng = SeededRng::new(9);
    for arch in [Architecture::BilstmAttn, Architecture::UnilstmAttn, Architecture::Transformer] {
        let m = tiny_model(arch, 4);
        let d = m.config().encoder_dim();
        let qdim = if arch.is_lstm() { m.config().hidden_dim } else { d };
        for _ in 0..100 {
            let len = 1 + rng.below(6);
            let enc = Array::new(vec![len, d], (0..len * d).map(|_| rng.gaussian()).collect()).unwrap();
            let q: Vec<f64> = (0..qdim).map(|_| rng.gaussian()).collect();
            let (_, w) = m.attend(&q, &enc).unwrap();
            assert!(w.iter().all(|&x| x >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_edge_cases() {
    let m = tiny_model(Architecture::BilstmAttn, 4);
    let one = Array::new(vec![1, 6], vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]).unwrap();
    let (ctx, w) = m.attend(&[0.3, 0.1, -0.2], &one).unwrap();
    assert_eq!(w, vec![1.0]);
    for (c, e) in ctx.iter().zip(one.data()) {
        assert!((c - e).abs() < 1e-15);
    }
    let row = [0.2, 0.1, -0.3, 0.0, 0.7, 0.1];
    let same = Array::new(vec![4, 6], row.repeat(4)).unwrap();
    let (_, w) = m.attend(&[0.3, 0.1, -0.2], &same).unwrap();
    assert!(w.iter().all(|&x| (x - 0.25).abs() < 1e-15));
}

#[test]
fn no_attention_models_have_no_attend() {
    let m = tiny_model(Architecture::UnilstmNoattn, 1);
    assert!(m.attend(&[0.0; 3], &Array::zeros(&[2, 3])).is_err());
}

#[test]
fn decode_step_is_a_deterministic_distribution() {
    for arch in Architecture::ALL {
        let m = tiny_model(arch, 7);
        let s0 = m.initial_state(&src(&m, "cab")).unwrap();
        let (lp, s1) = m.decode_step(&s0, BOS).unwrap();
        assert_eq!(lp.len(), m.alphabet().num_targets());
        let total: f64 = lp.iter().map(|x| x.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12, "{arch}: {total}");
        let (again, _) = m.decode_step(&s0, BOS).unwrap();
        assert_eq!(lp, again);
        let c = m.alphabet().char_id('c').unwrap();
        let (a, _) = m.decode_step(&s1, c).unwrap();
        let (b, _) = m.decode_step(&s1, c).unwrap();
        assert_eq!(a, b);
        assert_eq!(s1.steps(), 1);
    }
}

#[test]
fn zero_output_layer_gives_uniform_distribution() {
    for arch in Architecture::ALL {
        let mut m = tiny_model(arch, 7);
        for name in ["out.w", "out.b"] {
            let id = m.params().id(name).unwrap();
            m.params_mut().value_mut(id).data_mut().fill(0.0);
        }
        let t = m.alphabet().num_targets() as f64;
        let s = m.initial_state(&src(&m, "ab")).unwrap();
        let (lp, _) = m.decode_step(&s, BOS).unwrap();
        assert!(lp.iter().all(|&x| (x.exp() - 1.0 / t).abs() < 1e-15));
        // Closed form: (k + 1) ln T for a target of length k.
        let target = m.alphabet().encode_chars("bad").unwrap();
        let loss = m.loss(&src(&m, "ab"), &target).unwrap();
        assert!((loss - 4.0 * t.ln()).abs() < 1e-12, "{arch}: {loss}");
    }
}

#[test]
fn teacher_forcing_matches_step_chain() {
    let mut rng = SeededRng::new(21);
    let chars = ['a', 'b', 'c', 'd', 'e'];
    for arch in Architecture::ALL {
        for trial in 0..5 {
            let m = tiny_model(arch, 30 + trial);
            let rand_word = |rng: &mut SeededRng, n: usize| -> String {
                (0..n).map(|_| chars[rng.below(chars.len())]).collect()
            };
            let n = 1 + rng.below(5);
            let lemma = rand_word(&mut rng, n);
            let n = rng.below(6);
            let form = rand_word(&mut rng, n);
            let s = src(&m, &lemma);
            let t = m.alphabet().encode_chars(&form).unwrap();
            let loss = m.loss(&s, &t).unwrap();
            let chain = chain_logprob(&m, &s, &t);
            assert!((loss + chain).abs() < 1e-9, "{arch}: {loss} vs {chain}");
        }
    }
}

#[test]
fn mean_reduction_divides_by_step_count() {
    let mut cfg = tiny(Architecture::UnilstmAttn, 2);
    let sum = Model::build(cfg.clone(), toy_alphabet()).unwrap();
    cfg.loss_reduction = LossReduction::Mean;
    let mean = Model::build(cfg, toy_alphabet()).unwrap();
    let s = src(&sum, "abc");
    let t = sum.alphabet().encode_chars("abcd").unwrap();
    let a = sum.loss(&s, &t).unwrap();
    let b = mean.loss(&s, &t).unwrap();
    assert!((a / 5.0 - b).abs() < 1e-12);
}

/// Central differences with h = 1e-4: at 1e-5 the rounding noise of the
/// loss (about 1e-10 absolute) exceeds the relative budget for coordinates
/// whose gradient is below 1e-6.
#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = SeededRng::new(17);
    for arch in Architecture::ALL {
        for trial in 0..3 {
            let m = tiny_model(arch, 40 + trial);
            let s = src(&m, "bad");
            let t = m.alphabet().encode_chars("bade").unwrap();
            let coords: Vec<(usize, usize)> = (0..m.params().len())
                .map(|p| (p, rng.below(m.params().value(p).len())))
                .collect();
            let err = grad_check_params(
                |g, p| m.loss_graph(g, p, &s, &t, None).map_err(|e| ndiff::NdError::Invalid(e.to_string())),
                m.params(),
                1e-4,
                Some(&coords),
            )
            .unwrap();
            assert!(err < 1e-4, "{arch}: {err}");
        }
    }
}

#[test]
fn dropout_changes_loss_only_when_enabled() {
    let mut cfg = tiny(Architecture::Transformer, 3);
    cfg.dropout = 0.3;
    let m = Model::build(cfg, toy_alphabet()).unwrap();
    let s = src(&m, "abc");
    let t = m.alphabet().encode_chars("abd").unwrap();
    let eval = m.loss(&s, &t).unwrap();
    let mut g = Graph::new();
    let p = m.params().bind(&mut g);
    let mut rng = SeededRng::new(1);
    let l = m.loss_graph(&mut g, &p, &s, &t, Some(&mut rng)).unwrap();
    assert_ne!(g.value(l).item().unwrap(), eval);
}

#[test]
fn invalid_inputs_are_rejected() {
    let m = tiny_model(Architecture::UnilstmAttn, 1);
    assert!(matches!(m.encode(&[]), Err(ModelError::EmptySource)));
    let long = vec![3; 65];
    assert!(matches!(m.encode(&long), Err(ModelError::SourceTooLong { len: 65, max: 64 })));
    let st = m.initial_state(&src(&m, "a")).unwrap();
    assert!(matches!(m.decode_step(&st, 999), Err(ModelError::UnknownSymbol(999))));
    let tag = m.alphabet().tag_id("PST").unwrap();
    assert!(m.decode_step(&st, tag).is_err());
    let t = tiny_model(Architecture::Transformer, 1);
    assert!(matches!(t.decode_step(&st, BOS), Err(ModelError::StateMismatch)));
    let mut bad = tiny(Architecture::Transformer, 1);
    bad.num_heads = 3;
    assert!(matches!(Model::build(bad, toy_alphabet()), Err(ModelError::Config(_))));
}

#[test]
fn checkpoint_round_trip_is_exact() {
    for arch in Architecture::ALL {
        let m = tiny_model(arch, 13);
        let json = m.to_checkpoint("h").unwrap().to_json().unwrap();
        let back = Model::from_checkpoint(&ndiff::Checkpoint::from_json(&json).unwrap()).unwrap();
        assert!(back.params().bit_eq(m.params()));
        assert_eq!(back.config(), m.config());
        let s = src(&m, "abc");
        let t = m.alphabet().encode_chars("ab").unwrap();
        assert_eq!(back.loss(&s, &t).unwrap().to_bits(), m.loss(&s, &t).unwrap().to_bits());
    }
}



#[test]
fn batched_steps_equal_single_steps_bit_for_bit() {
    let full = Model::build(ModelConfig::new(Architecture::Transformer, 2), toy_alphabet()).unwrap();
    let mut models: Vec<Model> = Architecture::ALL.iter().map(|&a| tiny_model(a, 4)).collect();
    models.push(full);
    for m in &models {
        // States at different depths over different sources.
        let mut states = Vec::new();
        for (lemma, depth) in [("abc", 0), ("e", 2), ("dcbae", 1), ("ab", 3)] {
            let mut s = m.initial_state(&src(m, lemma)).unwrap();
            for k in 0..depth {
                s = m.decode_step(&s, if k == 0 { BOS } else { 3 + k }).unwrap().1;
            }
            states.push(s);
        }
        let prev = [BOS, 4, 5, 3];
        let refs: Vec<&DecoderState> = states.iter().collect();
        let batch = m.decode_step_batch(&refs, &prev).unwrap();
        for (i, (lp, next)) in batch.iter().enumerate() {
            let (one, next_one) = m.decode_step(&states[i], prev[i]).unwrap();
            assert_eq!(lp, &one, "{} row {i}", m.identity());
            let (a, _) = m.decode_step(next, 6).unwrap();
            let (b, _) = m.decode_step(&next_one, 6).unwrap();
            assert_eq!(a, b, "{} row {i} continuation", m.identity());
        }
    }
}

#[test]
fn batch_loss_is_the_sum_of_pair_losses() {
    let pairs = [("abc", "abd"), ("e", "eee"), ("dcbae", "a"), ("bb", "bbc")];
    for arch in Architecture::ALL {
        for reduction in [LossReduction::Sum, LossReduction::Mean] {
            let mut cfg = tiny(arch, 9);
            cfg.loss_reduction = reduction;
            let m = Model::build(cfg, toy_alphabet()).unwrap();
            let enc: Vec<(Vec<SymbolId>, Vec<SymbolId>)> =
                pairs.iter().map(|(l, f)| m.encode_pair(l, &["PST".into()], f).unwrap()).collect();
            let batch: Vec<(&[SymbolId], &[SymbolId])> = enc.iter().map(|(s, t)| (s.as_slice(), t.as_slice())).collect();
            let mut g = Graph::no_grad();
            let p = m.params().bind(&mut g);
            let l = m.batch_loss_graph(&mut g, &p, &batch, None).unwrap();
            let packed = g.value(l).item().unwrap();
            let separate: f64 = enc.iter().map(|(s, t)| m.loss(s, t).unwrap()).sum();
            assert!((packed - separate).abs() < 1e-9 * separate.abs().max(1.0), "{arch} {reduction:?}: {packed} vs {separate}");
        }
    }
}
