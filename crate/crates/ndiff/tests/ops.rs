use ndiff::{grad_check, Array, Checkpoint, Graph, ParamStore, Result, SeededRng, Var};
use proptest::prelude::*;

fn random(shape: &[usize], rng: &mut SeededRng) -> Array {
    let n = shape.iter().product();
    Array::new(shape.to_vec(), (0..n).map(|_| rng.uniform_range(-2.0, 2.0)).collect()).unwrap()
}

/// `sum(y ⊙ R)` for a fixed random `R`, so every output component matters.
fn readout(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let mut rng = SeededRng::new(seed);
    let r = random(g.value(y).shape(), &mut rng);
    let r = g.constant(r);
    let prod = g.mul(y, r)?;
    Ok(g.sum(prod))
}

type OpFn = Box<dyn Fn(&mut Graph, Var) -> Result<Var>>;

fn cases() -> Vec<(&'static str, Vec<usize>, OpFn)> {
    let c = |seed: u64, shape: &[usize]| random(shape, &mut SeededRng::new(seed));
    vec![
        ("matmul_left", vec![3, 4], Box::new(move |g: &mut Graph, x| {
            let w = g.constant(c(11, &[4, 2]));
            let y = g.matmul(x, w)?;
            readout(g, y, 1)
        })),
        ("matmul_right", vec![3, 4], Box::new(move |g: &mut Graph, x| {
            let a = g.constant(c(12, &[2, 3]));
            let y = g.matmul(a, x)?;
            readout(g, y, 2)
        })),
        ("matmul_nt", vec![3, 4], Box::new(move |g: &mut Graph, x| {
            let y = g.matmul_nt(x, x)?;
            readout(g, y, 3)
        })),
        ("transpose", vec![3, 4], Box::new(|g: &mut Graph, x| {
            let y = g.transpose(x)?;
            readout(g, y, 4)
        })),
        ("add", vec![3, 4], Box::new(move |g: &mut Graph, x| {
            let b = g.constant(c(13, &[3, 4]));
            let y = g.add(x, b)?;
            let y = g.mul(y, y)?;
            readout(g, y, 5)
        })),
        ("add_broadcast_row", vec![1, 4], Box::new(move |g: &mut Graph, x| {
            let a = g.constant(c(14, &[3, 4]));
            let y = g.add(a, x)?;
            let y = g.tanh(y);
            readout(g, y, 6)
        })),
        ("multiply", vec![3, 4], Box::new(move |g: &mut Graph, x| {
            let b = g.constant(c(15, &[3, 4]));
            let y = g.mul(x, b)?;
            let y = g.mul(y, x)?;
            readout(g, y, 7)
        })),
        ("multiply_broadcast_row", vec![1, 4], Box::new(move |g: &mut Graph, x| {
            let a = g.constant(c(16, &[3, 4]));
            let y = g.mul(a, x)?;
            let y = g.mul(y, y)?;
            readout(g, y, 8)
        })),
        ("scale", vec![3, 4], Box::new(|g: &mut Graph, x| {
            let y = g.scale(x, -1.7);
            let y = g.tanh(y);
            readout(g, y, 9)
        })),
        ("tanh", vec![3, 4], Box::new(|g: &mut Graph, x| {
            let y = g.tanh(x);
            readout(g, y, 10)
        })),
        ("sigmoid", vec![3, 4], Box::new(|g: &mut Graph, x| {
            let y = g.sigmoid(x);
            readout(g, y, 11)
        })),
        ("relu", vec![3, 4], Box::new(|g: &mut Graph, x| {
            let y = g.relu(x);
            let y = g.mul(y, y)?;
            readout(g, y, 12)
        })),
        ("concat_rows", vec![3, 4], Box::new(move |g: &mut Graph, x| {
            let b = g.constant(c(17, &[2, 4]));
            let y = g.concat(&[x, b, x], 0)?;
            let y = g.tanh(y);
            readout(g, y, 13)
        })),
        ("concat_cols", vec![3, 4], Box::new(move |g: &mut Graph, x| {
            let b = g.constant(c(18, &[3, 1]));
            let y = g.concat(&[b, x, x], 1)?;
            let y = g.tanh(y);
            readout(g, y, 14)
        })),
        ("slice_rows", vec![3, 4], Box::new(|g: &mut Graph, x| {
            let y = g.slice(x, 0, 1, 2)?;
            let y = g.tanh(y);
            readout(g, y, 15)
        })),
        ("slice_cols", vec![3, 4], Box::new(|g: &mut Graph, x| {
            let y = g.slice(x, 1, 1, 2)?;
            let y = g.tanh(y);
            readout(g, y, 16)
        })),
        ("embedding_lookup", vec![5, 3], Box::new(|g: &mut Graph, x| {
            let y = g.embedding(x, &[4, 0, 4, 2])?;
            let y = g.tanh(y);
            readout(g, y, 17)
        })),
        ("softmax", vec![3, 4], Box::new(|g: &mut Graph, x| {
            let y = g.softmax(x)?;
            readout(g, y, 18)
        })),
        ("log_softmax", vec![3, 4], Box::new(|g: &mut Graph, x| {
            let y = g.log_softmax(x)?;
            readout(g, y, 19)
        })),
        ("layer_norm", vec![3, 4], Box::new(|g: &mut Graph, x| {
            let y = g.layer_norm(x, 1e-5)?;
            readout(g, y, 20)
        })),
        ("dropout", vec![3, 4], Box::new(|g: &mut Graph, x| {
            let mut rng = SeededRng::new(99);
            let y = g.dropout(x, 0.3, true, &mut rng)?;
            let y = g.tanh(y);
            readout(g, y, 21)
        })),
        ("sum", vec![3, 4], Box::new(|g: &mut Graph, x| {
            let y = g.tanh(x);
            let s = g.sum(y);
            Ok(g.mul(s, s)?)
        })),
        ("pick", vec![3, 4], Box::new(|g: &mut Graph, x| {
            let y = g.log_softmax(x)?;
            let y = g.pick(y, &[3, 0, 1])?;
            readout(g, y, 22)
        })),
        ("scaled_dot_product", vec![3, 4], Box::new(move |g: &mut Graph, x| {
            let k = g.constant(c(23, &[5, 4]));
            let v = g.constant(c(24, &[5, 2]));
            let (y, _) = g.scaled_dot_product(x, k, v, None)?;
            readout(g, y, 25)
        })),
        ("scaled_dot_product_masked_self", vec![3, 4], Box::new(|g: &mut Graph, x| {
            let mut m = Array::zeros(&[3, 3]);
            for i in 0..3 {
                for j in i + 1..3 {
                    m.data_mut()[i * 3 + j] = -1e9;
                }
            }
            let m = g.constant(m);
            let (y, _) = g.scaled_dot_product(x, x, x, Some(m))?;
            readout(g, y, 26)
        })),
    ]
}

#[test]
fn every_op_passes_gradient_check() {
    for (name, shape, f) in cases() {
        for trial in 0..10 {
            let x = random(&shape, &mut SeededRng::new(1000 + trial));
            let err = grad_check(&f, &x, 1e-5).unwrap();
            assert!(err < 1e-4, "{name} trial {trial}: rel error {err:.3e}");
        }
    }
}

#[test]
fn tanh_sum_gradient_check() {
    let x = random(&[2, 5], &mut SeededRng::new(4));
    let err = grad_check(
        |g, x| {
            let t = g.tanh(x);
            Ok(g.sum(t))
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4);
}

#[test]
fn graph_evaluation_is_referentially_transparent() {
    let x = random(&[4, 6], &mut SeededRng::new(8));
    let eval = || {
        let mut g = Graph::new();
        let xv = g.param(x.clone());
        let w = g.constant(random(&[6, 6], &mut SeededRng::new(9)));
        let h = g.matmul(xv, w).unwrap();
        let h = g.layer_norm(h, 1e-5).unwrap();
        let h = g.softmax(h).unwrap();
        g.value(h).clone()
    };
    let (a, b) = (eval(), eval());
    assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut rng = SeededRng::new(3);
    let mut store = ParamStore::new();
    store.insert("enc.w", random(&[7, 5], &mut rng)).unwrap();
    store.insert("a.bias", Array::row_vector(vec![1e-300, -0.1, 1.0 / 3.0, f64::MAX])).unwrap();
    let ck = Checkpoint::from_store(&store, "abc123", serde_json::json!({"arch": "x"}));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.config_hash, "abc123");
    let restored = back.to_store().unwrap();
    assert!(restored.bit_eq(&store));
    assert_eq!(restored.names(), store.names());
    assert_eq!(back.meta, serde_json::json!({"arch": "x"}));

    std::fs::write(&path, ck.to_json().unwrap()).unwrap();
    assert!(Checkpoint::load(&path).unwrap().to_store().unwrap().bit_eq(&store));
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let mut store = ParamStore::new();
    store.insert("w", Array::row_vector(vec![1.0, 2.0, 3.0])).unwrap();
    let bytes = Checkpoint::from_store(&store, "h", serde_json::Value::Null).to_bytes().unwrap();
    assert!(Checkpoint::from_bytes(&bytes).is_ok());
    assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    assert!(Checkpoint::from_bytes(&bytes[..12]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(Checkpoint::from_bytes(&extra).is_err());
    assert!(Checkpoint::from_bytes(b"{}").is_err());
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(vals in prop::collection::vec(-30.0f64..30.0, 12)) {
        let mut g = Graph::new();
        let x = g.constant(Array::new(vec![3, 4], vals).unwrap());
        let y = g.softmax(x).unwrap();
        for r in 0..3 {
            let row = g.value(y).row(r);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn log_softmax_matches_log_of_softmax(vals in prop::collection::vec(-20.0f64..20.0, 10)) {
        let mut g = Graph::new();
        let x = g.constant(Array::new(vec![2, 5], vals).unwrap());
        let ls = g.log_softmax(x).unwrap();
        let s = g.softmax(x).unwrap();
        for (a, b) in g.value(ls).data().iter().zip(g.value(s).data()) {
            prop_assert!((a - b.ln()).abs() <= 1e-9);
        }
    }
}
