use proptest::prelude::*;
use wugbench::wugeval::{average_ranks, pearson, spearman};

fn paired(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3..max).prop_flat_map(|n| {
        (
            prop::collection::vec(-50i32..50, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            prop::collection::vec(-50i32..50, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
        )
    })
}

proptest! {
    #[test]
    fn ranks_sum_to_triangular_number(v in prop::collection::vec(-5i32..5, 1..40)) {
        let v: Vec<f64> = v.into_iter().map(f64::from).collect();
        let r = average_ranks(&v);
        let n = v.len() as f64;
        prop_assert!((r.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
        for i in 0..v.len() {
            for j in 0..v.len() {
                prop_assert_eq!(v[i] < v[j], r[i] < r[j]);
            }
        }
    }

    #[test]
    fn correlations_are_bounded_and_symmetric((x, y) in paired(30)) {
        for f in [pearson, spearman] {
            let a = f(&x, &y).unwrap();
            let b = f(&y, &x).unwrap();
            prop_assert_eq!(a.value.is_some(), b.value.is_some());
            if let (Some(a), Some(b)) = (a.value, b.value) {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&a));
                prop_assert!((a - b).abs() < 1e-12);
            }
            if let Some(p) = a.p_value {
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn spearman_ignores_monotone_transforms((x, y) in paired(30)) {
        let warped: Vec<f64> = x.iter().map(|v| (v / 10.0).exp() + v * v * v).collect();
        let a = spearman(&x, &y).unwrap().value;
        let b = spearman(&warped, &y).unwrap().value;
        match (a, b) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn pearson_of_affine_image_is_one(x in prop::collection::vec(-100.0f64..100.0, 3..30), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        if let Some(r) = pearson(&x, &y).unwrap().value {
            prop_assert!((r - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn constant_input_has_no_correlation() {
    let x = [1.0, 2.0, 3.0, 4.0];
    let c = [2.0; 4];
    assert_eq!(pearson(&x, &c).unwrap().value, None);
    assert_eq!(spearman(&c, &x).unwrap().value, None);
}

#[test]
fn fewer_than_three_pairs_is_an_error() {
    assert!(pearson(&[1.0, 2.0], &[2.0, 1.0]).is_err());
    assert!(spearman(&[1.0], &[1.0]).is_err());
}
