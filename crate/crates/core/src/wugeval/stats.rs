use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::EvalError;

/// A correlation coefficient with its two-sided p-value. `value` is `None`
/// when either input has zero variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub value: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
}

impl Correlation {
    fn undefined(n: usize) -> Self {
        Self {
            value: None,
            p_value: None,
            n,
        }
    }
}

fn check(x: &[f64], y: &[f64]) -> Result<(), EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(EvalError::TooFew { n: x.len(), min: 3 });
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn product_moment(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value of `r` under the null, via `t = r sqrt((n-2)/(1-r²))`
/// with n - 2 degrees of freedom.
fn t_test_p(r: f64, n: usize) -> Option<f64> {
    if n < 3 {
        return None;
    }
    if r.abs() >= 1.0 {
        return Some(0.0);
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some((2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
}

/// Pearson's product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation, EvalError> {
    check(x, y)?;
    Ok(match product_moment(x, y) {
        Some(r) => Correlation {
            value: Some(r),
            p_value: t_test_p(r, x.len()),
            n: x.len(),
        },
        None => Correlation::undefined(x.len()),
    })
}

/// 1-based ranks; tied values share the mean of the positions they span.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation, EvalError> {
    check(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Mean and sample standard deviation (n - 1 denominator) of per-seed values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// `None` for a single value.
    pub stdev: Option<f64>,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let m = mean(values);
    let stdev = (values.len() > 1).then(|| {
        let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
        (ss / (values.len() - 1) as f64).sqrt()
    });
    Some(Summary {
        mean: m,
        stdev,
        n: values.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_relation_is_perfect() {
        let x = [0.3, 1.0, 2.5, 4.0, 7.1];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let r = pearson(&x, &y).unwrap();
        assert!((r.value.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(r.p_value, Some(0.0));
    }

    #[test]
    fn four_point_hand_computation() {
        // means 2.5 and 3; deviations (-1.5,-0.5,0.5,1.5) and (-1,-2,1,2):
        // sxy = 1.5+1+0.5+3 = 6, sxx = 5, syy = 10.
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 5.0]).unwrap();
        assert!((r.value.unwrap() - 6.0 / 50f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn inversion_and_identity() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().value, Some(-1.0));
        assert_eq!(spearman(&[4.0, 1.0, 9.0], &[4.0, 1.0, 9.0]).unwrap().value, Some(1.0));
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn zero_variance_is_undefined() {
        let c = spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(c.value, None);
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(EvalError::TooFew { .. })));
        assert!(matches!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn p_value_matches_known_critical_value() {
        // For n = 10, r = 0.6319 is the two-sided 5% critical value.
        let p = t_test_p(0.6319, 10).unwrap();
        assert!((p - 0.05).abs() < 5e-4, "{p}");
    }

    #[test]
    fn sample_standard_deviation() {
        let s = summarize(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(s.mean, 5.0);
        assert!((s.stdev.unwrap() - (32.0f64 / 7.0).sqrt()).abs() < 1e-15);
        assert_eq!(summarize(&[3.0]).unwrap().stdev, None);
    }
}
