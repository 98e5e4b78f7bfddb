//! Finite-difference gradient checking.

use crate::array::Array;
use crate::error::{NdError, Result};
use crate::graph::{Graph, Var};
use crate::params::ParamStore;

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn eval_scalar<F>(f: &F, x: &Array) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::no_grad();
    let xv = g.param(x.clone());
    let y = f(&mut g, xv)?;
    scalar_of(&g, y)
}

fn scalar_of(g: &Graph, y: Var) -> Result<f64> {
    let v = g.value(y);
    if !v.is_scalar() {
        return Err(NdError::NotScalar {
            op: "grad_check",
            shape: v.shape().to_vec(),
        });
    }
    Ok(v.data()[0])
}

/// Largest relative disagreement between the reverse-mode gradient of `f` at
/// `x` and central differences with step `h`, measured per component as
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(f: F, x: &Array, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let y = f(&mut g, xv)?;
    scalar_of(&g, y)?;
    g.backward(y)?;
    let analytic = g
        .grad(xv)
        .cloned()
        .unwrap_or_else(|| Array::zeros(x.shape()));

    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = eval_scalar(&f, &probe)?;
        probe.data_mut()[i] = orig - h;
        let down = eval_scalar(&f, &probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(rel_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

/// Gradient check of a scalar function of a whole parameter collection.
///
/// `coords` selects `(param id, flat index)` pairs to probe; pass `None` to
/// probe every scalar.
pub fn grad_check_params<F>(
    f: F,
    params: &ParamStore,
    h: f64,
    coords: Option<&[(usize, usize)]>,
) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let y = f(&mut g, &bound)?;
    scalar_of(&g, y)?;
    g.backward(y)?;

    let all: Vec<(usize, usize)>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..params.len())
                .flat_map(|p| (0..params.value(p).len()).map(move |i| (p, i)))
                .collect();
            &all
        }
    };

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::no_grad();
        let bound = store.bind(&mut g);
        let y = f(&mut g, &bound)?;
        scalar_of(&g, y)
    };

    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for &(p, i) in coords {
        let analytic = g.grad(bound[p]).map_or(0.0, |a| a.data()[i]);
        let orig = probe.value(p).data()[i];
        probe.value_mut(p).data_mut()[i] = orig + h;
        let up = eval(&probe)?;
        probe.value_mut(p).data_mut()[i] = orig - h;
        let down = eval(&probe)?;
        probe.value_mut(p).data_mut()[i] = orig;
        worst = worst.max(rel_error(analytic, (up - down) / (2.0 * h)));
    }
    Ok(worst)
}
