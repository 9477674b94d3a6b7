//! Central finite-difference validation of [`Graph::backward`].

use rand::seq::index::sample;
use rand::Rng;

use super::graph::{Graph, Var};
use super::param::{ParamId, ParamStore};
use crate::error::Result;

/// Denominator floor for [`relative_error`]; gradients smaller than this are
/// compared in absolute terms.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / denom
}

#[derive(Clone, Debug)]
pub struct CoordCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub coords: Vec<CoordCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.coords.iter().map(|c| c.rel_err).fold(0.0, f64::max)
    }

    pub fn failures(&self, tol: f64) -> Vec<&CoordCheck> {
        self.coords.iter().filter(|c| c.rel_err > tol).collect()
    }

    /// Number of checked coordinates belonging to parameters whose name
    /// starts with `prefix`.
    pub fn count_with_prefix(&self, prefix: &str) -> usize {
        self.coords.iter().filter(|c| c.param.starts_with(prefix)).count()
    }
}

/// Up to `per_param` distinct coordinates from every parameter, drawn
/// without replacement.
pub fn sample_coords<R: Rng + ?Sized>(store: &ParamStore, per_param: usize, rng: &mut R) -> Vec<(ParamId, usize)> {
    let mut out = Vec::new();
    for (id, p) in store.iter() {
        let n = p.value.len();
        if n <= per_param {
            out.extend((0..n).map(|i| (id, i)));
        } else {
            let mut picked = sample(rng, n, per_param).into_vec();
            picked.sort_unstable();
            out.extend(picked.into_iter().map(|i| (id, i)));
        }
    }
    out
}

/// Compares backpropagated gradients with central differences of step
/// `step` at the given coordinates.
///
/// `loss_fn` must be deterministic in the parameter values: any random draws
/// it makes have to be reseeded on every call.
pub fn check_gradients<F>(store: &mut ParamStore, mut loss_fn: F, coords: &[(ParamId, usize)], step: f64) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<(Graph, Var)>,
{
    store.zero_grad();
    let (graph, loss) = loss_fn(store)?;
    graph.backward(loss, store)?;
    drop(graph);

    let mut report = GradCheckReport::default();
    for &(id, index) in coords {
        let analytic = store.get(id).gradient.data()[index];
        let original = store.get(id).value.data()[index];

        store.get_mut(id).value.data_mut()[index] = original + step;
        let (g, l) = loss_fn(store)?;
        let plus = g.scalar(l);
        store.get_mut(id).value.data_mut()[index] = original - step;
        let (g, l) = loss_fn(store)?;
        let minus = g.scalar(l);
        store.get_mut(id).value.data_mut()[index] = original;

        let numeric = (plus - minus) / (2.0 * step);
        report.coords.push(CoordCheck {
            param: store.get(id).name.clone(),
            index,
            analytic,
            numeric,
            rel_err: relative_error(analytic, numeric),
        });
    }
    store.zero_grad();
    Ok(report)
}
