use crate::error::Result;
use crate::numerics::{Graph, ParamId, ParamStore, Var};

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinate with the worst error: (parameter name, flat index).
    pub worst: Option<(String, usize)>,
}

/// Floor on the relative-error denominator so coordinates whose true
/// gradient is (numerically) zero are judged by absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-7;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compare reverse-mode gradients of `f` against central differences
/// `(f(x+h) - f(x-h)) / 2h` at the coordinates listed (all coordinates when
/// `coords` is `None`).
///
/// `f` must build a scalar on the given tape from the given store and be a
/// deterministic function of the store.
pub fn grad_check<F>(
    f: F,
    store: &mut ParamStore<f64>,
    step: f64,
    coords: Option<&[(ParamId, usize)]>,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let eval = |store: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let out = f(&mut g, store)?;
        Ok(g.scalar(out))
    };

    let saved: Vec<Option<Vec<f64>>> = store
        .ids()
        .map(|id| store.get(id).grad().map(<[f64]>::to_vec))
        .collect();
    store.ids().for_each(|id| store.get_mut(id).clear_grad());

    let mut g = Graph::new();
    let out = f(&mut g, store)?;
    g.backward(out, store)?;
    let analytic: Vec<Vec<f64>> = store
        .ids()
        .map(|id| {
            let t = store.get(id);
            t.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()])
        })
        .collect();

    let all: Vec<(ParamId, usize)>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = store
                .ids()
                .flat_map(|id| (0..store.get(id).len()).map(move |i| (id, i)))
                .collect();
            &all
        }
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for &(id, i) in coords {
        let x0 = store.get(id).data()[i];
        store.get_mut(id).data_mut()[i] = x0 + step;
        let plus = eval(store)?;
        store.get_mut(id).data_mut()[i] = x0 - step;
        let minus = eval(store)?;
        store.get_mut(id).data_mut()[i] = x0;
        let numeric = (plus - minus) / (2.0 * step);
        let err = relative_error(analytic[id.0][i], numeric);
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((store.name(id).to_string(), i));
        }
    }

    for (id, g) in store.ids().zip(saved) {
        let t = store.get_mut(id);
        t.clear_grad();
        if let Some(g) = g {
            t.accumulate_grad(&g);
        }
    }
    Ok(report)
}
