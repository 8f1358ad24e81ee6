//! Central finite-difference gradient checking ("64-bit check mode").
//!
//! [`check_inputs`] perturbs every element of every input tensor of a graph
//! builder by `±h` and compares `(f(x+h) - f(x-h)) / 2h` against the tape
//! gradient. Comparisons use the allclose rule
//! `|ad - fd| <= rel * max(|ad|, |fd|) + abs`, reported as the worst relative
//! error over all elements.

use super::tape::{Graph, NodeId};
use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

/// Outcome of one finite-difference sweep.
#[derive(Debug, Clone, Copy)]
pub struct CheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Check a builder's gradients w.r.t. its input tensors.
///
/// `build` must construct the same scalar-valued graph every call from the
/// provided inputs (leaves, in order). Gradients are taken at the unperturbed
/// point and compared against central differences with step `h` per element.
pub fn check_inputs<F>(
    params: &ParamStore<f64>,
    inputs: &[Tensor<f64>],
    h: f64,
    tol_rel: f64,
    build: F,
) -> Result<CheckReport>
where
    F: Fn(&mut Graph<'_, f64>, &[NodeId]) -> Result<NodeId>,
{
    let eval_loss = |tensors: &[Tensor<f64>]| -> Result<f64> {
        let mut graph = Graph::new(params);
        let ids: Vec<NodeId> = tensors.iter().map(|t| graph.leaf(t.clone())).collect();
        let loss = build(&mut graph, &ids)?;
        Ok(graph.value(loss).scalar_value())
    };

    let analytic: Vec<Option<Tensor<f64>>> = {
        let mut graph = Graph::new(params);
        let ids: Vec<NodeId> = inputs.iter().map(|t| graph.leaf(t.clone())).collect();
        let loss = build(&mut graph, &ids)?;
        let grads = graph.backward(loss)?;
        ids.iter().map(|&id| grads.node(id).cloned()).collect()
    };

    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    for (ti, tensor) in inputs.iter().enumerate() {
        for e in 0..tensor.numel() {
            let mut plus = inputs.to_vec();
            plus[ti].data_mut()[e] += h;
            let lp = eval_loss(&plus)?;
            let mut minus = inputs.to_vec();
            minus[ti].data_mut()[e] -= h;
            let lm = eval_loss(&minus)?;
            let fd = (lp - lm) / (2.0 * h);
            let ad = analytic[ti]
                .as_ref()
                .map(|g| g.data()[e])
                .unwrap_or(0.0);
            let err = (ad - fd).abs();
            let denom = ad.abs().max(fd.abs());
            let rel = if err <= 1e-9 { 0.0 } else { err / denom.max(1e-6) };
            if rel > max_rel {
                max_rel = rel;
            }
            checked += 1;
        }
    }

    if max_rel > tol_rel {
        return Err(Error::Numeric(format!(
            "finite-difference check failed: max relative error {max_rel:.3e} > {tol_rel:.1e} over {checked} elements"
        )));
    }
    Ok(CheckReport {
        max_rel_error: max_rel,
        checked,
    })
}

/// Check gradients w.r.t. every parameter in `params` (inputs held fixed).
///
/// `build` sees a graph and the fixed input leaves; parameters are perturbed
/// in place between evaluations.
pub fn check_params<F>(
    params: &ParamStore<f64>,
    inputs: &[Tensor<f64>],
    h: f64,
    tol_rel: f64,
    build: F,
) -> Result<CheckReport>
where
    F: Fn(&mut Graph<'_, f64>, &[NodeId]) -> Result<NodeId>,
{
    let eval_loss = |store: &ParamStore<f64>| -> Result<f64> {
        let mut graph = Graph::new(store);
        let ids: Vec<NodeId> = inputs.iter().map(|t| graph.leaf(t.clone())).collect();
        let loss = build(&mut graph, &ids)?;
        Ok(graph.value(loss).scalar_value())
    };

    let analytic: Vec<Tensor<f64>> = {
        let mut graph = Graph::new(params);
        let ids: Vec<NodeId> = inputs.iter().map(|t| graph.leaf(t.clone())).collect();
        let loss = build(&mut graph, &ids)?;
        let grads = graph.backward(loss)?;
        graph.param_grads(&grads)
    };

    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    let mut work = params.clone();
    for (pid, _, tensor) in params.iter() {
        for e in 0..tensor.numel() {
            let orig = work.get(pid).data()[e];
            work.get_mut(pid).data_mut()[e] = orig + h;
            let lp = eval_loss(&work)?;
            work.get_mut(pid).data_mut()[e] = orig - h;
            let lm = eval_loss(&work)?;
            work.get_mut(pid).data_mut()[e] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let ad = analytic[pid.index()].data()[e];
            let err = (ad - fd).abs();
            let denom = ad.abs().max(fd.abs());
            let rel = if err <= 1e-9 { 0.0 } else { err / denom.max(1e-6) };
            if rel > max_rel {
                max_rel = rel;
            }
            checked += 1;
        }
    }

    if max_rel > tol_rel {
        return Err(Error::Numeric(format!(
            "finite-difference parameter check failed: max relative error {max_rel:.3e} > {tol_rel:.1e} over {checked} elements"
        )));
    }
    Ok(CheckReport {
        max_rel_error: max_rel,
        checked,
    })
}
