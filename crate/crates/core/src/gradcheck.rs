//! Central finite-difference verification of tape gradients (64-bit only).

use std::collections::BTreeMap;

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::rng::{self, Purpose};
use crate::store::ParameterStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Finite-difference half step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tol: f64,
    /// Tensors larger than this are checked at a random subset of this many elements.
    pub max_per_tensor: usize,
    /// Seeds the element subsample.
    pub seed: u64,
    /// Gradients below this magnitude are compared on an absolute scale of `floor`.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tol: 1e-4,
            max_per_tensor: 16,
            seed: 0,
            floor: 1e-4,
        }
    }
}

/// Result of evaluating the objective once on a tape.
pub struct Evaluation {
    pub loss: f64,
    /// Node the loss was computed from.
    pub output: Var<f64>,
    /// dLoss/d`output`.
    pub seed: Tensor<f64>,
    /// Leaf variables bound to store parameters, by name.
    pub params: BTreeMap<String, Var<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementCheck {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub tol: f64,
    pub max_rel_error: f64,
    pub worst: Option<ElementCheck>,
    pub checked: usize,
    /// Elements whose stencil crossed a ReLU kink (non-differentiable point).
    pub excluded: usize,
    pub failures: Vec<ElementCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.failures.is_empty()
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn sample_indices(len: usize, max: usize, rng: &mut rng::Stream) -> Vec<usize> {
    if len <= max {
        return (0..len).collect();
    }
    let mut all: Vec<usize> = (0..len).collect();
    // partial Fisher–Yates
    for i in 0..max {
        let j = i + rng::uniform_index(rng, len - i);
        all.swap(i, j);
    }
    let mut picked = all[..max].to_vec();
    picked.sort_unstable();
    picked
}

/// Compares tape gradients of `objective` against central differences for
/// every parameter in `store` (or a random subset of large tensors).
///
/// `objective` must build its graph on the tape it is given and bind store
/// parameters as variables. Elements whose `±step` evaluations change any
/// ReLU's sign pattern sit on a kink and are excluded.
pub fn grad_check<F>(store: &ParameterStore<f64>, mut objective: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&ParameterStore<f64>, &mut Tape<f64>) -> Result<Evaluation>,
{
    let mut tape = Tape::new();
    let ev = objective(store, &mut tape)?;
    let base_sig = tape.relu_signature();
    let mut grads = tape.backward(&ev.output, ev.seed)?;
    let analytic: BTreeMap<String, Option<Tensor<f64>>> =
        ev.params.iter().map(|(k, v)| (k.clone(), grads.take(v))).collect();

    let mut work = store.clone();
    let mut rng = rng::stream(opts.seed, Purpose::Sampling, 0);
    let mut report = GradCheckReport {
        tol: opts.tol,
        ..Default::default()
    };
    let names: Vec<String> = store.param_names().map(str::to_string).collect();
    for name in names {
        let len = store.param(&name)?.len();
        for idx in sample_indices(len, opts.max_per_tensor, &mut rng) {
            let original = store.param(&name)?.data()[idx];
            let mut eval_at = |v: f64| -> Result<(f64, u64)> {
                work.param_mut(&name)?.data_mut()[idx] = v;
                let mut t = Tape::inference();
                let e = objective(&work, &mut t)?;
                Ok((e.loss, t.relu_signature()))
            };
            let (lp, sp) = eval_at(original + opts.step)?;
            let (lm, sm) = eval_at(original - opts.step)?;
            work.param_mut(&name)?.data_mut()[idx] = original;
            if sp != base_sig || sm != base_sig {
                report.excluded += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * opts.step);
            let a = analytic
                .get(&name)
                .and_then(|g| g.as_ref())
                .map_or(0.0, |g| g.data()[idx]);
            let rel = relative_error(a, numeric, opts.floor);
            let check = ElementCheck {
                name: name.clone(),
                index: idx,
                analytic: a,
                numeric,
                rel_error: rel,
            };
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some(check.clone());
            }
            if rel >= opts.tol {
                report.failures.push(check);
            }
        }
    }
    Ok(report)
}
