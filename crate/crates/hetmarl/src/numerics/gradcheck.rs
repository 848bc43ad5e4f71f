//! Finite-difference verification of tape gradients.
//!
//! The numeric oracle always evaluates the perturbed losses in f64, on an
//! exact cast of the parameter store. Checking an f32 model then measures
//! the f32 tape's accumulated rounding error against a near-exact
//! derivative, instead of drowning small gradients in f32 oracle noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamGrads, ParamStore, StagedParams};
use super::tape::{NodeId, Tape};
use super::tensor::Real;

/// A loss construction that works at any precision. Implementations must be
/// deterministic: same parameters, same loss.
pub trait LossFn {
    fn loss<R: Real>(&self, tape: &mut Tape<R>, staged: &StagedParams) -> NodeId;
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub h: f64,
    /// How many elements to probe per parameter tensor; `None` probes all.
    /// Sampling keeps large-model checks inside a time budget while still
    /// touching every tensor.
    pub samples_per_tensor: Option<usize>,
    /// Seed for the element sampler.
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            h: 1e-3,
            samples_per_tensor: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub elements_checked: usize,
}

/// Compares tape gradients against central finite differences.
///
/// The relative error of one element is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6). The 1e-6 floor
/// acts as an absolute tolerance: a gradient that small sits at or below
/// the roundoff in the difference quotient itself, so holding it to a
/// relative bound would only measure float noise. A genuine defect in any
/// gradient larger than the floor still fails the relative bound.
pub fn check_gradients<R: Real>(
    params: &ParamStore<R>,
    f: &impl LossFn,
    cfg: &GradCheckConfig,
) -> GradCheckReport {
    let analytic = {
        let mut tape = Tape::new();
        let staged = StagedParams::stage(params, &mut tape);
        let loss = f.loss(&mut tape, &staged);
        let grads = tape.backward(loss);
        ParamGrads::collect(params, &staged, &grads)
    };

    let mut wide: ParamStore<f64> = params.cast();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        elements_checked: 0,
    };

    for id in params.ids().collect::<Vec<_>>() {
        let numel = params.get(id).numel();
        let probes: Vec<usize> = match cfg.samples_per_tensor {
            Some(k) if k < numel => rand::seq::index::sample(&mut rng, numel, k).into_vec(),
            _ => (0..numel).collect(),
        };
        let analytic_tensor = analytic.get_or_zero(id, params);
        for i in probes {
            let original = wide.get(id).data()[i];
            wide.get_mut(id).data_mut()[i] = original + cfg.h;
            let plus = eval_loss(&wide, f);
            wide.get_mut(id).data_mut()[i] = original - cfg.h;
            let minus = eval_loss(&wide, f);
            wide.get_mut(id).data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * cfg.h);
            let a = analytic_tensor.data()[i].into_f64();
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            report.elements_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = format!("{}[{}]", params.name(id), i);
            }
        }
    }
    report
}

fn eval_loss(params: &ParamStore<f64>, f: &impl LossFn) -> f64 {
    let mut tape = Tape::new();
    let staged = StagedParams::stage(params, &mut tape);
    let loss = f.loss(&mut tape, &staged);
    tape.value(loss).item()
}
