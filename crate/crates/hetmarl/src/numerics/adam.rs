//! Adam optimizer with decoupled-from-nothing, classic L2: the penalty term
//! l2 * theta is added to the raw gradient before the moment updates.

use crate::error::{Error, Result};

use super::params::{ParamGrads, ParamStore};
use super::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub l2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2.5e-4,
            l2: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter, plus the step
/// counter used for bias correction.
pub struct AdamState<R: Real> {
    m: Vec<Tensor<R>>,
    v: Vec<Tensor<R>>,
    step: u64,
}

impl<R: Real> AdamState<R> {
    pub fn new(params: &ParamStore<R>) -> Self {
        let m = params
            .ids()
            .map(|id| Tensor::zeros(params.get(id).shape().to_vec()))
            .collect::<Vec<_>>();
        let v = m.clone();
        AdamState { m, v, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam step over every parameter in the store.
///
/// Parameters the loss never reached still feel the L2 pull (their raw
/// gradient is zero). A non-finite gradient or updated value aborts with a
/// divergence error naming the parameter.
pub fn adam_update<R: Real>(
    params: &mut ParamStore<R>,
    grads: &ParamGrads<R>,
    state: &mut AdamState<R>,
    cfg: &AdamConfig,
) -> Result<()> {
    state.step += 1;
    let t = state.step as f64;
    let beta1 = R::from_f64(cfg.beta1);
    let beta2 = R::from_f64(cfg.beta2);
    let one = R::one();
    let eps = R::from_f64(cfg.eps);
    let l2 = R::from_f64(cfg.l2);
    let lr = R::from_f64(cfg.lr);
    let corr1 = R::from_f64(1.0 - cfg.beta1.powf(t));
    let corr2 = R::from_f64(1.0 - cfg.beta2.powf(t));

    for id in params.ids().collect::<Vec<_>>() {
        if let Some(g) = grads.get(id) {
            if !g.all_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite gradient for parameter {}",
                    params.name(id)
                )));
            }
        }
        let grad = grads.get_or_zero(id, params);
        let m = state.m[id.0].data_mut();
        let v = state.v[id.0].data_mut();
        let theta = params.get_mut(id).data_mut();
        for i in 0..theta.len() {
            let g = grad.data()[i] + l2 * theta[i];
            m[i] = beta1 * m[i] + (one - beta1) * g;
            v[i] = beta2 * v[i] + (one - beta2) * g * g;
            let m_hat = m[i] / corr1;
            let v_hat = v[i] / corr2;
            theta[i] = theta[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
        if !params.get(id).all_finite() {
            return Err(Error::Divergence(format!(
                "parameter {} became non-finite during the optimizer step",
                params.name(id)
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::params::{ParamGrads, StagedParams};
    use crate::numerics::tape::Tape;

    fn grads_for<R: Real>(
        store: &ParamStore<R>,
        build: impl FnOnce(&mut Tape<R>, &StagedParams) -> crate::numerics::tape::NodeId,
    ) -> ParamGrads<R> {
        let mut tape = Tape::new();
        let staged = StagedParams::stage(store, &mut tape);
        let loss = build(&mut tape, &staged);
        let grads = tape.backward(loss);
        ParamGrads::collect(store, &staged, &grads)
    }

    #[test]
    fn zero_gradient_zero_l2_is_identity() {
        let mut store = ParamStore::<f64>::new();
        let w = store.register("w", Tensor::vector(vec![1.5, -0.5]));
        let unused = store.register("unused", Tensor::vector(vec![3.0]));
        let grads = grads_for(&store, |tape, staged| {
            let z = tape.scale(staged.node(w), 0.0);
            tape.sum(z)
        });
        let mut state = AdamState::new(&store);
        let cfg = AdamConfig {
            lr: 0.1,
            l2: 0.0,
            ..AdamConfig::default()
        };
        adam_update(&mut store, &grads, &mut state, &cfg).unwrap();
        assert_eq!(store.get(w).data(), &[1.5, -0.5]);
        assert_eq!(store.get(unused).data(), &[3.0]);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // theta = 1, grad = 1, lr = 0.1: bias-corrected Adam's first step is
        // lr * g / (|g| + eps), essentially exactly lr.
        let mut store = ParamStore::<f64>::new();
        let w = store.register("w", Tensor::vector(vec![1.0]));
        let grads = grads_for(&store, |tape, staged| tape.sum(staged.node(w)));
        let mut state = AdamState::new(&store);
        let cfg = AdamConfig {
            lr: 0.1,
            l2: 0.0,
            ..AdamConfig::default()
        };
        adam_update(&mut store, &grads, &mut state, &cfg).unwrap();
        let moved = 1.0 - store.get(w).data()[0];
        assert!((moved - 0.1).abs() < 1e-6, "moved {moved}");
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn default_config_matches_training_settings() {
        let cfg = AdamConfig::default();
        assert_eq!(cfg.lr, 2.5e-4);
        assert_eq!(cfg.l2, 1e-5);
        assert_eq!(cfg.beta1, 0.9);
        assert_eq!(cfg.beta2, 0.999);
        assert_eq!(cfg.eps, 1e-8);
    }

    #[test]
    fn l2_pulls_toward_zero_without_raw_gradient() {
        let mut store = ParamStore::<f64>::new();
        let w = store.register("w", Tensor::vector(vec![2.0]));
        let other = store.register("other", Tensor::vector(vec![1.0]));
        // Loss only touches `other`; w still decays through L2.
        let grads = grads_for(&store, |tape, staged| tape.sum(staged.node(other)));
        let mut state = AdamState::new(&store);
        let cfg = AdamConfig {
            lr: 0.01,
            l2: 1e-2,
            ..AdamConfig::default()
        };
        adam_update(&mut store, &grads, &mut state, &cfg).unwrap();
        assert!(store.get(w).data()[0] < 2.0);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut store = ParamStore::<f64>::new();
        let w = store.register("encoder.w0", Tensor::vector(vec![0.0]));
        // ln(0) = -inf propagates a non-finite gradient.
        let grads = grads_for(&store, |tape, staged| {
            let l = tape.ln(staged.node(w));
            tape.sum(l)
        });
        let mut state = AdamState::new(&store);
        let err = adam_update(&mut store, &grads, &mut state, &AdamConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("encoder.w0"), "{err}");
    }
}
