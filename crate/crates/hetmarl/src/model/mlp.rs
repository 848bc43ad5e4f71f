//! Shared MLP building block: a stack of affine layers with sigmoid
//! activations, optionally linear at the output.

use rand_chacha::ChaCha8Rng;

use crate::numerics::{NodeId, ParamId, ParamStore, Real, StagedParams, Tape};

/// Handles into the flat parameter registry for one MLP.
#[derive(Clone, Debug)]
pub struct MlpParams {
    layers: Vec<(ParamId, ParamId)>,
    widths: Vec<usize>,
    final_linear: bool,
}

impl MlpParams {
    /// Registers weights `prefix.l<k>.w` (out x in, Xavier) and biases
    /// `prefix.l<k>.b` (zeros) for each consecutive width pair.
    pub fn register<R: Real>(
        store: &mut ParamStore<R>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        widths: &[usize],
        final_linear: bool,
    ) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least one layer");
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for k in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[k], widths[k + 1]);
            let w = store.register_xavier(&format!("{prefix}.l{k}.w"), fan_out, fan_in, rng);
            let b = store.register_zeros(&format!("{prefix}.l{k}.b"), vec![fan_out]);
            layers.push((w, b));
        }
        MlpParams {
            layers,
            widths: widths.to_vec(),
            final_linear,
        }
    }

    pub fn in_width(&self) -> usize {
        self.widths[0]
    }

    pub fn out_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Row-wise forward: `x` is n x in, result is n x out.
    pub fn forward<R: Real>(
        &self,
        tape: &mut Tape<R>,
        staged: &StagedParams,
        x: NodeId,
    ) -> NodeId {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (k, &(w, b)) in self.layers.iter().enumerate() {
            let prod = tape.matmul_nt(h, staged.node(w));
            h = tape.add_bias(prod, staged.node(b));
            if k < last || !self.final_linear {
                h = tape.sigmoid(h);
            }
        }
        h
    }
}
