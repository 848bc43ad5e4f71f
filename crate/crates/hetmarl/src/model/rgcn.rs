//! Relational graph convolution with basis-decomposed relation weights.

use rand_chacha::ChaCha8Rng;

use super::layout::GraphLayout;
use crate::error::{Error, Result};
use crate::numerics::{NodeId, ParamId, ParamStore, Real, StagedParams, Tape};

/// W_r = sum_b a_rb V_b, staged on the tape so gradients reach both the
/// coefficients and the shared bases.
pub fn compose_weight<R: Real>(
    tape: &mut Tape<R>,
    bases: &[NodeId],
    coef: NodeId,
    relation: usize,
) -> Result<NodeId> {
    if bases.is_empty() {
        return Err(Error::Contract("compose_weight: no basis tensors".into()));
    }
    let n_bases = bases.len();
    let coef_len = tape.value(coef).numel();
    if coef_len % n_bases != 0 || relation >= coef_len / n_bases {
        return Err(Error::Contract(format!(
            "compose_weight: {coef_len} coefficients do not cover relation {relation} with {n_bases} bases"
        )));
    }
    let shape = tape.value(bases[0]).shape().to_vec();
    for &b in &bases[1..] {
        if tape.value(b).shape() != shape.as_slice() {
            return Err(Error::Contract(format!(
                "compose_weight: basis shape {:?} vs {:?}",
                tape.value(b).shape(),
                shape
            )));
        }
    }
    let mut acc = tape.scale_by_elem(bases[0], coef, relation * n_bases);
    for (b, &basis) in bases.iter().enumerate().skip(1) {
        let term = tape.scale_by_elem(basis, coef, relation * n_bases + b);
        acc = tape.add(acc, term);
    }
    Ok(acc)
}

pub struct RgcnLayerParams {
    w0: ParamId,
    bases: Vec<ParamId>,
    coef: ParamId,
    in_width: usize,
    out_width: usize,
}

impl RgcnLayerParams {
    pub fn register<R: Real>(
        store: &mut ParamStore<R>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_width: usize,
        out_width: usize,
        n_relations: usize,
        n_bases: usize,
    ) -> Result<Self> {
        if n_bases == 0 || n_bases > n_relations {
            return Err(Error::Config(format!(
                "basis count must be in 1..={n_relations}, got {n_bases}"
            )));
        }
        let w0 = store.register_xavier(&format!("{prefix}.w0"), out_width, in_width, rng);
        let bases = (0..n_bases)
            .map(|b| {
                store.register_xavier(&format!("{prefix}.basis{b}"), out_width, in_width, rng)
            })
            .collect();
        let coef = store.register_xavier(&format!("{prefix}.coef"), n_relations, n_bases, rng);
        Ok(RgcnLayerParams {
            w0,
            bases,
            coef,
            in_width,
            out_width,
        })
    }

    pub fn widths(&self) -> (usize, usize) {
        (self.in_width, self.out_width)
    }

    /// One convolution: agent rows get sigma(sum_r mean-aggregated W_r
    /// messages + W_0 x); non-agent rows pass through at equal widths and
    /// are projected by sigma(W_0 x) otherwise.
    pub fn forward<R: Real>(
        &self,
        tape: &mut Tape<R>,
        staged: &StagedParams,
        layout: &GraphLayout,
        x: NodeId,
    ) -> Result<NodeId> {
        let got = tape.value(x).cols();
        if got != self.in_width {
            return Err(Error::Contract(format!(
                "rgcn layer expects width {}, got {got}",
                self.in_width
            )));
        }
        let n = layout.node_count();
        let basis_nodes: Vec<NodeId> = self.bases.iter().map(|&b| staged.node(b)).collect();
        let coef_node = staged.node(self.coef);

        let mut acc: Option<NodeId> = None;
        for (r, group) in layout.relation_groups.iter().enumerate() {
            if group.srcs.is_empty() {
                continue;
            }
            let w_r = compose_weight(tape, &basis_nodes, coef_node, r)?;
            let gathered = tape.gather_rows(x, group.srcs.clone());
            let sums = tape.scatter_add_rows(gathered, group.dst_slot.clone(), group.dsts.len());
            let inv: Vec<R> = group.inv_count.iter().map(|&v| R::from_f64(v)).collect();
            let means = tape.scale_rows(sums, inv);
            let msg = tape.matmul_nt(means, w_r);
            let spread = tape.scatter_add_rows(msg, group.dsts.clone(), n);
            acc = Some(match acc {
                Some(a) => tape.add(a, spread),
                None => spread,
            });
        }

        let w0 = staged.node(self.w0);
        if self.in_width == self.out_width {
            // Only agent rows keep the convolution; restrict the self term
            // to them and stitch the pass-through rows back in.
            let agent_rows = layout.agent_rows().to_vec();
            let self_in = tape.gather_rows(x, agent_rows.clone());
            let self_msg = tape.matmul_nt(self_in, w0);
            let self_term = tape.scatter_add_rows(self_msg, agent_rows, n);
            let pre = match acc {
                Some(a) => tape.add(a, self_term),
                None => self_term,
            };
            let conv = tape.sigmoid(pre);
            let (agent_w, other_w) = layout.blend_weights::<R>();
            let kept = tape.scale_rows(conv, agent_w);
            let passed = tape.scale_rows(x, other_w);
            Ok(tape.add(kept, passed))
        } else {
            let self_term = tape.matmul_nt(x, w0);
            let pre = match acc {
                Some(a) => tape.add(a, self_term),
                None => self_term,
            };
            Ok(tape.sigmoid(pre))
        }
    }
}
