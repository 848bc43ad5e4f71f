//! Multi-head graph attention over {in-neighbors, self}, with the attention
//! weights kept on the tape so a temporal regularizer can differentiate
//! through them.

use rand_chacha::ChaCha8Rng;

use super::layout::GraphLayout;
use crate::error::{Error, Result};
use crate::numerics::{NodeId, ParamId, ParamStore, Real, StagedParams, Tape};

const LEAKY_SLOPE: f64 = 0.2;

struct HeadParams {
    proj: ParamId,
    a_own: ParamId,
    a_nbr: ParamId,
}

/// Attention weights of one layer. `segments[row]` names the members the
/// node at `row` attends over; `head_weights[h]` is the matching column of
/// softmax weights on the tape.
pub struct AttentionMap {
    pub segments: Vec<AttnSegment>,
    pub head_weights: Vec<NodeId>,
}

#[derive(Clone, Debug)]
pub struct AttnSegment {
    pub start: usize,
    pub members: Vec<usize>,
}

impl AttentionMap {
    pub fn head_count(&self) -> usize {
        self.head_weights.len()
    }

    /// The softmax row of one node under one head, as (member row, weight).
    pub fn distribution<R: Real>(
        &self,
        tape: &Tape<R>,
        row: usize,
        head: usize,
    ) -> Vec<(usize, f64)> {
        let seg = &self.segments[row];
        let weights = tape.value(self.head_weights[head]);
        seg.members
            .iter()
            .enumerate()
            .map(|(k, &m)| (m, weights.data()[seg.start + k].into_f64()))
            .collect()
    }
}

pub struct GatLayerParams {
    heads: Vec<HeadParams>,
    in_width: usize,
    out_width: usize,
}

impl GatLayerParams {
    pub fn register<R: Real>(
        store: &mut ParamStore<R>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_width: usize,
        out_width: usize,
        n_heads: usize,
    ) -> Result<Self> {
        if n_heads == 0 || out_width % n_heads != 0 {
            return Err(Error::Config(format!(
                "output width {out_width} is not divisible into {n_heads} heads"
            )));
        }
        let d_head = out_width / n_heads;
        let heads = (0..n_heads)
            .map(|h| HeadParams {
                proj: store.register_xavier(&format!("{prefix}.h{h}.proj"), d_head, in_width, rng),
                a_own: store.register_xavier(&format!("{prefix}.h{h}.a_own"), 1, d_head, rng),
                a_nbr: store.register_xavier(&format!("{prefix}.h{h}.a_nbr"), 1, d_head, rng),
            })
            .collect();
        Ok(GatLayerParams {
            heads,
            in_width,
            out_width,
        })
    }

    pub fn widths(&self) -> (usize, usize) {
        (self.in_width, self.out_width)
    }

    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    /// Per head: project, score owner/member pairs with a leaky-relu logit,
    /// softmax within each node's member run, aggregate, sigmoid. Heads are
    /// concatenated; non-agent rows pass through at equal widths.
    pub fn forward<R: Real>(
        &self,
        tape: &mut Tape<R>,
        staged: &StagedParams,
        layout: &GraphLayout,
        x: NodeId,
    ) -> Result<(NodeId, AttentionMap)> {
        let got = tape.value(x).cols();
        if got != self.in_width {
            return Err(Error::Contract(format!(
                "gat layer expects width {}, got {got}",
                self.in_width
            )));
        }
        let n = layout.node_count();
        let owners = layout.attn.owners.clone();
        let members = layout.attn.members.clone();
        let softmax_runs: Vec<(usize, usize)> = layout.attn.segments.clone();

        let mut head_outs = Vec::with_capacity(self.heads.len());
        let mut head_weights = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let p = tape.matmul_nt(x, staged.node(head.proj));
            let s_own = tape.matmul_nt(p, staged.node(head.a_own));
            let s_nbr = tape.matmul_nt(p, staged.node(head.a_nbr));
            let own = tape.gather_rows(s_own, owners.clone());
            let nbr = tape.gather_rows(s_nbr, members.clone());
            let raw = tape.add(own, nbr);
            let logits = tape.leaky_relu(raw, R::from_f64(LEAKY_SLOPE));
            let weights = tape.segment_softmax(logits, softmax_runs.clone());
            let vals = tape.gather_rows(p, members.clone());
            let weighted = tape.scale_rows_by(vals, weights);
            let agg = tape.scatter_add_rows(weighted, owners.clone(), n);
            head_outs.push(tape.sigmoid(agg));
            head_weights.push(weights);
        }
        let cat = tape.concat_cols(&head_outs);

        let out = if self.in_width == self.out_width {
            let (agent_w, other_w) = layout.blend_weights::<R>();
            let kept = tape.scale_rows(cat, agent_w);
            let passed = tape.scale_rows(x, other_w);
            tape.add(kept, passed)
        } else {
            cat
        };
        let segments = layout
            .attn
            .segments
            .iter()
            .map(|&(start, len)| AttnSegment {
                start,
                members: layout.attn.members[start..start + len].to_vec(),
            })
            .collect();
        Ok((
            out,
            AttentionMap {
                segments,
                head_weights,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_relations, ClassTable, GraphArc, NodeClassId, RelationId, StateGraph};
    use crate::numerics::Tensor;
    use rand::{Rng, SeedableRng};

    fn table() -> ClassTable {
        crate::env::EnvConfig::default().class_table().unwrap()
    }

    fn sig(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    fn leaky(v: f64) -> f64 {
        if v >= 0.0 {
            v
        } else {
            v * LEAKY_SLOPE
        }
    }

    fn run(
        store: &ParamStore<f64>,
        layer: &GatLayerParams,
        layout: &GraphLayout,
        x: Tensor<f64>,
    ) -> (Tensor<f64>, Vec<Vec<Vec<(usize, f64)>>>) {
        let mut tape = Tape::new();
        let staged = StagedParams::stage(store, &mut tape);
        let input = tape.constant(x);
        let (out, map) = layer.forward(&mut tape, &staged, layout, input).unwrap();
        let n = layout.node_count();
        let dists = (0..map.head_count())
            .map(|h| (0..n).map(|row| map.distribution(&tape, row, h)).collect())
            .collect();
        (tape.value(out).clone(), dists)
    }

    #[test]
    fn isolated_node_attends_only_to_itself() {
        let table = table();
        let relations = build_relations(&table).unwrap();
        let g = StateGraph::new(vec![(NodeClassId(0), vec![0.0; 5])], vec![], vec![0]);
        let layout = GraphLayout::single(&g, &table, &relations).unwrap();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = GatLayerParams::register(&mut store, &mut rng, "g", 3, 4, 2).unwrap();
        let (_, dists) = run(&store, &layer, &layout, Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]));
        for head in &dists {
            assert_eq!(head[0], vec![(0, 1.0)]);
        }
    }

    #[test]
    fn equal_logits_share_attention_equally() {
        let table = table();
        let relations = build_relations(&table).unwrap();
        let g = StateGraph::new(
            vec![
                (NodeClassId(0), vec![0.0; 5]),
                (NodeClassId(2), vec![0.0; 5]),
                (NodeClassId(2), vec![0.0; 5]),
            ],
            vec![
                GraphArc { src: 1, dst: 0, relation: RelationId(2) },
                GraphArc { src: 2, dst: 0, relation: RelationId(2) },
            ],
            vec![0],
        );
        let layout = GraphLayout::single(&g, &table, &relations).unwrap();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = GatLayerParams::register(&mut store, &mut rng, "g", 2, 2, 1).unwrap();
        // Zero attention vectors flatten every logit to zero.
        for name in ["g.h0.a_own", "g.h0.a_nbr"] {
            let id = store.lookup(name).unwrap();
            let shape = store.get(id).shape().to_vec();
            store.set(id, Tensor::zeros(shape));
        }
        let x = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let (_, dists) = run(&store, &layer, &layout, x);
        for &(_, w) in &dists[0][0] {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rows_always_sum_to_one() {
        let table = table();
        let relations = build_relations(&table).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let g = crate::model::rgcn::tests::random_graph(&mut rng, &table, 6);
            let layout = GraphLayout::single(&g, &table, &relations).unwrap();
            let mut store = ParamStore::new();
            let layer = GatLayerParams::register(&mut store, &mut rng, "g", 3, 4, 2).unwrap();
            let n = g.node_count();
            let x: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (_, dists) = run(&store, &layer, &layout, Tensor::matrix(n, 3, x));
            for head in &dists {
                for row in head {
                    let total: f64 = row.iter().map(|&(_, w)| w).sum();
                    assert!((total - 1.0).abs() < 1e-6, "row sums to {total}");
                    for &(_, w) in row {
                        assert!(w >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn layer_matches_dense_attention_oracle() {
        let table = table();
        let relations = build_relations(&table).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for trial in 0..40 {
            let g = crate::model::rgcn::tests::random_graph(&mut rng, &table, 4);
            let layout = GraphLayout::single(&g, &table, &relations).unwrap();
            let n = g.node_count();
            let (d_in, d_out, n_heads) = (3, 4, 2);
            let mut store = ParamStore::new();
            let layer =
                GatLayerParams::register(&mut store, &mut rng, "g", d_in, d_out, n_heads).unwrap();
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d_in).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();

            let grab = |name: &str| store.get(store.lookup(name).unwrap()).clone();
            let mut want = vec![Vec::new(); n];
            for h in 0..n_heads {
                let proj = grab(&format!("g.h{h}.proj"));
                let a_own = grab(&format!("g.h{h}.a_own"));
                let a_nbr = grab(&format!("g.h{h}.a_nbr"));
                let d_head = d_out / n_heads;
                let p: Vec<Vec<f64>> = x
                    .iter()
                    .map(|xi| {
                        (0..d_head)
                            .map(|r| proj.row(r).iter().zip(xi).map(|(a, b)| a * b).sum())
                            .collect()
                    })
                    .collect();
                let score = |v: &[f64], a: &Tensor<f64>| -> f64 {
                    a.row(0).iter().zip(v).map(|(a, b)| a * b).sum()
                };
                for i in 0..n {
                    let mut members: Vec<usize> = g
                        .arcs()
                        .iter()
                        .filter(|arc| arc.dst == i)
                        .map(|arc| arc.src)
                        .collect();
                    members.push(i);
                    members.sort_unstable();
                    members.dedup();
                    let logits: Vec<f64> = members
                        .iter()
                        .map(|&j| leaky(score(&p[i], &a_own) + score(&p[j], &a_nbr)))
                        .collect();
                    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    let mut agg = vec![0.0; d_head];
                    for (k, &j) in members.iter().enumerate() {
                        for (a, v) in agg.iter_mut().zip(&p[j]) {
                            *a += exps[k] / z * v;
                        }
                    }
                    want[i].extend(agg.into_iter().map(sig));
                }
            }

            let flat: Vec<f64> = x.iter().flatten().copied().collect();
            let (got, _) = run(&store, &layer, &layout, Tensor::matrix(n, d_in, flat));
            for i in 0..n {
                // Width changes here (3 -> 4), so every row follows the
                // attention equation, agents and non-agents alike.
                for j in 0..d_out {
                    assert!(
                        (got.row(i)[j] - want[i][j]).abs() < 1e-6,
                        "trial {trial} node {i} col {j}: {} vs {}",
                        got.row(i)[j],
                        want[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn same_width_passes_non_agent_rows_through() {
        let table = table();
        let relations = build_relations(&table).unwrap();
        let g = StateGraph::new(
            vec![
                (NodeClassId(0), vec![0.0; 5]),
                (NodeClassId(3), vec![0.0; 4]),
            ],
            vec![GraphArc { src: 1, dst: 0, relation: RelationId(3) }],
            vec![0],
        );
        let layout = GraphLayout::single(&g, &table, &relations).unwrap();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer = GatLayerParams::register(&mut store, &mut rng, "g", 4, 4, 2).unwrap();
        let x = Tensor::matrix(2, 4, vec![0.1, 0.2, 0.3, 0.4, -1.0, 2.0, -3.0, 4.0]);
        let (out, _) = run(&store, &layer, &layout, x);
        assert_eq!(out.row(1), &[-1.0, 2.0, -3.0, 4.0]);
    }

    #[test]
    fn head_count_must_divide_output_width() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(GatLayerParams::register(&mut store, &mut rng, "g", 4, 6, 4).is_err());
        assert!(GatLayerParams::register(&mut store, &mut rng, "g2", 4, 8, 0).is_err());
    }
}
