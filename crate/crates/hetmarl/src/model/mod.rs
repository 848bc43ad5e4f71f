//! The graph Q-network: per-class encoders feed a stack of relational or
//! attentional graph convolutions, and per-class heads read the final agent
//! embeddings out as action values.

mod checkpoint;
mod gat;
mod layout;
mod mlp;
mod rgcn;

pub use checkpoint::{load as load_checkpoint, load_file as load_checkpoint_file, read_records,
                     save as save_checkpoint, save_file as save_checkpoint_file};
pub use gat::{AttentionMap, AttnSegment, GatLayerParams};
pub use layout::{AgentRef, GraphLayout};
pub use mlp::MlpParams;
pub use rgcn::{compose_weight, RgcnLayerParams};

use rand_chacha::ChaCha8Rng;

use crate::env::ActionMask;
use crate::error::{Error, Result};
use crate::graph::{ClassTable, NodeClassId, RelationMap, StateGraph};
use crate::numerics::{LossFn, NodeId, ParamStore, Real, StagedParams, Tape};
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommKind {
    Rgcn { bases: usize },
    Gat { heads: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub comm: CommKind,
    /// Concatenate every convolution layer's output as the observation
    /// instead of the last layer's alone.
    pub frf: bool,
    pub embed_width: usize,
    pub hidden_width: usize,
    pub comm_layers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            comm: CommKind::Rgcn { bases: 4 },
            frf: false,
            embed_width: 64,
            hidden_width: 128,
            comm_layers: 4,
        }
    }
}

impl ModelConfig {
    /// (in, out) widths of each convolution layer: embed in, hidden inside,
    /// embed out.
    pub fn layer_widths(&self) -> Vec<(usize, usize)> {
        let k = self.comm_layers;
        (0..k)
            .map(|i| {
                let w_in = if i == 0 { self.embed_width } else { self.hidden_width };
                let w_out = if i == k - 1 { self.embed_width } else { self.hidden_width };
                (w_in, w_out)
            })
            .collect()
    }

    /// Width of the per-agent observation entering the Q-heads.
    pub fn observation_width(&self) -> usize {
        if self.frf {
            self.layer_widths().iter().map(|&(_, out)| out).sum()
        } else {
            self.embed_width
        }
    }
}

enum CommLayer {
    Rgcn(RgcnLayerParams),
    Gat(GatLayerParams),
}

/// Q vectors of every live agent of one class: row k of the `node` matrix
/// belongs to `agents[k]`.
pub struct ClassQ {
    pub class: NodeClassId,
    pub node: NodeId,
    pub agents: Vec<AgentRef>,
}

pub struct ForwardOut {
    pub class_q: Vec<ClassQ>,
    /// One map per convolution layer; empty unless the attentional stack is
    /// in use.
    pub attention: Vec<AttentionMap>,
}

pub struct Model {
    classes: ClassTable,
    relations: RelationMap,
    cfg: ModelConfig,
    encoders: Vec<MlpParams>,
    comm: Vec<CommLayer>,
    qheads: Vec<Option<MlpParams>>,
}

impl Model {
    /// Registers every parameter in `store` and fixes the architecture.
    /// Registration order is deterministic, so equal seeds build equal
    /// networks.
    pub fn build<R: Real>(
        store: &mut ParamStore<R>,
        rng: &mut ChaCha8Rng,
        classes: &ClassTable,
        relations: &RelationMap,
        cfg: ModelConfig,
    ) -> Result<Model> {
        if cfg.comm_layers == 0 {
            return Err(Error::Config("at least one convolution layer".into()));
        }
        let mut encoders = Vec::with_capacity(classes.len());
        for c in classes.ids() {
            let spec = classes.get(c);
            encoders.push(MlpParams::register(
                store,
                rng,
                &format!("enc.{}", spec.name),
                &[
                    spec.feature_width,
                    cfg.hidden_width,
                    cfg.hidden_width,
                    cfg.embed_width,
                ],
                false,
            ));
        }
        let mut comm = Vec::with_capacity(cfg.comm_layers);
        for (k, (w_in, w_out)) in cfg.layer_widths().into_iter().enumerate() {
            let prefix = format!("comm.{k}");
            comm.push(match cfg.comm {
                CommKind::Rgcn { bases } => CommLayer::Rgcn(RgcnLayerParams::register(
                    store,
                    rng,
                    &prefix,
                    w_in,
                    w_out,
                    relations.len(),
                    bases,
                )?),
                CommKind::Gat { heads } => CommLayer::Gat(GatLayerParams::register(
                    store, rng, &prefix, w_in, w_out, heads,
                )?),
            });
        }
        let obs_width = cfg.observation_width();
        let mut qheads = Vec::with_capacity(classes.len());
        for c in classes.ids() {
            let spec = classes.get(c);
            qheads.push(if spec.is_agent {
                Some(MlpParams::register(
                    store,
                    rng,
                    &format!("qhead.{}", spec.name),
                    &[obs_width, cfg.hidden_width, cfg.hidden_width, spec.action_count],
                    true,
                ))
            } else {
                None
            });
        }
        Ok(Model {
            classes: classes.clone(),
            relations: relations.clone(),
            cfg,
            encoders,
            comm,
            qheads,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn classes(&self) -> &ClassTable {
        &self.classes
    }

    pub fn relations(&self) -> &RelationMap {
        &self.relations
    }

    pub fn layout(&self, graphs: &[&StateGraph]) -> Result<GraphLayout> {
        GraphLayout::new(graphs, &self.classes, &self.relations)
    }

    /// Per-class encoding of every node, scattered back into one
    /// node-count x embed matrix.
    pub fn encode<R: Real>(
        &self,
        tape: &mut Tape<R>,
        staged: &StagedParams,
        layout: &GraphLayout,
    ) -> NodeId {
        let n = layout.node_count();
        let mut acc: Option<NodeId> = None;
        for (c, rows) in layout.class_rows.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let x = tape.constant(layout.class_features[c].cast::<R>());
            let h = self.encoders[c].forward(tape, staged, x);
            let spread = tape.scatter_add_rows(h, rows.clone(), n);
            acc = Some(match acc {
                Some(a) => tape.add(a, spread),
                None => spread,
            });
        }
        acc.expect("layout covers at least one node")
    }

    /// Observations for the agent rows of one class under the configured
    /// receptive field: last layer's rows, or every layer's concatenated.
    fn observations<R: Real>(
        &self,
        tape: &mut Tape<R>,
        layer_outs: &[NodeId],
        rows: Vec<usize>,
    ) -> NodeId {
        if self.cfg.frf {
            let parts: Vec<NodeId> = layer_outs
                .iter()
                .map(|&h| tape.gather_rows(h, rows.clone()))
                .collect();
            tape.concat_cols(&parts)
        } else {
            tape.gather_rows(*layer_outs.last().unwrap(), rows)
        }
    }

    pub fn forward<R: Real>(
        &self,
        tape: &mut Tape<R>,
        staged: &StagedParams,
        layout: &GraphLayout,
    ) -> Result<ForwardOut> {
        let mut h = self.encode(tape, staged, layout);
        let mut layer_outs = Vec::with_capacity(self.comm.len());
        let mut attention = Vec::new();
        for layer in &self.comm {
            h = match layer {
                CommLayer::Rgcn(p) => p.forward(tape, staged, layout, h)?,
                CommLayer::Gat(p) => {
                    let (out, map) = p.forward(tape, staged, layout, h)?;
                    attention.push(map);
                    out
                }
            };
            layer_outs.push(h);
        }
        let mut class_q = Vec::new();
        for c in self.classes.ids() {
            let bucket = &layout.agents_by_class[c.0];
            if bucket.is_empty() {
                continue;
            }
            let head = self.qheads[c.0].as_ref().expect("agents imply a head");
            let rows: Vec<usize> = bucket.iter().map(|&(_, row)| row).collect();
            let obs = self.observations(tape, &layer_outs, rows);
            let q = head.forward(tape, staged, obs);
            class_q.push(ClassQ {
                class: c,
                node: q,
                agents: bucket.iter().map(|&(a, _)| a).collect(),
            });
        }
        Ok(ForwardOut {
            class_q,
            attention,
        })
    }

    /// Q vectors of every live agent, grouped per input graph and ordered
    /// like each graph's agent list. Parameters are read, never trained.
    pub fn q_values<R: Real>(
        &self,
        store: &ParamStore<R>,
        graphs: &[&StateGraph],
    ) -> Result<Vec<Vec<(usize, Vec<f64>)>>> {
        let layout = self.layout(graphs)?;
        let mut tape = Tape::new();
        let staged = StagedParams::stage_frozen(store, &mut tape);
        let out = self.forward(&mut tape, &staged, &layout)?;
        let mut table: std::collections::HashMap<(usize, usize), Vec<f64>> =
            std::collections::HashMap::new();
        for cq in &out.class_q {
            let values = tape.value(cq.node);
            for (k, agent) in cq.agents.iter().enumerate() {
                let row = values.row(k).iter().map(|v| v.into_f64()).collect();
                table.insert((agent.graph, agent.node), row);
            }
        }
        (0..layout.graph_count())
            .map(|g| {
                layout
                    .agent_order(g)
                    .iter()
                    .map(|&node| {
                        table
                            .remove(&(g, node))
                            .map(|q| (node, q))
                            .ok_or_else(|| {
                                Error::Contract(format!("agent {node} of graph {g} got no Q row"))
                            })
                    })
                    .collect()
            })
            .collect()
    }
}

/// Epsilon-greedy selection over one graph's agents. With probability
/// `epsilon` a uniform valid action, otherwise the best valid one; ties go
/// to the lowest action id.
pub fn select_actions(
    q: &[(usize, Vec<f64>)],
    masks: &[ActionMask],
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if q.len() != masks.len() {
        return Err(Error::Contract(format!(
            "{} Q vectors for {} masks",
            q.len(),
            masks.len()
        )));
    }
    q.iter()
        .zip(masks)
        .map(|((agent, values), mask)| {
            if values.len() != mask.len() {
                return Err(Error::Contract(format!(
                    "agent {agent}: {} Q values for {} actions",
                    values.len(),
                    mask.len()
                )));
            }
            let valid = mask.valid_actions();
            if valid.is_empty() {
                return Err(Error::Contract(format!("agent {agent} has no valid action")));
            }
            if rng.gen::<f64>() < epsilon {
                Ok(valid[rng.gen_range(0..valid.len())])
            } else {
                let mut best = valid[0];
                for &a in &valid[1..] {
                    if values[a] > values[best] {
                        best = a;
                    }
                }
                Ok(best)
            }
        })
        .collect()
}

/// Sum of every agent's every Q value; the simplest scalar that back-
/// propagates through the whole network, used by the gradient checker.
pub struct SummedQLoss<'a> {
    pub model: &'a Model,
    pub layout: &'a GraphLayout,
}

impl LossFn for SummedQLoss<'_> {
    fn loss<R: Real>(&self, tape: &mut Tape<R>, staged: &StagedParams) -> NodeId {
        let out = self
            .model
            .forward(tape, staged, self.layout)
            .expect("layout was validated at construction");
        let mut acc: Option<NodeId> = None;
        for cq in &out.class_q {
            let s = tape.sum(cq.node);
            acc = Some(match acc {
                Some(a) => tape.add(a, s),
                None => s,
            });
        }
        acc.expect("at least one agent class present")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, SkirmishEnv};
    use crate::graph::{build_relations, GraphArc};
    use crate::numerics::{check_gradients, GradCheckConfig, Tensor};
    use rand::SeedableRng;

    fn table() -> ClassTable {
        EnvConfig::default().class_table().unwrap()
    }

    fn build_f64(cfg: ModelConfig, seed: u64) -> (Model, ParamStore<f64>) {
        let table = table();
        let relations = build_relations(&table).unwrap();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Model::build(&mut store, &mut rng, &table, &relations, cfg).unwrap();
        (model, store)
    }

    fn env_graph(seed: u64) -> StateGraph {
        let mut e = SkirmishEnv::new(EnvConfig::default()).unwrap();
        let (g, _) = e.reset(seed);
        g
    }

    #[test]
    fn zeroed_encoders_emit_half_embeddings() {
        let (model, mut store) = build_f64(ModelConfig::default(), 0);
        for id in store.ids().collect::<Vec<_>>() {
            if store.name(id).starts_with("enc.") {
                let shape = store.get(id).shape().to_vec();
                store.set(id, Tensor::zeros(shape));
            }
        }
        let g = env_graph(1);
        let layout = model.layout(&[&g]).unwrap();
        let mut tape = Tape::new();
        let staged = StagedParams::stage_frozen(&store, &mut tape);
        let h0 = model.encode(&mut tape, &staged, &layout);
        for &v in tape.value(h0).data() {
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn same_seed_builds_identical_registries() {
        let (_, a) = build_f64(ModelConfig::default(), 9);
        let (_, b) = build_f64(ModelConfig::default(), 9);
        assert_eq!(a.len(), b.len());
        for (ia, ib) in a.ids().zip(b.ids()) {
            assert_eq!(a.name(ia), b.name(ib));
            assert_eq!(a.get(ia).data(), b.get(ib).data());
        }
    }

    fn permute(g: &StateGraph, pi: &[usize]) -> StateGraph {
        let n = g.node_count();
        let mut nodes = vec![None; n];
        for i in 0..n {
            nodes[pi[i]] = Some((g.class_of(i), g.features(i).to_vec()));
        }
        let arcs = g
            .arcs()
            .iter()
            .map(|a| GraphArc {
                src: pi[a.src],
                dst: pi[a.dst],
                relation: a.relation,
            })
            .collect();
        let mut agents: Vec<usize> = g.agent_ids().iter().map(|&a| pi[a]).collect();
        agents.sort_unstable();
        StateGraph::new(nodes.into_iter().map(Option::unwrap).collect(), arcs, agents)
    }

    #[test]
    fn node_relabeling_leaves_agent_q_vectors_alone() {
        use rand::seq::SliceRandom;
        let table = table();
        let relations = build_relations(&table).unwrap();
        for (kind, seed) in [
            (CommKind::Rgcn { bases: 3 }, 0u64),
            (CommKind::Gat { heads: 2 }, 1),
        ] {
            let cfg = ModelConfig {
                comm: kind,
                comm_layers: 2,
                embed_width: 8,
                hidden_width: 12,
                ..ModelConfig::default()
            };
            let (model, store) = build_f64(cfg, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for trial in 0..20 {
                let g = crate::model::rgcn::tests::random_graph(&mut rng, &table, 6);
                let _ = relations;
                let mut pi: Vec<usize> = (0..g.node_count()).collect();
                pi.shuffle(&mut rng);
                let pg = permute(&g, &pi);
                let q0 = model.q_values(&store, &[&g]).unwrap();
                let q1 = model.q_values(&store, &[&pg]).unwrap();
                let lookup: std::collections::HashMap<usize, &Vec<f64>> =
                    q1[0].iter().map(|(node, q)| (*node, q)).collect();
                for (node, q) in &q0[0] {
                    let permuted = lookup[&pi[*node]];
                    for (a, b) in q.iter().zip(permuted.iter()) {
                        assert!(
                            (a - b).abs() < 1e-6,
                            "trial {trial}: node {node} diverged: {a} vs {b}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn identical_agents_with_identical_views_score_identically() {
        let (model, store) = build_f64(ModelConfig::default(), 4);
        // Two ally_melee agents with equal features, both observed by the
        // same enemy; one extra enemy keeps the graph asymmetric elsewhere.
        let g = StateGraph::new(
            vec![
                (NodeClassId(1), vec![0.25, 0.5, 0.5, 1.0]),
                (NodeClassId(1), vec![0.25, 0.5, 0.5, 1.0]),
                (NodeClassId(2), vec![0.1, 0.2, 0.3, 0.4, 1.0]),
            ],
            vec![
                GraphArc { src: 2, dst: 0, relation: crate::graph::RelationId(6) },
                GraphArc { src: 2, dst: 1, relation: crate::graph::RelationId(6) },
            ],
            vec![0, 1],
        );
        let q = model.q_values(&store, &[&g]).unwrap();
        assert_eq!(q[0][0].1, q[0][1].1);
    }

    #[test]
    fn receptive_field_flag_widens_the_observation() {
        let narrow = ModelConfig::default();
        let wide = ModelConfig {
            frf: true,
            ..ModelConfig::default()
        };
        assert_eq!(narrow.observation_width(), 64);
        assert_eq!(wide.observation_width(), 128 + 128 + 128 + 64);
        for cfg in [narrow, wide] {
            let (model, store) = build_f64(cfg, 2);
            let g = env_graph(0);
            let q = model.q_values(&store, &[&g]).unwrap();
            assert_eq!(q[0].len(), 5);
            for (_, row) in &q[0] {
                assert_eq!(row.len(), EnvConfig::default().action_count());
                assert!(row.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn batched_graphs_score_like_separate_passes() {
        for kind in [CommKind::Rgcn { bases: 4 }, CommKind::Gat { heads: 4 }] {
            let cfg = ModelConfig { comm: kind, ..ModelConfig::default() };
            let (model, store) = build_f64(cfg, 6);
            let (g1, g2) = (env_graph(10), env_graph(11));
            let joint = model.q_values(&store, &[&g1, &g2]).unwrap();
            let solo1 = model.q_values(&store, &[&g1]).unwrap();
            let solo2 = model.q_values(&store, &[&g2]).unwrap();
            assert_eq!(joint[0], solo1[0]);
            assert_eq!(joint[1], solo2[0]);
        }
    }

    #[test]
    fn greedy_selection_takes_the_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let masks = vec![ActionMask::new(vec![true, true, true])];
        let q = vec![(0, vec![1.0, 5.0, 3.0])];
        assert_eq!(select_actions(&q, &masks, 0.0, &mut rng).unwrap(), vec![1]);
    }

    #[test]
    fn greedy_selection_respects_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let masks = vec![ActionMask::new(vec![true, false, true])];
        let q = vec![(0, vec![1.0, 5.0, 3.0])];
        assert_eq!(select_actions(&q, &masks, 0.0, &mut rng).unwrap(), vec![2]);
    }

    #[test]
    fn greedy_ties_break_toward_the_lowest_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let masks = vec![ActionMask::new(vec![true, true, true])];
        let q = vec![(0, vec![2.0, 7.0, 7.0])];
        assert_eq!(select_actions(&q, &masks, 0.0, &mut rng).unwrap(), vec![1]);
    }

    #[test]
    fn full_exploration_is_uniform_over_valid_actions() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let masks = vec![ActionMask::new(vec![true, true, false, true, true])];
        let q = vec![(0, vec![0.0; 5])];
        let mut counts = [0usize; 5];
        let draws = 100_000;
        for _ in 0..draws {
            let a = select_actions(&q, &masks, 1.0, &mut rng).unwrap()[0];
            counts[a] += 1;
        }
        assert_eq!(counts[2], 0);
        for &a in &[0usize, 1, 3, 4] {
            let f = counts[a] as f64 / draws as f64;
            assert!((f - 0.25).abs() < 0.01, "action {a} frequency {f}");
        }
    }

    #[test]
    fn empty_masks_and_length_mismatches_are_contract_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // An all-invalid mask is unrepresentable: the constructor enforces
        // the environment's at-least-one-action guarantee.
        assert!(std::panic::catch_unwind(|| ActionMask::new(vec![false, false])).is_err());
        let q = vec![(0, vec![0.0, 0.0])];
        let masks = vec![ActionMask::new(vec![true, true, true])];
        assert!(select_actions(&q, &masks, 0.0, &mut rng).is_err());
        assert!(select_actions(&q, &[], 0.0, &mut rng).is_err());
    }

    #[test]
    fn whole_network_gradients_match_finite_differences() {
        let table = table();
        let relations = build_relations(&table).unwrap();
        for (kind, seed) in [
            (CommKind::Rgcn { bases: 2 }, 5u64),
            (CommKind::Gat { heads: 2 }, 6),
        ] {
            let cfg = ModelConfig {
                comm: kind,
                frf: true,
                embed_width: 6,
                hidden_width: 8,
                comm_layers: 3,
            };
            let mut store = ParamStore::<f64>::new();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = Model::build(&mut store, &mut rng, &table, &relations, cfg).unwrap();
            let g1 = crate::model::rgcn::tests::random_graph(&mut rng, &table, 6);
            let g2 = crate::model::rgcn::tests::random_graph(&mut rng, &table, 6);
            let layout = model.layout(&[&g1, &g2]).unwrap();
            let loss = SummedQLoss { model: &model, layout: &layout };
            let report = check_gradients(
                &store,
                &loss,
                &GradCheckConfig {
                    h: 1e-4,
                    samples_per_tensor: Some(4),
                    seed: 99,
                },
            );
            assert!(
                report.max_rel_err < 1e-4,
                "{kind:?}: {} at {}",
                report.max_rel_err,
                report.worst_param
            );
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_q_values() {
        let table = table();
        let relations = build_relations(&table).unwrap();
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let model =
            Model::build(&mut store, &mut rng, &table, &relations, ModelConfig::default())
                .unwrap();
        let g = env_graph(4);
        let before = model.q_values(&store, &[&g]).unwrap();
        let mut bytes = Vec::new();
        save_checkpoint(&store, &mut bytes).unwrap();
        // Rebuild fresh (different seed), then restore.
        let mut store2 = ParamStore::<f32>::new();
        let mut rng2 = ChaCha8Rng::seed_from_u64(999);
        let model2 =
            Model::build(&mut store2, &mut rng2, &table, &relations, ModelConfig::default())
                .unwrap();
        load_checkpoint(&mut store2, &mut bytes.as_slice()).unwrap();
        let after = model2.q_values(&store2, &[&g]).unwrap();
        assert_eq!(before, after);
    }
}
