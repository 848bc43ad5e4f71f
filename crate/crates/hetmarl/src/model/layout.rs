//! Precomputed indexing for running the network over one or more graphs in
//! a single pass. Graphs are merged block-diagonally: node ids are offset,
//! arcs stay within their own block, and every gather/scatter index the
//! forward pass needs is derived once here.

use crate::error::{Error, Result};
use crate::graph::{ClassTable, NodeClassId, RelationMap, StateGraph};
use crate::numerics::{Real, Tensor};

/// A live agent inside a batch: which graph it came from and its node id
/// there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct AgentRef {
    pub graph: usize,
    pub node: usize,
}

/// Arcs of one relation, grouped for mean aggregation: `srcs[k]` feeds
/// `dsts[dst_slot[k]]`, and `inv_count` holds 1/|in-neighborhood| per
/// distinct destination.
pub(crate) struct RelationGroup {
    pub srcs: Vec<usize>,
    pub dst_slot: Vec<usize>,
    pub dsts: Vec<usize>,
    pub inv_count: Vec<f64>,
}

/// Attention bookkeeping: for every merged node, the contiguous run of
/// member rows (`self` plus in-neighbors) inside the flattened logit vector.
pub(crate) struct AttnLayout {
    pub owners: Vec<usize>,
    pub members: Vec<usize>,
    pub segments: Vec<(usize, usize)>,
}

pub struct GraphLayout {
    node_count: usize,
    graph_count: usize,
    node_origin: Vec<(usize, usize)>,
    pub(crate) class_rows: Vec<Vec<usize>>,
    pub(crate) class_features: Vec<Tensor<f64>>,
    agent_class_rows: Vec<usize>,
    pub(crate) relation_groups: Vec<RelationGroup>,
    pub(crate) attn: AttnLayout,
    pub(crate) agents_by_class: Vec<Vec<(AgentRef, usize)>>,
    agent_order: Vec<Vec<usize>>,
}

impl GraphLayout {
    pub fn single(g: &StateGraph, table: &ClassTable, relations: &RelationMap) -> Result<Self> {
        Self::new(&[g], table, relations)
    }

    pub fn new(
        graphs: &[&StateGraph],
        table: &ClassTable,
        relations: &RelationMap,
    ) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::Contract("layout needs at least one graph".into()));
        }
        for (gi, g) in graphs.iter().enumerate() {
            let violations = g.validate(table, relations);
            if !violations.is_empty() {
                return Err(Error::Contract(format!(
                    "graph {gi} fails validation: {}",
                    violations.join("; ")
                )));
            }
        }

        let mut offsets = Vec::with_capacity(graphs.len());
        let mut total = 0usize;
        for g in graphs {
            offsets.push(total);
            total += g.node_count();
        }

        let mut node_origin = Vec::with_capacity(total);
        let mut merged_class = Vec::with_capacity(total);
        for (gi, g) in graphs.iter().enumerate() {
            for node in 0..g.node_count() {
                node_origin.push((gi, node));
                merged_class.push(g.class_of(node));
            }
        }

        let mut class_rows = vec![Vec::new(); table.len()];
        let mut class_feature_data: Vec<Vec<f64>> = vec![Vec::new(); table.len()];
        let mut agent_class_rows = Vec::new();
        for (row, &(gi, node)) in node_origin.iter().enumerate() {
            let class = merged_class[row];
            class_rows[class.0].push(row);
            class_feature_data[class.0].extend_from_slice(graphs[gi].features(node));
            if table.get(class).is_agent {
                agent_class_rows.push(row);
            }
        }
        let class_features = class_feature_data
            .into_iter()
            .enumerate()
            .map(|(c, data)| {
                let width = table.get(NodeClassId(c)).feature_width;
                Tensor::matrix(class_rows[c].len(), width, data)
            })
            .collect();

        // Per relation, arcs in (graph, emission) order; destinations are
        // deduplicated in first-seen order for the mean normalizer.
        let mut relation_groups: Vec<RelationGroup> = relations
            .ids()
            .map(|_| RelationGroup {
                srcs: Vec::new(),
                dst_slot: Vec::new(),
                dsts: Vec::new(),
                inv_count: Vec::new(),
            })
            .collect();
        let mut in_neighbors: Vec<Vec<usize>> = vec![Vec::new(); total];
        for (gi, g) in graphs.iter().enumerate() {
            let base = offsets[gi];
            for arc in g.arcs() {
                let group = &mut relation_groups[arc.relation.0];
                let (src, dst) = (base + arc.src, base + arc.dst);
                let slot = match group.dsts.iter().position(|&d| d == dst) {
                    Some(s) => s,
                    None => {
                        group.dsts.push(dst);
                        group.inv_count.push(0.0);
                        group.dsts.len() - 1
                    }
                };
                group.srcs.push(src);
                group.dst_slot.push(slot);
                group.inv_count[slot] += 1.0;
                in_neighbors[dst].push(src);
            }
        }
        for group in &mut relation_groups {
            for c in &mut group.inv_count {
                *c = 1.0 / *c;
            }
        }

        let mut attn = AttnLayout {
            owners: Vec::new(),
            members: Vec::new(),
            segments: Vec::with_capacity(total),
        };
        for (row, nbrs) in in_neighbors.iter().enumerate() {
            let start = attn.members.len();
            let mut members = Vec::with_capacity(nbrs.len() + 1);
            members.push(row);
            members.extend(nbrs.iter().copied());
            members.sort_unstable();
            members.dedup();
            for &m in &members {
                attn.owners.push(row);
                attn.members.push(m);
            }
            attn.segments.push((start, members.len()));
        }

        let mut agents_by_class = vec![Vec::new(); table.len()];
        let mut agent_order = Vec::with_capacity(graphs.len());
        for (gi, g) in graphs.iter().enumerate() {
            agent_order.push(g.agent_ids().to_vec());
            for &node in g.agent_ids() {
                let row = offsets[gi] + node;
                agents_by_class[merged_class[row].0].push((AgentRef { graph: gi, node }, row));
            }
        }

        Ok(GraphLayout {
            node_count: total,
            graph_count: graphs.len(),
            node_origin,
            class_rows,
            class_features,
            agent_class_rows,
            relation_groups,
            attn,
            agents_by_class,
            agent_order,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn graph_count(&self) -> usize {
        self.graph_count
    }

    /// (graph index, node id within that graph) for a merged row.
    pub fn origin(&self, row: usize) -> (usize, usize) {
        self.node_origin[row]
    }

    /// Live-agent node ids of one graph, in its own emission order.
    pub fn agent_order(&self, graph: usize) -> &[usize] {
        &self.agent_order[graph]
    }

    pub fn total_agents(&self) -> usize {
        self.agent_order.iter().map(Vec::len).sum()
    }

    /// Merged rows whose class is an agent class (live or not).
    pub(crate) fn agent_rows(&self) -> &[usize] {
        &self.agent_class_rows
    }

    /// Row weights that keep agent-class rows and zero the rest, and the
    /// complement; used to blend pass-through rows at same-width layers.
    pub(crate) fn blend_weights<R: Real>(&self) -> (Vec<R>, Vec<R>) {
        let mut agent = vec![R::zero(); self.node_count];
        let mut other = vec![R::one(); self.node_count];
        for &row in &self.agent_class_rows {
            agent[row] = R::one();
            other[row] = R::zero();
        }
        (agent, other)
    }
}
