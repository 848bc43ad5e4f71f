//! Directed labeled graphs over unit classes.
//!
//! A state is a graph whose nodes are units (each with a class and a feature
//! vector) and whose arcs are typed observation channels. An arc label is
//! determined by the (observer class, observed class) pair; only agent-class
//! nodes ever aggregate, so arcs always point at agents. Self-loops are not
//! stored: the message-passing layers carry a dedicated self term instead.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Index into a [`ClassTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeClassId(pub usize);

/// Arc label; bijective with (agent class, neighbor class) pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub usize);

#[derive(Clone, Debug)]
pub struct ClassSpec {
    pub name: String,
    pub feature_width: usize,
    pub is_agent: bool,
    /// Number of actions for agent classes, 0 otherwise.
    pub action_count: usize,
}

#[derive(Clone, Debug)]
pub struct ClassTable {
    classes: Vec<ClassSpec>,
}

impl ClassTable {
    pub fn new(classes: Vec<ClassSpec>) -> Result<Self> {
        if !classes.iter().any(|c| c.is_agent) {
            return Err(Error::Config(
                "class table needs at least one agent class".into(),
            ));
        }
        for c in &classes {
            if c.is_agent != (c.action_count > 0) {
                return Err(Error::Config(format!(
                    "class {}: action_count must be positive exactly for agent classes, got {} with is_agent={}",
                    c.name, c.action_count, c.is_agent
                )));
            }
            if c.feature_width == 0 {
                return Err(Error::Config(format!(
                    "class {}: feature_width must be positive",
                    c.name
                )));
            }
        }
        Ok(ClassTable { classes })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn get(&self, id: NodeClassId) -> &ClassSpec {
        &self.classes[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeClassId> {
        (0..self.classes.len()).map(NodeClassId)
    }

    /// Agent classes in class-id order (the set Z).
    pub fn agent_classes(&self) -> Vec<NodeClassId> {
        self.ids().filter(|&c| self.get(c).is_agent).collect()
    }

    pub fn lookup(&self, name: &str) -> Option<NodeClassId> {
        self.classes
            .iter()
            .position(|c| c.name == name)
            .map(NodeClassId)
    }
}

/// The full relation scheme: one label per (agent class, neighbor class)
/// pair, agent class major, neighbor class minor.
#[derive(Clone, Debug)]
pub struct RelationMap {
    pairs: Vec<(NodeClassId, NodeClassId)>,
    by_pair: Vec<Vec<Option<RelationId>>>,
}

pub fn build_relations(table: &ClassTable) -> Result<RelationMap> {
    let agents = table.agent_classes();
    if agents.is_empty() {
        return Err(Error::Config(
            "cannot build relations without agent classes".into(),
        ));
    }
    let n = table.len();
    let mut pairs = Vec::with_capacity(agents.len() * n);
    let mut by_pair = vec![vec![None; n]; n];
    for &a in &agents {
        for m in table.ids() {
            by_pair[a.0][m.0] = Some(RelationId(pairs.len()));
            pairs.push((a, m));
        }
    }
    Ok(RelationMap { pairs, by_pair })
}

impl RelationMap {
    /// |R| = |Z| * |C|.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Label for an agent of class `agent` observing a node of class
    /// `neighbor`; `None` when `agent` is not an agent class.
    pub fn relation_of(&self, agent: NodeClassId, neighbor: NodeClassId) -> Option<RelationId> {
        self.by_pair[agent.0][neighbor.0]
    }

    pub fn pair(&self, r: RelationId) -> (NodeClassId, NodeClassId) {
        self.pairs[r.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = RelationId> {
        (0..self.pairs.len()).map(RelationId)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GraphArc {
    pub src: usize,
    pub dst: usize,
    pub relation: RelationId,
}

/// One environment state as a graph. Node ids are dense 0..n-1; immutable
/// once built.
#[derive(Clone, Debug, PartialEq)]
pub struct StateGraph {
    nodes: Vec<(NodeClassId, Vec<f64>)>,
    arcs: Vec<GraphArc>,
    agent_ids: Vec<usize>,
}

impl StateGraph {
    pub fn new(
        nodes: Vec<(NodeClassId, Vec<f64>)>,
        arcs: Vec<GraphArc>,
        agent_ids: Vec<usize>,
    ) -> Self {
        StateGraph {
            nodes,
            arcs,
            agent_ids,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn class_of(&self, node: usize) -> NodeClassId {
        self.nodes[node].0
    }

    pub fn features(&self, node: usize) -> &[f64] {
        &self.nodes[node].1
    }

    pub fn arcs(&self) -> &[GraphArc] {
        &self.arcs
    }

    /// Live agents, in action order.
    pub fn agent_ids(&self) -> &[usize] {
        &self.agent_ids
    }

    /// Sources of arcs into `node` under `relation`, by arc-list scan.
    pub fn in_neighbors(&self, node: usize, relation: RelationId) -> Result<Vec<usize>> {
        if node >= self.nodes.len() {
            return Err(Error::Lookup(format!(
                "node {} not in graph of {} nodes",
                node,
                self.nodes.len()
            )));
        }
        Ok(self
            .arcs
            .iter()
            .filter(|a| a.dst == node && a.relation == relation)
            .map(|a| a.src)
            .collect())
    }

    /// Checks every structural invariant and reports all violations.
    pub fn validate(&self, table: &ClassTable, relations: &RelationMap) -> Vec<String> {
        let mut violations = Vec::new();
        if self.agent_ids.is_empty() {
            violations.push("no agent nodes".to_string());
        }
        for (id, (class, feats)) in self.nodes.iter().enumerate() {
            if class.0 >= table.len() {
                violations.push(format!(
                    "node {}: class {} outside table of {} classes",
                    id,
                    class.0,
                    table.len()
                ));
                continue;
            }
            let spec = table.get(*class);
            if feats.len() != spec.feature_width {
                violations.push(format!(
                    "node {}: feature vector length {} but class {} expects width {}",
                    id,
                    feats.len(),
                    spec.name,
                    spec.feature_width
                ));
            }
        }
        for &agent in &self.agent_ids {
            if agent >= self.nodes.len() {
                violations.push(format!("agent id {agent} is not a node"));
            } else if !table.get(self.class_of(agent)).is_agent {
                violations.push(format!("agent id {agent} has a non-agent class"));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for arc in &self.arcs {
            if arc.src >= self.nodes.len() || arc.dst >= self.nodes.len() {
                violations.push(format!(
                    "arc {} -> {} references a missing node",
                    arc.src, arc.dst
                ));
                continue;
            }
            if !seen.insert((arc.src, arc.dst, arc.relation)) {
                violations.push(format!(
                    "duplicate arc {} -> {} relation {}",
                    arc.src, arc.dst, arc.relation.0
                ));
            }
            let dst_class = self.class_of(arc.dst);
            if !table.get(dst_class).is_agent {
                violations.push(format!(
                    "arc {} -> {}: target class {} is not an agent class",
                    arc.src,
                    arc.dst,
                    table.get(dst_class).name
                ));
                continue;
            }
            let expected = relations.relation_of(dst_class, self.class_of(arc.src));
            if expected != Some(arc.relation) {
                violations.push(format!(
                    "arc {} -> {}: relation {} does not match the classes (expected {:?})",
                    arc.src,
                    arc.dst,
                    arc.relation.0,
                    expected.map(|r| r.0)
                ));
            }
        }
        violations
    }

    /// Line-oriented text form: `nodes <n> arcs <m>`, one node line
    /// `<id> <class> <f1> .. <fd>`, one arc line `<src> <dst> <relation>`.
    /// Floats carry 9 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "nodes {} arcs {}", self.nodes.len(), self.arcs.len());
        for (id, (class, feats)) in self.nodes.iter().enumerate() {
            let _ = write!(out, "{} {}", id, class.0);
            for f in feats {
                let _ = write!(out, " {:.8e}", f);
            }
            out.push('\n');
        }
        for arc in &self.arcs {
            let _ = writeln!(out, "{} {} {}", arc.src, arc.dst, arc.relation.0);
        }
        out
    }

    /// Parses the text form. Liveness is environment state the format does
    /// not carry, so every agent-class node comes back marked as an agent.
    pub fn from_text(text: &str, table: &ClassTable) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| format_err(1, "empty input".into()))?;
        let header_parts: Vec<&str> = header.split_whitespace().collect();
        let (n, m) = match header_parts.as_slice() {
            ["nodes", n, "arcs", m] => (
                parse_num::<usize>(n, 1)?,
                parse_num::<usize>(m, 1)?,
            ),
            _ => {
                return Err(format_err(
                    1,
                    format!("expected `nodes <n> arcs <m>`, got `{header}`"),
                ))
            }
        };

        let mut nodes = Vec::with_capacity(n);
        for want in 0..n {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| format_err(want as u64 + 2, "missing node line".into()))?;
            let lineno = idx as u64 + 1;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() < 2 {
                return Err(format_err(lineno, format!("malformed node line `{line}`")));
            }
            let id = parse_num::<usize>(parts[0], lineno)?;
            if id != want {
                return Err(format_err(
                    lineno,
                    format!("node ids must be dense and ordered; expected {want}, got {id}"),
                ));
            }
            let class = NodeClassId(parse_num::<usize>(parts[1], lineno)?);
            if class.0 >= table.len() {
                return Err(format_err(
                    lineno,
                    format!("class {} outside table of {} classes", class.0, table.len()),
                ));
            }
            let feats = parts[2..]
                .iter()
                .map(|p| parse_num::<f64>(p, lineno))
                .collect::<Result<Vec<f64>>>()?;
            if feats.len() != table.get(class).feature_width {
                return Err(format_err(
                    lineno,
                    format!(
                        "node {} has {} features but class {} expects {}",
                        id,
                        feats.len(),
                        table.get(class).name,
                        table.get(class).feature_width
                    ),
                ));
            }
            nodes.push((class, feats));
        }

        let mut arcs = Vec::with_capacity(m);
        for _ in 0..m {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| format_err(n as u64 + 2, "missing arc line".into()))?;
            let lineno = idx as u64 + 1;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(format_err(lineno, format!("malformed arc line `{line}`")));
            }
            arcs.push(GraphArc {
                src: parse_num(parts[0], lineno)?,
                dst: parse_num(parts[1], lineno)?,
                relation: RelationId(parse_num(parts[2], lineno)?),
            });
        }

        let agent_ids = (0..nodes.len())
            .filter(|&i| table.get(nodes[i].0).is_agent)
            .collect();
        Ok(StateGraph {
            nodes,
            arcs,
            agent_ids,
        })
    }
}

fn format_err(line: u64, message: String) -> Error {
    Error::Format {
        offset: line,
        message,
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: u64) -> Result<T> {
    s.parse()
        .map_err(|_| format_err(line, format!("cannot parse `{s}`")))
}
