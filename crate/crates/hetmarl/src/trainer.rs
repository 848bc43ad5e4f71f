//! The Q-learning loop: epsilon schedule, temporal-difference targets from
//! a frozen copy of the network, the per-class squared loss with importance
//! weights, an optional temporal attention regularizer, and the train/eval
//! drivers.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{random_policy, EnvConfig, SkirmishEnv};
use crate::error::{Error, Result};
use crate::graph::StateGraph;
use crate::model::{select_actions, AttentionMap, CommKind, GraphLayout, Model, ModelConfig};
use crate::numerics::{
    adam_update, AdamConfig, AdamState, LossFn, NodeId, ParamGrads, ParamStore, Real,
    StagedParams, Tape, Tensor,
};
use crate::replay::{PrioritizedReplay, Transition};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub total_steps: usize,
    /// Environment steps between frozen-network refreshes.
    pub target_update_interval: usize,
    pub lr: f64,
    pub l2_coef: f64,
    pub trr_coef: f64,
    pub gamma: f64,
    pub epsilon_max: f64,
    pub epsilon_min: f64,
    pub per_alpha: f64,
    pub per_beta: f64,
    /// Anneal beta linearly to 1 over the run instead of holding it fixed.
    pub anneal_beta: bool,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Environment steps taken before the first optimizer update.
    pub warmup: usize,
    /// Temporal relation regularization (attention stack only).
    pub trr: bool,
    pub seed: u64,
    pub model: ModelConfig,
    pub env: EnvConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: 1_000_000,
            target_update_interval: 250,
            lr: 2.5e-4,
            l2_coef: 1e-5,
            trr_coef: 0.01,
            gamma: 0.99,
            epsilon_max: 0.95,
            epsilon_min: 0.1,
            per_alpha: 0.6,
            per_beta: 0.4,
            anneal_beta: false,
            batch_size: 32,
            buffer_capacity: 50_000,
            warmup: 0,
            trr: false,
            seed: 0,
            model: ModelConfig::default(),
            env: EnvConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "discount {} outside [0, 1)",
                self.gamma
            )));
        }
        if self.epsilon_min > self.epsilon_max
            || !(0.0..=1.0).contains(&self.epsilon_min)
            || !(0.0..=1.0).contains(&self.epsilon_max)
        {
            return Err(Error::Config(format!(
                "epsilon range [{}, {}] is not an ordered pair inside [0, 1]",
                self.epsilon_min, self.epsilon_max
            )));
        }
        if self.trr && !matches!(self.model.comm, CommKind::Gat { .. }) {
            return Err(Error::Config(
                "temporal relation regularization needs the attention stack".into(),
            ));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(Error::Config(format!(
                "batch {} does not fit buffer capacity {}",
                self.batch_size, self.buffer_capacity
            )));
        }
        if self.lr <= 0.0 || self.trr_coef < 0.0 || self.l2_coef < 0.0 {
            return Err(Error::Config(
                "learning rate must be positive, penalty coefficients non-negative".into(),
            ));
        }
        if self.per_alpha < 0.0 || !(0.0..=1.0).contains(&self.per_beta) {
            return Err(Error::Config(format!(
                "priority exponents alpha {} / beta {} out of range",
                self.per_alpha, self.per_beta
            )));
        }
        if self.target_update_interval == 0 {
            return Err(Error::Config("target update interval must be positive".into()));
        }
        self.env.validate()
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            l2: self.l2_coef,
            ..AdamConfig::default()
        }
    }
}

/// Linear decay from epsilon_max at step 0 to epsilon_min at half the run,
/// constant afterward.
pub fn epsilon(step: usize, cfg: &TrainConfig) -> f64 {
    let half = cfg.total_steps / 2;
    if step >= half || half == 0 {
        return cfg.epsilon_min;
    }
    let frac = step as f64 / half as f64;
    cfg.epsilon_max + (cfg.epsilon_min - cfg.epsilon_max) * frac
}

/// Importance-weight exponent at a step: fixed, or annealed linearly to 1.
pub fn beta(step: usize, cfg: &TrainConfig) -> f64 {
    if !cfg.anneal_beta || cfg.total_steps == 0 {
        return cfg.per_beta;
    }
    let frac = (step as f64 / cfg.total_steps as f64).min(1.0);
    cfg.per_beta + (1.0 - cfg.per_beta) * frac
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainMetrics {
    pub episode: usize,
    pub steps_alive: u32,
    pub mean_agent_reward: f64,
    pub epsilon: f64,
    /// Mean loss over the episode's optimizer updates, 0 before any run.
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainReport {
    pub episodes: usize,
    pub env_steps: usize,
    pub optimizer_steps: usize,
    pub target_syncs: usize,
}

/// One live agent's contribution to the batch loss.
#[derive(Clone, Debug)]
pub struct QTerm {
    pub graph: usize,
    pub node: usize,
    pub action: usize,
    pub y: f64,
    pub w: f64,
    pub transition: usize,
}

/// One (agent, head) attention-matching term: gather indices into the top
/// layer's flat weight column, against a fixed reference distribution over
/// the same neighbor set.
#[derive(Clone, Debug)]
pub struct TemporalAttnTerm {
    pub head: usize,
    pub indices: Vec<usize>,
    pub probs: Vec<f64>,
    /// Sum of p*ln(p) over the reference distribution (zero entries skipped).
    pub entropy_term: f64,
}

/// Everything the batch loss needs, with the frozen network already folded
/// into plain numbers: targets are constants by construction.
pub struct BatchPrep {
    pub layout: GraphLayout,
    pub qterms: Vec<QTerm>,
    pub attn_terms: Vec<TemporalAttnTerm>,
    pub batch_size: usize,
}

/// Per-agent target: y = r for terminal transitions and for agents that do
/// not survive into the next state, otherwise r plus the discounted best
/// valid action value under the frozen network.
pub fn prepare_batch<R: Real>(
    model: &Model,
    target: &ParamStore<R>,
    batch: &[&Transition],
    is_weights: &[f64],
    gamma: f64,
    trr: bool,
) -> Result<BatchPrep> {
    if batch.is_empty() || batch.len() != is_weights.len() {
        return Err(Error::Contract(format!(
            "{} transitions with {} importance weights",
            batch.len(),
            is_weights.len()
        )));
    }
    if trr && !matches!(model.config().comm, CommKind::Gat { .. }) {
        return Err(Error::Config(
            "temporal relation regularization needs the attention stack".into(),
        ));
    }
    let s_graphs: Vec<&StateGraph> = batch.iter().map(|t| &t.s).collect();
    let layout = model.layout(&s_graphs)?;

    // One frozen-network pass over the surviving next states covers both the
    // action values for targets and the reference attention.
    let mut next_slot: Vec<Option<usize>> = vec![None; batch.len()];
    let mut next_graphs: Vec<&StateGraph> = Vec::new();
    for (i, t) in batch.iter().enumerate() {
        if !t.done {
            next_slot[i] = Some(next_graphs.len());
            next_graphs.push(&t.s_next);
        }
    }
    let mut next_q: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
    let mut next_attn: Option<(GraphLayout, Vec<Vec<f64>>, Vec<AttentionMap>)> = None;
    if !next_graphs.is_empty() {
        let next_layout = model.layout(&next_graphs)?;
        let mut tape: Tape<R> = Tape::new();
        let staged = StagedParams::stage_frozen(target, &mut tape);
        let out = model.forward(&mut tape, &staged, &next_layout)?;
        for cq in &out.class_q {
            let values = tape.value(cq.node);
            for (k, agent) in cq.agents.iter().enumerate() {
                let row = values.row(k).iter().map(|v| v.into_f64()).collect();
                next_q.insert((agent.graph, agent.node), row);
            }
        }
        if trr {
            let top = out
                .attention
                .last()
                .ok_or_else(|| Error::Config("attention stack produced no weights".into()))?;
            let weights = top
                .head_weights
                .iter()
                .map(|&n| tape.value(n).data().iter().map(|v| v.into_f64()).collect())
                .collect();
            let maps = vec![AttentionMap {
                segments: top.segments.clone(),
                head_weights: top.head_weights.clone(),
            }];
            next_attn = Some((next_layout, weights, maps));
        }
    }

    let mut qterms = Vec::new();
    for (i, t) in batch.iter().enumerate() {
        for (j, &node) in t.s.agent_ids().iter().enumerate() {
            let r = t.rewards[j];
            let y = if t.done {
                r
            } else {
                let slot = next_slot[i].expect("non-terminal transitions have a next slot");
                match t.s_next.agent_ids().iter().position(|&n| n == node) {
                    None => r,
                    Some(k) => {
                        let q = next_q.get(&(slot, node)).ok_or_else(|| {
                            Error::Contract(format!(
                                "agent {node} of batch transition {i} got no target action values"
                            ))
                        })?;
                        let mask = &t.masks_next[k];
                        let best = mask
                            .valid_actions()
                            .into_iter()
                            .map(|a| q[a])
                            .fold(f64::NEG_INFINITY, f64::max);
                        r + gamma * best
                    }
                }
            };
            if !y.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite target for batch transition {i}"
                )));
            }
            qterms.push(QTerm {
                graph: i,
                node,
                action: t.actions[j],
                y,
                w: is_weights[i],
                transition: i,
            });
        }
    }

    let mut attn_terms = Vec::new();
    if let Some((next_layout, head_vals, _)) = &next_attn {
        let row_of_s = row_index(&layout);
        let row_of_next = row_index(next_layout);
        let heads = head_vals.len();
        for (i, t) in batch.iter().enumerate() {
            let Some(slot) = next_slot[i] else { continue };
            for &node in t.s.agent_ids() {
                if !t.s_next.agent_ids().contains(&node) {
                    continue;
                }
                let rp = row_of_s[&(i, node)];
                let rt = row_of_next[&(slot, node)];
                let seg_p = &layout.attn.segments[rp];
                let members_p = &layout.attn.members[seg_p.0..seg_p.0 + seg_p.1];
                let seg_t = &next_layout.attn.segments[rt];
                let members_t = &next_layout.attn.members[seg_t.0..seg_t.0 + seg_t.1];
                // Node ids shared by both neighborhoods; the agent itself is
                // always among them.
                let ids_p: Vec<usize> = members_p.iter().map(|&m| layout.origin(m).1).collect();
                let ids_t: Vec<usize> =
                    members_t.iter().map(|&m| next_layout.origin(m).1).collect();
                let common: Vec<usize> = ids_p
                    .iter()
                    .copied()
                    .filter(|id| ids_t.contains(id))
                    .collect();
                if common.is_empty() {
                    continue;
                }
                let indices: Vec<usize> = common
                    .iter()
                    .map(|id| seg_p.0 + ids_p.iter().position(|x| x == id).unwrap())
                    .collect();
                for h in 0..heads {
                    let vals = &head_vals[h];
                    let raw: Vec<f64> = common
                        .iter()
                        .map(|id| {
                            let k = ids_t.iter().position(|x| x == id).unwrap();
                            vals[seg_t.0 + k]
                        })
                        .collect();
                    let total: f64 = raw.iter().sum();
                    let probs: Vec<f64> = raw.iter().map(|v| v / total).collect();
                    let entropy_term =
                        probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum();
                    attn_terms.push(TemporalAttnTerm {
                        head: h,
                        indices: indices.clone(),
                        probs,
                        entropy_term,
                    });
                }
            }
        }
    }

    Ok(BatchPrep {
        layout,
        qterms,
        attn_terms,
        batch_size: batch.len(),
    })
}

fn row_index(layout: &GraphLayout) -> HashMap<(usize, usize), usize> {
    (0..layout.node_count())
        .map(|row| (layout.origin(row), row))
        .collect()
}

/// Mean over terms of KL(reference || live attention), each side restricted
/// to the shared neighbor set and renormalized; the live side stays on the
/// tape so gradients reach the attention logits.
pub fn attention_divergence<R: Real>(
    tape: &mut Tape<R>,
    top: &AttentionMap,
    terms: &[TemporalAttnTerm],
) -> Option<NodeId> {
    if terms.is_empty() {
        return None;
    }
    let mut acc: Option<NodeId> = None;
    for term in terms {
        let picked = tape.gather_rows(top.head_weights[term.head], term.indices.clone());
        let total = tape.sum(picked);
        let renorm = tape.div_by_scalar(picked, total);
        let logs = tape.ln(renorm);
        let weights: Vec<R> = term.probs.iter().map(|&p| R::from_f64(p)).collect();
        let weighted = tape.scale_rows(logs, weights);
        let cross = tape.sum(weighted);
        let entropy = tape.constant(Tensor::scalar(R::from_f64(term.entropy_term)));
        let kl = tape.sub(entropy, cross);
        acc = Some(match acc {
            Some(a) => tape.add(a, kl),
            None => kl,
        });
    }
    let total = acc.expect("at least one term");
    Some(tape.scale(total, R::from_f64(1.0 / terms.len() as f64)))
}

/// Selected action values of one class block, for error extraction.
pub struct DeltaBlock {
    pub sel: NodeId,
    pub targets: Vec<f64>,
    pub transitions: Vec<usize>,
}

pub struct LossParts {
    pub loss: NodeId,
    pub blocks: Vec<DeltaBlock>,
}

impl LossParts {
    /// Mean |y - Q| per transition; errors with the offending index when a
    /// non-finite value shows up.
    pub fn mean_abs_errors<R: Real>(&self, tape: &Tape<R>, batch_size: usize) -> Result<Vec<f64>> {
        let mut sums = vec![0.0f64; batch_size];
        let mut counts = vec![0usize; batch_size];
        for block in &self.blocks {
            let sel = tape.value(block.sel);
            for (k, (&y, &tr)) in block.targets.iter().zip(&block.transitions).enumerate() {
                let delta = y - sel.data()[k].into_f64();
                if !delta.is_finite() {
                    return Err(Error::Divergence(format!(
                        "non-finite temporal-difference error at batch transition {tr}"
                    )));
                }
                sums[tr] += delta.abs();
                counts[tr] += 1;
            }
        }
        Ok(sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect())
    }
}

/// The training objective: per agent class, the importance-weighted squared
/// error between selected action values and their fixed targets, summed over
/// agents, averaged over classes and over the batch; plus the optional
/// attention-matching penalty.
pub struct BatchLoss<'a> {
    pub model: &'a Model,
    pub prep: &'a BatchPrep,
    pub trr_coef: f64,
}

impl BatchLoss<'_> {
    pub fn build<R: Real>(&self, tape: &mut Tape<R>, staged: &StagedParams) -> LossParts {
        let out = self
            .model
            .forward(tape, staged, &self.prep.layout)
            .expect("layout was validated at preparation");
        let by_key: HashMap<(usize, usize), &QTerm> = self
            .prep
            .qterms
            .iter()
            .map(|t| ((t.graph, t.node), t))
            .collect();
        let n_classes = self.model.classes().agent_classes().len();
        let mut acc: Option<NodeId> = None;
        let mut blocks = Vec::new();
        for cq in &out.class_q {
            let terms: Vec<&QTerm> = cq
                .agents
                .iter()
                .map(|a| by_key[&(a.graph, a.node)])
                .collect();
            let actions: Vec<usize> = terms.iter().map(|t| t.action).collect();
            let ys: Vec<f64> = terms.iter().map(|t| t.y).collect();
            let ws: Vec<R> = terms.iter().map(|t| R::from_f64(t.w)).collect();
            let sel = tape.select_cols_per_row(cq.node, actions);
            let y = tape.constant(Tensor::new(
                vec![ys.len(), 1],
                ys.iter().map(|&v| R::from_f64(v)).collect(),
            ));
            let diff = tape.sub(sel, y);
            let sq = tape.mul(diff, diff);
            let weighted = tape.scale_rows(sq, ws);
            let class_sum = tape.sum(weighted);
            acc = Some(match acc {
                Some(a) => tape.add(a, class_sum),
                None => class_sum,
            });
            blocks.push(DeltaBlock {
                sel,
                targets: ys,
                transitions: terms.iter().map(|t| t.transition).collect(),
            });
        }
        let raw = acc.expect("batch holds at least one agent");
        let scale = 1.0 / (n_classes as f64 * self.prep.batch_size as f64);
        let mut loss = tape.scale(raw, R::from_f64(scale));
        if self.trr_coef > 0.0 && !self.prep.attn_terms.is_empty() {
            let top = out
                .attention
                .last()
                .expect("attention terms imply an attention stack");
            if let Some(kl) = attention_divergence(tape, top, &self.prep.attn_terms) {
                let scaled = tape.scale(kl, R::from_f64(self.trr_coef));
                loss = tape.add(loss, scaled);
            }
        }
        LossParts { loss, blocks }
    }
}

impl LossFn for BatchLoss<'_> {
    fn loss<R: Real>(&self, tape: &mut Tape<R>, staged: &StagedParams) -> NodeId {
        self.build(tape, staged).loss
    }
}

fn build_network_with(
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Model, ParamStore<f32>)> {
    cfg.validate()?;
    let table = cfg.env.class_table()?;
    let relations = crate::graph::build_relations(&table)?;
    let mut store = ParamStore::<f32>::new();
    let model = Model::build(&mut store, rng, &table, &relations, cfg.model)?;
    Ok((model, store))
}

/// Builds the network described by `cfg` with weights seeded from `cfg.seed`.
///
/// The checkpoint loader requires a store whose registry matches the saved
/// one exactly, so eval paths rebuild through here before loading weights.
pub fn build_network(cfg: &TrainConfig) -> Result<(Model, ParamStore<f32>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    build_network_with(cfg, &mut rng)
}

pub struct Trainer {
    cfg: TrainConfig,
    model: Model,
    policy: ParamStore<f32>,
    target: ParamStore<f32>,
    adam: AdamState<f32>,
    buffer: PrioritizedReplay,
    env: SkirmishEnv,
    rng: ChaCha8Rng,
    optimizer_steps: usize,
    target_syncs: usize,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (model, policy) = build_network_with(&cfg, &mut rng)?;
        let target = policy.cast::<f32>();
        let adam = AdamState::new(&policy);
        let buffer = PrioritizedReplay::new(cfg.buffer_capacity)?;
        let env = SkirmishEnv::new(cfg.env.clone())?;
        Ok(Trainer {
            cfg,
            model,
            policy,
            target,
            adam,
            buffer,
            env,
            rng,
            optimizer_steps: 0,
            target_syncs: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn policy(&self) -> &ParamStore<f32> {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.policy
    }

    pub fn target(&self) -> &ParamStore<f32> {
        &self.target
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// Copies the live parameters into the frozen network, bit for bit.
    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.policy);
        self.target_syncs += 1;
    }

    /// One sampled batch, one optimizer step, fresh priorities. On
    /// divergence the live parameters are left at the last good values.
    pub fn update(&mut self, step: usize) -> Result<f64> {
        let b = beta(step, &self.cfg);
        let (indices, weights) =
            self.buffer
                .sample(self.cfg.batch_size, self.cfg.per_alpha, b, &mut self.rng)?;
        let batch: Vec<&Transition> = indices
            .iter()
            .map(|&i| self.buffer.get(i).expect("indices are fresh"))
            .collect();
        let prep = prepare_batch(
            &self.model,
            &self.target,
            &batch,
            &weights,
            self.cfg.gamma,
            self.cfg.trr,
        )?;
        drop(batch);

        let loss_fn = BatchLoss {
            model: &self.model,
            prep: &prep,
            trr_coef: if self.cfg.trr { self.cfg.trr_coef } else { 0.0 },
        };
        let mut tape: Tape<f32> = Tape::new();
        let staged = StagedParams::stage(&self.policy, &mut tape);
        let parts = loss_fn.build(&mut tape, &staged);
        let loss_v = tape.value(parts.loss).item().into_f64();
        let errors = parts.mean_abs_errors(&tape, prep.batch_size)?;
        if !loss_v.is_finite() {
            let worst = errors
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            return Err(Error::Divergence(format!(
                "non-finite loss; largest error at batch transition {worst}"
            )));
        }
        let grads = tape.backward(parts.loss);
        let pgrads = ParamGrads::collect(&self.policy, &staged, &grads);
        let snapshot = self.policy.cast::<f32>();
        if let Err(e) = adam_update(&mut self.policy, &pgrads, &mut self.adam, &self.cfg.adam()) {
            self.policy.copy_from(&snapshot);
            return Err(e);
        }
        self.buffer.update_priorities(&indices, &errors)?;
        self.optimizer_steps += 1;
        Ok(loss_v)
    }

    /// Runs the full loop: act, store, update, sync. `hooks` receives one
    /// metrics row per finished episode (plus a final partial one) and any
    /// requested periodic snapshots. Deterministic for a fixed seed and
    /// config, clock aside.
    pub fn train(&mut self, hooks: &mut dyn TrainHooks) -> Result<TrainReport> {
        let ally_count = self.cfg.env.ally_count() as f64;
        let mut episode = 0usize;
        let mut episode_steps = 0u32;
        let mut episode_reward = 0.0f64;
        let mut episode_loss_sum = 0.0f64;
        let mut episode_updates = 0usize;
        let seed = self.rng.gen::<u64>();
        let (mut graph, mut masks) = self.env.reset(seed);
        let mut eps = epsilon(0, &self.cfg);

        for step in 1..=self.cfg.total_steps {
            eps = epsilon(step - 1, &self.cfg);
            let q = self
                .model
                .q_values(&self.policy, &[&graph])?
                .pop()
                .expect("one graph in, one graph out");
            let actions = select_actions(&q, &masks, eps, &mut self.rng)?;
            let out = self.env.step(&actions)?;
            let t = Transition::new(
                graph,
                actions,
                out.graph.clone(),
                out.rewards.clone(),
                out.done,
                out.masks.clone(),
            )?;
            self.buffer.push(t);
            episode_steps += 1;
            episode_reward += out.rewards.iter().sum::<f64>();

            if step > self.cfg.warmup && self.buffer.len() >= self.cfg.batch_size {
                let loss = self.update(step)?;
                episode_loss_sum += loss;
                episode_updates += 1;
            }
            if step % self.cfg.target_update_interval == 0 {
                self.sync_target();
            }
            if let Some(interval) = hooks.checkpoint_interval() {
                if interval > 0 && step % interval == 0 {
                    hooks.on_checkpoint(step, &self.policy)?;
                }
            }

            if out.done {
                let wall_seconds = hooks.clock();
                hooks.on_episode(TrainMetrics {
                    episode,
                    steps_alive: episode_steps,
                    mean_agent_reward: episode_reward / ally_count,
                    epsilon: eps,
                    mean_loss: mean_or_zero(episode_loss_sum, episode_updates),
                    wall_seconds,
                })?;
                episode += 1;
                episode_steps = 0;
                episode_reward = 0.0;
                episode_loss_sum = 0.0;
                episode_updates = 0;
                let seed = self.rng.gen::<u64>();
                let (g, m) = self.env.reset(seed);
                graph = g;
                masks = m;
            } else {
                graph = out.graph;
                masks = out.masks;
            }
        }
        if episode_steps > 0 {
            let wall_seconds = hooks.clock();
            hooks.on_episode(TrainMetrics {
                episode,
                steps_alive: episode_steps,
                mean_agent_reward: episode_reward / ally_count,
                epsilon: eps,
                mean_loss: mean_or_zero(episode_loss_sum, episode_updates),
                wall_seconds,
            })?;
            episode += 1;
        }
        Ok(TrainReport {
            episodes: episode,
            env_steps: self.cfg.total_steps,
            optimizer_steps: self.optimizer_steps,
            target_syncs: self.target_syncs,
        })
    }
}

fn mean_or_zero(sum: f64, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Consumer side of the training loop: receives one metrics row per
/// episode, supplies the wall clock, and may ask for periodic parameter
/// snapshots.
pub trait TrainHooks {
    fn on_episode(&mut self, metrics: TrainMetrics) -> Result<()>;

    /// Wall-seconds column of the metrics rows. The default stub keeps
    /// library runs byte-reproducible.
    fn clock(&mut self) -> f64 {
        0.0
    }

    /// Environment steps between `on_checkpoint` calls; None disables them.
    fn checkpoint_interval(&self) -> Option<usize> {
        None
    }

    fn on_checkpoint(&mut self, step: usize, params: &ParamStore<f32>) -> Result<()> {
        let _ = (step, params);
        Ok(())
    }
}

/// Episode-callback-only hooks, for tests and library callers.
pub struct EpisodeSink<F: FnMut(TrainMetrics) -> Result<()>>(pub F);

impl<F: FnMut(TrainMetrics) -> Result<()>> TrainHooks for EpisodeSink<F> {
    fn on_episode(&mut self, metrics: TrainMetrics) -> Result<()> {
        (self.0)(metrics)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_steps: f64,
    pub mean_reward: f64,
    /// Same aggregates over the final tenth of the episodes (at least one).
    pub last_steps: f64,
    pub last_reward: f64,
}

/// Collapses per-episode (steps, reward-sum) rows into whole-run and
/// final-tenth aggregates, rewards divided by the team size.
pub fn summarize(per_episode: &[(u32, f64)], ally_count: f64) -> EvalReport {
    let n = per_episode.len();
    let window = (n / 10).max(1);
    let mean = |rows: &[(u32, f64)]| {
        let steps = rows.iter().map(|&(s, _)| s as f64).sum::<f64>() / rows.len() as f64;
        let reward = rows.iter().map(|&(_, r)| r).sum::<f64>() / rows.len() as f64 / ally_count;
        (steps, reward)
    };
    let (mean_steps, mean_reward) = mean(per_episode);
    let (last_steps, last_reward) = mean(&per_episode[n - window..]);
    EvalReport {
        episodes: n,
        mean_steps,
        mean_reward,
        last_steps,
        last_reward,
    }
}

fn run_episodes(
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
    mut act: impl FnMut(&StateGraph, &[crate::env::ActionMask], &mut ChaCha8Rng) -> Result<Vec<usize>>,
) -> Result<Vec<(u32, f64)>> {
    if episodes == 0 {
        return Err(Error::Contract("evaluation needs at least one episode".into()));
    }
    let mut env = SkirmishEnv::new(env_cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let ep_seed = rng.gen::<u64>();
        let (mut graph, mut masks) = env.reset(ep_seed);
        let mut steps = 0u32;
        let mut reward = 0.0f64;
        loop {
            let actions = act(&graph, &masks, &mut rng)?;
            let out = env.step(&actions)?;
            steps += 1;
            reward += out.rewards.iter().sum::<f64>();
            if out.done {
                break;
            }
            graph = out.graph;
            masks = out.masks;
        }
        rows.push((steps, reward));
    }
    Ok(rows)
}

/// Greedy-policy episodes: per-episode (steps survived, reward sum).
pub fn evaluate_episodes<R: Real>(
    model: &Model,
    store: &ParamStore<R>,
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<Vec<(u32, f64)>> {
    run_episodes(env_cfg, episodes, seed, |graph, masks, rng| {
        let q = model
            .q_values(store, &[graph])?
            .pop()
            .expect("one graph in, one graph out");
        select_actions(&q, masks, 0.0, rng)
    })
}

/// Uniform-random-policy episodes under the same protocol.
pub fn baseline_episodes(env_cfg: &EnvConfig, episodes: usize, seed: u64) -> Result<Vec<(u32, f64)>> {
    run_episodes(env_cfg, episodes, seed, |_, masks, rng| {
        Ok(random_policy(masks, rng))
    })
}

/// Greedy-policy evaluation of a parameter set.
pub fn evaluate<R: Real>(
    model: &Model,
    store: &ParamStore<R>,
    env_cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    let rows = evaluate_episodes(model, store, env_cfg, episodes, seed)?;
    Ok(summarize(&rows, env_cfg.ally_count() as f64))
}

/// Uniform-random policy under the same episode protocol.
pub fn random_baseline(env_cfg: &EnvConfig, episodes: usize, seed: u64) -> Result<EvalReport> {
    let rows = baseline_episodes(env_cfg, episodes, seed)?;
    Ok(summarize(&rows, env_cfg.ally_count() as f64))
}
