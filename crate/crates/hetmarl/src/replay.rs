//! Proportional prioritized replay over graph transitions. Sampling mass
//! is priority^alpha, held in a binary sum tree; a parallel max tree keeps
//! the new-transition priority rule O(log n).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::env::ActionMask;
use crate::error::{Error, Result};
use crate::graph::StateGraph;

/// Priority floor added to |td error| so every stored transition stays
/// sampleable.
pub const PRIORITY_FLOOR: f64 = 1e-5;

/// Exact-rebuild cadence: after this many leaf writes the internal sums are
/// recomputed from scratch, bounding float drift.
const REBUILD_EVERY: usize = 8192;

#[derive(Clone, Debug)]
pub struct Transition {
    pub s: StateGraph,
    pub actions: Vec<usize>,
    pub s_next: StateGraph,
    pub rewards: Vec<f64>,
    pub done: bool,
    pub masks_next: Vec<ActionMask>,
}

impl Transition {
    pub fn new(
        s: StateGraph,
        actions: Vec<usize>,
        s_next: StateGraph,
        rewards: Vec<f64>,
        done: bool,
        masks_next: Vec<ActionMask>,
    ) -> Result<Self> {
        let agents = s.agent_ids().len();
        if actions.len() != agents || rewards.len() != agents {
            return Err(Error::Contract(format!(
                "transition carries {} actions and {} rewards for {agents} live agents",
                actions.len(),
                rewards.len()
            )));
        }
        Ok(Transition {
            s,
            actions,
            s_next,
            rewards,
            done,
            masks_next,
        })
    }
}

/// Binary sum tree over `capacity` (a power of two) leaves. `sums` carries
/// the sampling mass, `maxs` the raw priorities; both use the classic
/// 1-indexed layout with leaves at capacity..2*capacity.
pub struct SumTree {
    sums: Vec<f64>,
    maxs: Vec<f64>,
    capacity: usize,
    writes: usize,
}

impl SumTree {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 || !capacity.is_power_of_two() {
            return Err(Error::Config(format!(
                "sum tree capacity must be a power of two, got {capacity}"
            )));
        }
        Ok(SumTree {
            sums: vec![0.0; 2 * capacity],
            maxs: vec![0.0; 2 * capacity],
            capacity,
            writes: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.sums[1]
    }

    /// Largest raw priority currently stored.
    pub fn max_raw(&self) -> f64 {
        self.maxs[1]
    }

    pub fn mass(&self, leaf: usize) -> f64 {
        self.sums[self.capacity + leaf]
    }

    pub fn raw(&self, leaf: usize) -> f64 {
        self.maxs[self.capacity + leaf]
    }

    pub fn set(&mut self, leaf: usize, mass: f64, raw: f64) {
        assert!(leaf < self.capacity, "leaf {leaf} out of range");
        assert!(mass >= 0.0 && raw >= 0.0, "priorities are non-negative");
        let mut node = self.capacity + leaf;
        let delta = mass - self.sums[node];
        self.sums[node] = mass;
        self.maxs[node] = raw;
        while node > 1 {
            node /= 2;
            self.sums[node] += delta;
            self.maxs[node] = self.maxs[2 * node].max(self.maxs[2 * node + 1]);
        }
        self.writes += 1;
        if self.writes >= REBUILD_EVERY {
            self.rebuild();
        }
    }

    /// Recomputes every internal node exactly from the leaves.
    pub fn rebuild(&mut self) {
        for node in (1..self.capacity).rev() {
            self.sums[node] = self.sums[2 * node] + self.sums[2 * node + 1];
            self.maxs[node] = self.maxs[2 * node].max(self.maxs[2 * node + 1]);
        }
        self.writes = 0;
    }

    /// Leaf holding the `target`-th unit of cumulative mass.
    pub fn find(&self, target: f64) -> usize {
        let mut node = 1;
        let mut t = target.max(0.0);
        while node < self.capacity {
            let left = 2 * node;
            if t < self.sums[left] {
                node = left;
            } else {
                t -= self.sums[left];
                node = left + 1;
            }
        }
        node - self.capacity
    }
}

/// A sampled slot plus the write generation it referred to; priority
/// updates against an overwritten slot are dropped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleIndex {
    pub slot: usize,
    pub generation: u64,
}

pub struct PrioritizedReplay {
    tree: SumTree,
    items: Vec<Option<Transition>>,
    generations: Vec<u64>,
    capacity: usize,
    size: usize,
    cursor: usize,
    alpha_applied: f64,
}

impl PrioritizedReplay {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        let tree = SumTree::new(capacity.next_power_of_two())?;
        Ok(PrioritizedReplay {
            tree,
            items: (0..capacity).map(|_| None).collect(),
            generations: vec![0; capacity],
            capacity,
            size: 0,
            cursor: 0,
            alpha_applied: 1.0,
        })
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Raw (un-exponentiated) priority of a slot.
    pub fn priority(&self, slot: usize) -> f64 {
        self.tree.raw(slot)
    }

    pub fn get(&self, index: SampleIndex) -> Option<&Transition> {
        if index.slot < self.capacity && self.generations[index.slot] == index.generation {
            self.items[index.slot].as_ref()
        } else {
            None
        }
    }

    /// Stores `t` at the write cursor with the maximum current raw
    /// priority (1.0 into an empty buffer), overwriting the oldest entry
    /// at capacity.
    pub fn push(&mut self, t: Transition) -> SampleIndex {
        let raw = if self.size == 0 {
            1.0
        } else {
            self.tree.max_raw()
        };
        let slot = self.cursor;
        self.items[slot] = Some(t);
        self.generations[slot] += 1;
        self.tree.set(slot, raw.powf(self.alpha_applied), raw);
        self.cursor = (self.cursor + 1) % self.capacity;
        self.size = (self.size + 1).min(self.capacity);
        SampleIndex {
            slot,
            generation: self.generations[slot],
        }
    }

    /// Stratified proportional sample: the cumulative mass splits into
    /// `batch` equal segments, one uniform draw each. Weights are
    /// (N * P(i))^(-beta), normalized so the largest in the batch is 1.
    pub fn sample(
        &mut self,
        batch: usize,
        alpha: f64,
        beta: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<SampleIndex>, Vec<f64>)> {
        if self.size == 0 {
            return Err(Error::Contract("sample from an empty replay buffer".into()));
        }
        if batch == 0 || batch > self.size {
            return Err(Error::Contract(format!(
                "batch {batch} from a buffer holding {}",
                self.size
            )));
        }
        if alpha != self.alpha_applied {
            for slot in 0..self.size {
                let raw = self.tree.raw(slot);
                self.tree.set(slot, raw.powf(alpha), raw);
            }
            self.tree.rebuild();
            self.alpha_applied = alpha;
        }
        let total = self.tree.total();
        if !(total > 0.0) {
            return Err(Error::Contract("replay mass vanished".into()));
        }
        let seg = total / batch as f64;
        let n = self.size as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for k in 0..batch {
            let target = (k as f64 + rng.gen::<f64>()) * seg;
            let slot = self.tree.find(target).min(self.size - 1);
            let p = self.tree.mass(slot) / total;
            weights.push((n * p).powf(-beta));
            indices.push(SampleIndex {
                slot,
                generation: self.generations[slot],
            });
        }
        let max_w = weights.iter().copied().fold(f64::MIN, f64::max);
        for w in &mut weights {
            *w /= max_w;
        }
        Ok((indices, weights))
    }

    /// p = |td_error| + floor for every still-live index; overwritten slots
    /// are skipped.
    pub fn update_priorities(&mut self, indices: &[SampleIndex], td_errors: &[f64]) -> Result<()> {
        if indices.len() != td_errors.len() {
            return Err(Error::Contract(format!(
                "{} indices for {} td errors",
                indices.len(),
                td_errors.len()
            )));
        }
        for (index, &delta) in indices.iter().zip(td_errors) {
            if index.slot >= self.capacity || self.generations[index.slot] != index.generation {
                continue;
            }
            let raw = delta.abs() + PRIORITY_FLOOR;
            self.tree.set(index.slot, raw.powf(self.alpha_applied), raw);
        }
        Ok(())
    }
}
