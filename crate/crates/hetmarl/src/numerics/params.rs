//! Named parameter storage.
//!
//! Parameters live in a [`ParamStore`], keyed both by insertion index
//! ([`ParamId`]) and by name. Iteration order is insertion order, so a store
//! built by the same construction code is always laid out identically; this
//! is what makes checkpoints and optimizer state line up across runs.

use std::collections::HashMap;

use rand::Rng;

use super::tape::{Gradients, NodeId, Tape};
use super::tensor::{Real, Tensor};

/// Index of a parameter inside its store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

pub struct ParamStore<R: Real> {
    names: Vec<String>,
    values: Vec<Tensor<R>>,
    index: HashMap<String, usize>,
}

impl<R: Real> Default for ParamStore<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> ParamStore<R> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, value: Tensor<R>) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "parameter name registered twice: {name}"
        );
        let id = ParamId(self.values.len());
        self.index.insert(name.to_string(), id.0);
        self.names.push(name.to_string());
        self.values.push(value);
        id
    }

    /// Xavier-uniform init for a [rows, cols] weight read as rows = outputs.
    pub fn register_xavier(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data: Vec<R> = (0..rows * cols)
            .map(|_| R::from_f64(rng.gen_range(-limit..limit)))
            .collect();
        self.register(name, Tensor::new(vec![rows, cols], data))
    }

    pub fn register_zeros(&mut self, name: &str, shape: Vec<usize>) -> ParamId {
        self.register(name, Tensor::zeros(shape))
    }

    pub fn register_uniform(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        lo: f64,
        hi: f64,
        rng: &mut impl Rng,
    ) -> ParamId {
        let numel: usize = shape.iter().product();
        let data: Vec<R> = (0..numel)
            .map(|_| R::from_f64(rng.gen_range(lo..hi)))
            .collect();
        self.register(name, Tensor::new(shape, data))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<R> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<R> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<R>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter())
    }

    /// Replace a parameter's value; the shape must not change.
    pub fn set(&mut self, id: ParamId, value: Tensor<R>) {
        assert_eq!(
            self.values[id.0].shape(),
            value.shape(),
            "parameter {} shape {:?} cannot be replaced by {:?}",
            self.names[id.0],
            self.values[id.0].shape(),
            value.shape()
        );
        self.values[id.0] = value;
    }

    /// Copy all values from another store with the same layout.
    pub fn copy_from(&mut self, other: &ParamStore<R>) {
        assert_eq!(
            self.names, other.names,
            "parameter stores have different layouts"
        );
        self.values = other.values.clone();
    }

    pub fn cast<R2: Real>(&self) -> ParamStore<R2> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }
}

/// Tape nodes for every parameter of a store, in [`ParamId`] order.
pub struct StagedParams {
    nodes: Vec<NodeId>,
}

impl StagedParams {
    /// Stage every parameter as a trainable leaf.
    pub fn stage<R: Real>(store: &ParamStore<R>, tape: &mut Tape<R>) -> Self {
        StagedParams {
            nodes: store.values.iter().map(|v| tape.leaf(v.clone())).collect(),
        }
    }

    /// Stage every parameter as a constant; used for target networks, whose
    /// outputs must not feed gradients back.
    pub fn stage_frozen<R: Real>(store: &ParamStore<R>, tape: &mut Tape<R>) -> Self {
        StagedParams {
            nodes: store
                .values
                .iter()
                .map(|v| tape.constant(v.clone()))
                .collect(),
        }
    }

    pub fn node(&self, id: ParamId) -> NodeId {
        self.nodes[id.0]
    }
}

/// Per-parameter gradients pulled out of a backward pass.
///
/// A parameter the loss never touched reads back as a zero tensor.
pub struct ParamGrads<R: Real> {
    by_param: Vec<Option<Tensor<R>>>,
}

impl<R: Real> ParamGrads<R> {
    pub fn collect(
        store: &ParamStore<R>,
        staged: &StagedParams,
        grads: &Gradients<R>,
    ) -> Self {
        let by_param = store
            .ids()
            .map(|id| grads.get(staged.node(id)).cloned())
            .collect();
        ParamGrads { by_param }
    }

    /// Gradient for `id`, materializing zeros for unreached parameters.
    pub fn get_or_zero(&self, id: ParamId, store: &ParamStore<R>) -> Tensor<R> {
        match &self.by_param[id.0] {
            Some(t) => t.clone(),
            None => Tensor::zeros(store.get(id).shape().to_vec()),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<R>> {
        self.by_param[id.0].as_ref()
    }

    pub fn get_by_name(&self, store: &ParamStore<R>, name: &str) -> Option<&Tensor<R>> {
        store.lookup(name).and_then(|id| self.get(id))
    }

    /// Sum of squared entries over all gradients; 0 contribution from
    /// unreached parameters.
    pub fn squared_norm(&self) -> f64 {
        self.by_param
            .iter()
            .flatten()
            .flat_map(|t| t.data().iter())
            .map(|&x| {
                let v = x.into_f64();
                v * v
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn insertion_order_is_stable() {
        let mut store = ParamStore::<f32>::new();
        store.register("b", Tensor::vector(vec![1.0]));
        store.register("a", Tensor::vector(vec![2.0]));
        let names: Vec<&str> = store.iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["b", "a"]);
        assert_eq!(store.lookup("a"), Some(ParamId(1)));
    }

    #[test]
    #[should_panic(expected = "registered twice")]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::<f32>::new();
        store.register("w", Tensor::vector(vec![1.0]));
        store.register("w", Tensor::vector(vec![2.0]));
    }

    #[test]
    fn xavier_respects_fan_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::<f32>::new();
        let id = store.register_xavier("w", 64, 32, &mut rng);
        let limit = (6.0f32 / 96.0).sqrt();
        assert!(store.get(id).data().iter().all(|&x| x.abs() < limit));
        // Not all zeros: initialization actually happened.
        assert!(store.get(id).data().iter().any(|&x| x.abs() > 1e-4));
    }

    #[test]
    fn unreached_param_reads_back_zero() {
        let mut store = ParamStore::<f64>::new();
        let used = store.register("used", Tensor::vector(vec![3.0]));
        let unused = store.register("unused", Tensor::vector(vec![5.0, 6.0]));
        let mut tape = Tape::new();
        let staged = StagedParams::stage(&store, &mut tape);
        let loss = tape.sum(staged.node(used));
        let grads = tape.backward(loss);
        let pg = ParamGrads::collect(&store, &staged, &grads);
        assert_eq!(pg.get_or_zero(used, &store).data(), &[1.0]);
        assert_eq!(pg.get_or_zero(unused, &store).data(), &[0.0, 0.0]);
        assert!(pg.get(unused).is_none());
        assert!(pg.get_by_name(&store, "used").is_some());
    }

    #[test]
    fn frozen_staging_blocks_gradients() {
        let mut store = ParamStore::<f64>::new();
        let w = store.register("w", Tensor::vector(vec![2.0]));
        let mut tape = Tape::new();
        let staged = StagedParams::stage_frozen(&store, &mut tape);
        let doubled = tape.scale(staged.node(w), 2.0);
        let loss = tape.sum(doubled);
        let grads = tape.backward(loss);
        assert!(grads.get(staged.node(w)).is_none());
    }

    #[test]
    fn cast_roundtrip_preserves_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f32>::new();
        store.register_xavier("w", 4, 3, &mut rng);
        store.register_zeros("b", vec![4]);
        let wide: ParamStore<f64> = store.cast();
        assert_eq!(wide.len(), 2);
        assert_eq!(wide.get(ParamId(0)).shape(), &[4, 3]);
        assert_eq!(
            wide.get(ParamId(0)).data()[0],
            store.get(ParamId(0)).data()[0] as f64
        );
    }
}
