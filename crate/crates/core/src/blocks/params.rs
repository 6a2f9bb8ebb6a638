//! Named parameter storage and the forward-pass context.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::ops::{BnState, BN_MOMENTUM};
use crate::tensor::{BnMode, Gradients, Graph, Tensor, Var};
use crate::{Error, Result};

/// Trainable parameters and non-trainable buffers (batch-norm running
/// statistics), both keyed by dotted names such as `b0.o03.s1.w`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
    buffers: BTreeMap<String, Tensor>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// He-normal with the given fan-in.
    He(usize),
    Zeros,
    Ones,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }

    fn materialize<R: Rng + ?Sized>(&self, rng: &mut R) -> Tensor {
        match self.init {
            Init::He(fan_in) => Tensor::randn(&self.shape, (2.0 / fan_in.max(1) as f64).sqrt(), rng),
            Init::Zeros => Tensor::zeros(&self.shape),
            Init::Ones => Tensor::full(&self.shape, 1.0),
        }
    }
}

/// Everything a network needs: trainable parameters and buffers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamPlan {
    pub params: Vec<ParamSpec>,
    pub buffers: Vec<ParamSpec>,
}

impl ParamPlan {
    pub fn extend(&mut self, other: ParamPlan) {
        self.params.extend(other.params);
        self.buffers.extend(other.buffers);
    }

    /// Batch-norm affine parameters plus running statistics under `prefix`.
    pub fn batch_norm(&mut self, prefix: &str, channels: usize) {
        self.params.push(ParamSpec::new(format!("{prefix}.gamma"), &[channels], Init::Ones));
        self.params.push(ParamSpec::new(format!("{prefix}.beta"), &[channels], Init::Zeros));
        self.buffers.push(ParamSpec::new(format!("{prefix}.mean"), &[channels], Init::Zeros));
        self.buffers.push(ParamSpec::new(format!("{prefix}.var"), &[channels], Init::Ones));
    }

    pub fn weight(&mut self, name: String, shape: &[usize], fan_in: usize) {
        self.params.push(ParamSpec::new(name, shape, Init::He(fan_in)));
    }

    pub fn bias(&mut self, name: String, width: usize) {
        self.params.push(ParamSpec::new(name, &[width], Init::Zeros));
    }

    /// Draws every parameter in plan order.
    pub fn initialize<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamStore {
        let mut store = ParamStore::default();
        for p in &self.params {
            store.params.insert(p.name.clone(), p.materialize(rng));
        }
        for b in &self.buffers {
            store.buffers.insert(b.name.clone(), b.materialize(rng));
        }
        store
    }

    /// Checks that `store` holds exactly this plan's names and shapes.
    pub fn check(&self, store: &ParamStore) -> Result<()> {
        let check_map = |kind: &str, specs: &[ParamSpec], map: &BTreeMap<String, Tensor>| -> Result<()> {
            for s in specs {
                match map.get(&s.name) {
                    None => return Err(Error::Arch(format!("missing {kind} `{}`", s.name))),
                    Some(t) if t.shape() != s.shape.as_slice() => {
                        return Err(Error::Arch(format!(
                            "{kind} `{}` has shape {:?}, expected {:?}",
                            s.name,
                            t.shape(),
                            s.shape
                        )))
                    }
                    Some(_) => {}
                }
            }
            if map.len() != specs.len() {
                let known: std::collections::HashSet<&str> = specs.iter().map(|s| s.name.as_str()).collect();
                let extra = map.keys().find(|k| !known.contains(k.as_str())).cloned().unwrap_or_default();
                return Err(Error::Arch(format!("unexpected {kind} `{extra}`")));
            }
            Ok(())
        };
        check_map("parameter", &self.params, &store.params)?;
        check_map("buffer", &self.buffers, &store.buffers)
    }
}

impl ParamStore {
    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn buffer(&self, name: &str) -> Option<&Tensor> {
        self.buffers.get(name)
    }

    pub fn buffer_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.buffers.get_mut(name)
    }

    pub fn insert_param(&mut self, name: impl Into<String>, t: Tensor) {
        self.params.insert(name.into(), t);
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, t: Tensor) {
        self.buffers.insert(name.into(), t);
    }

    pub fn params(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.buffers.iter()
    }

    pub fn num_tensors(&self) -> usize {
        self.params.len()
    }

    /// Total number of trainable scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Copies the named parameters and buffers of `plan` out of `self`.
    pub fn extract(&self, plan: &ParamPlan) -> Result<ParamStore> {
        let mut out = ParamStore::default();
        for s in &plan.params {
            let t = self
                .params
                .get(&s.name)
                .ok_or_else(|| Error::Arch(format!("missing parameter `{}`", s.name)))?;
            out.params.insert(s.name.clone(), t.clone());
        }
        for s in &plan.buffers {
            let t = self
                .buffers
                .get(&s.name)
                .ok_or_else(|| Error::Arch(format!("missing buffer `{}`", s.name)))?;
            out.buffers.insert(s.name.clone(), t.clone());
        }
        plan.check(&out)?;
        Ok(out)
    }

    /// Writes every tensor of `part` back into `self`.
    pub fn absorb(&mut self, part: &ParamStore) {
        for (k, v) in &part.params {
            self.params.insert(k.clone(), v.clone());
        }
        for (k, v) in &part.buffers {
            self.buffers.insert(k.clone(), v.clone());
        }
    }

    /// Folds batch statistics into the running buffers.
    pub fn apply_bn_updates(&mut self, updates: &[BnUpdate], momentum: f64) -> Result<()> {
        for u in updates {
            let mut state = self.bn_state(&u.prefix)?;
            state.update(&u.mean, &u.var, momentum);
            self.buffers.insert(format!("{}.mean", u.prefix), Tensor::new(vec![state.mean.len()], state.mean)?);
            self.buffers.insert(format!("{}.var", u.prefix), Tensor::new(vec![state.var.len()], state.var)?);
        }
        Ok(())
    }

    pub fn bn_state(&self, prefix: &str) -> Result<BnState> {
        let get = |suffix: &str| {
            self.buffers
                .get(&format!("{prefix}.{suffix}"))
                .map(|t| t.data().to_vec())
                .ok_or_else(|| Error::Arch(format!("missing buffer `{prefix}.{suffix}`")))
        };
        Ok(BnState {
            mean: get("mean")?,
            var: get("var")?,
        })
    }
}

/// Batch statistics observed by one batch-norm layer during a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BnUpdate {
    pub prefix: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Forward-pass switches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOpts {
    /// Normalise with batch statistics (and report them) instead of the
    /// running buffers.
    pub batch_stats: bool,
    /// Seed of the dropout mask; `None` disables dropout.
    pub dropout_seed: Option<u64>,
    /// Register parameters as trainable leaves.
    pub trainable: bool,
}

impl ForwardOpts {
    pub fn train(dropout_seed: u64) -> Self {
        ForwardOpts {
            batch_stats: true,
            dropout_seed: Some(dropout_seed),
            trainable: true,
        }
    }

    pub fn eval() -> Self {
        ForwardOpts {
            batch_stats: false,
            dropout_seed: None,
            trainable: false,
        }
    }

    /// Batch statistics without dropout or gradients, for recalibrating
    /// running statistics.
    pub fn calibrate() -> Self {
        ForwardOpts {
            batch_stats: true,
            dropout_seed: None,
            trainable: false,
        }
    }
}

/// Binds named parameters from a store into a graph as they are used.
pub struct Forward<'g, 's> {
    pub graph: &'g mut Graph,
    store: &'s ParamStore,
    bound: HashMap<String, Var>,
    opts: ForwardOpts,
    bn_updates: Vec<BnUpdate>,
}

impl<'g, 's> Forward<'g, 's> {
    pub fn new(graph: &'g mut Graph, store: &'s ParamStore, opts: ForwardOpts) -> Self {
        Forward {
            graph,
            store,
            bound: HashMap::new(),
            opts,
            bn_updates: Vec::new(),
        }
    }

    pub fn opts(&self) -> ForwardOpts {
        self.opts
    }

    /// Uses `var` for parameter `name` instead of reading the store.
    pub fn bind(&mut self, name: impl Into<String>, var: Var) {
        self.bound.insert(name.into(), var);
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let t = self
            .store
            .param(name)
            .ok_or_else(|| Error::Arch(format!("missing parameter `{name}`")))?
            .clone();
        let v = self.graph.leaf(t, self.opts.trainable);
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn batch_norm(&mut self, x: Var, prefix: &str) -> Result<Var> {
        let gamma = self.param(&format!("{prefix}.gamma"))?;
        let beta = self.param(&format!("{prefix}.beta"))?;
        if self.opts.batch_stats {
            let (y, moments) = self.graph.batch_norm(x, gamma, beta, BnMode::Batch)?;
            let (mean, var) = moments.expect("batch mode reports moments");
            self.bn_updates.push(BnUpdate {
                prefix: prefix.to_string(),
                mean,
                var,
            });
            Ok(y)
        } else {
            let state = self.store.bn_state(prefix)?;
            let (y, _) = self.graph.batch_norm(x, gamma, beta, BnMode::Running(&state))?;
            Ok(y)
        }
    }

    /// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        let Some(seed) = self.opts.dropout_seed else {
            return Ok(x);
        };
        if rate <= 0.0 {
            return Ok(x);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 / (1.0 - rate);
        let shape = self.graph.value(x).shape().to_vec();
        let mask = Tensor::from_fn(&shape, |_| if rng.gen::<f64>() < rate { 0.0 } else { keep });
        self.graph.mul_const(x, mask)
    }

    /// Names and leaves of every parameter used so far.
    pub fn bound(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.bound.iter()
    }

    pub fn bn_updates(&self) -> &[BnUpdate] {
        &self.bn_updates
    }

    pub fn into_bn_updates(self) -> Vec<BnUpdate> {
        self.bn_updates
    }

    /// Collects gradients for every bound parameter.
    pub fn named_gradients(&self, grads: &mut Gradients) -> BTreeMap<String, Tensor> {
        self.bound
            .iter()
            .filter_map(|(k, &v)| grads.take(v).map(|g| (k.clone(), g)))
            .collect()
    }
}

pub const DEFAULT_BN_MOMENTUM: f64 = BN_MOMENTUM;
