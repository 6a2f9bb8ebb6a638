//! The full detection network.
//!
//! ```text
//! frames ─ 6 search blocks (2×2 pools per schedule) ─ flatten ─ k attention layers ─┐
//!            │ spatial means of every block ─ projection ─ cosine window ─ dense ─┤ concat ─ dense+ReLU ─ dropout ─┬ ŷ
//! frames ─ RGB histograms ─ intersection window ─ dense ──────────────────────────┘                                 └ ẑ
//! ```
//!
//! Parameter names are shared with the SuperNet: block `p` with option `o`
//! lives under `b{p}.o{o:02}`, the `j`-th layer of a depth-`d` attention
//! stack under `attn{d}.l{j}`.

use rand::Rng;

use super::arch::{ArchCode, BlockGene, NUM_BLOCKS};
use super::block::{block_forward, block_plan};
use super::config::NetworkConfig;
use super::params::{Forward, ForwardOpts, ParamPlan, ParamStore};
use super::similarity::{learnable_cosine_similarity, rgb_histogram_similarity};
use crate::tensor::{Graph, Tensor, Var};
use crate::{Error, Result};

pub fn block_prefix(position: usize, gene: &BlockGene) -> String {
    format!("b{position}.o{:02}", gene.option())
}

pub fn attention_prefix(depth: usize, layer: usize) -> String {
    format!("attn{depth}.l{layer}")
}

fn attention_plan(depth: usize, dim: usize) -> ParamPlan {
    let mut plan = ParamPlan::default();
    for j in 0..depth {
        let p = attention_prefix(depth, j);
        for m in ["wq", "wk", "wv"] {
            plan.weight(format!("{p}.{m}"), &[dim, dim], dim);
        }
        plan.weight(format!("{p}.ff.w"), &[dim, dim], dim);
        plan.bias(format!("{p}.ff.b"), dim);
    }
    plan
}

/// Similarity, hidden and head layers shared by every architecture with the
/// same widths.
fn shared_plan(cfg: &NetworkConfig, arch: &ArchCode) -> ParamPlan {
    let k = cfg.sim_offsets.len();
    let mut plan = ParamPlan::default();
    let feat = cfg.block_feature_dim(arch);
    plan.weight("cos.proj.w".into(), &[feat, cfg.cos_dim], feat);
    plan.weight("cos.fc.w".into(), &[k, cfg.sim_dim], k);
    plan.bias("cos.fc.b".into(), cfg.sim_dim);
    plan.weight("hist.fc.w".into(), &[k, cfg.sim_dim], k);
    plan.bias("hist.fc.b".into(), cfg.sim_dim);
    let head_in = cfg.head_input_dim(arch);
    plan.weight("fc1.w".into(), &[head_in, cfg.hidden], head_in);
    plan.bias("fc1.b".into(), cfg.hidden);
    for head in ["head_y", "head_z"] {
        plan.weight(format!("{head}.w"), &[cfg.hidden, 1], cfg.hidden);
        plan.bias(format!("{head}.b"), 1);
    }
    plan
}

/// Every parameter of one concrete architecture.
pub fn network_plan(arch: &ArchCode, cfg: &NetworkConfig) -> Result<ParamPlan> {
    arch.validate()?;
    cfg.validate()?;
    let mut plan = ParamPlan::default();
    for (p, (gene, layout)) in arch.blocks.iter().zip(cfg.layouts(arch)).enumerate() {
        plan.extend(block_plan(&block_prefix(p, gene), gene, layout.in_channels, layout.filters));
    }
    plan.extend(attention_plan(usize::from(arch.attention_layers), cfg.base_feature_dim(arch)));
    plan.extend(shared_plan(cfg, arch));
    Ok(plan)
}

/// The union of every option at every position, one attention stack per
/// depth, and the shared layers. Requires every option to keep the same
/// output width, otherwise later blocks' input widths would depend on the
/// sampled path.
pub fn supernet_plan(cfg: &NetworkConfig) -> Result<ParamPlan> {
    cfg.validate()?;
    if !cfg.uniform_block_width() {
        let bad = (0..NUM_BLOCKS).find(|&p| !(4 * cfg.filters(p)).is_multiple_of(5)).unwrap_or(0);
        return Err(Error::Arch(format!(
            "SuperNet weight sharing needs 4F divisible by both branch counts; block {} has F={}",
            bad + 1,
            cfg.filters(bad)
        )));
    }
    let reference = ArchCode::transnet_v2();
    let layouts = cfg.layouts(&reference);
    let mut plan = ParamPlan::default();
    for (p, layout) in layouts.iter().enumerate() {
        for gene in BlockGene::all() {
            plan.extend(block_plan(&block_prefix(p, &gene), &gene, layout.in_channels, layout.filters));
        }
    }
    let dim = cfg.base_feature_dim(&reference);
    for depth in 1..=4 {
        plan.extend(attention_plan(depth, dim));
    }
    plan.extend(shared_plan(cfg, &reference));
    Ok(plan)
}

/// Per-frame probabilities of the two heads, each `[N, T]`.
#[derive(Clone, Copy, Debug)]
pub struct Heads {
    /// Single middle frame of a transition (ŷ).
    pub single: Var,
    /// Every transition frame (ẑ).
    pub all: Var,
}

fn attention_layer(fwd: &mut Forward<'_, '_>, prefix: &str, x: Var) -> Result<Var> {
    let wq = fwd.param(&format!("{prefix}.wq"))?;
    let wk = fwd.param(&format!("{prefix}.wk"))?;
    let wv = fwd.param(&format!("{prefix}.wv"))?;
    let q = fwd.graph.linear(x, wq, None)?;
    let k = fwd.graph.linear(x, wk, None)?;
    let v = fwd.graph.linear(x, wv, None)?;
    let a = fwd.graph.attention(q, k, v)?;
    let h = fwd.graph.add(x, a)?;
    let fw = fwd.param(&format!("{prefix}.ff.w"))?;
    let fb = fwd.param(&format!("{prefix}.ff.b"))?;
    let f = fwd.graph.linear(h, fw, Some(fb))?;
    fwd.graph.add(h, f)
}

/// One self-attention layer on `[N,T,D]` frame features: single-head scaled
/// dot-product attention with a residual, then a position-wise linear layer
/// with a residual.
pub fn self_attention_layer(fwd: &mut Forward<'_, '_>, prefix: &str, x: Var) -> Result<Var> {
    let d = match *fwd.graph.value(x).shape() {
        [_, _, d] => d,
        ref s => return Err(Error::shape("self_attention_layer", format!("expected [N,T,D], got {s:?}"))),
    };
    let wq = fwd.param(&format!("{prefix}.wq"))?;
    if fwd.graph.value(wq).shape() != [d, d] {
        return Err(Error::shape(
            "self_attention_layer",
            format!("feature width {d} does not match weights {:?}", fwd.graph.value(wq).shape()),
        ));
    }
    attention_layer(fwd, prefix, x)
}

/// Runs `arch` on `frames: [N,T,H,W,C]` (values in `[0, 1]`).
pub fn network_forward(fwd: &mut Forward<'_, '_>, arch: &ArchCode, cfg: &NetworkConfig, frames: &Tensor) -> Result<Heads> {
    let [n, t, h, w, c] = match *frames.shape() {
        [n, t, h, w, c] => [n, t, h, w, c],
        ref s => return Err(Error::shape("network", format!("expected [N,T,H,W,C], got {s:?}"))),
    };
    if (h, w, c) != (cfg.height, cfg.width, cfg.channels) {
        return Err(Error::shape(
            "network",
            format!(
                "input frames {h}x{w}x{c} do not match configured {}x{}x{}",
                cfg.height, cfg.width, cfg.channels
            ),
        ));
    }
    let mut x = fwd.graph.constant(frames.clone());
    let mut pooled_means = Vec::with_capacity(NUM_BLOCKS);
    for (p, gene) in arch.blocks.iter().enumerate() {
        x = block_forward(fwd, &block_prefix(p, gene), gene, x, cfg.filters(p))?;
        pooled_means.push(fwd.graph.spatial_mean(x)?);
        if cfg.pool_after[p] {
            x = fwd.graph.avg_pool2(x)?;
        }
    }
    let base_dim = fwd.graph.value(x).numel() / (n * t);
    let mut base = fwd.graph.reshape(x, &[n, t, base_dim])?;
    let depth = usize::from(arch.attention_layers);
    for j in 0..depth {
        base = self_attention_layer(fwd, &attention_prefix(depth, j), base)?;
    }

    let block_feats = fwd.graph.concat_channels(&pooled_means)?;
    let cos = learnable_cosine_similarity(fwd, block_feats, "cos.proj.w", &cfg.sim_offsets)?;
    let cos = dense_relu(fwd, cos, "cos.fc")?;

    let hist = rgb_histogram_similarity(frames, cfg.hist_bins, &cfg.sim_offsets)?;
    let hist = fwd.graph.constant(hist);
    let hist = dense_relu(fwd, hist, "hist.fc")?;

    let feat = fwd.graph.concat_channels(&[base, cos, hist])?;
    let hidden = dense_relu(fwd, feat, "fc1")?;
    let hidden = fwd.dropout(hidden, cfg.dropout)?;
    let single = head(fwd, hidden, "head_y", n, t)?;
    let all = head(fwd, hidden, "head_z", n, t)?;
    Ok(Heads { single, all })
}

fn dense_relu(fwd: &mut Forward<'_, '_>, x: Var, name: &str) -> Result<Var> {
    let w = fwd.param(&format!("{name}.w"))?;
    let b = fwd.param(&format!("{name}.b"))?;
    let y = fwd.graph.linear(x, w, Some(b))?;
    Ok(fwd.graph.relu(y))
}

fn head(fwd: &mut Forward<'_, '_>, x: Var, name: &str, n: usize, t: usize) -> Result<Var> {
    let w = fwd.param(&format!("{name}.w"))?;
    let b = fwd.param(&format!("{name}.b"))?;
    let logits = fwd.graph.linear(x, w, Some(b))?;
    let p = fwd.graph.sigmoid(logits);
    fwd.graph.reshape(p, &[n, t])
}

/// A concrete architecture with its own parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub arch: ArchCode,
    pub cfg: NetworkConfig,
    pub store: ParamStore,
}

/// Builds `arch` under `cfg` with freshly initialised weights.
pub fn build_network<R: Rng + ?Sized>(arch: &ArchCode, cfg: &NetworkConfig, rng: &mut R) -> Result<Model> {
    let plan = network_plan(arch, cfg)?;
    Ok(Model {
        arch: *arch,
        cfg: cfg.clone(),
        store: plan.initialize(rng),
    })
}

impl Model {
    /// Wraps existing weights after checking names and shapes.
    pub fn from_store(arch: ArchCode, cfg: NetworkConfig, store: ParamStore) -> Result<Self> {
        network_plan(&arch, &cfg)?.check(&store)?;
        Ok(Model { arch, cfg, store })
    }

    pub fn plan(&self) -> ParamPlan {
        network_plan(&self.arch, &self.cfg).expect("validated at construction")
    }

    pub fn forward(&self, fwd: &mut Forward<'_, '_>, frames: &Tensor) -> Result<Heads> {
        network_forward(fwd, &self.arch, &self.cfg, frames)
    }

    /// Eval-mode probabilities `(ŷ, ẑ)`, each `[N, T]`.
    pub fn predict(&self, frames: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let mut fwd = Forward::new(&mut g, &self.store, ForwardOpts::eval());
        let heads = self.forward(&mut fwd, frames)?;
        Ok((g.value(heads.single).clone(), g.value(heads.all).clone()))
    }

    pub fn has_attention_params(&self) -> bool {
        self.store.params().any(|(k, _)| k.starts_with("attn"))
    }
}
