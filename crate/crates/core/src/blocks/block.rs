//! The four factorized dilated 3D convolution search blocks.
//!
//! With `S` a 3×3 spatial convolution, `T_i` a length-3 temporal convolution
//! with dilation `2^(i-1)`, and `h = ReLU(BN(·))` applied to the result:
//!
//! - V2:  `Concat[T_i(S_i(x))]`, one spatial conv per branch
//! - V2A: `Concat[T_i(S(x))]`, a single shared spatial conv
//! - V2B: `S(x) + Concat[T_i(x)]`
//! - V2C: `S(x) + Concat[T_i(S(x))]`

use super::arch::{BlockGene, BlockKind};
use super::config::BlockChannels;
use super::params::{Forward, ParamPlan};
use crate::tensor::Var;
use crate::{Error, Result};

/// Dilation of temporal branch `i` (0-based).
pub fn branch_dilation(i: usize) -> usize {
    1 << i
}

/// Parameters of one block under `prefix`.
pub fn block_plan(prefix: &str, gene: &BlockGene, in_channels: usize, filters: usize) -> ParamPlan {
    let ch = BlockChannels::new(gene, in_channels, filters);
    let nd = usize::from(gene.nd);
    let mut plan = ParamPlan::default();
    let spatial = |plan: &mut ParamPlan, name: String, cout: usize| {
        plan.weight(format!("{name}.w"), &[3, 3, in_channels, cout], 9 * in_channels);
        plan.bias(format!("{name}.b"), cout);
    };
    match gene.kind {
        BlockKind::V2 => {
            for i in 0..nd {
                spatial(&mut plan, format!("{prefix}.s{i}"), ch.spatial);
            }
        }
        _ => spatial(&mut plan, format!("{prefix}.s"), ch.spatial),
    }
    for i in 0..nd {
        plan.weight(
            format!("{prefix}.t{i}.w"),
            &[3, ch.temporal_in, ch.temporal_out],
            3 * ch.temporal_in,
        );
        plan.bias(format!("{prefix}.t{i}.b"), ch.temporal_out);
    }
    plan.batch_norm(&format!("{prefix}.bn"), ch.out);
    plan
}

/// Applies one block to `x: [N,T,H,W,Cin]`, reading parameters under
/// `prefix` from the forward context.
pub fn block_forward(fwd: &mut Forward<'_, '_>, prefix: &str, gene: &BlockGene, x: Var, filters: usize) -> Result<Var> {
    let cin = *fwd.graph.value(x).shape().last().expect("rank 5");
    let ch = BlockChannels::new(gene, cin, filters);
    let nd = usize::from(gene.nd);
    let spatial = |fwd: &mut Forward<'_, '_>, name: &str, input: Var| -> Result<Var> {
        let w = fwd.param(&format!("{name}.w"))?;
        let b = fwd.param(&format!("{name}.b"))?;
        fwd.graph.conv2d_spatial(input, w, b)
    };
    let temporal = |fwd: &mut Forward<'_, '_>, i: usize, input: Var| -> Result<Var> {
        let w = fwd.param(&format!("{prefix}.t{i}.w"))?;
        let b = fwd.param(&format!("{prefix}.t{i}.b"))?;
        fwd.graph.conv1d_temporal(input, w, b, branch_dilation(i))
    };

    let pre = match gene.kind {
        BlockKind::V2 => {
            let mut branches = Vec::with_capacity(nd);
            for i in 0..nd {
                let s = spatial(fwd, &format!("{prefix}.s{i}"), x)?;
                branches.push(temporal(fwd, i, s)?);
            }
            fwd.graph.concat_channels(&branches)?
        }
        BlockKind::V2A => {
            let s = spatial(fwd, &format!("{prefix}.s"), x)?;
            let branches = (0..nd).map(|i| temporal(fwd, i, s)).collect::<Result<Vec<_>>>()?;
            fwd.graph.concat_channels(&branches)?
        }
        BlockKind::V2B => {
            let s = spatial(fwd, &format!("{prefix}.s"), x)?;
            let branches = (0..nd).map(|i| temporal(fwd, i, x)).collect::<Result<Vec<_>>>()?;
            let t = fwd.graph.concat_channels(&branches)?;
            fwd.graph.add(s, t)?
        }
        BlockKind::V2C => {
            let s = spatial(fwd, &format!("{prefix}.s"), x)?;
            let branches = (0..nd).map(|i| temporal(fwd, i, s)).collect::<Result<Vec<_>>>()?;
            let t = fwd.graph.concat_channels(&branches)?;
            fwd.graph.add(s, t)?
        }
    };
    let got = *fwd.graph.value(pre).shape().last().expect("rank 5");
    if got != ch.out {
        return Err(Error::Arch(format!(
            "{prefix}: {gene} produced {got} channels, expected {}",
            ch.out
        )));
    }
    let y = fwd.batch_norm(pre, &format!("{prefix}.bn"))?;
    Ok(fwd.graph.relu(y))
}
