use crate::autodiff::{BatchNormState, Graph, NormMode, Tensor, Var};
use crate::error::Result;

/// One 4×4/stride-2 (transposed) convolution with either a bias or a
/// following batch norm, never both.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvStage {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub norm: Option<BatchNormState>,
}

/// Graph handles for a bound [`ConvStage`].
#[derive(Clone, Copy, Debug)]
pub(crate) struct StageVars {
    pub weight: Var,
    pub bias: Option<Var>,
    pub norm: Option<(Var, Var)>,
}

impl ConvStage {
    pub(crate) fn collect_params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        if let Some(b) = &self.bias {
            out.push((format!("{prefix}.bias"), b));
        }
        if let Some(n) = &self.norm {
            out.push((format!("{prefix}.bn.gamma"), &n.gamma));
            out.push((format!("{prefix}.bn.beta"), &n.beta));
        }
    }

    pub(crate) fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.weight);
        if let Some(b) = &mut self.bias {
            out.push(b);
        }
        if let Some(n) = &mut self.norm {
            out.push(&mut n.gamma);
            out.push(&mut n.beta);
        }
    }

    /// Leaves in the same order as [`ConvStage::collect_params`].
    pub(crate) fn bind(&self, g: &mut Graph, trainable: bool, all: &mut Vec<Var>) -> StageVars {
        let mut leaf = |t: &Tensor| {
            let v = g.leaf(t.clone(), trainable);
            all.push(v);
            v
        };
        let weight = leaf(&self.weight);
        let bias = self.bias.as_ref().map(&mut leaf);
        let norm = self.norm.as_ref().map(|n| (leaf(&n.gamma), leaf(&n.beta)));
        StageVars { weight, bias, norm }
    }

    pub(crate) fn normalize(&mut self, g: &mut Graph, vars: &StageVars, x: Var, mode: NormMode) -> Result<Var> {
        match (&mut self.norm, vars.norm) {
            (Some(state), Some((gamma, beta))) => g.batch_norm2d(x, gamma, beta, state, mode),
            _ => Ok(x),
        }
    }
}
