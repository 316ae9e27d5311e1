use super::config::FUSED_SIZE;
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Graph handles of the multi-feature layer.
#[derive(Clone, Debug)]
pub struct FusedVars {
    /// Pooled 4×4 map of each fused stage, oldest stage first.
    pub pooled: Vec<Var>,
    /// `[N, ΣC, 4, 4]`
    pub fused: Var,
    /// `[N, ΣC·16]`
    pub flat: Var,
}

/// Materialized multi-feature activations.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiFeatureActivation {
    pub per_stage_maps: Vec<Tensor>,
    pub fused: Tensor,
    pub flattened: Tensor,
}

impl FusedVars {
    pub fn materialize(&self, g: &Graph) -> MultiFeatureActivation {
        MultiFeatureActivation {
            per_stage_maps: self.pooled.iter().map(|&v| g.value(v).clone()).collect(),
            fused: g.value(self.fused).clone(),
            flattened: g.value(self.flat).clone(),
        }
    }
}

/// Fuse the last `k` stage activations: each map of spatial size `s` is
/// max-pooled with window `s/4`, the 4×4 results are concatenated along
/// channels and flattened (stage, then channel, then row, then column).
pub fn fuse_features(g: &mut Graph, maps: &[Var], k: usize) -> Result<FusedVars> {
    if k == 0 || k > maps.len() {
        return Err(Error::Config(format!(
            "fusion depth {k} outside 1..={}",
            maps.len()
        )));
    }
    let mut pooled = Vec::with_capacity(k);
    for &m in &maps[maps.len() - k..] {
        let s = g.shape(m);
        if s.len() != 4 || s[2] != s[3] || s[2] < FUSED_SIZE || !s[2].is_multiple_of(FUSED_SIZE) {
            return Err(Error::shape(
                "fuse_features",
                format!("stage map {s:?} cannot be pooled to 4x4"),
            ));
        }
        let window = s[2] / FUSED_SIZE;
        pooled.push(g.max_pool2d(m, window)?);
    }
    let fused = g.concat_channels(&pooled)?;
    let flat = g.flatten(fused)?;
    Ok(FusedVars { pooled, fused, flat })
}
