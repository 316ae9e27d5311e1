//! Adversarial objectives, all computed from logits through a stable
//! log-sigmoid so saturated probabilities never hit `ln 0`.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

fn check_logits(g: &Graph, v: Var, what: &str) -> Result<()> {
    let t = g.value(v);
    if t.is_empty() {
        return Err(Error::Data(format!("{what} batch is empty")));
    }
    if let Some(i) = t.data().iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("{what} logit {i} = {}", t.data()[i])));
    }
    Ok(())
}

/// `-(mean ln D(x) + mean ln(1 - D(G(z))))`: the negated discriminator
/// objective, so minimizing it maximizes the original.
pub fn d_loss(g: &mut Graph, real_logits: Var, fake_logits: Var) -> Result<Var> {
    check_logits(g, real_logits, "real")?;
    check_logits(g, fake_logits, "fake")?;
    let log_real = g.log_sigmoid(real_logits);
    let real = g.mean_all(log_real);
    // ln(1 - σ(l)) = ln σ(-l)
    let neg_fake = g.neg(fake_logits);
    let log_fake = g.log_sigmoid(neg_fake);
    let fake = g.mean_all(log_fake);
    let sum = g.add(real, fake)?;
    Ok(g.neg(sum))
}

/// Generator perceptual loss. Literal form: `mean ln(1 - D(G(z)))`, minimized.
/// Non-saturating form: `-mean ln D(G(z))`.
pub fn g_perceptual_loss(g: &mut Graph, fake_logits: Var, non_saturating: bool) -> Result<Var> {
    check_logits(g, fake_logits, "fake")?;
    if non_saturating {
        let ls = g.log_sigmoid(fake_logits);
        let m = g.mean_all(ls);
        Ok(g.neg(m))
    } else {
        let neg = g.neg(fake_logits);
        let ls = g.log_sigmoid(neg);
        Ok(g.mean_all(ls))
    }
}

/// Squared Euclidean distance between the batch means of real and fake
/// multi-feature activations.
pub fn g_feature_match_loss(g: &mut Graph, real_features: Var, fake_features: Var) -> Result<Var> {
    let (rs, fs) = (g.shape(real_features), g.shape(fake_features));
    if rs.len() != 2 || fs.len() != 2 || rs[1] != fs[1] {
        return Err(Error::shape(
            "feature_match",
            format!("real features {rs:?} vs fake features {fs:?}"),
        ));
    }
    let real_mean = g.mean_over_batch(real_features)?;
    let fake_mean = g.mean_over_batch(fake_features)?;
    let diff = g.sub(real_mean, fake_mean)?;
    let sq = g.square(diff);
    Ok(g.sum_all(sq))
}

/// Unweighted sum of the perceptual and feature-matching losses.
pub fn g_final_loss(g: &mut Graph, perceptual: Var, feature_match: Var) -> Result<Var> {
    g.add(perceptual, feature_match)
}
