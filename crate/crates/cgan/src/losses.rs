//! Adversarial and reconstruction losses over pre-sigmoid patch logits.
//!
//! The log-probabilities are realized as per-patch sigmoid cross-entropy
//! averaged over the activation map, computed through softplus so large
//! logits cannot overflow:
//!   -mean log sigma(x)      = mean softplus(-x)
//!   -mean log(1 - sigma(x)) = mean softplus(x)
//! The generator uses the non-saturating form -mean log sigma(D(fake)).

use ct2mr_tensor::Var;

use crate::Result;

/// Discriminator objective: real patches toward 1, fake patches toward 0.
pub fn d_loss<'t>(real_map: Var<'t>, fake_map: Var<'t>) -> Result<Var<'t>> {
    let real_term = real_map.neg()?.softplus()?.mean_all()?;
    let fake_term = fake_map.softplus()?.mean_all()?;
    Ok(real_term.add(fake_term)?)
}

/// Non-saturating generator adversarial term.
pub fn g_adv_loss(fake_map: Var<'_>) -> Result<Var<'_>> {
    Ok(fake_map.neg()?.softplus()?.mean_all()?)
}

/// Mean absolute reconstruction error.
pub fn l1_loss<'t>(generated: Var<'t>, target: Var<'t>) -> Result<Var<'t>> {
    Ok(target.sub(generated)?.abs()?.mean_all()?)
}

/// Full generator objective: adversarial term plus lambda-weighted L1.
pub fn g_total_loss<'t>(
    fake_map: Var<'t>,
    generated: Var<'t>,
    target: Var<'t>,
    lambda: f32,
) -> Result<Var<'t>> {
    let adv = g_adv_loss(fake_map)?;
    let rec = l1_loss(generated, target)?.scale(lambda)?;
    Ok(adv.add(rec)?)
}
