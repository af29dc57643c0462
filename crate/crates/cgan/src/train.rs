//! One alternating optimization step at batch size 1: a discriminator
//! Adam update against the detached generator sample, then a generator
//! Adam update against the refreshed discriminator.

use ct2mr_nn::{adam_step, collect_grads, load_params, AdamState, ParamSet};
use ct2mr_tensor::{rng, Tape, Tensor};

use crate::generator::DropoutMode;
use crate::losses::{d_loss, g_total_loss};
use crate::{CganError, Discriminator, Generator, Result};

#[derive(Debug, Clone, Copy)]
pub struct StepLosses {
    pub d_loss: f32,
    pub g_loss: f32,
}

const TAG_Z: u64 = 0xD0;

fn nonfinite_from(tape: &Tape, err: ct2mr_tensor::TensorError) -> CganError {
    if let ct2mr_tensor::TensorError::NonFinite { node } = err {
        return CganError::NonFinite { node };
    }
    if let Some((idx, label)) = tape.first_nonfinite() {
        return CganError::NonFinite {
            node: format!("{label} (node {idx})"),
        };
    }
    CganError::Tensor(err)
}

/// Detached generator sample for the discriminator phase; pure function
/// of (params, x, dropout).
pub fn generate_fake(
    gen: &Generator,
    g_params: &ParamSet,
    x: &Tensor,
    dropout: DropoutMode,
) -> Result<Tensor> {
    let tape = Tape::new();
    let vars = load_params(&tape, g_params, false);
    let xv = tape.leaf(x.clone(), false);
    Ok(gen.forward(&tape, &vars, xv, dropout)?.tensor())
}

/// One discriminator Adam step against (real, detached fake). Generator
/// parameters are not involved at all.
pub fn d_step(
    disc: &Discriminator,
    d_params: &mut ParamSet,
    d_adam: &mut AdamState,
    x: &Tensor,
    y: &Tensor,
    fake: &Tensor,
) -> Result<f32> {
    let tape = Tape::new();
    tape.set_check_finite(true);
    let vars = load_params(&tape, d_params, true);
    let xv = tape.leaf(x.clone(), false);
    let yv = tape.leaf(y.clone(), false);
    let fv = tape.leaf(fake.clone(), false);
    let (real_map, _) = disc.forward(&tape, &vars, xv, yv)?;
    let (fake_map, _) = disc.forward(&tape, &vars, xv, fv)?;
    let loss = d_loss(real_map, fake_map).map_err(|e| match e {
        CganError::Tensor(t) => nonfinite_from(&tape, t),
        other => other,
    })?;
    let loss_value = loss.item()?;
    if !loss_value.is_finite() {
        return Err(nonfinite_from(
            &tape,
            ct2mr_tensor::TensorError::NonFinite { node: "d_loss".to_string() },
        ));
    }
    let mut grads = tape.backward(loss).map_err(|e| nonfinite_from(&tape, e))?;
    let grad_list = collect_grads(d_params, &vars, &mut grads)?;
    adam_step(d_params, &grad_list, d_adam)?;
    Ok(loss_value)
}

/// One generator Adam step through a frozen discriminator; re-samples the
/// generator forward with the given dropout mode.
#[allow(clippy::too_many_arguments)]
pub fn g_step(
    gen: &Generator,
    disc: &Discriminator,
    g_params: &mut ParamSet,
    g_adam: &mut AdamState,
    d_params: &ParamSet,
    x: &Tensor,
    y: &Tensor,
    lambda: f32,
    dropout: DropoutMode,
) -> Result<f32> {
    let tape = Tape::new();
    tape.set_check_finite(true);
    let g_vars = load_params(&tape, g_params, true);
    let d_vars = load_params(&tape, d_params, false);
    let xv = tape.leaf(x.clone(), false);
    let yv = tape.leaf(y.clone(), false);
    let fake = gen
        .forward(&tape, &g_vars, xv, dropout)
        .map_err(|e| match e {
            CganError::Tensor(t) => nonfinite_from(&tape, t),
            other => other,
        })?;
    let (fake_map, _) = disc.forward(&tape, &d_vars, xv, fake)?;
    let loss = g_total_loss(fake_map, fake, yv, lambda).map_err(|e| match e {
        CganError::Tensor(t) => nonfinite_from(&tape, t),
        other => other,
    })?;
    let loss_value = loss.item()?;
    if !loss_value.is_finite() {
        return Err(nonfinite_from(
            &tape,
            ct2mr_tensor::TensorError::NonFinite { node: "g_loss".to_string() },
        ));
    }
    let mut grads = tape.backward(loss).map_err(|e| nonfinite_from(&tape, e))?;
    let grad_list = collect_grads(g_params, &g_vars, &mut grads)?;
    adam_step(g_params, &grad_list, g_adam)?;
    Ok(loss_value)
}

/// Alternating step on one (x, y) pair. Equivalent to `generate_fake` +
/// [`d_step`] + [`g_step`] with the same derived dropout seed, but shares
/// the single generator forward between the discriminator's detached
/// sample and the generator's own objective.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    x: &Tensor,
    y: &Tensor,
    gen: &Generator,
    disc: &Discriminator,
    g_params: &mut ParamSet,
    d_params: &mut ParamSet,
    g_adam: &mut AdamState,
    d_adam: &mut AdamState,
    lambda: f32,
    seed: u64,
) -> Result<StepLosses> {
    let dropout = DropoutMode::Active { seed: rng::derive(seed, &[TAG_Z]) };

    // Generator forward once, recording the graph for the later G phase.
    let g_tape = Tape::new();
    g_tape.set_check_finite(true);
    let g_vars = load_params(&g_tape, g_params, true);
    let xv = g_tape.leaf(x.clone(), false);
    let fake = gen
        .forward(&g_tape, &g_vars, xv, dropout)
        .map_err(|e| match e {
            CganError::Tensor(t) => nonfinite_from(&g_tape, t),
            other => other,
        })?;
    let fake_value = fake.tensor();

    // Discriminator phase on its own tape; the fake enters detached.
    let d_loss_value = d_step(disc, d_params, d_adam, x, y, &fake_value)?;

    // Generator phase continues the recorded tape against the updated,
    // frozen discriminator.
    let d_vars = load_params(&g_tape, d_params, false);
    let yv = g_tape.leaf(y.clone(), false);
    let (fake_map, _) = disc.forward(&g_tape, &d_vars, xv, fake)?;
    let loss = g_total_loss(fake_map, fake, yv, lambda).map_err(|e| match e {
        CganError::Tensor(t) => nonfinite_from(&g_tape, t),
        other => other,
    })?;
    let g_loss_value = loss.item()?;
    if !g_loss_value.is_finite() {
        return Err(nonfinite_from(
            &g_tape,
            ct2mr_tensor::TensorError::NonFinite { node: "g_loss".to_string() },
        ));
    }
    let mut grads = g_tape.backward(loss).map_err(|e| nonfinite_from(&g_tape, e))?;
    let grad_list = collect_grads(g_params, &g_vars, &mut grads)?;
    adam_step(g_params, &grad_list, g_adam)?;

    Ok(StepLosses {
        d_loss: d_loss_value,
        g_loss: g_loss_value,
    })
}
