//! Whole-network finite-difference checking: adapts a model forward pass
//! to the tensor crate's gradcheck harness, probing random joint
//! directions plus a sampled subset of individual parameter coordinates.

use ct2mr_tensor::gradcheck::{check_coords, check_directional, CheckOutcome, Tolerance};
use ct2mr_tensor::{rng, Tape, Tensor, Var};
use rand::Rng;

use crate::{ParamSet, ParamVars};

/// Tolerance for full networks in f32: the per-op relative bound and
/// step, with the absolute floor raised to the measured level for these
/// nets. Two effects bound a per-coordinate probe from below: forward
/// rounding (~1e-6 of the loss, so ~1e-3 after division by 2h) and
/// instance-norm curvature, whose quadratic term contributes a similar
/// amount at this step. Coordinates with gradients above the floor are
/// still held to rel 1e-2; the joint directional probes, which aggregate
/// the entire gradient vector, resolve to ~1e-3 absolute on O(1..10)
/// derivatives and are the sharp check for systematic backward errors.
pub fn network_tolerance() -> Tolerance {
    Tolerance {
        rtol: 1e-2,
        atol: 5e-3,
        step: 1e-3,
    }
}

/// A model forward pass under check: parameters and one input in, one
/// output tensor out. Implementations panic on shape errors; the checker
/// only feeds shapes the model accepts.
pub trait ForwardFn {
    fn run<'t>(&self, tape: &'t Tape, params: &ParamVars<'t>, x: Var<'t>) -> Var<'t>;
}

/// Check d(loss)/d(params) of `forward` against central differences,
/// where the loss is a fixed random signed-weight readout of the network
/// output. Returns the directional-probe outcome followed by the
/// sampled-coordinate outcome.
pub fn check_network<F: ForwardFn>(
    name: &str,
    params: &ParamSet,
    x: &Tensor,
    forward: &F,
    n_coords: usize,
    n_dirs: usize,
    seed: u64,
) -> Vec<CheckOutcome> {
    let tol = network_tolerance();
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    let n_params = names.len();
    let mut inputs: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    inputs.push(x.clone());

    let loss_fn = move |tape: &Tape, vars: &[Var<'_>]| -> ct2mr_tensor::Result<f32> {
        let pv = ParamVars::from_pairs(
            names
                .iter()
                .cloned()
                .zip(vars[..n_params].iter().copied()),
        );
        let out = forward.run(tape, &pv, vars[n_params]);
        let weights = signed_readout(&out.shape(), rng::derive(seed, &[0xF0]));
        let wv = tape.leaf(weights, false);
        out.mul(wv)?.sum_all()?.item()
    };

    // Sample distinct parameter coordinates, proportionally to size.
    let total: usize = inputs[..n_params].iter().map(Tensor::len).sum();
    let mut stream = rng::stream(rng::derive(seed, &[0xF1]));
    let mut coords = Vec::with_capacity(n_coords);
    while coords.len() < n_coords.min(total) {
        let mut flat = stream.gen_range(0..total);
        let mut pick = (0usize, 0usize);
        for (i, t) in inputs[..n_params].iter().enumerate() {
            if flat < t.len() {
                pick = (i, flat);
                break;
            }
            flat -= t.len();
        }
        if !coords.contains(&pick) {
            coords.push(pick);
        }
    }

    let directional = check_directional(
        &format!("{name}/directional"),
        &inputs,
        &loss_fn,
        n_dirs,
        rng::derive(seed, &[0xF2]),
        tol,
    );
    let sampled = check_coords(
        &format!("{name}/coords"),
        &inputs,
        &loss_fn,
        Some(&coords),
        tol,
    );
    [directional, sampled]
        .into_iter()
        .map(|r| {
            r.unwrap_or_else(|e| CheckOutcome {
                name: format!("{name} (error: {e})"),
                coords_checked: 0,
                max_rel_err: f64::INFINITY,
                max_abs_err: f64::INFINITY,
                passed: false,
            })
        })
        .collect()
}

/// Fixed +-1/sqrt(N) weights so the readout has unit scale while every
/// output element contributes.
fn signed_readout(shape: &[usize], seed: u64) -> Tensor {
    let n: usize = shape.iter().product();
    let scale = 1.0 / (n as f32).sqrt();
    let mut stream = rng::stream(seed);
    Tensor::new(
        shape.to_vec(),
        (0..n)
            .map(|_| if stream.gen::<bool>() { scale } else { -scale })
            .collect(),
    )
    .expect("readout shape")
}
