//! Central finite-difference verification of the backward rules.
//!
//! The harness rebuilds the computation from plain input tensors for every
//! probe, so it exercises exactly the same forward path the tape records.
//! Comparisons use a relative tolerance with a small absolute floor; the
//! floor is what makes per-coordinate checks meaningful in f32 where a
//! near-zero gradient is dominated by forward rounding noise.

use rand::Rng;

use crate::{rng, Activation, ConvGeometry, ConvTransposeGeometry, Result, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
    pub step: f32,
}

impl Default for Tolerance {
    fn default() -> Self {
        // rtol matches the contract for 32-bit checks. atol is the f32
        // noise floor of a central difference at this step: forward
        // rounding of order 1e-6 divided by 2h lands near 1e-3, so
        // coordinates whose true gradient sits below that are judged
        // by absolute error.
        Tolerance {
            rtol: 1e-2,
            atol: 2e-3,
            step: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub coords_checked: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub passed: bool,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: coords={} max_rel={:.3e} max_abs={:.3e}",
            if self.passed { "ok  " } else { "FAIL" },
            self.name,
            self.coords_checked,
            self.max_rel_err,
            self.max_abs_err
        )
    }
}

/// A differentiable scalar program over a fixed list of input tensors.
pub type LossFn<'f> = dyn Fn(&Tape, &[Var<'_>]) -> Result<f32> + 'f;

fn eval(inputs: &[Tensor], f: &LossFn<'_>) -> Result<f64> {
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone(), false)).collect();
    Ok(f(&tape, &vars)? as f64)
}

fn analytic_grads(inputs: &[Tensor], f: &LossFn<'_>) -> Result<Vec<Tensor>> {
    // The loss closure returns the scalar value; to get gradients it must
    // also leave the loss as the last recorded node, which every closure
    // built by this module does via `finish`.
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    f(&tape, &vars)?;
    let nodes = tape.len();
    let loss = Var {
        tape: &tape,
        id: nodes - 1,
    };
    let mut grads = tape.backward(loss)?;
    Ok(vars
        .iter()
        .map(|v| {
            grads
                .take(*v)
                .unwrap_or_else(|| Tensor::zeros(&v.shape()))
        })
        .collect())
}

/// Check selected coordinates of `inputs` by central differences.
/// `coords` lists (input index, flat element index) pairs; `None` checks
/// every coordinate of every input.
pub fn check_coords(
    name: &str,
    inputs: &[Tensor],
    f: &LossFn<'_>,
    coords: Option<&[(usize, usize)]>,
    tol: Tolerance,
) -> Result<CheckOutcome> {
    let grads = analytic_grads(inputs, f)?;
    let all: Vec<(usize, usize)> = match coords {
        Some(c) => c.to_vec(),
        None => inputs
            .iter()
            .enumerate()
            .flat_map(|(i, t)| (0..t.len()).map(move |j| (i, j)))
            .collect(),
    };
    let h = tol.step;
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut passed = true;
    for &(i, j) in &all {
        let mut plus = inputs.to_vec();
        plus[i].data_mut()[j] += h;
        let mut minus = inputs.to_vec();
        minus[i].data_mut()[j] -= h;
        let fd = (eval(&plus, f)? - eval(&minus, f)?) / (2.0 * h as f64);
        let g = grads[i].data()[j] as f64;
        let abs = (g - fd).abs();
        let denom = g.abs().max(fd.abs());
        let rel = if denom > 0.0 { abs / denom } else { 0.0 };
        if abs > tol.atol && rel > tol.rtol {
            passed = false;
        }
        if abs > tol.atol {
            max_rel = max_rel.max(rel);
        }
        max_abs = max_abs.max(abs);
    }
    Ok(CheckOutcome {
        name: name.to_string(),
        coords_checked: all.len(),
        max_rel_err: max_rel,
        max_abs_err: max_abs,
        passed,
    })
}

/// Central finite difference along random joint directions: compares
/// (f(x + h u) - f(x - h u)) / 2h against <grad, u> for random unit
/// vectors u spanning all inputs (normalized jointly, so the total
/// displacement is h and the probe stays in the linear regime however
/// many coordinates there are). Catches systematic backward errors
/// across a whole network at once.
pub fn check_directional(
    name: &str,
    inputs: &[Tensor],
    f: &LossFn<'_>,
    n_dirs: usize,
    seed: u64,
    tol: Tolerance,
) -> Result<CheckOutcome> {
    let grads = analytic_grads(inputs, f)?;
    let mut stream = rng::stream(seed);
    let h = tol.step;
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut passed = true;
    for _ in 0..n_dirs {
        let mut dirs: Vec<Vec<f32>> = inputs
            .iter()
            .map(|t| (0..t.len()).map(|_| stream.gen_range(-1.0..1.0)).collect())
            .collect();
        let norm: f64 = dirs
            .iter()
            .flat_map(|d| d.iter())
            .map(|&u| u as f64 * u as f64)
            .sum::<f64>()
            .sqrt();
        for d in &mut dirs {
            for u in d.iter_mut() {
                *u = (*u as f64 / norm) as f32;
            }
        }
        let mut plus = inputs.to_vec();
        let mut minus = inputs.to_vec();
        for (i, d) in dirs.iter().enumerate() {
            for (j, &u) in d.iter().enumerate() {
                plus[i].data_mut()[j] += h * u;
                minus[i].data_mut()[j] -= h * u;
            }
        }
        let fd = (eval(&plus, f)? - eval(&minus, f)?) / (2.0 * h as f64);
        let mut dot = 0.0f64;
        for (g, d) in grads.iter().zip(&dirs) {
            for (&gv, &u) in g.data().iter().zip(d) {
                dot += gv as f64 * u as f64;
            }
        }
        let abs = (dot - fd).abs();
        let denom = dot.abs().max(fd.abs());
        let rel = if denom > 0.0 { abs / denom } else { 0.0 };
        if abs > tol.atol && rel > tol.rtol {
            passed = false;
        }
        if abs > tol.atol {
            max_rel = max_rel.max(rel);
        }
        max_abs = max_abs.max(abs);
    }
    Ok(CheckOutcome {
        name: name.to_string(),
        coords_checked: n_dirs,
        max_rel_err: max_rel,
        max_abs_err: max_abs,
        passed,
    })
}

fn random_tensor(shape: &[usize], seed: u64, lo: f32, hi: f32) -> Tensor {
    let mut stream = rng::stream(seed);
    let n: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| stream.gen_range(lo..hi)).collect(),
    )
    .expect("random tensor")
}

/// Random values kept away from zero, for ops with a kink at the origin.
fn random_tensor_offzero(shape: &[usize], seed: u64) -> Tensor {
    let mut stream = rng::stream(seed);
    let n: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n)
            .map(|_| {
                let v: f32 = stream.gen_range(0.05..1.0);
                if stream.gen::<bool>() {
                    v
                } else {
                    -v
                }
            })
            .collect(),
    )
    .expect("random tensor")
}

/// Weighted-sum readout: turns any output tensor into a scalar whose
/// gradient spreads O(1) weights over every output element.
fn finish<'t>(out: Var<'t>, seed: u64) -> Result<f32> {
    let w = random_tensor(&out.shape(), seed, 0.5, 1.5);
    let tape = out.tape();
    let wv = tape.leaf(w, false);
    out.mul(wv)?.sum_all()?.item()
}

/// Finite-difference suite over every differentiable op, each at two
/// distinct input shapes.
pub fn run_op_suite() -> Vec<CheckOutcome> {
    let tol = Tolerance::default();
    let mut out = Vec::new();
    let mut check = |name: &str, inputs: Vec<Tensor>, f: Box<LossFn<'_>>| {
        let outcome = check_coords(name, &inputs, f.as_ref(), None, tol)
            .unwrap_or_else(|e| CheckOutcome {
                name: format!("{name} (error: {e})"),
                coords_checked: 0,
                max_rel_err: f64::INFINITY,
                max_abs_err: f64::INFINITY,
                passed: false,
            });
        out.push(outcome);
    };

    // conv2d
    for (i, (xs, ws, geom)) in [
        (
            vec![1usize, 2, 6, 5],
            vec![3usize, 2, 3, 3],
            ConvGeometry { stride: 1, pad: 1, dilation: 1 },
        ),
        (
            vec![2, 2, 6, 6],
            vec![3, 2, 4, 4],
            ConvGeometry { stride: 2, pad: 1, dilation: 1 },
        ),
        (
            vec![1, 2, 9, 9],
            vec![2, 2, 3, 3],
            ConvGeometry { stride: 1, pad: 2, dilation: 2 },
        ),
    ]
    .into_iter()
    .enumerate()
    {
        let f = ws[0];
        let inputs = vec![
            random_tensor(&xs, 100 + i as u64, -1.0, 1.0),
            random_tensor(&ws, 200 + i as u64, -0.5, 0.5),
            random_tensor(&[f], 300 + i as u64, -0.5, 0.5),
        ];
        check(
            &format!("conv2d#{i}"),
            inputs,
            Box::new(move |_t, v| finish(v[0].conv2d(v[1], v[2], geom)?, 42)),
        );
    }

    // conv_transpose2d
    for (i, (xs, ws, geom)) in [
        (
            vec![1usize, 2, 4, 4],
            vec![2usize, 3, 3, 3],
            ConvTransposeGeometry { stride: 2, pad: 1, output_pad: 1 },
        ),
        (
            vec![2, 2, 5, 5],
            vec![2, 2, 4, 4],
            ConvTransposeGeometry { stride: 2, pad: 1, output_pad: 0 },
        ),
    ]
    .into_iter()
    .enumerate()
    {
        let f = ws[1];
        let inputs = vec![
            random_tensor(&xs, 110 + i as u64, -1.0, 1.0),
            random_tensor(&ws, 210 + i as u64, -0.5, 0.5),
            random_tensor(&[f], 310 + i as u64, -0.5, 0.5),
        ];
        check(
            &format!("conv_transpose2d#{i}"),
            inputs,
            Box::new(move |_t, v| finish(v[0].conv_transpose2d(v[1], v[2], geom)?, 43)),
        );
    }

    // reflection_pad2d
    for (i, (xs, pad)) in [(vec![1usize, 2, 5, 5], 2usize), (vec![2, 1, 4, 6], 1)]
        .into_iter()
        .enumerate()
    {
        let inputs = vec![random_tensor(&xs, 120 + i as u64, -1.0, 1.0)];
        check(
            &format!("reflection_pad2d#{i}"),
            inputs,
            Box::new(move |_t, v| finish(v[0].reflection_pad2d(pad)?, 44)),
        );
    }

    // instance_norm2d
    for (i, xs) in [vec![1usize, 2, 4, 4], vec![2, 3, 5, 5]].into_iter().enumerate() {
        let inputs = vec![random_tensor(&xs, 130 + i as u64, -2.0, 2.0)];
        check(
            &format!("instance_norm2d#{i}"),
            inputs,
            Box::new(move |_t, v| finish(v[0].instance_norm2d(1e-5)?, 45)),
        );
    }

    // activations (away from kinks where applicable)
    let acts: [(&str, Activation); 4] = [
        ("relu", Activation::Relu),
        ("leaky_relu", Activation::LeakyRelu(0.2)),
        ("tanh", Activation::Tanh),
        ("sigmoid", Activation::Sigmoid),
    ];
    for (name, kind) in acts {
        for (i, xs) in [vec![3usize, 4], vec![2, 3, 4]].into_iter().enumerate() {
            let inputs = vec![random_tensor_offzero(&xs, 140 + i as u64)];
            check(
                &format!("{name}#{i}"),
                inputs,
                Box::new(move |_t, v| finish(v[0].activation(kind)?, 46)),
            );
        }
    }

    // softplus, abs, powf
    for (i, xs) in [vec![3usize, 4], vec![2, 2, 3]].into_iter().enumerate() {
        let inputs = vec![random_tensor_offzero(&xs, 150 + i as u64)];
        check(
            &format!("softplus#{i}"),
            inputs,
            Box::new(move |_t, v| finish(v[0].softplus()?, 47)),
        );
    }
    for (i, xs) in [vec![3usize, 4], vec![5]].into_iter().enumerate() {
        let inputs = vec![random_tensor_offzero(&xs, 160 + i as u64)];
        check(
            &format!("abs#{i}"),
            inputs,
            Box::new(move |_t, v| finish(v[0].abs()?, 48)),
        );
    }
    for (i, xs) in [vec![3usize, 4], vec![2, 5]].into_iter().enumerate() {
        let inputs = vec![random_tensor(&xs, 170 + i as u64, 0.2, 1.5)];
        check(
            &format!("powf#{i}"),
            inputs,
            Box::new(move |_t, v| finish(v[0].powf(2.0)?, 49)),
        );
    }

    // dropout with a fixed mask
    for (i, xs) in [vec![4usize, 5], vec![2, 3, 3]].into_iter().enumerate() {
        let inputs = vec![random_tensor(&xs, 180 + i as u64, -1.0, 1.0)];
        check(
            &format!("dropout#{i}"),
            inputs,
            Box::new(move |_t, v| finish(v[0].dropout(0.3, 999, true)?, 50)),
        );
    }

    // pooling
    for (i, (xs, kernel, stride)) in [(vec![1usize, 2, 6, 6], 2usize, 2usize), (vec![2, 1, 5, 5], 3, 1)]
        .into_iter()
        .enumerate()
    {
        let inputs = vec![random_tensor(&xs, 190 + i as u64, -1.0, 1.0)];
        check(
            &format!("avg_pool2d#{i}"),
            inputs,
            Box::new(move |_t, v| finish(v[0].avg_pool2d(kernel, stride)?, 51)),
        );
    }
    for (i, (xs, bins)) in [(vec![1usize, 2, 6, 6], 3usize), (vec![2, 1, 7, 5], 2)]
        .into_iter()
        .enumerate()
    {
        let inputs = vec![random_tensor(&xs, 195 + i as u64, -1.0, 1.0)];
        check(
            &format!("adaptive_avg_pool2d#{i}"),
            inputs,
            Box::new(move |_t, v| finish(v[0].adaptive_avg_pool2d(bins)?, 52)),
        );
    }

    // bilinear upsampling (one upscale, one downscale)
    for (i, (xs, oh, ow)) in [(vec![1usize, 2, 3, 3], 6usize, 7usize), (vec![1, 1, 4, 5], 3, 2)]
        .into_iter()
        .enumerate()
    {
        let inputs = vec![random_tensor(&xs, 205 + i as u64, -1.0, 1.0)];
        check(
            &format!("upsample_bilinear#{i}"),
            inputs,
            Box::new(move |_t, v| finish(v[0].upsample_bilinear(oh, ow)?, 53)),
        );
    }

    // elementwise binary + reductions + concat
    for (i, xs) in [vec![3usize, 4], vec![2, 2, 2]].into_iter().enumerate() {
        let inputs = vec![
            random_tensor(&xs, 215 + i as u64, -1.0, 1.0),
            random_tensor(&xs, 225 + i as u64, -1.0, 1.0),
        ];
        check(
            &format!("mul#{i}"),
            inputs.clone(),
            Box::new(move |_t, v| finish(v[0].mul(v[1])?, 54)),
        );
        check(
            &format!("add_sub#{i}"),
            inputs,
            Box::new(move |_t, v| finish(v[0].add(v[1])?.sub(v[1])?.add(v[1])?, 55)),
        );
    }
    for (i, xs) in [vec![1usize, 2, 3, 3], vec![1, 1, 4, 4]].into_iter().enumerate() {
        let inputs = vec![
            random_tensor(&xs, 235 + i as u64, -1.0, 1.0),
            random_tensor(&xs, 245 + i as u64, -1.0, 1.0),
        ];
        check(
            &format!("concat_channels#{i}"),
            inputs,
            Box::new(move |_t, v| finish(Var::concat_channels(&[v[0], v[1]])?, 56)),
        );
    }
    for (i, xs) in [vec![3usize, 4], vec![6]].into_iter().enumerate() {
        let inputs = vec![random_tensor(&xs, 255 + i as u64, -1.0, 1.0)];
        check(
            &format!("mean_all#{i}"),
            inputs.clone(),
            Box::new(|_t, v| v[0].mean_all()?.item()),
        );
        check(
            &format!("sum_all#{i}"),
            inputs,
            Box::new(|_t, v| v[0].sum_all()?.item()),
        );
    }

    out
}
