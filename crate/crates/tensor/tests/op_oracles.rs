//! Oracle tests for the tensor ops: closed-form cases plus independent
//! brute-force implementations (nested-loop convolution, window means,
//! hand-evaluated interpolation).

use ct2mr_tensor::{
    gradcheck, rng, ConvGeometry, ConvTransposeGeometry, Tape, Tensor, TensorError, Var,
};
use rand::Rng;

fn randt(shape: &[usize], seed: u64) -> Tensor {
    let mut s = rng::stream(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| s.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Direct six-nested-loop convolution, f64 accumulation.
#[allow(clippy::too_many_arguments)]
fn conv2d_bruteforce(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    pad: usize,
    dilation: usize,
) -> Tensor {
    let (xs, ws) = (x.shape(), w.shape());
    let (n, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
    let (f, kh, kw) = (ws[0], ws[2], ws[3]);
    let oh = (h + 2 * pad - dilation * (kh - 1) - 1) / stride + 1;
    let ow = (wd + 2 * pad - dilation * (kw - 1) - 1) / stride + 1;
    let mut out = vec![0.0f32; n * f * oh * ow];
    for ni in 0..n {
        for fi in 0..f {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[fi] as f64;
                    for ci in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky * dilation) as isize - pad as isize;
                                let ix = (ox * stride + kx * dilation) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x.data()
                                    [((ni * c + ci) * h + iy as usize) * wd + ix as usize];
                                let wv = w.data()[((fi * c + ci) * kh + ky) * kw + kx];
                                acc += xv as f64 * wv as f64;
                            }
                        }
                    }
                    out[((ni * f + fi) * oh + oy) * ow + ox] = acc as f32;
                }
            }
        }
    }
    Tensor::new(vec![n, f, oh, ow], out).unwrap()
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f32 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}

#[test]
fn conv2d_all_ones_sums_kernel() {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::full(&[1, 1, 3, 3], 1.0), false);
    let w = tape.leaf(Tensor::full(&[1, 1, 3, 3], 1.0), false);
    let b = tape.leaf(Tensor::zeros(&[1]), false);
    let y = x
        .conv2d(w, b, ConvGeometry { stride: 1, pad: 0, dilation: 1 })
        .unwrap();
    assert_eq!(y.shape(), vec![1, 1, 1, 1]);
    assert_eq!(y.item().unwrap(), 9.0);
}

#[test]
fn conv2d_identity_kernel_preserves_input() {
    let tape = Tape::new();
    let input = randt(&[1, 1, 5, 5], 3);
    let x = tape.leaf(input.clone(), false);
    let mut kw = vec![0.0f32; 9];
    kw[4] = 1.0;
    let w = tape.leaf(Tensor::new(vec![1, 1, 3, 3], kw).unwrap(), false);
    let b = tape.leaf(Tensor::zeros(&[1]), false);
    let y = x
        .conv2d(w, b, ConvGeometry { stride: 1, pad: 1, dilation: 1 })
        .unwrap();
    assert_eq!(y.tensor().data(), input.data());
}

#[test]
fn conv2d_matches_nested_loop_oracle() {
    for (seed, stride, pad, dilation) in [(11u64, 1usize, 0usize, 1usize), (12, 2, 1, 1), (13, 1, 2, 2)] {
        let x = randt(&[1, 2, 8, 8], seed);
        let w = randt(&[3, 2, 3, 3], seed + 100);
        let b = randt(&[3], seed + 200);
        let tape = Tape::new();
        let (xv, wv, bv) = (
            tape.leaf(x.clone(), false),
            tape.leaf(w.clone(), false),
            tape.leaf(b.clone(), false),
        );
        let y = xv
            .conv2d(wv, bv, ConvGeometry { stride, pad, dilation })
            .unwrap()
            .tensor();
        let oracle = conv2d_bruteforce(&x, &w, &b, stride, pad, dilation);
        assert_eq!(y.shape(), oracle.shape());
        assert!(max_abs_diff(&y, &oracle) < 1e-5);
    }
}

#[test]
fn conv_transpose_spreads_single_tap() {
    let tape = Tape::new();
    let v = 2.5f32;
    let x = tape.leaf(Tensor::full(&[1, 1, 1, 1], v), false);
    let w = tape.leaf(Tensor::full(&[1, 1, 4, 4], 1.0), false);
    let b = tape.leaf(Tensor::zeros(&[1]), false);
    let y = x
        .conv_transpose2d(w, b, ConvTransposeGeometry { stride: 2, pad: 0, output_pad: 0 })
        .unwrap();
    assert_eq!(y.shape(), vec![1, 1, 4, 4]);
    assert!(y.tensor().data().iter().all(|&e| e == v));
}

#[test]
fn conv_transpose_shape_formula() {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(&[1, 1, 64, 64]), false);
    let w = tape.leaf(Tensor::zeros(&[1, 1, 3, 3]), false);
    let b = tape.leaf(Tensor::zeros(&[1]), false);
    let y = x
        .conv_transpose2d(w, b, ConvTransposeGeometry { stride: 2, pad: 1, output_pad: 1 })
        .unwrap();
    assert_eq!(y.shape(), vec![1, 1, 128, 128]);
}

#[test]
fn conv_transpose_is_adjoint_of_conv_gradient() {
    // forward conv_transpose2d(y) must equal d/dx <conv2d(x), y>.
    let geom = ConvGeometry { stride: 2, pad: 1, dilation: 1 };
    let x0 = randt(&[1, 2, 8, 8], 21);
    let w = randt(&[3, 2, 4, 4], 22);
    let zeros_b = Tensor::zeros(&[3]);

    let tape = Tape::new();
    let x = tape.leaf(x0.clone(), true);
    let wv = tape.leaf(w.clone(), false);
    let bv = tape.leaf(zeros_b.clone(), false);
    let out = x.conv2d(wv, bv, geom).unwrap();
    let y = randt(&out.shape(), 23);
    let yv = tape.leaf(y.clone(), false);
    let loss = out.mul(yv).unwrap().sum_all().unwrap();
    let mut grads = tape.backward(loss).unwrap();
    let dx = grads.take(x).unwrap();

    // Matching transposed geometry: output_pad restores the size floor()
    // discarded. Here (8 + 2 - 4) / 2 + 1 = 4 and (4-1)*2 - 2 + 4 + 0 = 8.
    let t2 = Tape::new();
    let yv = t2.leaf(y, false);
    // The conv weight [F,C,kh,kw] reads verbatim as a convT weight
    // [C_in=F, C_out=C, kh, kw]; same buffer, no rearrangement.
    let c = w.shape()[1];
    let wtv = t2.leaf(w, false);
    let bt = t2.leaf(Tensor::zeros(&[c]), false);
    let spread = yv
        .conv_transpose2d(wtv, bt, ConvTransposeGeometry { stride: 2, pad: 1, output_pad: 0 })
        .unwrap()
        .tensor();
    assert_eq!(spread.shape(), dx.shape());
    assert!(max_abs_diff(&spread, &dx) < 1e-5);
}

#[test]
fn conv_adjoint_inner_product_identity() {
    // <conv(x), y> == <x, conv_transpose(y)> on matching geometry.
    for (hw, k, s, p) in [(8usize, 3usize, 1usize, 1usize), (9, 4, 2, 1), (7, 3, 2, 0)] {
        let x = randt(&[1, 2, hw, hw], 31);
        let w = randt(&[3, 2, k, k], 32);
        let tape = Tape::new();
        let xv = tape.leaf(x.clone(), false);
        let wv = tape.leaf(w.clone(), false);
        let b0 = tape.leaf(Tensor::zeros(&[3]), false);
        let cx = xv
            .conv2d(wv, b0, ConvGeometry { stride: s, pad: p, dilation: 1 })
            .unwrap();
        let y = randt(&cx.shape(), 33);
        let yv = tape.leaf(y.clone(), false);
        let lhs = cx.mul(yv).unwrap().sum_all().unwrap().item().unwrap();

        let oh = cx.shape()[2];
        let out_pad = hw - ((oh - 1) * s + k - 2 * p);
        let t2 = Tape::new();
        let yv2 = t2.leaf(y, false);
        let wv2 = t2.leaf(w, false);
        let b2 = t2.leaf(Tensor::zeros(&[2]), false);
        let ty = yv2
            .conv_transpose2d(
                wv2,
                b2,
                ConvTransposeGeometry { stride: s, pad: p, output_pad: out_pad },
            )
            .unwrap();
        let xv2 = t2.leaf(x, false);
        let rhs = ty.mul(xv2).unwrap().sum_all().unwrap().item().unwrap();
        assert!(
            (lhs - rhs).abs() < 1e-4,
            "adjointness violated: {lhs} vs {rhs} at hw={hw} k={k} s={s} p={p}"
        );
    }
}

#[test]
fn reflection_pad_row_and_identity() {
    let tape = Tape::new();
    let x = tape.leaf(
        Tensor::new(vec![1, 1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
        false,
    );
    let y = x.reflection_pad2d(1).unwrap().tensor();
    assert_eq!(y.shape(), &[1, 1, 4, 5]);
    // second output row is the first input row reflected horizontally
    assert_eq!(&y.data()[5..10], &[2.0, 1.0, 2.0, 3.0, 2.0]);

    let z = x.reflection_pad2d(0).unwrap().tensor();
    assert_eq!(z.data(), x.tensor().data());

    assert!(matches!(
        x.reflection_pad2d(2),
        Err(TensorError::InvalidArgument { .. })
    ));
}

#[test]
fn instance_norm_cases() {
    let tape = Tape::new();
    // constant plane -> zeros
    let c = tape.leaf(Tensor::full(&[1, 1, 4, 4], 3.7), false);
    let y = c.instance_norm2d(1e-5).unwrap().tensor();
    assert!(y.data().iter().all(|v| v.abs() < 1e-3));

    // {1,3} plane -> {-1,+1}
    let p = tape.leaf(
        Tensor::new(vec![1, 1, 1, 2], vec![1.0, 3.0]).unwrap(),
        false,
    );
    let y = p.instance_norm2d(1e-5).unwrap().tensor();
    assert!((y.data()[0] + 1.0).abs() < 1e-4);
    assert!((y.data()[1] - 1.0).abs() < 1e-4);

    // seeded: per-plane stats
    let x = randt(&[2, 3, 5, 5], 41);
    let v = tape.leaf(x, false);
    let y = v.instance_norm2d(1e-5).unwrap().tensor();
    for pc in 0..6 {
        let plane = &y.data()[pc * 25..(pc + 1) * 25];
        let mean: f64 = plane.iter().map(|&v| v as f64).sum::<f64>() / 25.0;
        let var: f64 = plane.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / 25.0;
        assert!(mean.abs() < 1e-5, "plane {pc} mean {mean}");
        assert!((var - 1.0).abs() < 1e-3, "plane {pc} var {var}");
    }
}

#[test]
fn activation_values() {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::new(vec![3], vec![-1.0, 2.0, -2.0]).unwrap(), false);
    let leaky = x.leaky_relu(0.2).unwrap().tensor();
    assert!((leaky.data()[0] + 0.2).abs() < 1e-7);
    let r = x.relu().unwrap().tensor();
    assert_eq!(r.data(), &[0.0, 2.0, 0.0]);
    let t = x.tanh().unwrap().tensor();
    assert!(t.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    let s = x.sigmoid().unwrap().tensor();
    assert!(s.data().iter().all(|v| (0.0..1.0).contains(v)));
}

#[test]
fn dropout_contracts() {
    let tape = Tape::new();
    let ones = tape.leaf(Tensor::full(&[10_000], 1.0), false);
    // rate 0 -> identity
    let id = ones.dropout(0.0, 7, true).unwrap().tensor();
    assert_eq!(id.data(), ones.tensor().data());

    let d = ones.dropout(0.5, 7, true).unwrap().tensor();
    let zeroed = d.data().iter().filter(|&&v| v == 0.0).count() as f64 / 10_000.0;
    assert!((zeroed - 0.5).abs() < 0.02, "zeroed fraction {zeroed}");
    assert!(d.data().iter().all(|&v| v == 0.0 || v == 2.0));

    // same seed twice -> bitwise identical
    let d2 = ones.dropout(0.5, 7, true).unwrap().tensor();
    assert_eq!(d.data(), d2.data());
    // different seed -> different mask
    let d3 = ones.dropout(0.5, 8, true).unwrap().tensor();
    assert_ne!(d.data(), d3.data());

    // inactive -> identity
    let off = ones.dropout(0.5, 7, false).unwrap().tensor();
    assert_eq!(off.data(), ones.tensor().data());

    assert!(matches!(
        ones.dropout(1.0, 7, true),
        Err(TensorError::InvalidArgument { .. })
    ));
}

#[test]
fn pooling_cases() {
    let tape = Tape::new();
    let x = tape.leaf(
        Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
        false,
    );
    let g = x.adaptive_avg_pool2d(1).unwrap();
    assert_eq!(g.shape(), vec![1, 1, 1, 1]);
    assert_eq!(g.item().unwrap(), 2.5);

    // adaptive(H) on HxH is the identity
    let v = randt(&[1, 2, 5, 5], 51);
    let xv = tape.leaf(v.clone(), false);
    let idp = xv.adaptive_avg_pool2d(5).unwrap().tensor();
    assert_eq!(idp.data(), v.data());

    // seeded vs direct window-averaging oracle
    let x = randt(&[1, 2, 7, 6], 52);
    let xv = tape.leaf(x.clone(), false);
    for bins in [1usize, 2, 3] {
        let got = xv.adaptive_avg_pool2d(bins).unwrap().tensor();
        for c in 0..2 {
            for by in 0..bins {
                for bx in 0..bins {
                    let (y0, y1) = (by * 7 / bins, (by + 1) * 7 / bins + usize::from((by + 1) * 7 % bins != 0));
                    let (x0, x1) = (bx * 6 / bins, (bx + 1) * 6 / bins + usize::from((bx + 1) * 6 % bins != 0));
                    let mut s = 0.0f64;
                    for yy in y0..y1 {
                        for xx in x0..x1 {
                            s += x.data()[(c * 7 + yy) * 6 + xx] as f64;
                        }
                    }
                    let expect = s / ((y1 - y0) * (x1 - x0)) as f64;
                    let gotv = got.data()[(c * bins + by) * bins + bx] as f64;
                    assert!((gotv - expect).abs() < 1e-6);
                }
            }
        }
    }

    // plain average pooling against the same kind of window oracle
    let got = xv.avg_pool2d(2, 2).unwrap().tensor();
    assert_eq!(got.shape(), &[1, 2, 3, 3]);
    for c in 0..2 {
        for oy in 0..3 {
            for ox in 0..3 {
                let mut s = 0.0f64;
                for ky in 0..2 {
                    for kx in 0..2 {
                        s += x.data()[(c * 7 + oy * 2 + ky) * 6 + ox * 2 + kx] as f64;
                    }
                }
                let gotv = got.data()[(c * 3 + oy) * 3 + ox] as f64;
                assert!((gotv - s / 4.0).abs() < 1e-6);
            }
        }
    }

    assert!(matches!(
        xv.adaptive_avg_pool2d(8),
        Err(TensorError::InvalidArgument { .. })
    ));
}

#[test]
fn upsample_cases() {
    let tape = Tape::new();
    let c = tape.leaf(Tensor::full(&[1, 1, 3, 3], 5.0), false);
    let up = c.upsample_bilinear(7, 4).unwrap().tensor();
    assert!(up.data().iter().all(|&v| (v - 5.0).abs() < 1e-6));

    let one = tape.leaf(Tensor::full(&[1, 1, 1, 1], -0.7), false);
    let up = one.upsample_bilinear(4, 4).unwrap().tensor();
    assert!(up.data().iter().all(|&v| v == -0.7));

    // 2x2 -> 4x4 against the hand-evaluated align-corners-false formula:
    // per-axis weights [1, 3/4, 1/4, 0] and [0, 1/4, 3/4, 1].
    let (a, b, c_, d) = (1.0f64, 2.0, -3.0, 0.5);
    let tape = Tape::new();
    let x = tape.leaf(
        Tensor::new(vec![1, 1, 2, 2], vec![a as f32, b as f32, c_ as f32, d as f32]).unwrap(),
        false,
    );
    let got = x.upsample_bilinear(4, 4).unwrap().tensor();
    let wts = [(1.0f64, 0.0f64), (0.75, 0.25), (0.25, 0.75), (0.0, 1.0)];
    for (oy, &(wy0, wy1)) in wts.iter().enumerate() {
        for (ox, &(wx0, wx1)) in wts.iter().enumerate() {
            let expect = wy0 * (wx0 * a + wx1 * b) + wy1 * (wx0 * c_ + wx1 * d);
            let gv = got.data()[oy * 4 + ox] as f64;
            assert!((gv - expect).abs() < 1e-6, "({oy},{ox}): {gv} vs {expect}");
        }
    }
}

#[test]
fn backward_basics() {
    // loss = sum(x) -> grad of ones
    let tape = Tape::new();
    let x = tape.leaf(Tensor::new(vec![3], vec![5.0, -1.0, 2.0]).unwrap(), true);
    let loss = x.sum_all().unwrap();
    let mut grads = tape.backward(loss).unwrap();
    assert_eq!(grads.take(x).unwrap().data(), &[1.0, 1.0, 1.0]);

    // loss = sum(x*x) at [1,2,3] -> [2,4,6]
    let tape = Tape::new();
    let x = tape.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap(), true);
    let loss = x.mul(x).unwrap().sum_all().unwrap();
    let mut grads = tape.backward(loss).unwrap();
    assert_eq!(grads.take(x).unwrap().data(), &[2.0, 4.0, 6.0]);
}

#[test]
fn backward_rejects_non_scalar_and_off_tape() {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap(), true);
    assert!(matches!(
        tape.backward(x),
        Err(TensorError::NonScalarLoss { .. })
    ));

    let tape = Tape::new();
    let x = tape.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap(), false);
    let loss = x.sum_all().unwrap();
    assert!(matches!(
        tape.backward(loss),
        Err(TensorError::LossNotOnTape)
    ));
}

#[test]
fn backward_consumes_tape() {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap(), true);
    let loss = x.sum_all().unwrap();
    tape.backward(loss).unwrap();
    assert!(matches!(x.sum_all(), Err(TensorError::TapeConsumed)));
}

#[test]
fn composite_network_gradient_check() {
    // conv -> instance_norm -> leaky_relu -> mean, all parameters checked
    // against central differences.
    let x = randt(&[1, 2, 6, 6], 61);
    let w = randt(&[3, 2, 3, 3], 62);
    let b = randt(&[3], 63);
    let outcome = gradcheck::check_coords(
        "composite",
        &[x, w, b],
        &|_t, v| {
            v[0].conv2d(v[1], v[2], ConvGeometry { stride: 1, pad: 1, dilation: 1 })?
                .instance_norm2d(1e-5)?
                .leaky_relu(0.2)?
                .mean_all()?
                .item()
        },
        None,
        gradcheck::Tolerance::default(),
    )
    .unwrap();
    assert!(outcome.passed, "{outcome}");
}

#[test]
fn op_chain_is_deterministic() {
    let run = || {
        let tape = Tape::new();
        let x = tape.leaf(randt(&[1, 2, 8, 8], 71), false);
        let w = tape.leaf(randt(&[2, 2, 3, 3], 72), false);
        let b = tape.leaf(randt(&[2], 73), false);
        x.conv2d(w, b, ConvGeometry { stride: 1, pad: 1, dilation: 1 })
            .unwrap()
            .instance_norm2d(1e-5)
            .unwrap()
            .dropout(0.3, 99, true)
            .unwrap()
            .tanh()
            .unwrap()
            .tensor()
    };
    let a = run();
    let b = run();
    assert_eq!(a.data(), b.data());
}

#[test]
fn conv_shape_errors_name_dimension() {
    let tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(&[1, 5, 8, 8]), false);
    let w = tape.leaf(Tensor::zeros(&[4, 6, 3, 3]), false);
    let b = tape.leaf(Tensor::zeros(&[4]), false);
    match x.conv2d(w, b, ConvGeometry { stride: 1, pad: 1, dilation: 1 }) {
        Err(TensorError::DimMismatch { expected, got, .. }) => {
            assert_eq!((expected, got), (6, 5));
        }
        other => panic!("expected DimMismatch, got {:?}", other.map(|v| v.shape())),
    }
    // non-positive stride / dilation rejected
    assert!(x
        .conv2d(w, b, ConvGeometry { stride: 0, pad: 1, dilation: 1 })
        .is_err());
    assert!(x
        .conv2d(w, b, ConvGeometry { stride: 1, pad: 1, dilation: 0 })
        .is_err());

    // conv_transpose output_padding >= stride rejected
    let wt = tape.leaf(Tensor::zeros(&[5, 2, 3, 3]), false);
    let bt = tape.leaf(Tensor::zeros(&[2]), false);
    assert!(x
        .conv_transpose2d(wt, bt, ConvTransposeGeometry { stride: 2, pad: 1, output_pad: 2 })
        .is_err());
}

#[test]
fn nan_detection_names_offending_node() {
    let tape = Tape::new();
    tape.set_check_finite(true);
    let x = tape.leaf(Tensor::new(vec![2], vec![0.0, 0.0]).unwrap(), false);
    // ln of 0 via softplus(-inf) route: scale by -inf produces NaN input
    let huge = x.add_scalar(f32::MAX).unwrap();
    match huge.scale(f32::MAX) {
        Err(TensorError::NonFinite { node }) => assert_eq!(node, "scale"),
        other => panic!("expected NonFinite, got {:?}", other.map(|v| v.shape())),
    }
}
