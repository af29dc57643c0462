use rand::Rng;

use crate::kernels as k;
use crate::rng;
use crate::tape::Node;
use crate::{Result, Tensor, TensorError, Var};

/// Elementwise activation kinds used by the networks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f32),
    Tanh,
    Sigmoid,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvTransposeGeometry {
    pub stride: usize,
    pub pad: usize,
    pub output_pad: usize,
}

pub(crate) enum BackOp {
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Neg { a: usize },
    Scale { a: usize, c: f32 },
    AddScalar { a: usize },
    Abs { a: usize },
    Powf { a: usize, exp: f32 },
    Relu { a: usize },
    LeakyRelu { a: usize, slope: f32 },
    Tanh { a: usize },
    Sigmoid { a: usize },
    Softplus { a: usize },
    Dropout { a: usize, mask: Vec<f32> },
    Conv2d { x: usize, w: usize, b: usize, args: k::Conv2dArgs },
    ConvT2d { x: usize, w: usize, b: usize, args: k::ConvT2dArgs },
    ReflectionPad { a: usize, pad: usize },
    InstanceNorm { a: usize, inv_std: Vec<f32> },
    AvgPool { a: usize, kernel: usize, stride: usize },
    AdaptiveAvgPool { a: usize, bins: usize },
    UpsampleBilinear { a: usize },
    ConcatChannels { parts: Vec<(usize, usize)> },
    MeanAll { a: usize },
    SumAll { a: usize },
}

fn sigmoid_f(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus_f(x: f32) -> f32 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl<'t> Var<'t> {
    fn with_node<R>(&self, f: impl FnOnce(&Node) -> R) -> R {
        let nodes = self.tape().nodes.borrow();
        f(&nodes[self.id])
    }

    fn unary(
        self,
        label: &'static str,
        map: impl Fn(&Tensor) -> Result<Tensor>,
        back: impl Fn(usize) -> BackOp,
    ) -> Result<Var<'t>> {
        let (value, grad) = self.with_node(|n| (map(&n.value), n.requires_grad));
        self.tape()
            .push(value?, grad, Some(back(self.id)), label.to_string())
    }

    fn elementwise(
        self,
        label: &'static str,
        map: impl Fn(f32) -> f32,
        back: impl Fn(usize) -> BackOp,
    ) -> Result<Var<'t>> {
        self.unary(
            label,
            |t| Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| map(v)).collect()),
            back,
        )
    }

    fn binary(
        self,
        rhs: Var<'t>,
        label: &'static str,
        map: impl Fn(f32, f32) -> f32,
        back: impl Fn(usize, usize) -> BackOp,
    ) -> Result<Var<'t>> {
        if !std::ptr::eq(self.tape(), rhs.tape()) {
            return Err(TensorError::ForeignTape);
        }
        let nodes = self.tape().nodes.borrow();
        let a = &nodes[self.id].value;
        let b = &nodes[rhs.id].value;
        a.same_shape(b, label)?;
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| map(x, y))
            .collect();
        let value = Tensor::new(a.shape().to_vec(), data)?;
        let grad = nodes[self.id].requires_grad || nodes[rhs.id].requires_grad;
        drop(nodes);
        self.tape()
            .push(value, grad, Some(back(self.id, rhs.id)), label.to_string())
    }

    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, "add", |a, b| a + b, |a, b| BackOp::Add { a, b })
    }

    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, "sub", |a, b| a - b, |a, b| BackOp::Sub { a, b })
    }

    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.binary(rhs, "mul", |a, b| a * b, |a, b| BackOp::Mul { a, b })
    }

    pub fn neg(self) -> Result<Var<'t>> {
        self.elementwise("neg", |v| -v, |a| BackOp::Neg { a })
    }

    pub fn scale(self, c: f32) -> Result<Var<'t>> {
        self.elementwise("scale", move |v| v * c, move |a| BackOp::Scale { a, c })
    }

    pub fn add_scalar(self, c: f32) -> Result<Var<'t>> {
        self.elementwise("add_scalar", move |v| v + c, |a| BackOp::AddScalar { a })
    }

    pub fn abs(self) -> Result<Var<'t>> {
        self.elementwise("abs", f32::abs, |a| BackOp::Abs { a })
    }

    /// Elementwise power with constant exponent. `exp == 0` is the constant
    /// function 1 with zero gradient everywhere.
    pub fn powf(self, exp: f32) -> Result<Var<'t>> {
        self.elementwise("powf", move |v| v.powf(exp), move |a| BackOp::Powf { a, exp })
    }

    pub fn relu(self) -> Result<Var<'t>> {
        self.elementwise("relu", |v| v.max(0.0), |a| BackOp::Relu { a })
    }

    pub fn leaky_relu(self, slope: f32) -> Result<Var<'t>> {
        self.elementwise(
            "leaky_relu",
            move |v| if v > 0.0 { v } else { v * slope },
            move |a| BackOp::LeakyRelu { a, slope },
        )
    }

    pub fn tanh(self) -> Result<Var<'t>> {
        self.elementwise("tanh", f32::tanh, |a| BackOp::Tanh { a })
    }

    pub fn sigmoid(self) -> Result<Var<'t>> {
        self.elementwise("sigmoid", sigmoid_f, |a| BackOp::Sigmoid { a })
    }

    /// ln(1 + e^x), evaluated in its overflow-free form.
    pub fn softplus(self) -> Result<Var<'t>> {
        self.elementwise("softplus", softplus_f, |a| BackOp::Softplus { a })
    }

    pub fn activation(self, kind: Activation) -> Result<Var<'t>> {
        match kind {
            Activation::Relu => self.relu(),
            Activation::LeakyRelu(s) => self.leaky_relu(s),
            Activation::Tanh => self.tanh(),
            Activation::Sigmoid => self.sigmoid(),
        }
    }

    /// Inverted dropout: zero each element with probability `rate` and scale
    /// survivors by 1/(1-rate). The mask is a pure function of `seed`. When
    /// `active` is false this is the identity.
    pub fn dropout(self, rate: f32, seed: u64, active: bool) -> Result<Var<'t>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::InvalidArgument {
                context: "dropout",
                details: format!("rate must be in [0, 1), got {rate}"),
            });
        }
        if !active || rate == 0.0 {
            return Ok(self);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let mut stream = rng::stream(seed);
        let (value, grad, mask) = self.with_node(|n| {
            let mask: Vec<f32> = (0..n.value.len())
                .map(|_| {
                    if stream.gen::<f32>() < rate {
                        0.0
                    } else {
                        keep_scale
                    }
                })
                .collect();
            let data = n
                .value
                .data()
                .iter()
                .zip(&mask)
                .map(|(&v, &m)| v * m)
                .collect();
            (
                Tensor::new(n.value.shape().to_vec(), data),
                n.requires_grad,
                mask,
            )
        });
        self.tape().push(
            value?,
            grad,
            Some(BackOp::Dropout { a: self.id, mask }),
            "dropout".to_string(),
        )
    }

    /// 2D correlation of [N,C,H,W] with weights [F,C,kh,kw] and bias [F].
    pub fn conv2d(
        self,
        weight: Var<'t>,
        bias: Var<'t>,
        geom: ConvGeometry,
    ) -> Result<Var<'t>> {
        if geom.stride == 0 || geom.dilation == 0 {
            return Err(TensorError::InvalidArgument {
                context: "conv2d",
                details: format!(
                    "stride and dilation must be >= 1, got stride={} dilation={}",
                    geom.stride, geom.dilation
                ),
            });
        }
        let nodes = self.tape().nodes.borrow();
        let x = &nodes[self.id].value;
        let wt = &nodes[weight.id].value;
        let bt = &nodes[bias.id].value;
        let [n, c, h, w] = x.dims4("conv2d input")?;
        let [f, wc, kh, kw] = wt.dims4("conv2d weight")?;
        if wc != c {
            return Err(TensorError::DimMismatch {
                context: "conv2d: input channels vs weight",
                dim: 1,
                expected: wc,
                got: c,
            });
        }
        if bt.shape() != [f] {
            return Err(TensorError::DimMismatch {
                context: "conv2d: bias vs filters",
                dim: 0,
                expected: f,
                got: bt.len(),
            });
        }
        let oh = k::conv_out_dim(h, kh, geom.stride, geom.pad, geom.dilation);
        let ow = k::conv_out_dim(w, kw, geom.stride, geom.pad, geom.dilation);
        let (Some(oh), Some(ow)) = (oh, ow) else {
            return Err(TensorError::InvalidArgument {
                context: "conv2d",
                details: format!(
                    "padded input {h}x{w} smaller than dilated kernel {kh}x{kw} (dilation {})",
                    geom.dilation
                ),
            });
        };
        let args = k::Conv2dArgs {
            n,
            c,
            h,
            w,
            f,
            kh,
            kw,
            stride: geom.stride,
            pad: geom.pad,
            dilation: geom.dilation,
            oh,
            ow,
        };
        let out = k::conv2d_forward(x.data(), wt.data(), bt.data(), &args);
        let value = Tensor::new(vec![n, f, oh, ow], out)?;
        let grad = nodes[self.id].requires_grad
            || nodes[weight.id].requires_grad
            || nodes[bias.id].requires_grad;
        let label = format!("conv2d[{}]", nodes[weight.id].label);
        drop(nodes);
        self.tape().push(
            value,
            grad,
            Some(BackOp::Conv2d {
                x: self.id,
                w: weight.id,
                b: bias.id,
                args,
            }),
            label,
        )
    }

    /// Fractionally strided convolution of [N,C,H,W] with weights
    /// [C,F,kh,kw]; the exact adjoint of [`Var::conv2d`] on matching
    /// geometry.
    pub fn conv_transpose2d(
        self,
        weight: Var<'t>,
        bias: Var<'t>,
        geom: ConvTransposeGeometry,
    ) -> Result<Var<'t>> {
        if geom.stride == 0 {
            return Err(TensorError::InvalidArgument {
                context: "conv_transpose2d",
                details: "stride must be >= 1".to_string(),
            });
        }
        if geom.output_pad >= geom.stride {
            return Err(TensorError::InvalidArgument {
                context: "conv_transpose2d",
                details: format!(
                    "output_padding {} must be < stride {}",
                    geom.output_pad, geom.stride
                ),
            });
        }
        let nodes = self.tape().nodes.borrow();
        let x = &nodes[self.id].value;
        let wt = &nodes[weight.id].value;
        let bt = &nodes[bias.id].value;
        let [n, c, h, w] = x.dims4("conv_transpose2d input")?;
        let [wc, f, kh, kw] = wt.dims4("conv_transpose2d weight")?;
        if wc != c {
            return Err(TensorError::DimMismatch {
                context: "conv_transpose2d: input channels vs weight",
                dim: 0,
                expected: wc,
                got: c,
            });
        }
        if bt.shape() != [f] {
            return Err(TensorError::DimMismatch {
                context: "conv_transpose2d: bias vs filters",
                dim: 0,
                expected: f,
                got: bt.len(),
            });
        }
        let oh = k::conv_transpose_out_dim(h, kh, geom.stride, geom.pad, geom.output_pad);
        let ow = k::conv_transpose_out_dim(w, kw, geom.stride, geom.pad, geom.output_pad);
        let (Some(oh), Some(ow)) = (oh, ow) else {
            return Err(TensorError::InvalidArgument {
                context: "conv_transpose2d",
                details: "padding exceeds the produced output extent".to_string(),
            });
        };
        let args = k::ConvT2dArgs {
            n,
            c,
            h,
            w,
            f,
            kh,
            kw,
            stride: geom.stride,
            pad: geom.pad,
            oh,
            ow,
        };
        let out = k::conv_transpose2d_forward(x.data(), wt.data(), bt.data(), &args);
        let value = Tensor::new(vec![n, f, oh, ow], out)?;
        let grad = nodes[self.id].requires_grad
            || nodes[weight.id].requires_grad
            || nodes[bias.id].requires_grad;
        let label = format!("conv_transpose2d[{}]", nodes[weight.id].label);
        drop(nodes);
        self.tape().push(
            value,
            grad,
            Some(BackOp::ConvT2d {
                x: self.id,
                w: weight.id,
                b: bias.id,
                args,
            }),
            label,
        )
    }

    /// Mirror the borders without repeating the edge row/column.
    pub fn reflection_pad2d(self, pad: usize) -> Result<Var<'t>> {
        self.unary(
            "reflection_pad2d",
            |t| {
                let [n, c, h, w] = t.dims4("reflection_pad2d input")?;
                if pad >= h || pad >= w {
                    return Err(TensorError::InvalidArgument {
                        context: "reflection_pad2d",
                        details: format!("pad {pad} must be < spatial extent {h}x{w}"),
                    });
                }
                Tensor::new(
                    vec![n, c, h + 2 * pad, w + 2 * pad],
                    k::reflection_pad2d_forward(t.data(), n, c, h, w, pad),
                )
            },
            |a| BackOp::ReflectionPad { a, pad },
        )
    }

    /// Normalize each (sample, channel) plane to zero mean and unit
    /// population variance; no learned affine parameters.
    pub fn instance_norm2d(self, eps: f32) -> Result<Var<'t>> {
        let nodes = self.tape().nodes.borrow();
        let t = &nodes[self.id].value;
        let [n, c, h, w] = t.dims4("instance_norm2d input")?;
        let (out, inv_std) = k::instance_norm2d_forward(t.data(), n, c, h, w, eps);
        let value = Tensor::new(t.shape().to_vec(), out)?;
        let grad = nodes[self.id].requires_grad;
        drop(nodes);
        self.tape().push(
            value,
            grad,
            Some(BackOp::InstanceNorm {
                a: self.id,
                inv_std,
            }),
            "instance_norm2d".to_string(),
        )
    }

    /// Unpadded average pooling with square kernel.
    pub fn avg_pool2d(self, kernel: usize, stride: usize) -> Result<Var<'t>> {
        if kernel == 0 || stride == 0 {
            return Err(TensorError::InvalidArgument {
                context: "avg_pool2d",
                details: "kernel and stride must be >= 1".to_string(),
            });
        }
        self.unary(
            "avg_pool2d",
            |t| {
                let [n, c, h, w] = t.dims4("avg_pool2d input")?;
                if kernel > h || kernel > w {
                    return Err(TensorError::InvalidArgument {
                        context: "avg_pool2d",
                        details: format!("kernel {kernel} exceeds spatial extent {h}x{w}"),
                    });
                }
                let oh = (h - kernel) / stride + 1;
                let ow = (w - kernel) / stride + 1;
                Tensor::new(
                    vec![n, c, oh, ow],
                    k::avg_pool2d_forward(t.data(), n, c, h, w, kernel, stride, oh, ow),
                )
            },
            |a| BackOp::AvgPool { a, kernel, stride },
        )
    }

    /// Pool to a fixed bins x bins grid; bins = 1 is the global spatial mean.
    pub fn adaptive_avg_pool2d(self, bins: usize) -> Result<Var<'t>> {
        if bins == 0 {
            return Err(TensorError::InvalidArgument {
                context: "adaptive_avg_pool2d",
                details: "bins must be >= 1".to_string(),
            });
        }
        self.unary(
            "adaptive_avg_pool2d",
            |t| {
                let [n, c, h, w] = t.dims4("adaptive_avg_pool2d input")?;
                if bins > h || bins > w {
                    return Err(TensorError::InvalidArgument {
                        context: "adaptive_avg_pool2d",
                        details: format!("bins {bins} exceeds spatial extent {h}x{w}"),
                    });
                }
                Tensor::new(
                    vec![n, c, bins, bins],
                    k::adaptive_avg_pool2d_forward(t.data(), n, c, h, w, bins),
                )
            },
            |a| BackOp::AdaptiveAvgPool { a, bins },
        )
    }

    /// Bilinear resize with the align-corners-false convention.
    pub fn upsample_bilinear(self, out_h: usize, out_w: usize) -> Result<Var<'t>> {
        if out_h == 0 || out_w == 0 {
            return Err(TensorError::InvalidArgument {
                context: "upsample_bilinear",
                details: "output extent must be >= 1".to_string(),
            });
        }
        self.unary(
            "upsample_bilinear",
            |t| {
                let [n, c, h, w] = t.dims4("upsample_bilinear input")?;
                Tensor::new(
                    vec![n, c, out_h, out_w],
                    k::upsample_bilinear_forward(t.data(), n, c, h, w, out_h, out_w),
                )
            },
            |a| BackOp::UpsampleBilinear { a },
        )
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = *parts.first().ok_or(TensorError::InvalidArgument {
            context: "concat_channels",
            details: "at least one input required".to_string(),
        })?;
        let tape = first.tape();
        let nodes = tape.nodes.borrow();
        let [n, _, h, w] = nodes[first.id].value.dims4("concat_channels input")?;
        let mut total_c = 0usize;
        let mut meta = Vec::with_capacity(parts.len());
        let mut grad = false;
        for p in parts {
            if !std::ptr::eq(tape, p.tape()) {
                return Err(TensorError::ForeignTape);
            }
            let v = &nodes[p.id].value;
            let [pn, pc, ph, pw] = v.dims4("concat_channels input")?;
            if (pn, ph, pw) != (n, h, w) {
                return Err(TensorError::InvalidArgument {
                    context: "concat_channels",
                    details: format!(
                        "incompatible shapes {:?} vs {:?}",
                        nodes[first.id].value.shape(),
                        v.shape()
                    ),
                });
            }
            grad |= nodes[p.id].requires_grad;
            meta.push((p.id, pc));
            total_c += pc;
        }
        let plane = h * w;
        let mut out = vec![0.0f32; n * total_c * plane];
        for ni in 0..n {
            let mut ch_off = 0usize;
            for &(id, pc) in &meta {
                let src = nodes[id].value.data();
                let src_n = &src[ni * pc * plane..(ni + 1) * pc * plane];
                let dst_start = (ni * total_c + ch_off) * plane;
                out[dst_start..dst_start + pc * plane].copy_from_slice(src_n);
                ch_off += pc;
            }
        }
        let value = Tensor::new(vec![n, total_c, h, w], out)?;
        drop(nodes);
        tape.push(
            value,
            grad,
            Some(BackOp::ConcatChannels { parts: meta }),
            "concat_channels".to_string(),
        )
    }

    /// Mean over all elements, as a rank-0 scalar.
    pub fn mean_all(self) -> Result<Var<'t>> {
        self.unary(
            "mean_all",
            |t| {
                let mut s = 0.0f64;
                for &v in t.data() {
                    s += v as f64;
                }
                Ok(Tensor::scalar((s / t.len() as f64) as f32))
            },
            |a| BackOp::MeanAll { a },
        )
    }

    /// Sum over all elements, as a rank-0 scalar.
    pub fn sum_all(self) -> Result<Var<'t>> {
        self.unary(
            "sum_all",
            |t| {
                let mut s = 0.0f64;
                for &v in t.data() {
                    s += v as f64;
                }
                Ok(Tensor::scalar(s as f32))
            },
            |a| BackOp::SumAll { a },
        )
    }
}

fn like(node: &Node, data: Vec<f32>) -> Tensor {
    Tensor::new(node.value.shape().to_vec(), data).expect("gradient shape matches input")
}

fn mapped(node: &Node, dy: &Tensor, f: impl Fn(f32, f32) -> f32) -> Tensor {
    let data = node
        .value
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&x, &g)| f(x, g))
        .collect();
    like(node, data)
}

pub(crate) fn apply_backward(
    op: &BackOp,
    out_id: usize,
    nodes: &[Node],
    dy: &Tensor,
) -> Vec<(usize, Tensor)> {
    match op {
        BackOp::Add { a, b } => vec![(*a, dy.clone()), (*b, dy.clone())],
        BackOp::Sub { a, b } => {
            let neg = like(&nodes[*b], dy.data().iter().map(|g| -g).collect());
            vec![(*a, dy.clone()), (*b, neg)]
        }
        BackOp::Mul { a, b } => {
            let da = mapped(&nodes[*b], dy, |bv, g| bv * g);
            let db = mapped(&nodes[*a], dy, |av, g| av * g);
            vec![(*a, da), (*b, db)]
        }
        BackOp::Neg { a } => vec![(*a, like(&nodes[*a], dy.data().iter().map(|g| -g).collect()))],
        BackOp::Scale { a, c } => vec![(
            *a,
            like(&nodes[*a], dy.data().iter().map(|g| g * c).collect()),
        )],
        BackOp::AddScalar { a } => vec![(*a, dy.clone())],
        BackOp::Abs { a } => vec![(
            *a,
            mapped(&nodes[*a], dy, |x, g| {
                if x > 0.0 {
                    g
                } else if x < 0.0 {
                    -g
                } else {
                    0.0
                }
            }),
        )],
        BackOp::Powf { a, exp } => {
            let e = *exp;
            vec![(
                *a,
                mapped(&nodes[*a], dy, |x, g| {
                    if e == 0.0 {
                        0.0
                    } else {
                        g * e * x.powf(e - 1.0)
                    }
                }),
            )]
        }
        BackOp::Relu { a } => vec![(
            *a,
            mapped(&nodes[*a], dy, |x, g| if x > 0.0 { g } else { 0.0 }),
        )],
        BackOp::LeakyRelu { a, slope } => {
            let s = *slope;
            vec![(
                *a,
                mapped(&nodes[*a], dy, |x, g| if x > 0.0 { g } else { g * s }),
            )]
        }
        BackOp::Tanh { a } => {
            let y = &nodes[out_id].value;
            let data = y
                .data()
                .iter()
                .zip(dy.data())
                .map(|(&yv, &g)| g * (1.0 - yv * yv))
                .collect();
            vec![(*a, like(&nodes[*a], data))]
        }
        BackOp::Sigmoid { a } => {
            let y = &nodes[out_id].value;
            let data = y
                .data()
                .iter()
                .zip(dy.data())
                .map(|(&yv, &g)| g * yv * (1.0 - yv))
                .collect();
            vec![(*a, like(&nodes[*a], data))]
        }
        BackOp::Softplus { a } => vec![(*a, mapped(&nodes[*a], dy, |x, g| g * sigmoid_f(x)))],
        BackOp::Dropout { a, mask } => {
            let data = mask.iter().zip(dy.data()).map(|(&m, &g)| m * g).collect();
            vec![(*a, like(&nodes[*a], data))]
        }
        BackOp::Conv2d { x, w, b, args } => {
            let mut out = Vec::with_capacity(3);
            let need_x = nodes[*x].requires_grad;
            let need_w = nodes[*w].requires_grad;
            let need_b = nodes[*b].requires_grad;
            if need_x || need_w {
                let (dx, dw, db) = k::conv2d_backward(
                    nodes[*x].value.data(),
                    nodes[*w].value.data(),
                    dy.data(),
                    args,
                );
                if need_x {
                    out.push((*x, like(&nodes[*x], dx)));
                }
                if need_w {
                    out.push((*w, like(&nodes[*w], dw)));
                }
                if need_b {
                    out.push((*b, like(&nodes[*b], db)));
                }
            } else if need_b {
                let plane = args.oh * args.ow;
                let mut db = vec![0.0f32; args.f];
                for ni in 0..args.n {
                    for fi in 0..args.f {
                        let base = (ni * args.f + fi) * plane;
                        let mut s = 0.0f64;
                        for &g in &dy.data()[base..base + plane] {
                            s += g as f64;
                        }
                        db[fi] += s as f32;
                    }
                }
                out.push((*b, like(&nodes[*b], db)));
            }
            out
        }
        BackOp::ConvT2d { x, w, b, args } => {
            let mut out = Vec::with_capacity(3);
            let need_x = nodes[*x].requires_grad;
            let need_w = nodes[*w].requires_grad;
            let need_b = nodes[*b].requires_grad;
            if need_x || need_w || need_b {
                let (dx, dw, db) = k::conv_transpose2d_backward(
                    nodes[*x].value.data(),
                    nodes[*w].value.data(),
                    dy.data(),
                    args,
                );
                if need_x {
                    out.push((*x, like(&nodes[*x], dx)));
                }
                if need_w {
                    out.push((*w, like(&nodes[*w], dw)));
                }
                if need_b {
                    out.push((*b, like(&nodes[*b], db)));
                }
            }
            out
        }
        BackOp::ReflectionPad { a, pad } => {
            let [n, c, h, w] = nodes[*a].value.dims4("reflection_pad2d backward").unwrap();
            vec![(
                *a,
                like(
                    &nodes[*a],
                    k::reflection_pad2d_backward(dy.data(), n, c, h, w, *pad),
                ),
            )]
        }
        BackOp::InstanceNorm { a, inv_std } => {
            let [n, c, h, w] = nodes[*a].value.dims4("instance_norm2d backward").unwrap();
            let y = nodes[out_id].value.data();
            vec![(
                *a,
                like(
                    &nodes[*a],
                    k::instance_norm2d_backward(y, inv_std, dy.data(), n, c, h, w),
                ),
            )]
        }
        BackOp::AvgPool { a, kernel, stride } => {
            let [n, c, h, w] = nodes[*a].value.dims4("avg_pool2d backward").unwrap();
            let oh = (h - kernel) / stride + 1;
            let ow = (w - kernel) / stride + 1;
            vec![(
                *a,
                like(
                    &nodes[*a],
                    k::avg_pool2d_backward(dy.data(), n, c, h, w, *kernel, *stride, oh, ow),
                ),
            )]
        }
        BackOp::AdaptiveAvgPool { a, bins } => {
            let [n, c, h, w] = nodes[*a].value.dims4("adaptive_avg_pool2d backward").unwrap();
            vec![(
                *a,
                like(
                    &nodes[*a],
                    k::adaptive_avg_pool2d_backward(dy.data(), n, c, h, w, *bins),
                ),
            )]
        }
        BackOp::UpsampleBilinear { a } => {
            let [n, c, h, w] = nodes[*a].value.dims4("upsample_bilinear backward").unwrap();
            let out_shape = nodes[out_id].value.shape();
            let (oh, ow) = (out_shape[2], out_shape[3]);
            vec![(
                *a,
                like(
                    &nodes[*a],
                    k::upsample_bilinear_backward(dy.data(), n, c, h, w, oh, ow),
                ),
            )]
        }
        BackOp::ConcatChannels { parts } => {
            let out_shape = nodes[out_id].value.shape();
            let (n, total_c, h, w) = (out_shape[0], out_shape[1], out_shape[2], out_shape[3]);
            let plane = h * w;
            let mut grads = Vec::with_capacity(parts.len());
            let mut ch_off = 0usize;
            for &(id, pc) in parts {
                let mut g = vec![0.0f32; n * pc * plane];
                for ni in 0..n {
                    let src_start = (ni * total_c + ch_off) * plane;
                    g[ni * pc * plane..(ni + 1) * pc * plane]
                        .copy_from_slice(&dy.data()[src_start..src_start + pc * plane]);
                }
                grads.push((id, like(&nodes[id], g)));
                ch_off += pc;
            }
            grads
        }
        BackOp::MeanAll { a } => {
            let n = nodes[*a].value.len();
            let g = dy.data()[0] / n as f32;
            vec![(*a, Tensor::full(nodes[*a].value.shape(), g))]
        }
        BackOp::SumAll { a } => {
            let g = dy.data()[0];
            vec![(*a, Tensor::full(nodes[*a].value.shape(), g))]
        }
    }
}
