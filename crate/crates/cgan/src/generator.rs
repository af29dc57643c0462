use ct2mr_nn::{register_conv, register_conv_transpose, ParamSet, ParamVars};
use ct2mr_tensor::{rng, ConvGeometry, ConvTransposeGeometry, Tape, Var};

use crate::{CganError, Result};

const EPS: f32 = 1e-5;

/// Whether the noise source z (dropout inside the ResNet blocks) is live.
/// It stays active at inference by default; the mask is a pure function of
/// the seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DropoutMode {
    Active { seed: u64 },
    Disabled,
}

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_width: usize,
    pub n_resnet_blocks: usize,
    pub image_size: usize,
    pub dropout_rate: f32,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            in_channels: 5,
            out_channels: 1,
            base_width: 64,
            n_resnet_blocks: 9,
            image_size: 256,
            dropout_rate: 0.5,
        }
    }
}

impl GeneratorConfig {
    /// Reduced geometry for tests and desk runs: small slices, 3 blocks.
    pub fn desk(image_size: usize) -> Self {
        GeneratorConfig {
            image_size,
            n_resnet_blocks: 3,
            ..GeneratorConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size % 4 != 0 || self.image_size < 8 {
            return Err(CganError::Config(format!(
                "image_size {} must be a multiple of 4 (two stride-2 stages) and >= 8",
                self.image_size
            )));
        }
        if self.n_resnet_blocks == 0 {
            return Err(CganError::Config("n_resnet_blocks must be >= 1".to_string()));
        }
        if self.base_width == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(CganError::Config("channel widths must be >= 1".to_string()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(CganError::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// The translation generator: 7x7 stem, two stride-2 downsampling convs,
/// n ResNet blocks at constant width, two fractionally strided upsampling
/// convs, 7x7 head, tanh output in [-1, 1]. Fully convolutional, so any
/// square input with side divisible by 4 passes through.
pub struct Generator {
    pub cfg: GeneratorConfig,
}

impl Generator {
    pub fn new(cfg: GeneratorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Generator { cfg })
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        let c = &self.cfg;
        let w = c.base_width;
        let mut ps = ParamSet::new();
        let mut layer = 0u64;
        let mut next_seed = || {
            layer += 1;
            rng::derive(seed, &[layer])
        };
        register_conv(&mut ps, "g.stem", w, c.in_channels, 7, 7, next_seed()).expect("fresh set");
        register_conv(&mut ps, "g.down1", 2 * w, w, 3, 3, next_seed()).expect("fresh set");
        register_conv(&mut ps, "g.down2", 4 * w, 2 * w, 3, 3, next_seed()).expect("fresh set");
        for b in 0..c.n_resnet_blocks {
            register_conv(&mut ps, &format!("g.block{b}.conv1"), 4 * w, 4 * w, 3, 3, next_seed())
                .expect("fresh set");
            register_conv(&mut ps, &format!("g.block{b}.conv2"), 4 * w, 4 * w, 3, 3, next_seed())
                .expect("fresh set");
        }
        register_conv_transpose(&mut ps, "g.up1", 4 * w, 2 * w, 3, 3, next_seed())
            .expect("fresh set");
        register_conv_transpose(&mut ps, "g.up2", 2 * w, w, 3, 3, next_seed())
            .expect("fresh set");
        register_conv(&mut ps, "g.head", c.out_channels, w, 7, 7, next_seed())
            .expect("fresh set");
        ps
    }

    pub fn param_schema(&self) -> Vec<(String, Vec<usize>)> {
        self.init_params(0).schema()
    }

    /// Forward pass of one [1, in_channels, S, S] slice.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        params: &ParamVars<'t>,
        x: Var<'t>,
        dropout: DropoutMode,
    ) -> Result<Var<'t>> {
        let _ = tape;
        let shape = x.shape();
        let valid = shape.len() == 4
            && shape[0] == 1
            && shape[1] == self.cfg.in_channels
            && shape[2] == shape[3]
            && shape[2] % 4 == 0
            && shape[2] >= 8;
        if !valid {
            return Err(CganError::InputShape {
                context: "generator input [1, in_channels, S, S] with S divisible by 4",
                got: shape,
            });
        }
        let s1 = ConvGeometry { stride: 1, pad: 0, dilation: 1 };
        let down = ConvGeometry { stride: 2, pad: 1, dilation: 1 };
        let up = ConvTransposeGeometry { stride: 2, pad: 1, output_pad: 1 };
        let conv = |v: Var<'t>, name: &str, geom: ConvGeometry| -> Result<Var<'t>> {
            Ok(v.conv2d(
                params.get(&format!("{name}.weight"))?,
                params.get(&format!("{name}.bias"))?,
                geom,
            )?)
        };

        let padded = x.reflection_pad2d(3)?;
        let mut h = conv(padded, "g.stem", s1)?.instance_norm2d(EPS)?.relu()?;
        h = conv(h, "g.down1", down)?.instance_norm2d(EPS)?.relu()?;
        h = conv(h, "g.down2", down)?.instance_norm2d(EPS)?.relu()?;

        for b in 0..self.cfg.n_resnet_blocks {
            let padded = h.reflection_pad2d(1)?;
            let mut r = conv(padded, &format!("g.block{b}.conv1"), s1)?
                .instance_norm2d(EPS)?
                .relu()?;
            r = match dropout {
                DropoutMode::Active { seed } => {
                    r.dropout(self.cfg.dropout_rate, rng::derive(seed, &[b as u64]), true)?
                }
                DropoutMode::Disabled => r,
            };
            let padded = r.reflection_pad2d(1)?;
            r = conv(padded, &format!("g.block{b}.conv2"), s1)?.instance_norm2d(EPS)?;
            h = h.add(r)?;
        }

        h = h
            .conv_transpose2d(params.get("g.up1.weight")?, params.get("g.up1.bias")?, up)?
            .instance_norm2d(EPS)?
            .relu()?;
        h = h
            .conv_transpose2d(params.get("g.up2.weight")?, params.get("g.up2.bias")?, up)?
            .instance_norm2d(EPS)?
            .relu()?;
        let padded = h.reflection_pad2d(3)?;
        Ok(conv(padded, "g.head", s1)?.tanh()?)
    }
}
