use ct2mr_nn::{register_conv, ParamSet, ParamVars};
use ct2mr_tensor::{rng, ConvGeometry, Tape, Var};

use crate::{CganError, Result};

const EPS: f32 = 1e-5;

#[derive(Debug, Clone)]
pub struct DiscriminatorConfig {
    pub in_channels: usize,
    pub widths: [usize; 4],
    pub kernel: usize,
    pub leaky_slope: f32,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            in_channels: 6,
            widths: [64, 128, 256, 512],
            kernel: 4,
            leaky_slope: 0.2,
        }
    }
}

/// PatchGAN discriminator over the channel-stacked (CTP, MR) pair:
/// three stride-2 4x4 convolutions, then two stride-1 4x4 convolutions
/// down to a one-channel logit map; instance norm and LeakyReLU(0.2) on
/// every convolution except the first and last. Each logit scores one
/// 70x70 patch of overlapping receptive field; the scalar score is the
/// map average.
pub struct Discriminator {
    pub cfg: DiscriminatorConfig,
}

/// Strides of the five convolutions.
const STRIDES: [usize; 5] = [2, 2, 2, 1, 1];

impl Discriminator {
    pub fn new(cfg: DiscriminatorConfig) -> Result<Self> {
        if cfg.kernel == 0 || cfg.in_channels == 0 || cfg.widths.iter().any(|&w| w == 0) {
            return Err(CganError::Config("discriminator sizes must be >= 1".to_string()));
        }
        Ok(Discriminator { cfg })
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        let c = &self.cfg;
        let mut ps = ParamSet::new();
        let chain = [c.in_channels, c.widths[0], c.widths[1], c.widths[2], c.widths[3], 1];
        for i in 0..5 {
            register_conv(
                &mut ps,
                &format!("d.c{}", i + 1),
                chain[i + 1],
                chain[i],
                c.kernel,
                c.kernel,
                rng::derive(seed, &[i as u64 + 1]),
            )
            .expect("fresh set");
        }
        ps
    }

    pub fn param_schema(&self) -> Vec<(String, Vec<usize>)> {
        self.init_params(0).schema()
    }

    /// Analytic receptive field of one output logit and the stride
    /// between neighboring logits, from the layer geometry alone.
    pub fn receptive_field(&self) -> (usize, usize) {
        let k = self.cfg.kernel;
        let mut rf = 1usize;
        let mut jump = 1usize;
        for stride in STRIDES {
            rf += (k - 1) * jump;
            jump *= stride;
        }
        (rf, jump)
    }

    /// Activation-map side for an SxS input under the padding-1 layout.
    pub fn map_side(&self, s: usize) -> Option<usize> {
        self.chain_side(s, 1)
    }

    /// Map side for the zero-padding probe used to cross-check the
    /// receptive field: an input of exactly RF x RF yields a 1x1 map.
    pub fn map_side_unpadded(&self, s: usize) -> Option<usize> {
        self.chain_side(s, 0)
    }

    fn chain_side(&self, s: usize, pad: usize) -> Option<usize> {
        let mut side = s;
        for stride in STRIDES {
            side = ct2mr_tensor::conv_out_dim(side, self.cfg.kernel, stride, pad, 1)?;
        }
        Some(side)
    }

    /// Score one conditioning stack against a real or generated MR slice.
    /// Returns the patch logit map and the scalar mean score.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        params: &ParamVars<'t>,
        ctp: Var<'t>,
        mr: Var<'t>,
    ) -> Result<(Var<'t>, Var<'t>)> {
        self.forward_with_padding(tape, params, ctp, mr, 1)
    }

    /// Same stack with explicit convolution padding; padding 0 is the
    /// receptive-field probe geometry.
    pub fn forward_with_padding<'t>(
        &self,
        tape: &'t Tape,
        params: &ParamVars<'t>,
        ctp: Var<'t>,
        mr: Var<'t>,
        pad: usize,
    ) -> Result<(Var<'t>, Var<'t>)> {
        let _ = tape;
        let cs = ctp.shape();
        let ms = mr.shape();
        let stacked_ok = cs.len() == 4
            && ms.len() == 4
            && cs[0] == 1
            && ms[0] == 1
            && cs[1] + ms[1] == self.cfg.in_channels
            && cs[2..] == ms[2..];
        if !stacked_ok {
            return Err(CganError::InputShape {
                context: "discriminator inputs stack to [1, in_channels, S, S]",
                got: cs.iter().chain(ms.iter()).copied().collect(),
            });
        }
        let mut h = Var::concat_channels(&[ctp, mr])?;
        for (i, stride) in STRIDES.into_iter().enumerate() {
            let geom = ConvGeometry { stride, pad, dilation: 1 };
            h = h.conv2d(
                params.get(&format!("d.c{}.weight", i + 1))?,
                params.get(&format!("d.c{}.bias", i + 1))?,
                geom,
            )?;
            let inner = i != 0 && i != 4;
            if inner {
                h = h.instance_norm2d(EPS)?;
            }
            if i != 4 {
                h = h.leaky_relu(self.cfg.leaky_slope)?;
            }
        }
        let score = h.mean_all()?;
        Ok((h, score))
    }
}
