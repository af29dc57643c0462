//! Finite-difference verification of the full generator and
//! discriminator backward passes at desk scale.

use ct2mr_nn::fdcheck::{check_network, ForwardFn};
use ct2mr_nn::{uniform_tensor, ParamVars};
use ct2mr_tensor::gradcheck::CheckOutcome;
use ct2mr_tensor::{rng, Tape, Var};

use crate::{Discriminator, DiscriminatorConfig, DropoutMode, Generator, GeneratorConfig};

struct GenForward {
    gen: Generator,
    dropout: DropoutMode,
}

impl ForwardFn for GenForward {
    fn run<'t>(&self, tape: &'t Tape, params: &ParamVars<'t>, x: Var<'t>) -> Var<'t> {
        self.gen
            .forward(tape, params, x, self.dropout)
            .expect("generator forward under check")
    }
}

struct DiscForward {
    disc: Discriminator,
    mr_channels: usize,
}

impl ForwardFn for DiscForward {
    fn run<'t>(&self, tape: &'t Tape, params: &ParamVars<'t>, x: Var<'t>) -> Var<'t> {
        // Split the stacked input back into (ctp, mr) leaves is not
        // needed: the discriminator concatenates internally, so hand it
        // the conditioning slab and a fixed mr slab derived from x's tape.
        let shape = x.shape();
        let s = shape[2];
        let mr = tape.leaf(
            uniform_tensor(&[1, self.mr_channels, s, s], -0.9, 0.9, 4242),
            false,
        );
        let (map, _) = self
            .disc
            .forward(tape, params, x, mr)
            .expect("discriminator forward under check");
        map
    }
}

/// FD outcomes for the desk-scale generator (dropout active with a fixed
/// mask, so the graph under test includes the dropout backward rule).
pub fn generator_outcomes(image_size: usize, n_coords: usize, n_dirs: usize) -> Vec<CheckOutcome> {
    let cfg = GeneratorConfig::desk(image_size);
    let gen = Generator::new(cfg.clone()).expect("desk config");
    let params = gen.init_params(11);
    let x = uniform_tensor(&[1, cfg.in_channels, image_size, image_size], -0.9, 0.9, 12);
    let fwd = GenForward {
        gen,
        dropout: DropoutMode::Active { seed: rng::derive(11, &[77]) },
    };
    check_network("generator", &params, &x, &fwd, n_coords, n_dirs, 13)
}

/// FD outcomes for the discriminator at the same desk scale.
pub fn discriminator_outcomes(image_size: usize, n_coords: usize, n_dirs: usize) -> Vec<CheckOutcome> {
    let cfg = DiscriminatorConfig::default();
    let disc = Discriminator::new(cfg.clone()).expect("default config");
    let params = disc.init_params(21);
    let ctp_channels = cfg.in_channels - 1;
    let x = uniform_tensor(&[1, ctp_channels, image_size, image_size], -0.9, 0.9, 22);
    let fwd = DiscForward { disc, mr_channels: 1 };
    check_network("discriminator", &params, &x, &fwd, n_coords, n_dirs, 23)
}
