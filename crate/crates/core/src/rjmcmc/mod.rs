//! Reversible-jump MCMC over changepoint configurations.
//!
//! The sampler targets the posterior of changepoints on an interval
//! `(a, b]` given data on `(a*, b]` with `a* ≤ a`. Moves are birth, death,
//! shift and, for models with explicit segment levels, a Gibbs update of one
//! level. One iteration is one move. Draws are taken after burn-in at evenly
//! spaced iterations.

mod birth;
mod chain;

use std::sync::Arc;

use rand::Rng;

pub use birth::BirthProposal;
pub(crate) use birth::BirthDensity;
pub use chain::ChainStats;
pub(crate) use chain::{Chain, Target};

use crate::error::{Error, Result};
use crate::events::{EventStream, EventWindow};
use crate::models::{SegmentLayout, SegmentModel};
use crate::particles::ChangepointConfiguration;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Move {
    Birth = 0,
    Death = 1,
    Shift = 2,
    Height = 3,
}

/// Mixture weights of the four move types.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveProbabilities {
    pub birth: f64,
    pub death: f64,
    pub shift: f64,
    pub height: f64,
}

impl Default for MoveProbabilities {
    fn default() -> Self {
        Self {
            birth: 0.35,
            death: 0.35,
            shift: 0.2,
            height: 0.1,
        }
    }
}

impl MoveProbabilities {
    pub fn validate(&self) -> Result<()> {
        let p = [self.birth, self.death, self.shift, self.height];
        if p.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::invalid_param("move probabilities must be nonnegative"));
        }
        if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid_param("move probabilities must sum to 1"));
        }
        if self.birth == 0.0 || self.death == 0.0 {
            return Err(Error::invalid_param("birth and death moves need positive probability"));
        }
        Ok(())
    }

    /// Probabilities actually used; height moves are dropped and the rest
    /// renormalized when segment levels are integrated out.
    pub(crate) fn normalized_for(&self, has_levels: bool) -> [f64; 4] {
        let height = if has_levels { self.height } else { 0.0 };
        let total = self.birth + self.death + self.shift + height;
        [
            self.birth / total,
            self.death / total,
            self.shift / total,
            height / total,
        ]
    }
}

/// Chain length and proposal settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RjmcmcSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub moves: MoveProbabilities,
    /// Propose birth locations from binned event counts (level models only).
    pub data_driven_birth: bool,
    pub birth_proposal: BirthProposal,
}

impl Default for RjmcmcSettings {
    fn default() -> Self {
        Self {
            iterations: 2000,
            burn_in: 500,
            moves: MoveProbabilities::default(),
            data_driven_birth: true,
            birth_proposal: BirthProposal::default(),
        }
    }
}

impl RjmcmcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::invalid_param(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        self.moves.validate()?;
        self.birth_proposal.validate()
    }
}

/// Birth-location density for `model` on `(lo, hi)`.
pub(crate) fn birth_density(
    model: &SegmentModel,
    events: &EventStream,
    lo: f64,
    hi: f64,
    settings: &RjmcmcSettings,
) -> BirthDensity {
    if settings.data_driven_birth && model.shot_noise().is_some() {
        BirthDensity::binned(events, lo, hi, &settings.birth_proposal)
    } else {
        BirthDensity::uniform(lo, hi)
    }
}

/// Iterations after which the `i`th of `count` draws is recorded when
/// `total` iterations are run.
pub(crate) fn thinning_schedule(total: usize, count: usize) -> impl Iterator<Item = usize> {
    (0..count).map(move |i| ((i + 1) * total) / count)
}

/// A window posterior sampler that can be asked for more draws from the same
/// chain.
pub struct WindowSampler<'a> {
    chain: Chain<'a>,
    post_burn_in: usize,
}

impl<'a> WindowSampler<'a> {
    /// Starts a chain with no changepoints on `(interval.0, interval.1]`,
    /// conditioning on data from `data_start`, and runs the burn-in.
    pub fn new<R: Rng + ?Sized>(
        model: &'a SegmentModel,
        events: &'a EventStream,
        interval: (f64, f64),
        data_start: f64,
        settings: &RjmcmcSettings,
        rng: &mut R,
    ) -> Result<Self> {
        settings.validate()?;
        let (a, b) = interval;
        let layout = SegmentLayout::new(a, data_start, b)?;
        let birth = Arc::new(birth_density(model, events, a, b, settings));
        let target = Target::of(model);
        let lambdas = match model.shot_noise() {
            Some(m) => {
                let dist = m.conditional(events, &layout, &[], &[f64::NAN], 0)?;
                vec![dist.sample(rng)]
            }
            None => Vec::new(),
        };
        let mut chain = Chain::new(target, events, layout, (a, b), birth, &settings.moves, Vec::new(), lambdas);
        for _ in 0..settings.burn_in {
            chain.step(rng);
        }
        Ok(Self {
            chain,
            post_burn_in: settings.iterations - settings.burn_in,
        })
    }

    /// Runs `max(iterations - burn_in, count)` further iterations and records
    /// `count` evenly spaced states.
    pub fn draw<R: Rng + ?Sized>(&mut self, count: usize, rng: &mut R) -> Vec<ChangepointConfiguration> {
        let total = self.post_burn_in.max(count);
        let mut out = Vec::with_capacity(count);
        let mut done = 0;
        for at in thinning_schedule(total, count) {
            while done < at {
                self.chain.step(rng);
                done += 1;
            }
            out.push(self.chain.configuration());
        }
        out
    }

    pub fn stats(&self) -> ChainStats {
        self.chain.stats
    }
}

/// `count` draws from the posterior of changepoints on `interval` given the
/// events of `data`, whose window must end at `interval.1` and start no later
/// than `interval.0`.
pub fn sample_window_posterior<R: Rng + ?Sized>(
    model: &SegmentModel,
    interval: (f64, f64),
    data: &EventWindow<'_>,
    settings: &RjmcmcSettings,
    count: usize,
    rng: &mut R,
) -> Result<Vec<ChangepointConfiguration>> {
    let (a, b) = interval;
    if !(b > a) {
        return Err(Error::invalid_param(format!("empty interval ({a}, {b}]")));
    }
    if data.end() != b || data.start() > a {
        return Err(Error::invalid_param(format!(
            "data window ({}, {}] does not cover ({a}, {b}]",
            data.start(),
            data.end()
        )));
    }
    let mut sampler = WindowSampler::new(model, data.stream(), interval, data.start(), settings, rng)?;
    Ok(sampler.draw(count, rng))
}

/// Runs `moves` iterations on a copy of `config` over the layout, changing
/// only changepoints inside `region`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn move_configuration<R: Rng + ?Sized>(
    model: &SegmentModel,
    events: &EventStream,
    layout: SegmentLayout,
    region: (f64, f64),
    birth: Arc<BirthDensity>,
    settings: &RjmcmcSettings,
    config: &ChangepointConfiguration,
    moves: usize,
    rng: &mut R,
) -> (ChangepointConfiguration, ChainStats) {
    let lambdas = config.params().map(<[f64]>::to_vec).unwrap_or_default();
    let mut chain = Chain::new(
        Target::of(model),
        events,
        layout,
        region,
        birth,
        &settings.moves,
        config.taus().to_vec(),
        lambdas,
    );
    for _ in 0..moves {
        chain.step(rng);
    }
    (chain.configuration(), chain.stats)
}
