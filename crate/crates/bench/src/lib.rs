//! Shared fixtures for the benchmarks.

use cpsmc::models::{PoissonGammaModel, SegmentModel};
use cpsmc::simulate::simulate_piecewise_poisson;
use cpsmc::smc::{smc_update, SmcSettings, SmcState};
use cpsmc::{ChangepointConfiguration, EventStream, WeightedParticleSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` single-changepoint particles with random weights; roughly a quarter
/// are duplicates.
pub fn weighted_set(n: usize, seed: u64) -> WeightedParticleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let distinct = (3 * n / 4).max(1);
    let particles = (0..n)
        .map(|i| ChangepointConfiguration::new(vec![1.0 + (i % distinct) as f64], None).unwrap())
        .collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(4)).collect();
    WeightedParticleSet::from_linear(particles, &weights).unwrap()
}

/// A piecewise-Poisson stream on `[0, 100]` with changes at 30 and 70.
pub fn stream(seed: u64) -> EventStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = simulate_piecewise_poisson(&[30.0, 70.0], &[1.0, 4.0, 2.0], 100.0, &mut rng).unwrap();
    EventStream::new(sim.events).unwrap()
}

pub fn model() -> SegmentModel {
    SegmentModel::from(PoissonGammaModel::new(0.02, 1.0, 1.0).unwrap())
}

/// Filter state after updates at 5, 10, ..., `t`.
pub fn warm_state(events: &EventStream, t: f64, settings: &SmcSettings, seed: u64) -> SmcState {
    let model = model();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = SmcState::new();
    let mut now = 5.0;
    while now <= t {
        smc_update(&mut state, &model, events, now, settings, &mut rng).unwrap();
        now += 5.0;
    }
    state
}
