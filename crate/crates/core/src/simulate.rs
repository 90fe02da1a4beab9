//! Synthetic event streams with known changepoints.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::models::ShotNoiseCoxModel;

/// Generator of a synthetic stream.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamSpec {
    /// Constant rate `rates[i]` between consecutive changepoints.
    PiecewisePoisson { changepoints: Vec<f64>, rates: Vec<f64> },
    /// Shots, jump sizes and decay drawn from the model.
    ShotNoise(ShotNoiseCoxModel),
}

/// Simulated events with the ground truth that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub events: Vec<f64>,
    pub changepoints: Vec<f64>,
    /// Level of each segment (its intensity right after the changepoint).
    pub levels: Vec<f64>,
}

/// Simulates a stream on `[0, horizon]`.
pub fn simulate_stream<R: Rng + ?Sized>(spec: &StreamSpec, horizon: f64, rng: &mut R) -> Result<Simulation> {
    match spec {
        StreamSpec::PiecewisePoisson { changepoints, rates } => {
            simulate_piecewise_poisson(changepoints, rates, horizon, rng)
        }
        StreamSpec::ShotNoise(model) => simulate_shot_noise(model, horizon, rng),
    }
}

fn check_piecewise(changepoints: &[f64], rates: &[f64], horizon: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid_param(format!("horizon must be positive, got {horizon}")));
    }
    if rates.len() != changepoints.len() + 1 {
        return Err(Error::invalid_param(format!(
            "{} changepoints need {} rates, got {}",
            changepoints.len(),
            changepoints.len() + 1,
            rates.len()
        )));
    }
    if changepoints.windows(2).any(|w| w[1] <= w[0])
        || changepoints.iter().any(|&t| !(t > 0.0 && t < horizon))
    {
        return Err(Error::invalid_param("changepoints must be increasing inside (0, horizon)"));
    }
    if rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
        return Err(Error::invalid_param("rates must be nonnegative"));
    }
    Ok(())
}

fn piecewise_rate(changepoints: &[f64], rates: &[f64], t: f64) -> f64 {
    rates[changepoints.partition_point(|&c| c < t)]
}

/// Piecewise-constant Poisson process by thinning a homogeneous process at
/// the maximal rate.
pub fn simulate_piecewise_poisson<R: Rng + ?Sized>(
    changepoints: &[f64],
    rates: &[f64],
    horizon: f64,
    rng: &mut R,
) -> Result<Simulation> {
    check_piecewise(changepoints, rates, horizon)?;
    let top = rates.iter().copied().fold(0.0, f64::max);
    let mut events = Vec::new();
    if top > 0.0 {
        let gap = Exp::new(top).map_err(|e| Error::invalid_param(e.to_string()))?;
        let mut t = 0.0;
        loop {
            t += gap.sample(rng);
            if t > horizon {
                break;
            }
            if rng.random::<f64>() * top < piecewise_rate(changepoints, rates, t) {
                events.push(t);
            }
        }
    }
    Ok(Simulation {
        events,
        changepoints: changepoints.to_vec(),
        levels: rates.to_vec(),
    })
}

/// Piecewise-constant Poisson process by mapping unit-rate arrivals through
/// the inverse cumulative intensity.
pub fn simulate_piecewise_poisson_rescaled<R: Rng + ?Sized>(
    changepoints: &[f64],
    rates: &[f64],
    horizon: f64,
    rng: &mut R,
) -> Result<Simulation> {
    check_piecewise(changepoints, rates, horizon)?;
    let mut edges = Vec::with_capacity(changepoints.len() + 2);
    edges.push(0.0);
    edges.extend_from_slice(changepoints);
    edges.push(horizon);
    // cumulative intensity at each edge
    let mut cumulative = vec![0.0];
    for (i, w) in edges.windows(2).enumerate() {
        let last = *cumulative.last().unwrap();
        cumulative.push(last + rates[i] * (w[1] - w[0]));
    }
    let total = *cumulative.last().unwrap();
    let unit = Exp::new(1.0).map_err(|e| Error::invalid_param(e.to_string()))?;
    let mut events = Vec::new();
    let mut s = 0.0;
    loop {
        s += unit.sample(rng);
        if s > total {
            break;
        }
        let i = (cumulative.partition_point(|&c| c < s) - 1).min(rates.len() - 1);
        events.push(edges[i] + (s - cumulative[i]) / rates[i]);
    }
    Ok(Simulation {
        events,
        changepoints: changepoints.to_vec(),
        levels: rates.to_vec(),
    })
}

/// Shot-noise Cox process: shots at rate `ν`, exponential jump sizes with
/// rate `α`, exponential decay `κ`. Events are thinned segment by segment
/// against the level at the segment start.
pub fn simulate_shot_noise<R: Rng + ?Sized>(
    model: &ShotNoiseCoxModel,
    horizon: f64,
    rng: &mut R,
) -> Result<Simulation> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid_param(format!("horizon must be positive, got {horizon}")));
    }
    let shot_gap = Exp::new(model.nu).map_err(|e| Error::invalid_param(e.to_string()))?;
    let jump = Exp::new(model.alpha).map_err(|e| Error::invalid_param(e.to_string()))?;
    let mut changepoints = Vec::new();
    let mut t = shot_gap.sample(rng);
    while t < horizon {
        changepoints.push(t);
        t += shot_gap.sample(rng);
    }
    let mut levels = Vec::with_capacity(changepoints.len() + 1);
    levels.push(jump.sample(rng));
    let mut prev = 0.0;
    for &c in &changepoints {
        let before = levels.last().unwrap() * (-model.kappa * (c - prev)).exp();
        levels.push(before + jump.sample(rng));
        prev = c;
    }
    let mut events = Vec::new();
    let mut start = 0.0;
    for (i, &level) in levels.iter().enumerate() {
        let end = changepoints.get(i).copied().unwrap_or(horizon);
        if level > 0.0 {
            let gap = Exp::new(level).map_err(|e| Error::invalid_param(e.to_string()))?;
            let mut s = start;
            loop {
                s += gap.sample(rng);
                if s > end {
                    break;
                }
                if rng.random::<f64>() < (-model.kappa * (s - start)).exp() {
                    events.push(s);
                }
            }
        }
        start = end;
    }
    Ok(Simulation {
        events,
        changepoints,
        levels,
    })
}
