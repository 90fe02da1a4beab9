//! Posterior summaries of a weighted particle set.

use std::collections::HashMap;

use rand::Rng;
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::events::EventStream;
use crate::models::{
    chained_gamma_reweight, sample_conjugate_intensities, ChainedGammaPrior, ConjugateSegments,
    SegmentLayout, SegmentModel,
};
use crate::particles::{ess_from_log, log_sum_exp, systematic_resample, WeightedParticleSet};
use crate::smc::{smc_update, SmcSettings, SmcState};

/// Posterior mean and 5%/95% quantiles of the intensity at `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensitySummary {
    pub time: f64,
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
}

/// Number of distinct particle histories on `[0, time]`, before and after a
/// resampling of the set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniqueCount {
    pub update_index: usize,
    pub time: f64,
    pub pre: usize,
    pub post: usize,
}

fn normalized(log_weights: &[f64]) -> Result<Vec<f64>> {
    let total = log_sum_exp(log_weights);
    if !total.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    Ok(log_weights.iter().map(|l| (l - total).exp()).collect())
}

/// Weighted `q`-quantile: the smallest value whose cumulative weight reaches
/// `q`.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(Error::Empty);
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut acc = 0.0;
    for &i in &order {
        acc += weights[i] / total;
        if acc >= q {
            return Ok(values[i]);
        }
    }
    Ok(values[*order.last().unwrap()])
}

// Quantile of a finite mixture of gamma distributions by bisection on its CDF.
fn gamma_mixture_quantile(components: &[(f64, f64, f64)], q: f64) -> f64 {
    let cdf = |x: f64| -> f64 {
        components
            .iter()
            .map(|&(w, shape, rate)| w * gamma_lr(shape, rate * x))
            .sum()
    };
    let mut lo = 0.0;
    let mut hi = components
        .iter()
        .map(|&(_, shape, rate)| (shape + 10.0 * shape.sqrt() + 10.0) / rate)
        .fold(0.0, f64::max);
    while cdf(hi) < q {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn conjugate_summary(
    model: &dyn ConjugateSegments,
    events: &EventStream,
    set: &WeightedParticleSet,
    time: f64,
) -> Result<IntensitySummary> {
    let w = normalized(set.log_weights())?;
    // particles sharing (r, Δ) share a posterior; merge them first
    let mut merged: HashMap<(usize, u64), f64> = HashMap::new();
    for (p, &wi) in set.particles().iter().zip(&w) {
        if wi == 0.0 {
            continue;
        }
        let start = p.taus()[..p.taus().partition_point(|&t| t < time)]
            .last()
            .copied()
            .unwrap_or(0.0);
        let key = (events.count(start, time), (time - start).to_bits());
        *merged.entry(key).or_insert(0.0) += wi;
    }
    let mut components = Vec::with_capacity(merged.len());
    for ((r, bits), wi) in merged {
        let (shape, rate) = model
            .intensity_posterior(r, f64::from_bits(bits))
            .ok_or_else(|| Error::invalid_param("model has no intensity posterior"))?;
        components.push((wi, shape, rate));
    }
    components.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.2.total_cmp(&b.2)));
    let mean = components.iter().map(|&(w, s, r)| w * s / r).sum();
    Ok(IntensitySummary {
        time,
        mean,
        q05: gamma_mixture_quantile(&components, 0.05),
        q95: gamma_mixture_quantile(&components, 0.95),
    })
}

fn pointwise_summary(values: &[f64], weights: &[f64], time: f64) -> Result<IntensitySummary> {
    let total: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
    Ok(IntensitySummary {
        time,
        mean,
        q05: weighted_quantile(values, weights, 0.05)?,
        q95: weighted_quantile(values, weights, 0.95)?,
    })
}

/// Intensity at `time` under the particle posterior.
///
/// For conjugate models the segment level is integrated out, so the mean
/// is the weighted average of posterior means and the quantiles are those of
/// the gamma mixture. For shot-noise models the particles carry the levels.
pub fn intensity_summary(
    model: &SegmentModel,
    events: &EventStream,
    set: &WeightedParticleSet,
    time: f64,
) -> Result<IntensitySummary> {
    match model {
        SegmentModel::ShotNoise(m) => {
            let w = normalized(set.log_weights())?;
            let layout = SegmentLayout::anchored(0.0, time);
            let mut values = Vec::with_capacity(set.len());
            let mut weights = Vec::with_capacity(set.len());
            for (p, &wi) in set.particles().iter().zip(&w) {
                let lambdas = p
                    .params()
                    .ok_or_else(|| Error::invalid_config("shot-noise particle without levels"))?;
                values.push(m.intensity_at(&layout, p.taus(), lambdas, time));
                weights.push(wi);
            }
            pointwise_summary(&values, &weights, time)
        }
        _ => conjugate_summary(model.conjugate().expect("conjugate model"), events, set, time),
    }
}

/// Intensity at `time` under the chained-gamma level prior, by drawing
/// levels from their conjugate posteriors and reweighting.
pub fn chained_intensity_summary<R: Rng + ?Sized>(
    model: &SegmentModel,
    prior: (f64, f64),
    chain: &ChainedGammaPrior,
    events: &EventStream,
    set: &WeightedParticleSet,
    time: f64,
    rng: &mut R,
) -> Result<IntensitySummary> {
    let conj = model
        .conjugate()
        .ok_or_else(|| Error::invalid_param("chained reweighting needs a conjugate model"))?;
    let mut values = Vec::with_capacity(set.len());
    let mut log_w = Vec::with_capacity(set.len());
    for (p, &lw) in set.particles().iter().zip(set.log_weights()) {
        let with_levels = sample_conjugate_intensities(p, events, time, conj, rng)?;
        log_w.push(chained_gamma_reweight(&with_levels, lw, prior, chain)?);
        values.push(*with_levels.params().unwrap().last().unwrap());
    }
    ess_from_log(&log_w)?;
    let w = normalized(&log_w)?;
    pointwise_summary(&values, &w, time)
}

/// For each update time, the number of distinct histories on `[0, tₙ]`
/// among the final particles, and among a systematic resample of them.
pub fn unique_particle_curve<R: Rng + ?Sized>(
    set: &WeightedParticleSet,
    times: &[f64],
    rng: &mut R,
) -> Result<Vec<UniqueCount>> {
    let resampled = systematic_resample(set, set.len(), rng)?;
    let live: Vec<_> = set
        .particles()
        .iter()
        .zip(set.log_weights())
        .filter(|(_, lw)| lw.is_finite())
        .map(|(p, _)| p)
        .collect();
    let count = |ps: &mut dyn Iterator<Item = &crate::particles::ChangepointConfiguration>, t: f64| {
        let mut seen = std::collections::HashSet::new();
        for p in ps {
            seen.insert(p.prefix_key(t));
        }
        seen.len()
    };
    Ok(times
        .iter()
        .enumerate()
        .map(|(i, &t)| UniqueCount {
            update_index: i,
            time: t,
            pre: count(&mut live.iter().copied(), t),
            post: count(&mut resampled.particles().iter(), t),
        })
        .collect())
}

/// Runs the SMC updates and records the filtered intensity after each.
pub fn run_smc_with_intensity<R: Rng + ?Sized>(
    model: &SegmentModel,
    events: &EventStream,
    update_times: &[f64],
    settings: &SmcSettings,
    rng: &mut R,
) -> Result<(SmcState, Vec<IntensitySummary>)> {
    let mut state = SmcState::new();
    let mut curve = Vec::with_capacity(update_times.len());
    for &t in update_times {
        smc_update(&mut state, model, events, t, settings, rng)?;
        if model.conjugate().is_some_and(|c| c.intensity_posterior(0, 1.0).is_none()) {
            continue;
        }
        curve.push(intensity_summary(model, events, &state.set, t)?);
    }
    Ok((state, curve))
}
