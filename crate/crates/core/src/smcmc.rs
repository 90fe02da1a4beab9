//! Sequential MCMC baseline.
//!
//! At every update a reversible-jump chain explores the full posterior on
//! `[0, tₙ]`, started from the highest-density state of the previous chain.
//! Slow, but free of importance-weight error, so it serves as the reference
//! curve for the particle filter.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::events::EventStream;
use crate::models::{SegmentLayout, SegmentModel};
use crate::particles::{ChangepointConfiguration, WeightedParticleSet};
use crate::rjmcmc::{birth_density, thinning_schedule, Chain, ChainStats, RjmcmcSettings, Target};
use crate::summary::{intensity_summary, IntensitySummary};

#[derive(Debug, Clone, PartialEq)]
pub struct SmcmcSettings {
    pub rjmcmc: RjmcmcSettings,
    /// States recorded per update, evenly spaced after burn-in.
    pub draws: usize,
    /// Batches for the batch-means standard errors.
    pub batches: usize,
}

impl Default for SmcmcSettings {
    fn default() -> Self {
        Self {
            rjmcmc: RjmcmcSettings {
                iterations: 100_000,
                burn_in: 10_000,
                ..RjmcmcSettings::default()
            },
            draws: 2000,
            batches: 20,
        }
    }
}

impl SmcmcSettings {
    pub fn validate(&self) -> Result<()> {
        self.rjmcmc.validate()?;
        if self.batches < 2 || self.draws < self.batches {
            return Err(Error::invalid_param(format!(
                "need at least 2 batches and one draw per batch, got {} draws in {} batches",
                self.draws, self.batches
            )));
        }
        Ok(())
    }
}

/// Posterior on `[0, t_now]` from one chain.
#[derive(Debug, Clone)]
pub struct SmcmcUpdate {
    pub t_now: f64,
    /// Recorded states, equally weighted.
    pub draws: WeightedParticleSet,
    pub map: ChangepointConfiguration,
    pub map_log_target: f64,
    pub mean_k: f64,
    pub mean_k_se: f64,
    /// `None` when the model has no intensity posterior.
    pub intensity: Option<IntensitySummary>,
    pub intensity_se: f64,
    pub stats: ChainStats,
}

/// Mean and batch-means standard error.
pub fn batch_means(values: &[f64], batches: usize) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let b = batches.min(n).max(1);
    if b < 2 {
        return (mean, f64::NAN);
    }
    let means: Vec<f64> = (0..b)
        .map(|j| {
            let chunk = &values[j * n / b..(j + 1) * n / b];
            chunk.iter().sum::<f64>() / chunk.len() as f64
        })
        .collect();
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

// Posterior mean of the intensity at `t` given one configuration.
fn conditional_intensity(model: &SegmentModel, events: &EventStream, config: &ChangepointConfiguration, t: f64) -> Option<f64> {
    match model {
        SegmentModel::ShotNoise(m) => {
            let layout = SegmentLayout::anchored(0.0, t);
            Some(m.intensity_at(&layout, config.taus(), config.params()?, t))
        }
        _ => {
            let start = config.taus().last().copied().unwrap_or(0.0);
            let (shape, rate) = model
                .conjugate()?
                .intensity_posterior(events.count(start, t), t - start)?;
            Some(shape / rate)
        }
    }
}

/// One full-history chain on `[0, t_now]`, started at `start` (or at no
/// changepoints).
pub fn smcmc_update<R: Rng + ?Sized>(
    model: &SegmentModel,
    events: &EventStream,
    t_now: f64,
    start: Option<&ChangepointConfiguration>,
    settings: &SmcmcSettings,
    rng: &mut R,
) -> Result<SmcmcUpdate> {
    settings.validate()?;
    if !(t_now > 0.0 && t_now.is_finite()) {
        return Err(Error::invalid_param(format!("update time must be positive, got {t_now}")));
    }
    let layout = SegmentLayout::anchored(0.0, t_now);
    let (taus, lambdas) = match start {
        Some(c) => {
            c.validate(t_now)?;
            (c.taus().to_vec(), c.params().map(<[f64]>::to_vec).unwrap_or_default())
        }
        None => {
            let lambdas = match model.shot_noise() {
                Some(m) => vec![m.conditional(events, &layout, &[], &[f64::NAN], 0)?.sample(rng)],
                None => Vec::new(),
            };
            (Vec::new(), lambdas)
        }
    };
    if model.shot_noise().is_some() && lambdas.len() != taus.len() + 1 {
        return Err(Error::invalid_config("shot-noise start needs one level per segment"));
    }
    let birth = Arc::new(birth_density(model, events, 0.0, t_now, &settings.rjmcmc));
    let mut chain = Chain::new(
        Target::of(model),
        events,
        layout,
        (0.0, t_now),
        birth,
        &settings.rjmcmc.moves,
        taus,
        lambdas,
    );
    chain.track_target();
    let mut map = chain.configuration();
    let mut map_log_target = chain.log_target().unwrap();
    let mut observe = |chain: &Chain| {
        let lt = chain.log_target().unwrap();
        if lt > map_log_target {
            map_log_target = lt;
            map = chain.configuration();
        }
    };
    for _ in 0..settings.rjmcmc.burn_in {
        chain.step(rng);
        observe(&chain);
    }
    let total = (settings.rjmcmc.iterations - settings.rjmcmc.burn_in).max(settings.draws);
    let mut draws = Vec::with_capacity(settings.draws);
    let mut done = 0;
    for at in thinning_schedule(total, settings.draws) {
        while done < at {
            chain.step(rng);
            observe(&chain);
            done += 1;
        }
        draws.push(chain.configuration());
    }
    let stats = chain.stats;

    let ks: Vec<f64> = draws.iter().map(|d| d.k() as f64).collect();
    let (mean_k, mean_k_se) = batch_means(&ks, settings.batches);
    let levels: Option<Vec<f64>> = draws
        .iter()
        .map(|d| conditional_intensity(model, events, d, t_now))
        .collect();
    let draws = WeightedParticleSet::uniform(draws);
    let (intensity, intensity_se) = match levels {
        Some(levels) => {
            let (mean, se) = batch_means(&levels, settings.batches);
            let mut s = intensity_summary(model, events, &draws, t_now)?;
            s.mean = mean;
            (Some(s), se)
        }
        None => (None, f64::NAN),
    };
    Ok(SmcmcUpdate {
        t_now,
        draws,
        map,
        map_log_target,
        mean_k,
        mean_k_se,
        intensity,
        intensity_se,
        stats,
    })
}

/// Runs the baseline at each update time, warm-starting from the previous
/// maximum a posteriori state.
pub fn smcmc_run<R: Rng + ?Sized>(
    model: &SegmentModel,
    events: &EventStream,
    update_times: &[f64],
    settings: &SmcmcSettings,
    rng: &mut R,
) -> Result<Vec<SmcmcUpdate>> {
    if update_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid_param("update times must be strictly increasing"));
    }
    let mut out: Vec<SmcmcUpdate> = Vec::with_capacity(update_times.len());
    for &t in update_times {
        let start = out.last().map(|u| u.map.clone());
        out.push(smcmc_update(model, events, t, start.as_ref(), settings, rng)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{PoissonGammaModel, PriorOnlyModel, ShotNoiseCoxModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quick() -> SmcmcSettings {
        SmcmcSettings {
            rjmcmc: RjmcmcSettings {
                iterations: 20_000,
                burn_in: 2_000,
                ..RjmcmcSettings::default()
            },
            draws: 2000,
            batches: 20,
        }
    }

    #[test]
    fn batch_means_of_constant() {
        let (m, se) = batch_means(&[2.0; 40], 4);
        assert_eq!(m, 2.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn prior_only_mean_k() {
        let model = SegmentModel::from(PriorOnlyModel::new(0.2).unwrap());
        let events = EventStream::new(vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = smcmc_update(&model, &events, 10.0, None, &quick(), &mut rng).unwrap();
        assert!((u.mean_k - 2.0).abs() < 4.0 * u.mean_k_se.max(0.05), "{} ± {}", u.mean_k, u.mean_k_se);
        assert!(u.intensity.is_none());
    }

    #[test]
    fn map_has_highest_density_seen() {
        let model = SegmentModel::from(PoissonGammaModel::new(0.05, 1.0, 1.0).unwrap());
        let times: Vec<f64> = (0..50).map(|i| 0.2 * i as f64 + 0.1).chain((0..5).map(|i| 10.0 + 2.0 * i as f64)).collect();
        let events = EventStream::new(times).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let runs = smcmc_run(&model, &events, &[10.0, 20.0], &quick(), &mut rng).unwrap();
        let map = &runs[1].map;
        assert!(map.taus().iter().any(|&t| (t - 10.0).abs() < 1.0), "{:?}", map.taus());
        let s = runs[1].intensity.unwrap();
        assert!(s.mean < 1.5 && s.q05 < s.mean && s.mean < s.q95);
    }

    #[test]
    fn shot_noise_levels_respect_constraints() {
        let model = ShotNoiseCoxModel::new(0.05, 0.1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sim = crate::simulate::simulate_shot_noise(&model, 100.0, &mut rng).unwrap();
        let events = EventStream::new(sim.events).unwrap();
        let model = SegmentModel::from(model);
        let runs = smcmc_run(&model, &events, &[50.0, 100.0], &quick(), &mut rng).unwrap();
        for u in &runs {
            for p in u.draws.particles() {
                let l = p.params().unwrap();
                for (i, &t) in p.taus().iter().enumerate() {
                    let prev = if i == 0 { 0.0 } else { p.taus()[i - 1] };
                    assert!(l[i + 1] > l[i] * (-0.1 * (t - prev)).exp());
                }
            }
        }
    }
}
