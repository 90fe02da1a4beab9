//! The sequential update loop.
//!
//! At each update time `tₙ` the engine estimates the most recent changepoint
//! `t*`, samples changepoints for the new window `(tₙ₋₁, tₙ]` given data on
//! `(t*, tₙ]`, pairs the window draws with the existing particles under a
//! random permutation, and corrects by the incremental importance weight.
//! When the effective sample size drops below a fraction of the particle
//! count the set is resampled and, optionally, moved with a few RJMCMC steps
//! restricted to `(t*, tₙ)`.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::events::EventStream;
use crate::models::{ConjugateSegments, SegmentLayout, SegmentModel, ShotNoiseCoxModel};
use crate::particles::{
    ess_from_log, log_sum_exp, pad_new_particles, replicate_to, systematic_resample,
    ChangepointConfiguration, WeightedParticleSet,
};
use crate::rjmcmc::{birth_density, move_configuration, ChainStats, RjmcmcSettings, WindowSampler};
use crate::special::ln_gamma;

/// Stand-in for the last changepoint of particles that have none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TStarRule {
    /// Use time zero.
    #[default]
    Origin,
    /// Use the previous update time.
    PreviousUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmcSettings {
    pub n_particles: usize,
    /// Resample when ESS falls below this fraction of the particle count.
    pub ess_threshold: f64,
    pub rjmcmc: RjmcmcSettings,
    /// RJMCMC moves per particle after resampling; zero disables the move.
    pub move_steps: usize,
    pub t_star_rule: TStarRule,
    /// Randomly permute window draws before pairing them with particles.
    pub permute: bool,
}

impl Default for SmcSettings {
    fn default() -> Self {
        Self {
            n_particles: 1000,
            ess_threshold: 1.0 / 3.0,
            rjmcmc: RjmcmcSettings::default(),
            move_steps: 10,
            t_star_rule: TStarRule::Origin,
            permute: true,
        }
    }
}

impl SmcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::invalid_param("particle count must be positive"));
        }
        if !(0.0..=1.0).contains(&self.ess_threshold) {
            return Err(Error::invalid_param(format!(
                "ESS threshold must be a fraction in [0, 1], got {}",
                self.ess_threshold
            )));
        }
        self.rjmcmc.validate()
    }
}

/// Bounds of one update: proposals on `(t_prev, t_now]`, data from `t_star`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateWindow {
    pub t_prev: f64,
    pub t_now: f64,
    pub t_star: f64,
}

impl UpdateWindow {
    pub fn new(t_prev: f64, t_now: f64, t_star: f64) -> Result<Self> {
        if !(t_star <= t_prev && t_prev < t_now && t_star.is_finite() && t_now.is_finite()) {
            return Err(Error::invalid_param(format!(
                "update window needs t* {t_star} <= t_prev {t_prev} < t_now {t_now}"
            )));
        }
        Ok(Self {
            t_prev,
            t_now,
            t_star,
        })
    }

    fn window_layout(&self) -> SegmentLayout {
        SegmentLayout {
            anchor: self.t_prev,
            data_start: self.t_star,
            end: self.t_now,
        }
    }

    fn full_layout(&self) -> SegmentLayout {
        SegmentLayout::anchored(0.0, self.t_now)
    }
}

/// Per-update record.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDiagnostics {
    pub index: usize,
    pub t_prev: f64,
    pub t_now: f64,
    pub t_star: f64,
    /// Window draws requested for this update.
    pub allocation: usize,
    /// Particles after combining.
    pub n_particles: usize,
    /// ESS of the reweighted set, before any resampling.
    pub ess: f64,
    pub resampled: bool,
    /// `ln Σwₙ - ln Σwₙ₋₁`.
    pub log_weight_ratio: f64,
    /// Entropy of the number of new changepoints among the window draws.
    pub k_entropy: f64,
    /// Variance of the finite incremental log-weights.
    pub log_weight_variance: f64,
    pub unique_before: usize,
    pub unique_after: usize,
    pub stats: ChainStats,
}

/// Particles on `[0, t_now]` and the history of completed updates.
#[derive(Debug, Clone, Default)]
pub struct SmcState {
    pub set: WeightedParticleSet,
    pub t_now: f64,
    pub history: Vec<UpdateDiagnostics>,
    /// Running sum of the log weight ratios.
    pub log_normalizer: f64,
}

impl SmcState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_started(&self) -> bool {
        !self.set.is_empty()
    }
}

/// Weighted mean of each particle's last changepoint, counting particles
/// without changepoints at zero (or at `t_prev` under
/// [`TStarRule::PreviousUpdate`]).
pub fn compute_t_star(set: &WeightedParticleSet, rule: TStarRule, t_prev: f64) -> Result<f64> {
    set.expectation(|p| match (p.k(), rule) {
        (0, TStarRule::Origin) => 0.0,
        (0, TStarRule::PreviousUpdate) => t_prev,
        _ => p.last_tau(),
    })
}

fn check_lengths(old: usize, new: usize, perm: &[usize]) -> Result<()> {
    if old != new || perm.len() != new {
        return Err(Error::LengthMismatch { old, new });
    }
    Ok(())
}

/// Concatenates particle `i` of `old` with `new[permutation[i]]`.
pub fn combine_conjugate(
    old: &[ChangepointConfiguration],
    new: &[ChangepointConfiguration],
    permutation: &[usize],
) -> Result<Vec<ChangepointConfiguration>> {
    check_lengths(old.len(), new.len(), permutation)?;
    Ok(old
        .iter()
        .zip(permutation)
        .map(|(o, &j)| concat(o, &new[j]))
        .collect())
}

fn concat(old: &ChangepointConfiguration, new: &ChangepointConfiguration) -> ChangepointConfiguration {
    let mut taus = Vec::with_capacity(old.k() + new.k());
    taus.extend_from_slice(old.taus());
    taus.extend_from_slice(new.taus());
    ChangepointConfiguration::from_parts(taus, None)
}

/// The level shift `δ = λₖ e^{-κ(τ̃₁-τₖ)} - λ̃₀ e^{-κ(τ̃₁-tₙ₋₁)}` that makes
/// the first new jump equal in the window and merged configurations.
pub fn merge_shift(lambda_k: f64, tau_k: f64, lambda0_new: f64, t_prev: f64, tau1_new: f64, kappa: f64) -> f64 {
    lambda_k * (-kappa * (tau1_new - tau_k)).exp() - lambda0_new * (-kappa * (tau1_new - t_prev)).exp()
}

/// Level on `(τₖ, τ̃₁]` preserving the integrated intensity of the two
/// pieces it replaces. An alternative merge that is not used by the engine.
pub fn cumulative_preserving_level(
    lambda_k: f64,
    tau_k: f64,
    lambda0_new: f64,
    t_prev: f64,
    tau1_new: f64,
    kappa: f64,
) -> f64 {
    let piece = |dt: f64| -(-kappa * dt).exp_m1();
    (lambda_k * piece(t_prev - tau_k) + lambda0_new * piece(tau1_new - t_prev)) / piece(tau1_new - tau_k)
}

/// Merges a shot-noise particle on `[0, t_prev]` with a window draw on
/// `(t_prev, t_now]` by the identity map on jump sizes. Returns the merged
/// configuration and the auxiliary `u = λ̃₀`.
pub fn merge_shot(
    model: &ShotNoiseCoxModel,
    old: &ChangepointConfiguration,
    new: &ChangepointConfiguration,
    t_prev: f64,
) -> Result<(ChangepointConfiguration, f64)> {
    let (old_l, new_l) = match (old.params(), new.params()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::invalid_config("shot-noise particles need levels")),
    };
    let u = new_l[0];
    let mut taus = Vec::with_capacity(old.k() + new.k());
    taus.extend_from_slice(old.taus());
    taus.extend_from_slice(new.taus());
    let mut lambdas = Vec::with_capacity(old_l.len() + new.k());
    lambdas.extend_from_slice(old_l);
    if let Some(&tau1) = new.taus().first() {
        let lambda_k = *old_l.last().unwrap();
        let delta = merge_shift(lambda_k, old.last_tau(), u, t_prev, tau1, model.kappa);
        for (&t, &l) in new.taus().iter().zip(&new_l[1..]) {
            lambdas.push(l + delta * (-model.kappa * (t - tau1)).exp());
        }
    }
    Ok((ChangepointConfiguration::from_parts(taus, Some(lambdas)), u))
}

/// Pairs old particle `i` with `new[permutation[i]]` for shot-noise
/// particles. Returns merged configurations with their auxiliaries.
pub fn combine_nonconjugate(
    old: &[ChangepointConfiguration],
    new: &[ChangepointConfiguration],
    permutation: &[usize],
    model: &ShotNoiseCoxModel,
    t_prev: f64,
) -> Result<Vec<(ChangepointConfiguration, f64)>> {
    check_lengths(old.len(), new.len(), permutation)?;
    old.iter()
        .zip(permutation)
        .map(|(o, &j)| merge_shot(model, o, &new[j], t_prev))
        .collect()
}

fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

fn conjugate_increment(
    model: &dyn ConjugateSegments,
    events: &EventStream,
    old_last: f64,
    new_first: f64,
    w: &UpdateWindow,
) -> f64 {
    let e = |a: f64, b: f64| model.segment_log_evidence(events.count(a, b), b - a);
    e(old_last, new_first) - e(old_last, w.t_prev) - e(w.t_star, new_first)
}

fn shot_increment(
    model: &ShotNoiseCoxModel,
    events: &EventStream,
    merged: &ChangepointConfiguration,
    new: &ChangepointConfiguration,
    u: f64,
    w: &UpdateWindow,
) -> f64 {
    let (Some(ml), Some(nl)) = (merged.params(), new.params()) else {
        return f64::NEG_INFINITY;
    };
    let full = w.full_layout();
    let win = w.window_layout();
    // merged jumps after t_prev equal the window jumps, so the constraint
    // only needs checking for the window draw itself
    if (0..nl.len()).any(|i| model.jump(&win, new.taus(), nl, i) <= 0.0) {
        return f64::NEG_INFINITY;
    }
    let ll_merged = model.log_likelihood_range(events, &full, merged.taus(), ml, w.t_prev, w.t_now);
    let ll_window = model.log_likelihood_range(events, &win, new.taus(), nl, w.t_star, w.t_now);
    let (shape, rate) = model.conditional_shape_rate(events, &win, new.taus(), 0);
    ll_merged - ll_window - model.alpha.ln() + model.alpha * u + gamma_ln_pdf(u, shape, rate)
}

/// Log incremental weight of joining `new` (a window draw) to `old`.
///
/// Conjugate models: `ln γ[0,tₙ](merged) - ln γ[0,tₙ₋₁](old) - ln γ(tₙ₋₁,tₙ](new)`,
/// which reduces to three segment evidences. Shot-noise models add the
/// auxiliary density of `u = λ̃₀`, an untruncated gamma with the shape and
/// rate of its window conditional.
pub fn incremental_weight(
    model: &SegmentModel,
    events: &EventStream,
    old: &ChangepointConfiguration,
    new: &ChangepointConfiguration,
    window: &UpdateWindow,
) -> Result<f64> {
    match model {
        SegmentModel::ShotNoise(m) => {
            let (merged, u) = merge_shot(m, old, new, window.t_prev)?;
            Ok(shot_increment(m, events, &merged, new, u, window))
        }
        _ => {
            let c = model.conjugate().expect("conjugate model");
            let first = new.taus().first().copied().unwrap_or(window.t_now);
            Ok(conjugate_increment(c, events, old.last_tau(), first, window))
        }
    }
}

fn join(
    model: &SegmentModel,
    events: &EventStream,
    old: &ChangepointConfiguration,
    new: &ChangepointConfiguration,
    w: &UpdateWindow,
) -> Result<(ChangepointConfiguration, f64)> {
    match model {
        SegmentModel::ShotNoise(m) => {
            let (merged, u) = merge_shot(m, old, new, w.t_prev)?;
            let inc = shot_increment(m, events, &merged, new, u, w);
            Ok((merged, inc))
        }
        _ => {
            let c = model.conjugate().expect("conjugate model");
            let first = new.taus().first().copied().unwrap_or(w.t_now);
            let inc = conjugate_increment(c, events, old.last_tau(), first, w);
            Ok((concat(old, new), inc))
        }
    }
}

/// Empirical entropy of the changepoint counts of `draws`.
pub fn k_entropy(draws: &[ChangepointConfiguration]) -> f64 {
    if draws.is_empty() {
        return 0.0;
    }
    let mut counts = std::collections::BTreeMap::new();
    for d in draws {
        *counts.entry(d.k()).or_insert(0usize) += 1;
    }
    let n = draws.len() as f64;
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum::<f64>()
        .max(0.0)
}

/// Variance of the finite entries of `xs` (zero if fewer than two).
pub fn finite_variance(xs: &[f64]) -> f64 {
    let finite: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if finite.len() < 2 {
        return 0.0;
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    finite.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// An update whose window chain has been started but whose particles have
/// not yet been joined. Lets a caller inspect early draws before deciding
/// how many draws the update receives.
pub struct PendingUpdate<'a> {
    model: &'a SegmentModel,
    events: &'a EventStream,
    window: UpdateWindow,
    sampler: WindowSampler<'a>,
    draws: Vec<ChangepointConfiguration>,
}

impl<'a> PendingUpdate<'a> {
    pub fn window(&self) -> &UpdateWindow {
        &self.window
    }

    /// Draws already taken from the window chain.
    pub fn draws(&self) -> &[ChangepointConfiguration] {
        &self.draws
    }

    /// Takes `count` draws from the window chain ahead of the final
    /// allocation.
    pub fn pilot<R: Rng + ?Sized>(&mut self, count: usize, rng: &mut R) {
        let more = self.sampler.draw(count, rng);
        self.draws.extend(more);
    }

    /// Entropy of the pilot changepoint counts plus the variance of their
    /// incremental log-weights against particles spread across the set.
    pub fn pilot_score(&self, state: &SmcState) -> f64 {
        let entropy = k_entropy(&self.draws);
        if !state.is_started() || self.draws.is_empty() {
            return entropy;
        }
        let old = state.set.particles();
        let incs: Vec<f64> = self
            .draws
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let o = &old[i * old.len() / self.draws.len()];
                incremental_weight(self.model, self.events, o, d, &self.window).unwrap_or(f64::NEG_INFINITY)
            })
            .collect();
        entropy + finite_variance(&incs)
    }

    /// Completes the update with `allocation` window draws in total and
    /// returns its diagnostics.
    pub fn finish<R: Rng + ?Sized>(
        mut self,
        state: &mut SmcState,
        allocation: usize,
        settings: &SmcSettings,
        rng: &mut R,
    ) -> Result<UpdateDiagnostics> {
        if allocation == 0 {
            return Err(Error::invalid_param("allocation must be positive"));
        }
        if allocation > self.draws.len() {
            let more = self.sampler.draw(allocation - self.draws.len(), rng);
            self.draws.extend(more);
        }
        let mut draws = std::mem::take(&mut self.draws);
        draws.truncate(allocation);
        let w = self.window;
        let k_ent = k_entropy(&draws);
        let mut stats = self.sampler.stats();

        let started = state.is_started();
        let (set, incs, log_ratio) = if !started {
            (WeightedParticleSet::uniform(draws), Vec::new(), 0.0)
        } else {
            let previous = std::mem::take(&mut state.set);
            let n = previous.len();
            let old = if allocation > n { replicate_to(&previous, allocation)? } else { previous };
            let size = old.len();
            let new = if size > draws.len() { pad_new_particles(&draws, size)? } else { draws };
            let mut perm: Vec<usize> = (0..size).collect();
            if settings.permute {
                perm.shuffle(rng);
            }
            let before = old.log_total_weight();
            let (particles, log_weights) = old.into_parts();
            let mut merged = Vec::with_capacity(size);
            let mut weights = Vec::with_capacity(size);
            let mut incs = Vec::with_capacity(size);
            for ((p, lw), &j) in particles.iter().zip(log_weights).zip(&perm) {
                let (m, inc) = join(self.model, self.events, p, &new[j], &w)?;
                merged.push(m);
                incs.push(inc);
                weights.push(lw + inc);
            }
            let after = log_sum_exp(&weights);
            (WeightedParticleSet::new(merged, weights)?, incs, after - before)
        };

        let ess = ess_from_log(set.log_weights())?;
        let unique_before = set.unique_count();
        let n_particles = set.len();
        let resampled = started && ess < settings.ess_threshold * n_particles as f64;
        let set = if resampled {
            let mut resampled_set = systematic_resample(&set, allocation, rng)?;
            if settings.move_steps > 0 {
                let (moved, move_stats) = self.move_particles(&resampled_set, settings, rng);
                resampled_set = moved;
                stats.merge(&move_stats);
            }
            resampled_set
        } else {
            set
        };

        let diag = UpdateDiagnostics {
            index: state.history.len(),
            t_prev: w.t_prev,
            t_now: w.t_now,
            t_star: w.t_star,
            allocation,
            n_particles,
            ess,
            resampled,
            log_weight_ratio: log_ratio,
            k_entropy: k_ent,
            log_weight_variance: finite_variance(&incs),
            unique_before,
            unique_after: set.unique_count(),
            stats,
        };
        state.set = set;
        state.t_now = w.t_now;
        state.log_normalizer += log_ratio;
        state.history.push(diag.clone());
        Ok(diag)
    }

    fn move_particles<R: Rng + ?Sized>(
        &self,
        set: &WeightedParticleSet,
        settings: &SmcSettings,
        rng: &mut R,
    ) -> (WeightedParticleSet, ChainStats) {
        let w = self.window;
        let region = (w.t_star, w.t_now);
        let birth = Arc::new(birth_density(self.model, self.events, region.0, region.1, &settings.rjmcmc));
        let mut stats = ChainStats::default();
        let mut moved = Vec::with_capacity(set.len());
        for p in set.particles() {
            let (m, s) = move_configuration(
                self.model,
                self.events,
                w.full_layout(),
                region,
                Arc::clone(&birth),
                &settings.rjmcmc,
                p,
                settings.move_steps,
                rng,
            );
            stats.merge(&s);
            moved.push(m);
        }
        (WeightedParticleSet::uniform(moved), stats)
    }
}

/// Starts the update to `t_now`: computes `t*` and runs the window chain's
/// burn-in. The first update samples the full interval `(0, t_now]`.
pub fn begin_update<'a, R: Rng + ?Sized>(
    state: &SmcState,
    model: &'a SegmentModel,
    events: &'a EventStream,
    t_now: f64,
    settings: &SmcSettings,
    rng: &mut R,
) -> Result<PendingUpdate<'a>> {
    settings.validate()?;
    let t_prev = state.t_now;
    let t_star = if state.is_started() {
        compute_t_star(&state.set, settings.t_star_rule, t_prev)?.min(t_prev)
    } else {
        t_prev
    };
    let window = UpdateWindow::new(t_prev, t_now, t_star)?;
    let sampler = WindowSampler::new(model, events, (t_prev, t_now), t_star, &settings.rjmcmc, rng)?;
    Ok(PendingUpdate {
        model,
        events,
        window,
        sampler,
        draws: Vec::new(),
    })
}

/// One complete update to `t_now` with `settings.n_particles` window draws.
pub fn smc_update<R: Rng + ?Sized>(
    state: &mut SmcState,
    model: &SegmentModel,
    events: &EventStream,
    t_now: f64,
    settings: &SmcSettings,
    rng: &mut R,
) -> Result<UpdateDiagnostics> {
    let pending = begin_update(state, model, events, t_now, settings, rng)?;
    pending.finish(state, settings.n_particles, settings, rng)
}

/// Runs updates at each of `update_times` from a fresh state.
pub fn run_smc<R: Rng + ?Sized>(
    model: &SegmentModel,
    events: &EventStream,
    update_times: &[f64],
    settings: &SmcSettings,
    rng: &mut R,
) -> Result<SmcState> {
    let mut state = SmcState::new();
    for &t in update_times {
        smc_update(&mut state, model, events, t, settings, rng)?;
    }
    Ok(state)
}
