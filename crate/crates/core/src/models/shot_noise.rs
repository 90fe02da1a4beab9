use rand::Rng;

use super::{check_positive, SegmentLayout, TruncatedGamma};
use crate::error::{Error, Result};
use crate::events::{EventStream, EventWindow};
use crate::particles::ChangepointConfiguration;

/// Shot-noise Cox process: at each shot `τᵢ` the intensity jumps to `λᵢ` and
/// then decays as `λᵢ e^{-κ(t-τᵢ)}` until the next shot. Shots arrive at
/// rate `ν` and jump sizes `θᵢ = λᵢ - λᵢ⁻` (with `θ₀ = λ₀`) are iid
/// exponential with rate `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotNoiseCoxModel {
    pub nu: f64,
    pub kappa: f64,
    pub alpha: f64,
}

impl ShotNoiseCoxModel {
    pub fn new(nu: f64, kappa: f64, alpha: f64) -> Result<Self> {
        check_positive("nu", nu)?;
        check_positive("kappa", kappa)?;
        check_positive("alpha", alpha)?;
        Ok(Self { nu, kappa, alpha })
    }

    /// `∫_c^d e^{-κ(t-s)} dt`.
    #[inline]
    pub(crate) fn compensator_factor(&self, shot: f64, c: f64, d: f64) -> f64 {
        let k = self.kappa;
        (-k * (c - shot)).exp() * -(-k * (d - c)).exp_m1() / k
    }

    /// Log-likelihood of the events in `(c, d]` under intensity
    /// `λ e^{-κ(t - shot)}`.
    #[inline]
    pub(crate) fn segment_log_likelihood(
        &self,
        events: &EventStream,
        lambda: f64,
        shot: f64,
        c: f64,
        d: f64,
    ) -> f64 {
        if d <= c {
            return 0.0;
        }
        if !(lambda > 0.0) {
            return f64::NEG_INFINITY;
        }
        let (r, sum) = events.count_and_sum(c, d);
        let mut ll = -lambda * self.compensator_factor(shot, c, d);
        if r > 0 {
            ll += r as f64 * lambda.ln() - self.kappa * (sum - r as f64 * shot);
        }
        ll
    }

    /// `ln α - α θ`, or `-∞` unless the jump is positive.
    #[inline]
    pub(crate) fn jump_log_prior(&self, theta: f64) -> f64 {
        if theta > 0.0 {
            self.alpha.ln() - self.alpha * theta
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Intensity just before shot `i ≥ 1`.
    #[inline]
    pub(crate) fn pre_jump(&self, layout: &SegmentLayout, taus: &[f64], lambdas: &[f64], i: usize) -> f64 {
        lambdas[i - 1] * (-self.kappa * (taus[i - 1] - layout.shot(taus, i - 1))).exp()
    }

    /// Jump size `θᵢ` (with `θ₀ = λ₀`).
    #[inline]
    pub(crate) fn jump(&self, layout: &SegmentLayout, taus: &[f64], lambdas: &[f64], i: usize) -> f64 {
        if i == 0 {
            lambdas[0]
        } else {
            lambdas[i] - self.pre_jump(layout, taus, lambdas, i)
        }
    }

    /// Jump prior of segment `i`, including the changepoint rate for `i ≥ 1`.
    #[inline]
    pub(crate) fn segment_log_prior(&self, layout: &SegmentLayout, taus: &[f64], lambdas: &[f64], i: usize) -> f64 {
        let p = self.jump_log_prior(self.jump(layout, taus, lambdas, i));
        if i == 0 {
            p
        } else {
            p + self.nu.ln()
        }
    }

    /// Likelihood plus prior terms attached to segment `i`.
    #[inline]
    pub(crate) fn segment_contribution(
        &self,
        events: &EventStream,
        layout: &SegmentLayout,
        taus: &[f64],
        lambdas: &[f64],
        i: usize,
    ) -> f64 {
        let prior = self.segment_log_prior(layout, taus, lambdas, i);
        if prior == f64::NEG_INFINITY {
            return prior;
        }
        let (c, d) = layout.segment(taus, i);
        prior + self.segment_log_likelihood(events, lambdas[i], layout.shot(taus, i), c, d)
    }

    /// Log-likelihood of the events in `(from, to]`, restricted to the segments
    /// that intersect it.
    pub(crate) fn log_likelihood_range(
        &self,
        events: &EventStream,
        layout: &SegmentLayout,
        taus: &[f64],
        lambdas: &[f64],
        from: f64,
        to: f64,
    ) -> f64 {
        let first = taus.partition_point(|&t| t <= from);
        let mut total = 0.0;
        for i in first..=taus.len() {
            let (c, d) = layout.segment(taus, i);
            let (c, d) = (c.max(from), d.min(to));
            if c >= to {
                break;
            }
            total += self.segment_log_likelihood(events, lambdas[i], layout.shot(taus, i), c, d);
        }
        total
    }

    /// Sum of the jump priors, `-∞` if any jump is non-positive.
    pub(crate) fn jumps_log_prior(&self, layout: &SegmentLayout, taus: &[f64], lambdas: &[f64]) -> f64 {
        (0..lambdas.len())
            .map(|i| self.jump_log_prior(self.jump(layout, taus, lambdas, i)))
            .sum()
    }

    /// Joint log density of changepoints, intensities and data on the layout.
    #[cfg(test)]
    pub(crate) fn log_joint(
        &self,
        events: &EventStream,
        layout: &SegmentLayout,
        taus: &[f64],
        lambdas: &[f64],
    ) -> f64 {
        let mut total = -self.nu * (layout.end - layout.anchor);
        for i in 0..lambdas.len() {
            total += self.segment_contribution(events, layout, taus, lambdas, i);
            if total == f64::NEG_INFINITY {
                break;
            }
        }
        total
    }

    /// Gamma shape and rate of the full conditional of `λᵢ` before truncation.
    pub(crate) fn conditional_shape_rate(
        &self,
        events: &EventStream,
        layout: &SegmentLayout,
        taus: &[f64],
        i: usize,
    ) -> (f64, f64) {
        let (c, d) = layout.segment(taus, i);
        let shot = layout.shot(taus, i);
        let r = events.count(c, d);
        let mut rate = self.compensator_factor(shot, c, d) + self.alpha;
        if i < taus.len() {
            // the next jump shrinks as λᵢ grows
            rate -= self.alpha * (-self.kappa * (taus[i] - shot)).exp();
        }
        (r as f64 + 1.0, rate)
    }

    /// Full conditional of `λᵢ` given everything else: a gamma truncated to
    /// `(λᵢ⁻, e^{κ(τᵢ₊₁ - τᵢ)} λᵢ₊₁)`, unbounded above for the last segment.
    pub(crate) fn conditional(
        &self,
        events: &EventStream,
        layout: &SegmentLayout,
        taus: &[f64],
        lambdas: &[f64],
        i: usize,
    ) -> Result<TruncatedGamma> {
        let (shape, rate) = self.conditional_shape_rate(events, layout, taus, i);
        let lower = if i == 0 { 0.0 } else { self.pre_jump(layout, taus, lambdas, i) };
        let upper = if i < taus.len() {
            lambdas[i + 1] * (self.kappa * (taus[i] - layout.shot(taus, i))).exp()
        } else {
            f64::INFINITY
        };
        TruncatedGamma::new(shape, rate, lower, upper)
    }

    /// Intensity at time `t` (at or after the layout anchor).
    pub fn intensity_at(&self, layout: &SegmentLayout, taus: &[f64], lambdas: &[f64], t: f64) -> f64 {
        let i = taus.partition_point(|&x| x < t);
        lambdas[i] * (-self.kappa * (t - layout.shot(taus, i))).exp()
    }
}

fn shot_params(config: &ChangepointConfiguration) -> Result<&[f64]> {
    config
        .params()
        .ok_or_else(|| Error::invalid_config("configuration carries no shot intensities"))
}

// ν does not enter the likelihood, jump prior or conditionals.
fn decay_only(kappa: f64, alpha: f64) -> Result<ShotNoiseCoxModel> {
    ShotNoiseCoxModel::new(1.0, kappa, alpha)
}

/// Log-likelihood `-Σ(λᵢ - λᵢ₊₁⁻)/κ + Σ log λ(tⱼ)` of the window's events,
/// with the first segment anchored at the window start. Returns `-∞` if the
/// shot constraint fails.
pub fn sncp_log_likelihood(
    config: &ChangepointConfiguration,
    window: &EventWindow<'_>,
    kappa: f64,
) -> Result<f64> {
    let lambdas = shot_params(config)?;
    let model = decay_only(kappa, 1.0)?;
    let layout = SegmentLayout::anchored(window.start(), window.end());
    let taus = config.taus();
    let valid = (0..lambdas.len()).all(|i| model.jump(&layout, taus, lambdas, i) > 0.0);
    if !valid {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(model.log_likelihood_range(window.stream(), &layout, taus, lambdas, window.start(), window.end()))
}

/// `(k+1) ln α - α λ₀ - α Σ(λᵢ - λᵢ⁻)`, or `-∞` if any `λᵢ ≤ λᵢ⁻`. The first
/// shot sits at `anchor`.
pub fn sncp_prior_log_density(
    config: &ChangepointConfiguration,
    anchor: f64,
    kappa: f64,
    alpha: f64,
) -> Result<f64> {
    let lambdas = shot_params(config)?;
    let model = decay_only(kappa, alpha)?;
    let layout = SegmentLayout::anchored(anchor, f64::INFINITY);
    Ok(model.jumps_log_prior(&layout, config.taus(), lambdas))
}

/// Draws `λᵢ` from its truncated-gamma full conditional on the window.
pub fn sncp_truncated_gamma_conditional<R: Rng + ?Sized>(
    i: usize,
    config: &ChangepointConfiguration,
    window: &EventWindow<'_>,
    kappa: f64,
    alpha: f64,
    rng: &mut R,
) -> Result<f64> {
    let lambdas = shot_params(config)?;
    if i >= lambdas.len() {
        return Err(Error::invalid_param(format!(
            "segment {i} out of range for {} segments",
            lambdas.len()
        )));
    }
    let model = decay_only(kappa, alpha)?;
    let layout = SegmentLayout::anchored(window.start(), window.end());
    let dist = model.conditional(window.stream(), &layout, config.taus(), lambdas, i)?;
    Ok(dist.sample(rng))
}
