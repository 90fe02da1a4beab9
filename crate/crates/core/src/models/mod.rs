//! Segment models.
//!
//! Changepoints arrive as a homogeneous Poisson process with rate `ν`, so on
//! an interval `(a, b]` a configuration with `k` ordered changepoints has
//! prior density `ν^k exp(-ν (b - a))`. Segment parameters are either
//! integrated out (the conjugate Poisson-gamma model, evaluated through
//! per-segment evidence) or carried explicitly (the shot-noise Cox model,
//! evaluated through joint likelihood, prior and Gibbs conditionals).

mod chained_gamma;
mod poisson_gamma;
mod shot_noise;
mod truncated_gamma;

pub use chained_gamma::{
    chained_gamma_reweight, reweight_log, sample_conjugate_intensities, ChainedGammaPrior,
    IndependentGammaPrior, IntensityPrior,
};
pub use poisson_gamma::{
    gamma_segment_log_evidence, sample_segment_intensity, PoissonGammaModel, PriorOnlyModel,
};
pub use shot_noise::{
    sncp_log_likelihood, sncp_prior_log_density, sncp_truncated_gamma_conditional,
    ShotNoiseCoxModel,
};
pub use truncated_gamma::TruncatedGamma;

use crate::error::{Error, Result};

/// Log prior density of `k` ordered changepoints on `(a, b]` under a Poisson
/// process with rate `nu`: `k ln ν - ν (b - a)`.
pub fn cp_prior_log_density(taus: &[f64], interval: (f64, f64), nu: f64) -> Result<f64> {
    let (a, b) = interval;
    if !(nu > 0.0) {
        return Err(Error::invalid_param(format!("changepoint rate must be positive, got {nu}")));
    }
    if b <= a {
        return Err(Error::invalid_param(format!("empty interval ({a}, {b}]")));
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid_config("changepoints are not strictly increasing"));
    }
    if taus.iter().any(|&t| t <= a || t >= b) {
        return Err(Error::invalid_config(format!(
            "changepoints must lie inside ({a}, {b})"
        )));
    }
    Ok(taus.len() as f64 * nu.ln() - nu * (b - a))
}

/// Segment geometry of a configuration on `(anchor, end]`.
///
/// Changepoints lie in `(anchor, end)`. The first segment starts at
/// `data_start ≤ anchor`, so a window posterior can condition on data from
/// before the window. For decaying intensities the first segment's level is
/// attached at `anchor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentLayout {
    pub anchor: f64,
    pub data_start: f64,
    pub end: f64,
}

impl SegmentLayout {
    pub fn new(anchor: f64, data_start: f64, end: f64) -> Result<Self> {
        if !(data_start <= anchor && anchor < end) {
            return Err(Error::invalid_param(format!(
                "layout needs data start {data_start} <= anchor {anchor} < end {end}"
            )));
        }
        Ok(Self {
            anchor,
            data_start,
            end,
        })
    }

    /// Layout whose data start coincides with the anchor.
    pub fn anchored(anchor: f64, end: f64) -> Self {
        Self {
            anchor,
            data_start: anchor,
            end,
        }
    }

    /// Time at which segment `i` begins its level.
    #[inline]
    pub fn shot(&self, taus: &[f64], i: usize) -> f64 {
        if i == 0 {
            self.anchor
        } else {
            taus[i - 1]
        }
    }

    /// Data interval `(c, d]` of segment `i`.
    #[inline]
    pub fn segment(&self, taus: &[f64], i: usize) -> (f64, f64) {
        let c = if i == 0 { self.data_start } else { taus[i - 1] };
        let d = if i == taus.len() { self.end } else { taus[i] };
        (c, d)
    }
}

/// Models whose segment parameters integrate out analytically.
pub trait ConjugateSegments: Send + Sync {
    /// Changepoint rate `ν`.
    fn nu(&self) -> f64;

    /// Log marginal likelihood of `r` events over a segment of length `delta`.
    fn segment_log_evidence(&self, r: usize, delta: f64) -> f64;

    /// Shape and rate of the gamma posterior of a segment intensity, if the
    /// model has one.
    fn intensity_posterior(&self, r: usize, delta: f64) -> Option<(f64, f64)>;
}

/// Which evaluation path a model supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelPath {
    /// Per-segment evidence; changepoints only.
    Conjugate,
    /// Joint changepoints and segment parameters.
    NonConjugate,
}

/// The built-in segment models.
#[derive(Debug, Clone, PartialEq)]
pub enum SegmentModel {
    PoissonGamma(PoissonGammaModel),
    /// Likelihood held constant; the posterior is the changepoint prior.
    PriorOnly(PriorOnlyModel),
    ShotNoise(ShotNoiseCoxModel),
}

impl SegmentModel {
    pub fn nu(&self) -> f64 {
        match self {
            Self::PoissonGamma(m) => m.nu,
            Self::PriorOnly(m) => m.nu,
            Self::ShotNoise(m) => m.nu,
        }
    }

    pub fn path(&self) -> ModelPath {
        match self {
            Self::PoissonGamma(_) | Self::PriorOnly(_) => ModelPath::Conjugate,
            Self::ShotNoise(_) => ModelPath::NonConjugate,
        }
    }

    pub fn conjugate(&self) -> Option<&dyn ConjugateSegments> {
        match self {
            Self::PoissonGamma(m) => Some(m),
            Self::PriorOnly(m) => Some(m),
            Self::ShotNoise(_) => None,
        }
    }

    pub fn shot_noise(&self) -> Option<&ShotNoiseCoxModel> {
        match self {
            Self::ShotNoise(m) => Some(m),
            _ => None,
        }
    }
}

impl From<PoissonGammaModel> for SegmentModel {
    fn from(m: PoissonGammaModel) -> Self {
        Self::PoissonGamma(m)
    }
}

impl From<PriorOnlyModel> for SegmentModel {
    fn from(m: PriorOnlyModel) -> Self {
        Self::PriorOnly(m)
    }
}

impl From<ShotNoiseCoxModel> for SegmentModel {
    fn from(m: ShotNoiseCoxModel) -> Self {
        Self::ShotNoise(m)
    }
}

pub(crate) fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid_param(format!("{name} must be positive and finite, got {x}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_examples() {
        assert!((cp_prior_log_density(&[], (0.0, 4.0), 0.5).unwrap() + 2.0).abs() < 1e-12);
        let v = cp_prior_log_density(&[1.0, 3.0], (0.0, 4.0), 0.5).unwrap();
        assert!((v - (2.0 * 0.5f64.ln() - 2.0)).abs() < 1e-12);
        assert!((v + 3.386_294_361_119_890_6).abs() < 1e-12);
        assert!(matches!(
            cp_prior_log_density(&[3.0, 1.0], (0.0, 4.0), 0.5),
            Err(Error::InvalidConfiguration(_))
        ));
        assert!(cp_prior_log_density(&[4.0], (0.0, 4.0), 0.5).is_err());
    }
}
