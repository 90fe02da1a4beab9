use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::{check_positive, ConjugateSegments};
use crate::error::{Error, Result};
use crate::special::ln_gamma;

/// Piecewise-constant Poisson intensity with independent `Γ(α, β)` segment
/// levels (shape/rate) and Poisson(`ν`) changepoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonGammaModel {
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl PoissonGammaModel {
    pub fn new(nu: f64, alpha: f64, beta: f64) -> Result<Self> {
        check_positive("nu", nu)?;
        check_positive("alpha", alpha)?;
        check_positive("beta", beta)?;
        Ok(Self { nu, alpha, beta })
    }
}

impl ConjugateSegments for PoissonGammaModel {
    fn nu(&self) -> f64 {
        self.nu
    }

    #[inline]
    fn segment_log_evidence(&self, r: usize, delta: f64) -> f64 {
        evidence_unchecked(r, delta, self.alpha, self.beta)
    }

    fn intensity_posterior(&self, r: usize, delta: f64) -> Option<(f64, f64)> {
        Some((self.alpha + r as f64, self.beta + delta))
    }
}

/// Changepoint prior only: every segment has log evidence zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorOnlyModel {
    pub nu: f64,
}

impl PriorOnlyModel {
    pub fn new(nu: f64) -> Result<Self> {
        check_positive("nu", nu)?;
        Ok(Self { nu })
    }
}

impl ConjugateSegments for PriorOnlyModel {
    fn nu(&self) -> f64 {
        self.nu
    }

    fn segment_log_evidence(&self, _r: usize, _delta: f64) -> f64 {
        0.0
    }

    fn intensity_posterior(&self, _r: usize, _delta: f64) -> Option<(f64, f64)> {
        None
    }
}

#[inline]
fn evidence_unchecked(r: usize, delta: f64, alpha: f64, beta: f64) -> f64 {
    let r = r as f64;
    alpha * beta.ln() - ln_gamma(alpha) + ln_gamma(alpha + r) - (alpha + r) * (beta + delta).ln()
}

/// Log of `∫ λ^r e^{-λΔ} Γ(λ; α, β) dλ`
/// `= α ln β - ln Γ(α) + ln Γ(α + r) - (α + r) ln(β + Δ)`.
pub fn gamma_segment_log_evidence(r: usize, delta: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::invalid_param(format!("segment length must be positive, got {delta}")));
    }
    check_positive("alpha", alpha)?;
    check_positive("beta", beta)?;
    Ok(evidence_unchecked(r, delta, alpha, beta))
}

/// Draws a segment intensity from its posterior `Γ(α + r, β + Δ)`.
pub fn sample_segment_intensity<R: Rng + ?Sized>(
    r: usize,
    delta: f64,
    alpha: f64,
    beta: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::invalid_param(format!("segment length must be positive, got {delta}")));
    }
    check_positive("alpha", alpha)?;
    check_positive("beta", beta)?;
    let g = Gamma::new(alpha + r as f64, 1.0 / (beta + delta))
        .map_err(|e| Error::invalid_param(e.to_string()))?;
    Ok(g.sample(rng))
}
