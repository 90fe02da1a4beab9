use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::{check_positive, ConjugateSegments};
use crate::error::{Error, Result};
use crate::events::EventStream;
use crate::particles::ChangepointConfiguration;
use crate::special::ln_gamma;

/// A prior density over the segment intensities of a configuration.
pub trait IntensityPrior {
    fn log_density(&self, lambdas: &[f64]) -> Result<f64>;
}

fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

fn check_levels(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::Empty);
    }
    match lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        Some(bad) => Err(Error::invalid_config(format!("intensity {bad} is not positive"))),
        None => Ok(()),
    }
}

/// Independent `Γ(α, β)` levels, the conjugate prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndependentGammaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl IntensityPrior for IndependentGammaPrior {
    fn log_density(&self, lambdas: &[f64]) -> Result<f64> {
        check_levels(lambdas)?;
        Ok(lambdas
            .iter()
            .map(|&l| gamma_ln_pdf(l, self.alpha, self.beta))
            .sum())
    }
}

/// Chained gamma levels: `λ₀ ~ Γ(α_DM, β_DM)` and
/// `λᵢ | λᵢ₋₁ ~ Γ(λᵢ₋₁²/χ, λᵢ₋₁/χ)`, so each level has mean `λᵢ₋₁` and
/// variance `χ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainedGammaPrior {
    pub alpha_dm: f64,
    pub beta_dm: f64,
    pub chi: f64,
}

impl ChainedGammaPrior {
    pub fn new(alpha_dm: f64, beta_dm: f64, chi: f64) -> Result<Self> {
        check_positive("alpha_dm", alpha_dm)?;
        check_positive("beta_dm", beta_dm)?;
        check_positive("chi", chi)?;
        Ok(Self {
            alpha_dm,
            beta_dm,
            chi,
        })
    }
}

impl IntensityPrior for ChainedGammaPrior {
    fn log_density(&self, lambdas: &[f64]) -> Result<f64> {
        check_levels(lambdas)?;
        let mut total = gamma_ln_pdf(lambdas[0], self.alpha_dm, self.beta_dm);
        for w in lambdas.windows(2) {
            let prev = w[0];
            total += gamma_ln_pdf(w[1], prev * prev / self.chi, prev / self.chi);
        }
        Ok(total)
    }
}

/// `ln w̄ = ln w + ln p_num(λ) - ln p_den(λ)`.
pub fn reweight_log(
    log_weight: f64,
    lambdas: &[f64],
    numerator: &dyn IntensityPrior,
    denominator: &dyn IntensityPrior,
) -> Result<f64> {
    Ok(log_weight + numerator.log_density(lambdas)? - denominator.log_density(lambdas)?)
}

/// Moves a conjugate-model particle (with sampled intensities) to the
/// chained-gamma prior by importance reweighting.
pub fn chained_gamma_reweight(
    config: &ChangepointConfiguration,
    log_weight: f64,
    conjugate: (f64, f64),
    chain: &ChainedGammaPrior,
) -> Result<f64> {
    let lambdas = config
        .params()
        .ok_or_else(|| Error::invalid_config("configuration carries no intensities"))?;
    let (alpha, beta) = conjugate;
    reweight_log(log_weight, lambdas, chain, &IndependentGammaPrior { alpha, beta })
}

/// Attaches intensities drawn from their conjugate posteriors
/// `Γ(α + rᵢ, β + τᵢ₊₁ - τᵢ)` on `[0, horizon]`.
pub fn sample_conjugate_intensities<R: Rng + ?Sized>(
    config: &ChangepointConfiguration,
    events: &EventStream,
    horizon: f64,
    model: &dyn ConjugateSegments,
    rng: &mut R,
) -> Result<ChangepointConfiguration> {
    config.validate(horizon)?;
    let mut bounds = Vec::with_capacity(config.k() + 2);
    bounds.push(0.0);
    bounds.extend_from_slice(config.taus());
    bounds.push(horizon);
    let mut lambdas = Vec::with_capacity(config.k() + 1);
    for w in bounds.windows(2) {
        let (shape, rate) = model
            .intensity_posterior(events.count(w[0], w[1]), w[1] - w[0])
            .ok_or_else(|| Error::invalid_param("model has no intensity posterior"))?;
        let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::invalid_param(e.to_string()))?;
        // A gamma draw can underflow to zero for tiny shapes.
        lambdas.push(g.sample(rng).max(f64::MIN_POSITIVE));
    }
    ChangepointConfiguration::new(config.taus().to_vec(), Some(lambdas))
}
