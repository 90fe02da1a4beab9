use rand::Rng;

use crate::error::{Error, Result};
use crate::events::EventStream;

/// Data-driven birth locations: a piecewise-constant density over bins of
/// the proposal interval, proportional to the bin's event count plus a
/// smoothing pseudo-count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BirthProposal {
    pub bin_width: f64,
    pub smoothing: f64,
}

impl Default for BirthProposal {
    fn default() -> Self {
        Self {
            bin_width: 2.5,
            smoothing: 1.0,
        }
    }
}

impl BirthProposal {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(Error::invalid_param(format!(
                "bin width must be positive, got {}",
                self.bin_width
            )));
        }
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            return Err(Error::invalid_param(format!(
                "smoothing must be positive, got {}",
                self.smoothing
            )));
        }
        Ok(())
    }
}

/// Birth-location density on `(lo, hi)`.
#[derive(Debug, Clone)]
pub(crate) enum BirthDensity {
    Uniform { lo: f64, hi: f64 },
    Binned {
        lo: f64,
        hi: f64,
        width: f64,
        // cumulative bin weights, last entry is the total
        cumulative: Vec<f64>,
    },
}

impl BirthDensity {
    pub(crate) fn uniform(lo: f64, hi: f64) -> Self {
        Self::Uniform { lo, hi }
    }

    pub(crate) fn binned(events: &EventStream, lo: f64, hi: f64, proposal: &BirthProposal) -> Self {
        let bins = ((hi - lo) / proposal.bin_width).ceil().max(1.0) as usize;
        let width = (hi - lo) / bins as f64;
        let mut cumulative = Vec::with_capacity(bins);
        let mut acc = 0.0;
        for b in 0..bins {
            let a = lo + b as f64 * width;
            let z = if b + 1 == bins { hi } else { a + width };
            acc += events.count(a, z) as f64 + proposal.smoothing;
            cumulative.push(acc);
        }
        Self::Binned {
            lo,
            hi,
            width,
            cumulative,
        }
    }

    #[cfg(test)]
    pub(crate) fn bounds(&self) -> (f64, f64) {
        match self {
            Self::Uniform { lo, hi } => (*lo, *hi),
            Self::Binned { lo, hi, .. } => (*lo, *hi),
        }
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Uniform { lo, hi } => lo + rng.random::<f64>() * (hi - lo),
            Self::Binned {
                lo,
                hi,
                width,
                cumulative,
            } => {
                let total = *cumulative.last().unwrap();
                let u = rng.random::<f64>() * total;
                let b = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
                (lo + (b as f64 + rng.random::<f64>()) * width).min(*hi)
            }
        }
    }

    pub(crate) fn ln_density(&self, t: f64) -> f64 {
        match self {
            Self::Uniform { lo, hi } => {
                if t > *lo && t < *hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::Binned {
                lo,
                hi,
                width,
                cumulative,
            } => {
                if !(t > *lo && t < *hi) {
                    return f64::NEG_INFINITY;
                }
                let b = (((t - lo) / width) as usize).min(cumulative.len() - 1);
                let w = if b == 0 {
                    cumulative[0]
                } else {
                    cumulative[b] - cumulative[b - 1]
                };
                (w / (cumulative.last().unwrap() * width)).ln()
            }
        }
    }
}
