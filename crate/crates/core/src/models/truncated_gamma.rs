//! Gamma distribution truncated to an interval.
//!
//! Sampling works on the standardized variable `y = rate · x ~ Γ(shape, 1)`.
//! Inversion uses whichever of `ln P` or `ln Q` is better conditioned at the
//! lower bound, so truncation points far into a tail are handled without
//! underflow. For large shapes with the lower bound beyond the mode, a
//! shifted-exponential envelope built from the tangent of the log density at
//! the lower bound is used instead.

use rand::Rng;

use crate::error::{Error, Result};
use crate::special::{ln_1m_exp, ln_add_exp, ln_gamma, ln_gamma_p, ln_gamma_q};

const ENVELOPE_MIN_SHAPE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tail {
    Lower,
    Upper,
}

/// `Γ(shape, rate)` restricted to `(lower, upper)`; `upper` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedGamma {
    shape: f64,
    rate: f64,
    lower: f64,
    upper: f64,
    tail: Tail,
    // ln P or ln Q at the standardized bounds, depending on `tail`
    ln_cdf_lo: f64,
    ln_cdf_hi: f64,
    ln_mass: f64,
}

impl TruncatedGamma {
    pub fn new(shape: f64, rate: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid_param(format!(
                "gamma shape {shape} and rate {rate} must be positive"
            )));
        }
        let lower = lower.max(0.0);
        if !(upper > lower) || lower.is_nan() {
            return Err(Error::invalid_config(format!(
                "empty truncation interval ({lower}, {upper})"
            )));
        }
        let (ylo, yhi) = (rate * lower, rate * upper);
        let (tail, ln_cdf_lo, ln_cdf_hi, ln_mass) = if ylo < shape {
            let lo = ln_gamma_p(shape, ylo);
            let hi = ln_gamma_p(shape, yhi);
            (Tail::Lower, lo, hi, hi + ln_1m_exp(lo - hi))
        } else {
            let lo = ln_gamma_q(shape, ylo);
            let hi = ln_gamma_q(shape, yhi);
            (Tail::Upper, lo, hi, lo + ln_1m_exp(hi - lo))
        };
        let ln_mass = if ln_mass.is_finite() {
            ln_mass
        } else {
            // Bounds too close for a CDF difference: integrate directly.
            narrow_ln_mass(shape, ylo, yhi)
        };
        if !ln_mass.is_finite() {
            return Err(Error::invalid_config(format!(
                "truncation interval ({lower}, {upper}) carries no mass"
            )));
        }
        Ok(Self {
            shape,
            rate,
            lower,
            upper,
            tail,
            ln_cdf_lo,
            ln_cdf_hi,
            ln_mass,
        })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Log density; `-inf` outside the open interval.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > self.lower && x < self.upper) {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() + (self.shape - 1.0) * x.ln()
            - self.rate * x
            - ln_gamma(self.shape)
            - self.ln_mass
    }

    fn uses_envelope(&self) -> bool {
        let ylo = self.rate * self.lower;
        self.shape > ENVELOPE_MIN_SHAPE && ylo >= self.shape - 1.0 + self.shape.sqrt()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = if self.uses_envelope() {
            self.sample_envelope(rng)
        } else {
            self.sample_inverse(rng)
        };
        self.clamp_inside(x)
    }

    // Keeps draws strictly inside the support after floating-point rounding.
    fn clamp_inside(&self, x: f64) -> f64 {
        if x > self.lower && x < self.upper {
            return x;
        }
        let lo = next_up(self.lower);
        let hi = if self.upper.is_finite() { next_down(self.upper) } else { f64::MAX };
        x.clamp(lo, hi.max(lo))
    }

    /// Draw by inverting the (log) CDF.
    pub fn sample_inverse<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>();
        let u = u.max(f64::MIN_POSITIVE);
        if self.narrow() {
            return self.sample_narrow(rng);
        }
        let ylo = self.rate * self.lower;
        let yhi = self.rate * self.upper;
        let a = self.shape;
        let y = match self.tail {
            Tail::Lower => {
                let target = ln_add_exp(self.ln_cdf_lo, u.ln() + self.ln_mass);
                solve_monotone(ylo, yhi, a, |y| ln_gamma_p(a, y) - target, |y| {
                    let lp = ln_gamma_p(a, y);
                    (lp - target, (ln_std_pdf(a, y) - lp).exp())
                })
            }
            Tail::Upper => {
                // Q decreases from Q(ylo) to Q(yhi); aim for Q(ylo) - u·mass
                let target = self.ln_cdf_lo + ln_1m_exp(u.ln() + self.ln_mass - self.ln_cdf_lo);
                let target = if target.is_finite() { target } else { self.ln_cdf_hi };
                solve_monotone(ylo, yhi, a, |y| target - ln_gamma_q(a, y), |y| {
                    let lq = ln_gamma_q(a, y);
                    (target - lq, (ln_std_pdf(a, y) - lq).exp())
                })
            }
        };
        y / self.rate
    }

    /// Draw by rejection from a shifted exponential envelope at the lower bound.
    ///
    /// Valid whenever the lower bound is at or beyond the mode; the log
    /// density is concave, so its tangent at the bound dominates it.
    pub fn sample_envelope<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = self.shape;
        let ylo = self.rate * self.lower;
        let yhi = self.rate * self.upper;
        let decay = 1.0 - (a - 1.0) / ylo;
        if !(decay > 0.0) || ylo < a - 1.0 {
            return self.sample_inverse(rng);
        }
        let width = yhi - ylo;
        // mass of the truncated exponential on (0, width)
        let tail_mass = -(-decay * width).exp_m1();
        loop {
            let u: f64 = rng.random();
            let e = -(-u * tail_mass).ln_1p() / decay;
            let y = ylo + e;
            if !(y < yhi) {
                continue;
            }
            let log_accept = (a - 1.0) * (y / ylo).ln() - e + decay * e;
            if rng.random::<f64>().ln() <= log_accept {
                return y / self.rate;
            }
        }
    }

    fn narrow(&self) -> bool {
        self.upper.is_finite() && (self.upper - self.lower) <= 1e-9 * self.upper.abs().max(1e-300)
    }

    // Uniform proposal over a very narrow interval, accepted against the density.
    fn sample_narrow<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = self.shape;
        let (ylo, yhi) = (self.rate * self.lower, self.rate * self.upper);
        let mode = (a - 1.0).max(0.0).clamp(ylo, yhi);
        let top = ln_std_pdf(a, mode).max(ln_std_pdf(a, ylo)).max(ln_std_pdf(a, yhi));
        for _ in 0..10_000 {
            let y = ylo + rng.random::<f64>() * (yhi - ylo);
            if rng.random::<f64>().ln() <= ln_std_pdf(a, y) - top {
                return y / self.rate;
            }
        }
        0.5 * (self.lower + self.upper)
    }
}

fn ln_std_pdf(a: f64, y: f64) -> f64 {
    (a - 1.0) * y.ln() - y - ln_gamma(a)
}

fn narrow_ln_mass(a: f64, ylo: f64, yhi: f64) -> f64 {
    if !yhi.is_finite() {
        return f64::NEG_INFINITY;
    }
    // composite Simpson on the standardized density
    let n = 64;
    let h = (yhi - ylo) / n as f64;
    let vals: Vec<f64> = (0..=n).map(|i| ln_std_pdf(a, ylo + i as f64 * h)).collect();
    let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return f64::NEG_INFINITY;
    }
    let s: f64 = vals
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let c = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            c * (v - top).exp()
        })
        .sum();
    top + (s * h / 3.0).ln()
}

/// Root of an increasing function on `[lo, hi]` (hi may be infinite) by
/// Newton steps safeguarded with bisection. `f_df` returns the value and the
/// derivative.
fn solve_monotone(
    lo: f64,
    hi: f64,
    shape: f64,
    f: impl Fn(f64) -> f64,
    f_df: impl Fn(f64) -> (f64, f64),
) -> f64 {
    let mut lo = lo;
    let mut hi = hi;
    if !hi.is_finite() {
        let mut probe = lo.max(shape) + 10.0 * shape.sqrt() + 10.0;
        while f(probe) < 0.0 {
            lo = probe;
            probe *= 2.0;
            if !probe.is_finite() {
                return lo;
            }
        }
        hi = probe;
    }
    let mut x = if lo < shape && shape < hi { shape } else { 0.5 * (lo + hi) };
    for _ in 0..200 {
        let (fx, dfx) = f_df(x);
        if fx.abs() < 1e-14 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        x = if dfx.is_finite() && dfx > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= 1e-14 * x.abs().max(1e-300) {
            break;
        }
    }
    x
}

fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        return f64::MIN_POSITIVE;
    }
    f64::from_bits(x.to_bits() + 1)
}

fn next_down(x: f64) -> f64 {
    f64::from_bits(x.to_bits() - 1)
}
