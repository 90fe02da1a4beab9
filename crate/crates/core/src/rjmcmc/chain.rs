use std::sync::Arc;

use rand::Rng;

use super::birth::BirthDensity;
use super::{Move, MoveProbabilities};
use crate::events::EventStream;
use crate::models::{ConjugateSegments, SegmentLayout, SegmentModel, ShotNoiseCoxModel};
use crate::particles::ChangepointConfiguration;

#[derive(Clone, Copy)]
pub(crate) enum Target<'a> {
    Conjugate(&'a dyn ConjugateSegments),
    Shot(&'a ShotNoiseCoxModel),
}

impl<'a> Target<'a> {
    pub(crate) fn of(model: &'a SegmentModel) -> Self {
        match model {
            SegmentModel::PoissonGamma(m) => Target::Conjugate(m),
            SegmentModel::PriorOnly(m) => Target::Conjugate(m),
            SegmentModel::ShotNoise(m) => Target::Shot(m),
        }
    }

    fn nu(&self) -> f64 {
        match self {
            Target::Conjugate(m) => m.nu(),
            Target::Shot(m) => m.nu,
        }
    }

    fn has_levels(&self) -> bool {
        matches!(self, Target::Shot(_))
    }
}

/// Proposal and acceptance counts per move type, plus segment evaluations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChainStats {
    pub iterations: u64,
    pub evaluations: u64,
    pub proposed: [u64; 4],
    pub accepted: [u64; 4],
}

impl ChainStats {
    pub fn merge(&mut self, other: &ChainStats) {
        self.iterations += other.iterations;
        self.evaluations += other.evaluations;
        for i in 0..4 {
            self.proposed[i] += other.proposed[i];
            self.accepted[i] += other.accepted[i];
        }
    }
}

/// A reversible-jump chain over changepoints in `region`, on a fixed
/// segment layout. Moves only touch the segments adjacent to the modified
/// changepoint.
pub(crate) struct Chain<'a> {
    target: Target<'a>,
    events: &'a EventStream,
    layout: SegmentLayout,
    region: (f64, f64),
    birth: Arc<BirthDensity>,
    cumulative: [f64; 4],
    log_nu: f64,
    taus: Vec<f64>,
    lambdas: Vec<f64>,
    log_target: Option<f64>,
    pub(crate) stats: ChainStats,
}

impl<'a> Chain<'a> {
    /// `lambdas` must be empty for conjugate targets and hold `k + 1`
    /// levels otherwise.
    pub(crate) fn new(
        target: Target<'a>,
        events: &'a EventStream,
        layout: SegmentLayout,
        region: (f64, f64),
        birth: Arc<BirthDensity>,
        moves: &MoveProbabilities,
        taus: Vec<f64>,
        lambdas: Vec<f64>,
    ) -> Self {
        let p = moves.normalized_for(target.has_levels());
        let mut cumulative = [0.0; 4];
        let mut acc = 0.0;
        for (c, x) in cumulative.iter_mut().zip(p) {
            acc += x;
            *c = acc;
        }
        debug_assert!(!target.has_levels() || lambdas.len() == taus.len() + 1);
        Self {
            log_nu: target.nu().ln(),
            target,
            events,
            layout,
            region,
            birth,
            cumulative,
            taus,
            lambdas,
            log_target: None,
            stats: ChainStats::default(),
        }
    }

    /// Keeps a running joint log density, so that the best state can be
    /// tracked. Costs one full evaluation now.
    pub(crate) fn track_target(&mut self) {
        let mut total = -self.target.nu() * (self.layout.end - self.layout.anchor);
        total += self.block(0, self.taus.len());
        self.log_target = Some(total);
    }

    pub(crate) fn log_target(&self) -> Option<f64> {
        self.log_target
    }

    #[cfg(test)]
    pub(crate) fn taus(&self) -> &[f64] {
        &self.taus
    }

    #[cfg(test)]
    pub(crate) fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub(crate) fn configuration(&self) -> ChangepointConfiguration {
        let params = self.target.has_levels().then(|| self.lambdas.clone());
        ChangepointConfiguration::from_parts(self.taus.clone(), params)
    }

    fn contribution(&mut self, i: usize) -> f64 {
        self.stats.evaluations += 1;
        match self.target {
            Target::Conjugate(m) => {
                let (c, d) = self.layout.segment(&self.taus, i);
                let e = m.segment_log_evidence(self.events.count(c, d), d - c);
                if i == 0 {
                    e
                } else {
                    e + self.log_nu
                }
            }
            Target::Shot(m) => m.segment_contribution(self.events, &self.layout, &self.taus, &self.lambdas, i),
        }
    }

    fn block(&mut self, from: usize, to: usize) -> f64 {
        let to = to.min(self.taus.len());
        let mut total = 0.0;
        for i in from..=to {
            total += self.contribution(i);
        }
        total
    }

    // Extra trailing segment whose prior depends on a moved shot.
    fn reach(&self) -> usize {
        usize::from(self.target.has_levels())
    }

    /// Indices `[first, first + m)` of the changepoints inside the region.
    fn region_span(&self) -> (usize, usize) {
        let first = self.taus.partition_point(|&t| t <= self.region.0);
        let end = self.taus.partition_point(|&t| t < self.region.1);
        (first, end - first)
    }

    fn accept<R: Rng + ?Sized>(&mut self, log_ratio: f64, rng: &mut R) -> bool {
        if log_ratio.is_nan() {
            return false;
        }
        log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
    }

    fn move_probability(&self, mv: Move) -> f64 {
        let i = mv as usize;
        self.cumulative[i] - if i == 0 { 0.0 } else { self.cumulative[i - 1] }
    }

    pub(crate) fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.stats.iterations += 1;
        let u: f64 = rng.random::<f64>() * self.cumulative[3];
        let mv = match self.cumulative.iter().position(|&c| u < c) {
            Some(0) => Move::Birth,
            Some(1) => Move::Death,
            Some(2) => Move::Shift,
            _ => Move::Height,
        };
        self.stats.proposed[mv as usize] += 1;
        let accepted = match mv {
            Move::Birth => self.birth(rng),
            Move::Death => self.death(rng),
            Move::Shift => self.shift(rng),
            Move::Height => self.height(rng),
        };
        if accepted {
            self.stats.accepted[mv as usize] += 1;
        }
    }

    fn add_delta(&mut self, delta: f64) {
        if let Some(t) = self.log_target.as_mut() {
            *t += delta;
        }
    }

    fn birth<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let tau = self.birth.sample(rng);
        let log_q = self.birth.ln_density(tau);
        if !(tau > self.region.0 && tau < self.region.1) || log_q == f64::NEG_INFINITY {
            return false;
        }
        let j = self.taus.partition_point(|&t| t < tau);
        if self.taus.get(j) == Some(&tau) {
            return false;
        }
        let (_, m) = self.region_span();
        let reach = self.reach();
        let old = self.block(j, j + reach);
        self.taus.insert(j, tau);
        let mut log_g = 0.0;
        if let Target::Shot(model) = self.target {
            self.lambdas.insert(j + 1, f64::NAN);
            match model.conditional(self.events, &self.layout, &self.taus, &self.lambdas, j + 1) {
                Ok(dist) => {
                    let x = dist.sample(rng);
                    log_g = dist.ln_pdf(x);
                    self.lambdas[j + 1] = x;
                }
                Err(_) => {
                    self.lambdas.remove(j + 1);
                    self.taus.remove(j);
                    return false;
                }
            }
        }
        let new = self.block(j, j + 1 + reach);
        let log_ratio = new - old + self.move_probability(Move::Death).ln()
            - ((m + 1) as f64).ln()
            - self.move_probability(Move::Birth).ln()
            - log_q
            - log_g;
        if self.accept(log_ratio, rng) {
            self.add_delta(new - old);
            true
        } else {
            self.taus.remove(j);
            if self.target.has_levels() {
                self.lambdas.remove(j + 1);
            }
            false
        }
    }

    fn death<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let (first, m) = self.region_span();
        if m == 0 {
            return false;
        }
        let p = first + rng.random_range(0..m);
        let tau = self.taus[p];
        let reach = self.reach();
        let old = self.block(p, p + 1 + reach);
        let mut log_g = 0.0;
        if let Target::Shot(model) = self.target {
            match model.conditional(self.events, &self.layout, &self.taus, &self.lambdas, p + 1) {
                Ok(dist) => log_g = dist.ln_pdf(self.lambdas[p + 1]),
                Err(_) => return false,
            }
        }
        let removed_tau = self.taus.remove(p);
        let removed_lambda = self.target.has_levels().then(|| self.lambdas.remove(p + 1));
        let new = self.block(p, p + reach);
        let log_ratio = new - old + self.move_probability(Move::Birth).ln()
            + self.birth.ln_density(tau)
            + log_g
            - self.move_probability(Move::Death).ln()
            + (m as f64).ln();
        if self.accept(log_ratio, rng) {
            self.add_delta(new - old);
            true
        } else {
            self.taus.insert(p, removed_tau);
            if let Some(x) = removed_lambda {
                self.lambdas.insert(p + 1, x);
            }
            false
        }
    }

    fn shift<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let (first, m) = self.region_span();
        if m == 0 {
            return false;
        }
        let p = first + rng.random_range(0..m);
        let lo = if p == 0 { self.region.0 } else { self.taus[p - 1].max(self.region.0) };
        let hi = self.taus.get(p + 1).map_or(self.region.1, |&t| t.min(self.region.1));
        let proposal = lo + rng.random::<f64>() * (hi - lo);
        if !(proposal > lo && proposal < hi) {
            return false;
        }
        let reach = self.reach();
        let old = self.block(p, p + 1 + reach);
        let previous = std::mem::replace(&mut self.taus[p], proposal);
        let new = self.block(p, p + 1 + reach);
        if self.accept(new - old, rng) {
            self.add_delta(new - old);
            true
        } else {
            self.taus[p] = previous;
            false
        }
    }

    /// Gibbs update of one segment level from its full conditional.
    fn height<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let Target::Shot(model) = self.target else {
            return false;
        };
        let first = self.taus.partition_point(|&t| t <= self.region.0);
        let i = rng.random_range(first..=self.taus.len());
        let dist = match model.conditional(self.events, &self.layout, &self.taus, &self.lambdas, i) {
            Ok(d) => d,
            Err(_) => return false,
        };
        let track = self.log_target.is_some();
        let old = if track { self.block(i, i + 1) } else { 0.0 };
        self.lambdas[i] = dist.sample(rng);
        if track {
            let new = self.block(i, i + 1);
            self.add_delta(new - old);
        }
        true
    }

    /// Log acceptance ratio of a birth at `tau` with level `level`, without
    /// changing the state. Used to check reversibility.
    #[cfg(test)]
    pub(crate) fn birth_log_ratio(&mut self, tau: f64, level: Option<f64>) -> f64 {
        let j = self.taus.partition_point(|&t| t < tau);
        let (_, m) = self.region_span();
        let reach = self.reach();
        let old = self.block(j, j + reach);
        self.taus.insert(j, tau);
        let mut log_g = 0.0;
        if let (Target::Shot(model), Some(x)) = (self.target, level) {
            self.lambdas.insert(j + 1, f64::NAN);
            let dist = model
                .conditional(self.events, &self.layout, &self.taus, &self.lambdas, j + 1)
                .unwrap();
            log_g = dist.ln_pdf(x);
            self.lambdas[j + 1] = x;
        }
        let new = self.block(j, j + 1 + reach);
        self.taus.remove(j);
        if level.is_some() {
            self.lambdas.remove(j + 1);
        }
        new - old + self.move_probability(Move::Death).ln()
            - ((m + 1) as f64).ln()
            - self.move_probability(Move::Birth).ln()
            - self.birth.ln_density(tau)
            - log_g
    }

    /// Log acceptance ratio of deleting changepoint `p`, without changing
    /// the state.
    #[cfg(test)]
    pub(crate) fn death_log_ratio(&mut self, p: usize) -> f64 {
        let (_, m) = self.region_span();
        let tau = self.taus[p];
        let reach = self.reach();
        let old = self.block(p, p + 1 + reach);
        let mut log_g = 0.0;
        if let Target::Shot(model) = self.target {
            let dist = model
                .conditional(self.events, &self.layout, &self.taus, &self.lambdas, p + 1)
                .unwrap();
            log_g = dist.ln_pdf(self.lambdas[p + 1]);
        }
        let removed_tau = self.taus.remove(p);
        let removed = self.target.has_levels().then(|| self.lambdas.remove(p + 1));
        let new = self.block(p, p + reach);
        self.taus.insert(p, removed_tau);
        if let Some(x) = removed {
            self.lambdas.insert(p + 1, x);
        }
        new - old + self.move_probability(Move::Birth).ln() + self.birth.ln_density(tau) + log_g
            - self.move_probability(Move::Death).ln()
            + (m as f64).ln()
    }

    #[cfg(test)]
    pub(crate) fn set_state(&mut self, taus: Vec<f64>, lambdas: Vec<f64>) {
        self.taus = taus;
        self.lambdas = lambdas;
    }
}
