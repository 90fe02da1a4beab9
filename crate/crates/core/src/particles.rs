//! Particle and weight bookkeeping.
//!
//! A particle is a [`ChangepointConfiguration`]; a [`WeightedParticleSet`]
//! pairs particles with unnormalized log-weights. This module provides the
//! effective sample size, systematic resampling, and the greedy replication
//! scheme that grows a weighted set from `N` to `M > N` particles while
//! reducing the sum of squared weights.

use std::collections::{BinaryHeap, HashMap};

use rand::Rng;

use crate::error::{Error, Result};

/// Ordered changepoint times, optionally with one parameter per segment.
///
/// `taus` are strictly increasing. When `params` is present it has
/// `taus.len() + 1` entries, one per segment (non-conjugate models only).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChangepointConfiguration {
    taus: Vec<f64>,
    params: Option<Vec<f64>>,
}

impl ChangepointConfiguration {
    /// A configuration without changepoints or parameters.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(taus: Vec<f64>, params: Option<Vec<f64>>) -> Result<Self> {
        if taus.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid_config("non-finite changepoint"));
        }
        if taus.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid_config(
                "changepoints must be strictly increasing",
            ));
        }
        if let Some(p) = &params {
            if p.len() != taus.len() + 1 {
                return Err(Error::invalid_config(format!(
                    "{} changepoints need {} segment parameters, got {}",
                    taus.len(),
                    taus.len() + 1,
                    p.len()
                )));
            }
        }
        Ok(Self { taus, params })
    }

    pub(crate) fn from_parts(taus: Vec<f64>, params: Option<Vec<f64>>) -> Self {
        debug_assert!(taus.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(params.as_ref().is_none_or(|p| p.len() == taus.len() + 1));
        Self { taus, params }
    }

    /// Checks that every changepoint lies in the open interval `(0, horizon)`.
    pub fn validate(&self, horizon: f64) -> Result<()> {
        match (self.taus.first(), self.taus.last()) {
            (Some(&first), Some(&last)) if first <= 0.0 || last >= horizon => {
                Err(Error::invalid_config(format!(
                    "changepoints must lie in (0, {horizon}); got [{first}, {last}]"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Number of changepoints `k`.
    pub fn k(&self) -> usize {
        self.taus.len()
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn params(&self) -> Option<&[f64]> {
        self.params.as_deref()
    }

    /// The most recent changepoint, or `0.0` when there is none.
    pub fn last_tau(&self) -> f64 {
        self.taus.last().copied().unwrap_or(0.0)
    }

    /// Number of changepoints at or before `t`.
    pub fn count_up_to(&self, t: f64) -> usize {
        self.taus.partition_point(|&x| x <= t)
    }

    pub fn into_parts(self) -> (Vec<f64>, Option<Vec<f64>>) {
        (self.taus, self.params)
    }

    fn bit_key(&self) -> Vec<u64> {
        let mut key = Vec::with_capacity(2 + self.taus.len() * 2 + 1);
        key.push(self.taus.len() as u64);
        key.extend(self.taus.iter().map(|t| t.to_bits()));
        if let Some(p) = &self.params {
            key.push(u64::MAX);
            key.extend(p.iter().map(|x| x.to_bits()));
        }
        key
    }

    /// Bit key of the configuration restricted to `[0, t]`: changepoints at
    /// or before `t` and, when present, the parameters of their segments.
    pub(crate) fn prefix_key(&self, t: f64) -> Vec<u64> {
        let k = self.count_up_to(t);
        let mut key = Vec::with_capacity(2 + 2 * k);
        key.push(k as u64);
        key.extend(self.taus[..k].iter().map(|t| t.to_bits()));
        if let Some(p) = &self.params {
            key.push(u64::MAX);
            key.extend(p[..=k].iter().map(|x| x.to_bits()));
        }
        key
    }
}

/// Particles with unnormalized importance weights, stored as logs.
#[derive(Debug, Clone, Default)]
pub struct WeightedParticleSet {
    particles: Vec<ChangepointConfiguration>,
    log_weights: Vec<f64>,
}

/// Deduplicated view of a weighted set: each unique particle once, with its
/// multiplicity and the summed weight of its copies.
#[derive(Debug, Clone)]
pub struct DedupView {
    /// Index of the first occurrence of each unique particle.
    pub representatives: Vec<usize>,
    /// Number of copies `m₀` of each unique particle.
    pub multiplicities: Vec<usize>,
    /// Log of the summed weight `w̄ = Σ copies w` of each unique particle.
    pub log_wbar: Vec<f64>,
}

impl WeightedParticleSet {
    pub fn new(particles: Vec<ChangepointConfiguration>, log_weights: Vec<f64>) -> Result<Self> {
        if particles.len() != log_weights.len() {
            return Err(Error::LengthMismatch {
                old: particles.len(),
                new: log_weights.len(),
            });
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::invalid_param("log-weights must be finite or -inf"));
        }
        Ok(Self {
            particles,
            log_weights,
        })
    }

    /// Every particle with weight one.
    pub fn uniform(particles: Vec<ChangepointConfiguration>) -> Self {
        let log_weights = vec![0.0; particles.len()];
        Self {
            particles,
            log_weights,
        }
    }

    /// Builds a set from linear (not log) weights.
    pub fn from_linear(particles: Vec<ChangepointConfiguration>, weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid_param("weights must be finite and nonnegative"));
        }
        Self::new(particles, weights.iter().map(|w| w.ln()).collect())
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[ChangepointConfiguration] {
        &self.particles
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn into_parts(self) -> (Vec<ChangepointConfiguration>, Vec<f64>) {
        (self.particles, self.log_weights)
    }

    /// Weights divided by their sum.
    pub fn normalized_weights(&self) -> Result<Vec<f64>> {
        normalized_from_log(&self.log_weights)
    }

    pub fn ess(&self) -> Result<f64> {
        ess_from_log(&self.log_weights)
    }

    /// Log of the summed weight.
    pub fn log_total_weight(&self) -> f64 {
        log_sum_exp(&self.log_weights)
    }

    /// Weighted mean of `f` over the particles.
    pub fn expectation<F>(&self, mut f: F) -> Result<f64>
    where
        F: FnMut(&ChangepointConfiguration) -> f64,
    {
        let w = self.normalized_weights()?;
        Ok(self
            .particles
            .iter()
            .zip(&w)
            .filter(|(_, &w)| w > 0.0)
            .map(|(p, &w)| w * f(p))
            .sum())
    }

    /// Number of distinct particles (bitwise comparison).
    pub fn unique_count(&self) -> usize {
        let mut seen = std::collections::HashSet::with_capacity(self.len());
        self.particles.iter().filter(|p| seen.insert(p.bit_key())).count()
    }

    /// Groups bit-identical particles; order follows first occurrence.
    pub fn dedup(&self) -> DedupView {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::with_capacity(self.len());
        let mut representatives = Vec::new();
        let mut multiplicities = Vec::new();
        let mut members: Vec<Vec<f64>> = Vec::new();
        for (i, (p, &lw)) in self.particles.iter().zip(&self.log_weights).enumerate() {
            let slot = *index.entry(p.bit_key()).or_insert_with(|| {
                representatives.push(i);
                multiplicities.push(0);
                members.push(Vec::new());
                representatives.len() - 1
            });
            multiplicities[slot] += 1;
            members[slot].push(lw);
        }
        let log_wbar = members.iter().map(|m| log_sum_exp(m)).collect();
        DedupView {
            representatives,
            multiplicities,
            log_wbar,
        }
    }
}

/// `log Σ exp(x)`, returning `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn normalized_from_log(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let mut w: Vec<f64> = log_weights.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    Ok(w)
}

/// Effective sample size `(Σw)² / Σw²` of linear weights.
pub fn ess(weights: &[f64]) -> Result<f64> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid_param("weights must be finite and nonnegative"));
    }
    let max = weights.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    let (s, s2) = weights.iter().fold((0.0, 0.0), |(s, s2), &w| {
        let x = w / max;
        (s + x, s2 + x * x)
    });
    Ok(s * s / s2)
}

/// Effective sample size of log-weights; exponentiates after subtracting the max.
pub fn ess_from_log(log_weights: &[f64]) -> Result<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let (s, s2) = log_weights.iter().fold((0.0, 0.0), |(s, s2), &lw| {
        let x = (lw - max).exp();
        (s + x, s2 + x * x)
    });
    Ok(s * s / s2)
}

/// Offspring counts of systematic resampling for a fixed offset `u ∈ [0, 1/count)`.
///
/// `weights` need not be normalized. Particle `i` receives one offspring for
/// every grid point `u + j/count` falling in its slice of the cumulative
/// normalized weights.
pub fn systematic_offspring(weights: &[f64], count: usize, u: f64) -> Result<Vec<usize>> {
    if count == 0 {
        return Err(Error::invalid_param("resample count must be at least 1"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateWeights);
    }
    let step = 1.0 / count as f64;
    if !(0.0..step).contains(&u) {
        return Err(Error::invalid_param(format!("offset {u} outside [0, {step})")));
    }
    let mut offspring = vec![0usize; weights.len()];
    let mut cumulative = 0.0;
    let mut j = 0usize;
    let last_positive = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    for (i, &w) in weights.iter().enumerate() {
        cumulative += w / total;
        // Rounding may leave the final cumulative just under 1; the last
        // positive-weight particle absorbs any remaining grid points.
        let bound = if i == last_positive { f64::INFINITY } else { cumulative };
        while j < count && u + j as f64 * step < bound {
            offspring[i] += 1;
            j += 1;
        }
        if j == count {
            break;
        }
    }
    Ok(offspring)
}

/// Ancestor indices for systematic resampling with offset `u`.
pub fn systematic_indices(weights: &[f64], count: usize, u: f64) -> Result<Vec<usize>> {
    let offspring = systematic_offspring(weights, count, u)?;
    Ok(offspring
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i, c))
        .collect())
}

/// Systematic resampling to `count` unweighted particles.
pub fn systematic_resample<R: Rng + ?Sized>(
    set: &WeightedParticleSet,
    count: usize,
    rng: &mut R,
) -> Result<WeightedParticleSet> {
    if count == 0 {
        return Err(Error::invalid_param("resample count must be at least 1"));
    }
    let u = rng.random::<f64>() / count as f64;
    systematic_resample_with_offset(set, count, u)
}

pub fn systematic_resample_with_offset(
    set: &WeightedParticleSet,
    count: usize,
    u: f64,
) -> Result<WeightedParticleSet> {
    let weights = set.normalized_weights()?;
    let indices = systematic_indices(&weights, count, u)?;
    let particles = indices.iter().map(|&i| set.particles[i].clone()).collect();
    Ok(WeightedParticleSet::uniform(particles))
}

/// One batch of the greedy replication loop: particle `index` received
/// `copies` extra replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicationStep {
    pub index: usize,
    pub copies: usize,
}

/// Multiplicities chosen by the greedy replication loop, plus its trace.
#[derive(Debug, Clone)]
pub struct ReplicationPlan {
    pub multiplicities: Vec<usize>,
    pub steps: Vec<ReplicationStep>,
}

/// Heap entry ordered by delta, then by lower index on ties.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    delta: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.delta
            .total_cmp(&other.delta)
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// Greedy choice of multiplicities `m ≥ m₀` with `Σm = target` that reduces
/// `Σ (w̄ᵢ/mᵢ)²`.
///
/// `delta[i] = w̄ᵢ² / ((mᵢ+1) mᵢ)` is the decrease in the sum of squared
/// weights from one more copy of particle `i`. Each batch gives the current
/// best particle just enough copies that it stops being the best.
pub fn replication_plan(wbar: &[f64], m0: &[usize], target: usize) -> Result<ReplicationPlan> {
    if wbar.is_empty() || wbar.len() != m0.len() {
        return Err(Error::Empty);
    }
    if m0.contains(&0) {
        return Err(Error::invalid_param("multiplicities must be positive"));
    }
    let current: usize = m0.iter().sum();
    if target < current {
        return Err(Error::ShrinkRequested {
            from: current,
            to: target,
        });
    }
    // Scale so the largest weight is one; the loop is scale invariant.
    let scale = wbar.iter().copied().fold(0.0, f64::max);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::DegenerateWeights);
    }
    let w2: Vec<f64> = wbar.iter().map(|w| (w / scale).powi(2)).collect();
    let mut m = m0.to_vec();
    let mut total = current;
    let delta_of = |w2: f64, m: usize| w2 / ((m as f64 + 1.0) * m as f64);
    let mut heap: BinaryHeap<Candidate> = w2
        .iter()
        .zip(&m)
        .enumerate()
        .map(|(index, (&w, &m))| Candidate {
            delta: delta_of(w, m),
            index,
        })
        .collect();
    let mut steps = Vec::new();
    let mut best = heap.pop().expect("nonempty").index;

    while total < target {
        let remaining = target - total;
        let copies = match heap.peek() {
            Some(second) if second.delta > 0.0 => {
                // Smallest x with w̄²/((m+x+1)(m+x)) < δ_second.
                let root = (w2[best] / second.delta + 0.25).sqrt() - 0.5 - m[best] as f64;
                let x = root.ceil().max(1.0);
                if x >= remaining as f64 { remaining } else { x as usize }
            }
            _ => remaining,
        };
        m[best] += copies;
        total += copies;
        steps.push(ReplicationStep { index: best, copies });
        heap.push(Candidate {
            delta: delta_of(w2[best], m[best]),
            index: best,
        });
        best = heap.pop().expect("nonempty").index;
    }
    Ok(ReplicationPlan {
        multiplicities: m,
        steps,
    })
}

/// Grows a weighted set to exactly `target` particles.
///
/// Each unique particle `i` appears `mᵢ` times with weight `w̄ᵢ/mᵢ`, so the
/// weighted empirical measure is unchanged while `Σw²` does not increase.
pub fn replicate_to(set: &WeightedParticleSet, target: usize) -> Result<WeightedParticleSet> {
    if set.is_empty() {
        return Err(Error::Empty);
    }
    if target < set.len() {
        return Err(Error::ShrinkRequested {
            from: set.len(),
            to: target,
        });
    }
    if target == set.len() {
        return Ok(set.clone());
    }
    let view = set.dedup();
    let max = view
        .log_wbar
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let wbar: Vec<f64> = view.log_wbar.iter().map(|lw| (lw - max).exp()).collect();
    let plan = replication_plan(&wbar, &view.multiplicities, target)?;

    let mut particles = Vec::with_capacity(target);
    let mut log_weights = Vec::with_capacity(target);
    for ((&rep, &lwbar), &m) in view
        .representatives
        .iter()
        .zip(&view.log_wbar)
        .zip(&plan.multiplicities)
    {
        let lw = lwbar - (m as f64).ln();
        for _ in 0..m {
            particles.push(set.particles[rep].clone());
            log_weights.push(lw);
        }
    }
    Ok(WeightedParticleSet {
        particles,
        log_weights,
    })
}

/// Extends `new` to `target` entries by cyclic copying: entry `i` is
/// `new[i mod len]`.
pub fn pad_new_particles<T: Clone>(new: &[T], target: usize) -> Result<Vec<T>> {
    if new.is_empty() {
        return Err(Error::Empty);
    }
    if target < new.len() {
        return Err(Error::ShrinkRequested {
            from: new.len(),
            to: target,
        });
    }
    Ok((0..target).map(|i| new[i % new.len()].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(taus: &[f64]) -> ChangepointConfiguration {
        ChangepointConfiguration::new(taus.to_vec(), None).unwrap()
    }

    #[test]
    fn ess_examples() {
        assert!((ess(&[1.0, 1.0, 1.0, 1.0]).unwrap() - 4.0).abs() < 1e-12);
        assert!((ess(&[2.0, 0.0, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((ess(&[0.5, 0.3, 0.2]).unwrap() - 1.0 / 0.38).abs() < 1e-12);
        assert!(matches!(ess(&[0.0, 0.0]), Err(Error::DegenerateWeights)));
    }

    #[test]
    fn ess_from_log_survives_huge_weights() {
        let lw = [1000.0, 1000.0, f64::NEG_INFINITY];
        assert!((ess_from_log(&lw).unwrap() - 2.0).abs() < 1e-12);
        assert!(ess_from_log(&[f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn systematic_hand_trace() {
        // grid {0.01, 0.21, 0.41, 0.61, 0.81} against cumulative (0.5, 0.8, 1.0)
        let off = systematic_offspring(&[0.5, 0.3, 0.2], 5, 0.01).unwrap();
        assert_eq!(off, vec![3, 1, 1]);
    }

    #[test]
    fn systematic_single_particle_repeats() {
        let set = WeightedParticleSet::uniform(vec![cfg(&[1.0])]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = systematic_resample(&set, 7, &mut rng).unwrap();
        assert_eq!(out.len(), 7);
        assert!(out.particles().iter().all(|p| p.taus() == [1.0]));
        assert!(out.log_weights().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn systematic_rejects_bad_input() {
        assert!(systematic_offspring(&[0.0, 0.0], 3, 0.1).is_err());
        assert!(systematic_offspring(&[1.0], 0, 0.0).is_err());
        assert!(systematic_offspring(&[1.0], 2, 0.6).is_err());
    }

    #[test]
    fn zero_weight_particles_get_no_offspring() {
        let off = systematic_offspring(&[0.0, 1.0, 0.0], 4, 0.2).unwrap();
        assert_eq!(off, vec![0, 4, 0]);
    }

    #[test]
    fn replicate_hand_trace() {
        let set = WeightedParticleSet::from_linear(
            vec![cfg(&[1.0]), cfg(&[2.0]), cfg(&[3.0])],
            &[0.7, 0.2, 0.1],
        )
        .unwrap();
        let out = replicate_to(&set, 5).unwrap();
        assert_eq!(out.len(), 5);
        let w: Vec<f64> = out.log_weights().iter().map(|x| x.exp()).collect();
        let view = out.dedup();
        assert_eq!(view.multiplicities, vec![3, 1, 1]);
        for &x in &w[..3] {
            assert!((x - 0.7 / 3.0).abs() < 1e-12);
        }
        assert!((w[3] - 0.2).abs() < 1e-12 && (w[4] - 0.1).abs() < 1e-12);
        let s2: f64 = w.iter().map(|x| x * x).sum();
        assert!((s2 - 0.213_333_333_333_333_3).abs() < 1e-12);
    }

    #[test]
    fn replicate_same_size_is_identity() {
        let set = WeightedParticleSet::from_linear(vec![cfg(&[1.0]), cfg(&[])], &[0.3, 0.9])
            .unwrap();
        let out = replicate_to(&set, 2).unwrap();
        assert_eq!(out.particles(), set.particles());
        assert_eq!(out.log_weights(), set.log_weights());
    }

    #[test]
    fn replicate_rejects_shrink() {
        let set = WeightedParticleSet::uniform(vec![cfg(&[]), cfg(&[1.0])]);
        assert!(matches!(
            replicate_to(&set, 1),
            Err(Error::ShrinkRequested { from: 2, to: 1 })
        ));
    }

    #[test]
    fn replicate_merges_existing_duplicates() {
        // two copies of the same particle are treated as one unique particle
        let set = WeightedParticleSet::from_linear(
            vec![cfg(&[]), cfg(&[1.0]), cfg(&[])],
            &[0.4, 0.2, 0.4],
        )
        .unwrap();
        let view = set.dedup();
        assert_eq!(view.multiplicities, vec![2, 1]);
        assert!((view.log_wbar[0].exp() - 0.8).abs() < 1e-12);
        let out = replicate_to(&set, 6).unwrap();
        let view = out.dedup();
        assert_eq!(view.multiplicities.iter().sum::<usize>(), 6);
        assert!((out.log_total_weight().exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pad_examples() {
        assert_eq!(pad_new_particles(&['a', 'b'], 5).unwrap(), vec!['a', 'b', 'a', 'b', 'a']);
        assert_eq!(pad_new_particles(&['a'], 3).unwrap(), vec!['a', 'a', 'a']);
        assert_eq!(pad_new_particles(&['a', 'b', 'c'], 3).unwrap(), vec!['a', 'b', 'c']);
        assert!(matches!(pad_new_particles::<u8>(&[], 3), Err(Error::Empty)));
    }

    #[test]
    fn configuration_invariants() {
        assert!(ChangepointConfiguration::new(vec![3.0, 1.0], None).is_err());
        assert!(ChangepointConfiguration::new(vec![1.0, 1.0], None).is_err());
        assert!(ChangepointConfiguration::new(vec![1.0], Some(vec![1.0])).is_err());
        let c = ChangepointConfiguration::new(vec![1.0, 2.0], Some(vec![1.0, 2.0, 3.0])).unwrap();
        assert!(c.validate(3.0).is_ok());
        assert!(c.validate(2.0).is_err());
        assert_eq!(c.last_tau(), 2.0);
        assert_eq!(ChangepointConfiguration::empty().last_tau(), 0.0);
    }
}
