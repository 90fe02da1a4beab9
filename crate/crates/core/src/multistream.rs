//! Many independent streams under one particle budget per update.
//!
//! Every update each stream receives a share of the global budget `m*`,
//! never less than a floor, in proportion to a complexity score. Streams
//! then run their SMC updates in parallel; only the sample sizes couple them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::events::EventStream;
use crate::models::SegmentModel;
use crate::smc::{begin_update, SmcSettings, SmcState, UpdateDiagnostics};

/// Global budget `m*`, the per-stream floor, and the latest allocations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamBudget {
    pub total: usize,
    pub floor: usize,
    pub allocations: Vec<usize>,
}

impl StreamBudget {
    pub fn new(total: usize, floor: usize) -> Self {
        Self {
            total,
            floor,
            allocations: Vec::new(),
        }
    }

    pub fn check(&self, streams: usize) -> Result<()> {
        if streams == 0 || self.floor.checked_mul(streams).is_none_or(|f| f > self.total) || self.total == 0 {
            return Err(Error::InfeasibleBudget {
                floor: self.floor,
                streams,
                total: self.total,
            });
        }
        Ok(())
    }
}

/// Splits a budget across streams given their scores.
pub trait Allocator: Sync {
    fn allocate(&self, scores: &[f64], budget: &StreamBudget) -> Result<Vec<usize>>;
}

/// Floor for every stream, remainder in proportion to the scores with
/// largest-remainder rounding. All-zero scores split the remainder evenly.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProportionalAllocator;

impl Allocator for ProportionalAllocator {
    fn allocate(&self, scores: &[f64], budget: &StreamBudget) -> Result<Vec<usize>> {
        allocate(scores, budget)
    }
}

pub fn allocate(scores: &[f64], budget: &StreamBudget) -> Result<Vec<usize>> {
    let s = scores.len();
    budget.check(s)?;
    if scores.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
        return Err(Error::invalid_param("scores must be finite and nonnegative"));
    }
    let spare = budget.total - budget.floor * s;
    let sum: f64 = scores.iter().sum();
    let shares: Vec<f64> = if sum > 0.0 {
        scores.iter().map(|x| spare as f64 * x / sum).collect()
    } else {
        vec![spare as f64 / s as f64; s]
    };
    let mut out: Vec<usize> = shares.iter().map(|x| budget.floor + x.floor() as usize).collect();
    let given: usize = out.iter().sum();
    let mut left = budget.total.saturating_sub(given);
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| {
        let fa = shares[a] - shares[a].floor();
        let fb = shares[b] - shares[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    Ok(out)
}

/// Score of an update: entropy of the new-changepoint counts plus the
/// variance of the incremental log-weights.
pub fn complexity_score(diag: &UpdateDiagnostics) -> f64 {
    diag.k_entropy + diag.log_weight_variance
}

/// Which diagnostics drive the allocation at update `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AllocationTiming {
    /// A pilot of `floor` window draws at update `n` itself.
    #[default]
    Pilot,
    /// The completed update `n - 1`.
    Lagged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStreamSettings {
    pub smc: SmcSettings,
    pub total: usize,
    pub floor: usize,
    pub timing: AllocationTiming,
}

/// One row of the allocation log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationRecord {
    pub update_index: usize,
    pub stream_id: usize,
    pub score: f64,
    pub allocation: usize,
    pub ess: f64,
    pub resampled: bool,
}

#[derive(Debug, Clone)]
pub struct MultiStreamRun {
    pub states: Vec<SmcState>,
    pub log: Vec<AllocationRecord>,
}

/// Generator of stream `id` under `seed`; independent of how many streams
/// run alongside it.
pub fn stream_rng(seed: u64, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    rng
}

/// Runs every stream through `update_times` with the default allocator.
pub fn run_parallel(
    streams: &[EventStream],
    models: &[SegmentModel],
    update_times: &[f64],
    settings: &MultiStreamSettings,
    seed: u64,
) -> Result<MultiStreamRun> {
    run_parallel_with(streams, models, update_times, settings, seed, &ProportionalAllocator)
}

pub fn run_parallel_with(
    streams: &[EventStream],
    models: &[SegmentModel],
    update_times: &[f64],
    settings: &MultiStreamSettings,
    seed: u64,
    allocator: &dyn Allocator,
) -> Result<MultiStreamRun> {
    if streams.len() != models.len() {
        return Err(Error::invalid_param(format!(
            "{} streams but {} models",
            streams.len(),
            models.len()
        )));
    }
    if update_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid_param("update times must be strictly increasing"));
    }
    settings.smc.validate()?;
    let mut budget = StreamBudget::new(settings.total, settings.floor);
    budget.check(streams.len())?;
    let s = streams.len();
    let mut states: Vec<SmcState> = (0..s).map(|_| SmcState::new()).collect();
    let mut rngs: Vec<ChaCha8Rng> = (0..s).map(|j| stream_rng(seed, j)).collect();
    let mut log = Vec::with_capacity(s * update_times.len());

    for (n, &t) in update_times.iter().enumerate() {
        // one stream gets the whole budget without a pilot
        let pilot = s > 1 && settings.timing == AllocationTiming::Pilot;
        let pending = states
            .par_iter()
            .zip(rngs.par_iter_mut())
            .enumerate()
            .map(|(j, (state, rng))| {
                let mut p = begin_update(state, &models[j], &streams[j], t, &settings.smc, rng)?;
                if pilot && settings.floor > 0 {
                    p.pilot(settings.floor, rng);
                }
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        let scores: Vec<f64> = if pilot {
            pending.iter().zip(&states).map(|(p, st)| p.pilot_score(st)).collect()
        } else {
            states
                .iter()
                .map(|st| st.history.last().map_or(0.0, complexity_score))
                .collect()
        };
        budget.allocations = allocator.allocate(&scores, &budget)?;
        debug_assert_eq!(budget.allocations.iter().sum::<usize>(), budget.total);

        let diags = pending
            .into_par_iter()
            .zip(states.par_iter_mut())
            .zip(rngs.par_iter_mut())
            .zip(budget.allocations.par_iter())
            .map(|(((p, state), rng), &m)| p.finish(state, m, &settings.smc, rng))
            .collect::<Result<Vec<_>>>()?;
        for (j, d) in diags.iter().enumerate() {
            log.push(AllocationRecord {
                update_index: n,
                stream_id: j,
                score: scores[j],
                allocation: d.allocation,
                ess: d.ess,
                resampled: d.resampled,
            });
        }
    }
    Ok(MultiStreamRun { states, log })
}
