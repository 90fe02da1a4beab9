mod common;

use cpsmc::models::{gamma_segment_log_evidence, PoissonGammaModel, SegmentModel, TruncatedGamma};
use cpsmc::multistream::{run_parallel, stream_rng, AllocationTiming, MultiStreamSettings};
use cpsmc::particles::systematic_offspring;
use cpsmc::rjmcmc::{sample_window_posterior, RjmcmcSettings};
use cpsmc::simulate::{simulate_piecewise_poisson, simulate_piecewise_poisson_rescaled};
use cpsmc::smc::{smc_update, SmcSettings, SmcState};
use cpsmc::smcmc::{smcmc_run, SmcmcSettings};
use cpsmc::EventStream;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use common::{changepoint_masses, chi_square_p, ks_two_sample, log_evidence_quadrature, pool_cells};

#[test]
fn systematic_offspring_are_unbiased() {
    let w = [0.05, 0.4, 0.15, 0.3, 0.1];
    let count = 7;
    let seeds = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut sum = [0.0; 5];
    let mut sq = [0.0; 5];
    for _ in 0..seeds {
        let u = rng.random::<f64>() / count as f64;
        let o = systematic_offspring(&w, count, u).unwrap();
        assert_eq!(o.iter().sum::<usize>(), count);
        for i in 0..5 {
            sum[i] += o[i] as f64;
            sq[i] += (o[i] * o[i]) as f64;
        }
    }
    for i in 0..5 {
        let mean = sum[i] / seeds as f64;
        let var = sq[i] / seeds as f64 - mean * mean;
        let se = (var / seeds as f64).sqrt().max(1e-12);
        let want = count as f64 * w[i];
        assert!((mean - want).abs() <= 3.0 * se + 1e-12, "particle {i}: {mean} vs {want}");
    }
}

#[test]
fn evidence_example_matches_quadrature() {
    let got = gamma_segment_log_evidence(3, 2.5, 0.1, 0.1).unwrap();
    let want = log_evidence_quadrature(3, 2.5, 0.1, 0.1);
    assert!((got - want).abs() < 1e-8, "{got} vs {want}");
}

#[test]
fn truncated_exponential_matches_rejection() {
    let (rate, lo, hi) = (1.7, 0.3, 2.0);
    let dist = TruncatedGamma::new(1.0, rate, lo, hi).unwrap();
    let exp = Exp::new(rate).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 10_000;
    let drawn: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
    let inverted: Vec<f64> = (0..n).map(|_| dist.sample_inverse(&mut rng)).collect();
    let mut rejected = Vec::with_capacity(n);
    while rejected.len() < n {
        let x = exp.sample(&mut rng);
        if x > lo && x < hi {
            rejected.push(x);
        }
    }
    for xs in [&drawn, &inverted] {
        let (_, p) = ks_two_sample(xs, &rejected);
        assert!(p > 0.01, "p = {p}");
    }
}

fn window_k_counts(
    model: &SegmentModel,
    events: &EventStream,
    interval: (f64, f64),
    data_start: f64,
    draws: usize,
    seed: u64,
) -> Vec<usize> {
    let settings = RjmcmcSettings {
        iterations: 100 * draws,
        burn_in: 5000,
        ..RjmcmcSettings::default()
    };
    let window = events.window(data_start, interval.1).unwrap();
    let sample = sample_window_posterior(model, interval, &window, &settings, draws, &mut stream_rng(seed, 0)).unwrap();
    let mut counts = vec![0; 8];
    for c in sample {
        counts[c.k().min(7)] += 1;
    }
    counts
}

#[test]
fn empty_window_keeps_no_changepoints() {
    let model = SegmentModel::from(PoissonGammaModel::new(0.01, 1.0, 1.0).unwrap());
    let events = EventStream::new(vec![]).unwrap();
    let masses = changepoint_masses(&[], 0.0, 0.0, 1.0, 0.01, 1.0, 1.0, 2);
    assert!(masses[0] / masses.iter().sum::<f64>() >= 0.95);
    let counts = window_k_counts(&model, &events, (0.0, 1.0), 0.0, 2000, 1);
    assert!(counts[0] as f64 >= 0.95 * 2000.0, "{counts:?}");
}

#[test]
fn burst_forces_a_change() {
    let times = [5.0, 5.02, 5.04];
    let model = SegmentModel::from(PoissonGammaModel::new(0.2, 1.0, 1.0).unwrap());
    let events = EventStream::new(times.to_vec()).unwrap();
    let masses = changepoint_masses(&times, 0.0, 0.0, 10.0, 0.2, 1.0, 1.0, 3);
    let mode = |xs: &[f64]| (0..xs.len()).max_by(|&a, &b| xs[a].total_cmp(&xs[b])).unwrap();
    assert!(mode(&masses) >= 1, "{masses:?}");
    let counts = window_k_counts(&model, &events, (0.0, 10.0), 0.0, 2000, 2);
    let counts: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    assert!(mode(&counts) >= 1, "{counts:?}");
}

#[test]
fn window_posterior_matches_enumeration() {
    let times = [0.6, 2.1, 2.3, 2.45];
    let model = SegmentModel::from(PoissonGammaModel::new(0.3, 1.0, 1.0).unwrap());
    let events = EventStream::new(times.to_vec()).unwrap();
    // data from 0.5, changepoints in (1, 3]: three events inside the window
    let masses = changepoint_masses(&times, 0.5, 1.0, 3.0, 0.3, 1.0, 1.0, 3);
    let z: f64 = masses.iter().sum();
    let draws = 4000;
    let counts = window_k_counts(&model, &events, (1.0, 3.0), 0.5, draws, 3);
    assert!(counts[4..].iter().sum::<usize>() as f64 <= 0.01 * draws as f64);
    let observed: Vec<f64> = (0..4).map(|k| counts[k] as f64).collect();
    let expected: Vec<f64> = masses.iter().map(|m| m / z * draws as f64).collect();
    let (o, e) = pool_cells(&observed, &expected, 5.0);
    let p = chi_square_p(&o, &e);
    assert!(p > 0.01, "p = {p}, observed {observed:?}, expected {expected:?}");
}

#[test]
fn weight_ratio_estimates_normalizer_ratio() {
    let times = [0.4, 0.9, 1.3, 1.35, 2.6];
    let (nu, a, b) = (0.1, 1.0, 1.0);
    let model = SegmentModel::from(PoissonGammaModel::new(nu, a, b).unwrap());
    let events = EventStream::new(times.to_vec()).unwrap();
    let grid = [1.0, 2.0, 3.0];
    let settings = SmcSettings {
        n_particles: 400,
        ..SmcSettings::default()
    };
    let z = |data_start: f64, lo: f64, hi: f64| -> f64 {
        changepoint_masses(&times, data_start, lo, hi, nu, a, b, 3).iter().sum()
    };
    let mut ratios = [Vec::new(), Vec::new()];
    let mut oracles = [Vec::new(), Vec::new()];
    for seed in 0..50 {
        let mut rng = stream_rng(seed, 0);
        let mut state = SmcState::new();
        for &t in &grid {
            smc_update(&mut state, &model, &events, t, &settings, &mut rng).unwrap();
        }
        for n in 1..3 {
            let d = &state.history[n];
            ratios[n - 1].push(d.log_weight_ratio.exp());
            oracles[n - 1].push(z(0.0, 0.0, d.t_now) / (z(0.0, 0.0, d.t_prev) * z(d.t_star, d.t_prev, d.t_now)));
        }
    }
    for n in 0..2 {
        let xs = &ratios[n];
        let m = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / m;
        let se = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt();
        // t* varies slightly between runs, so the oracle does too
        let want = oracles[n].iter().sum::<f64>() / m;
        assert!((mean - want).abs() <= 3.0 * se, "update {}: {mean} ± {se} vs {want}", n + 1);
    }
}

#[test]
fn quiet_stream_settles_on_no_changepoints() {
    let (nu, a, b) = (0.002, 1.0, 1.0);
    let model = SegmentModel::from(PoissonGammaModel::new(nu, a, b).unwrap());
    let events = EventStream::new(vec![]).unwrap();
    let settings = SmcSettings {
        n_particles: 1000,
        ..SmcSettings::default()
    };
    let mut rng = stream_rng(4, 0);
    let mut state = SmcState::new();
    for t in 1..=10 {
        smc_update(&mut state, &model, &events, t as f64, &settings, &mut rng).unwrap();
    }
    let masses = changepoint_masses(&[], 0.0, 0.0, 10.0, nu, a, b, 3);
    let exact = masses[0] / masses.iter().sum::<f64>();
    let got = state.set.expectation(|p| f64::from(p.k() == 0)).unwrap();
    assert!(exact >= 0.9 && got >= 0.9, "exact {exact}, smc {got}");
}

#[test]
fn smcmc_seeds_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sim = simulate_piecewise_poisson(&[12.0], &[1.0, 4.0], 30.0, &mut rng).unwrap();
    let events = EventStream::new(sim.events).unwrap();
    let model = SegmentModel::from(PoissonGammaModel::new(0.05, 1.0, 1.0).unwrap());
    let grid: Vec<f64> = (1..=10).map(|i| 3.0 * i as f64).collect();
    let mut settings = SmcmcSettings::default();
    settings.rjmcmc.iterations = 40_000;
    settings.rjmcmc.burn_in = 4_000;
    let x = smcmc_run(&model, &events, &grid, &settings, &mut stream_rng(1, 0)).unwrap();
    let y = smcmc_run(&model, &events, &grid, &settings, &mut stream_rng(2, 0)).unwrap();
    for (u, v) in x.iter().zip(&y) {
        let se = (u.intensity_se.powi(2) + v.intensity_se.powi(2)).sqrt();
        let d = u.intensity.unwrap().mean - v.intensity.unwrap().mean;
        assert!(d.abs() <= 3.0 * se, "t = {}: difference {d}, s.e. {se}", u.t_now);
    }
}

#[test]
fn burst_score_dwarfs_quiet_windows() {
    let model = SegmentModel::from(PoissonGammaModel::new(0.02, 1.0, 0.2).unwrap());
    let grid: Vec<f64> = (1..=30).map(f64::from).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let quiet = simulate_piecewise_poisson(&[], &[5.0], 30.0, &mut rng).unwrap();
    let burst = simulate_piecewise_poisson(&[20.3, 20.7], &[5.0, 60.0, 5.0], 30.0, &mut rng).unwrap();
    let streams = [quiet.events, burst.events].map(|e| EventStream::new(e).unwrap());
    let mut smc = SmcSettings {
        n_particles: 200,
        ..SmcSettings::default()
    };
    smc.rjmcmc.iterations = 1000;
    smc.rjmcmc.burn_in = 200;
    let settings = MultiStreamSettings {
        smc,
        total: 400,
        floor: 50,
        timing: AllocationTiming::Pilot,
    };
    let run = run_parallel(&streams, &[model.clone(), model], &grid, &settings, 3).unwrap();
    let scores: Vec<f64> = run.log.iter().filter(|r| r.stream_id == 1).map(|r| r.score).collect();
    let mut before: Vec<f64> = scores[1..20].to_vec();
    before.sort_by(f64::total_cmp);
    let median = before[before.len() / 2];
    assert!(scores[20] >= 5.0 * median, "burst {} vs quiet median {median}", scores[20]);
}

#[test]
fn thinning_and_rescaling_agree() {
    let cps = [300.0, 700.0];
    let rates = [4.0, 15.0, 8.0];
    let a = simulate_piecewise_poisson(&cps, &rates, 1000.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = simulate_piecewise_poisson_rescaled(&cps, &rates, 1000.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert!(a.events.len() > 9000 && b.events.len() > 9000);
    let gaps = |e: &[f64]| e.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>();
    let (_, p) = ks_two_sample(&gaps(&a.events), &gaps(&b.events));
    assert!(p > 0.01, "inter-event times p = {p}");
    let (_, p) = ks_two_sample(&a.events, &b.events);
    assert!(p > 0.01, "event times p = {p}");
}
