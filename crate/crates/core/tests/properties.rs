use std::path::PathBuf;

use cpsmc::io::{format_events, parse_events, ModelKind, RunConfig};
use cpsmc::models::{sncp_log_likelihood, sncp_prior_log_density, PoissonGammaModel, SegmentModel};
use cpsmc::multistream::{allocate, stream_rng, AllocationTiming, StreamBudget};
use cpsmc::particles::{ess, pad_new_particles, replicate_to, systematic_offspring};
use cpsmc::smc::{smc_update, SmcSettings, SmcState, TStarRule};
use cpsmc::{ChangepointConfiguration, EventStream, WeightedParticleSet};
use proptest::prelude::*;

fn linear(set: &WeightedParticleSet) -> Vec<f64> {
    set.log_weights().iter().map(|l| l.exp()).collect()
}

/// Particles labelled by `labels`, so equal labels mean equal particles.
fn labelled_set(labels: &[u8], weights: &[f64]) -> WeightedParticleSet {
    let particles = labels
        .iter()
        .map(|&l| ChangepointConfiguration::new(vec![1.0 + f64::from(l)], None).unwrap())
        .collect();
    WeightedParticleSet::from_linear(particles, weights).unwrap()
}

fn set_strategy() -> impl Strategy<Value = (Vec<u8>, Vec<f64>)> {
    (1usize..10).prop_flat_map(|n| (prop::collection::vec(0u8..6, n), prop::collection::vec(0.001f64..1.0, n)))
}

proptest! {
    #[test]
    fn replication_conserves_mass_and_shrinks_squares((labels, w) in set_strategy(), extra in 0usize..15) {
        let set = labelled_set(&labels, &w);
        let target = set.len() + extra;
        let out = replicate_to(&set, target).unwrap();
        prop_assert_eq!(out.len(), target);
        let (a, b) = (linear(&set), linear(&out));
        let (s0, s1): (f64, f64) = (a.iter().sum(), b.iter().sum());
        prop_assert!((s1 - s0).abs() <= 1e-12 * s0);
        let q0: f64 = a.iter().map(|x| x * x).sum();
        let q1: f64 = b.iter().map(|x| x * x).sum();
        prop_assert!(q1 <= q0 * (1.0 + 1e-12));
        prop_assert!(ess(&b).unwrap() >= ess(&a).unwrap() * (1.0 - 1e-12));
    }

    #[test]
    fn replicas_share_equal_weights((labels, w) in set_strategy(), extra in 1usize..15) {
        let set = labelled_set(&labels, &w);
        let out = replicate_to(&set, set.len() + extra).unwrap();
        for (p, lw) in out.particles().iter().zip(out.log_weights()) {
            for (q, lv) in out.particles().iter().zip(out.log_weights()) {
                if p == q {
                    prop_assert!((lw - lv).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn heavier_particles_get_at_least_as_many_copies(w in prop::collection::vec(0.001f64..1.0, 1..8), extra in 0usize..15) {
        let labels: Vec<u8> = (0..w.len() as u8).collect();
        let set = labelled_set(&labels, &w);
        let out = replicate_to(&set, set.len() + extra).unwrap();
        let copies: Vec<usize> = set.particles().iter().map(|p| out.particles().iter().filter(|q| *q == p).count()).collect();
        for i in 0..w.len() {
            for j in 0..w.len() {
                if w[i] > w[j] {
                    prop_assert!(copies[i] >= copies[j], "weights {:?} copies {:?}", w, copies);
                }
            }
        }
    }

    #[test]
    fn replication_and_padding_keep_expectations((labels, w) in set_strategy(), extra in 0usize..15) {
        let set = labelled_set(&labels, &w);
        let f = |p: &ChangepointConfiguration| p.taus()[0].powi(2) - 3.0 * p.taus()[0];
        let before = set.expectation(f).unwrap();
        let out = replicate_to(&set, set.len() + extra).unwrap();
        prop_assert!((out.expectation(f).unwrap() - before).abs() <= 1e-12 * before.abs().max(1.0));
        let padded = pad_new_particles(set.particles(), set.len() + extra).unwrap();
        for (i, p) in padded.iter().enumerate() {
            prop_assert_eq!(p, &set.particles()[i % set.len()]);
        }
    }

    #[test]
    fn ess_lies_between_one_and_n(w in prop::collection::vec(0.0f64..1.0, 1..50)) {
        prop_assume!(w.iter().any(|&x| x > 0.0));
        let e = ess(&w).unwrap();
        prop_assert!(e >= 1.0 - 1e-12 && e <= w.len() as f64 + 1e-9);
    }

    #[test]
    fn systematic_offspring_round_expected_counts(w in prop::collection::vec(0.0f64..1.0, 1..20), count in 1usize..40, frac in 0.0f64..1.0) {
        let total: f64 = w.iter().sum();
        prop_assume!(total > 0.0);
        let u = frac / count as f64;
        let o = systematic_offspring(&w, count, u).unwrap();
        prop_assert_eq!(o.iter().sum::<usize>(), count);
        for (oi, wi) in o.iter().zip(&w) {
            prop_assert!((*oi as f64 - count as f64 * wi / total).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn allocations_sum_to_total(scores in prop::collection::vec(0.0f64..10.0, 1..40), floor in 0usize..50, spare in 0usize..5000) {
        let total = floor * scores.len() + spare;
        let a = allocate(&scores, &StreamBudget::new(total, floor)).unwrap();
        prop_assert_eq!(a.iter().sum::<usize>(), total);
        prop_assert!(a.iter().all(|&m| m >= floor));
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if scores[i] > scores[j] {
                    prop_assert!(a[i] >= a[j]);
                }
            }
        }
    }

    #[test]
    fn events_round_trip(mut times in prop::collection::vec(0.0f64..1e6, 0..60)) {
        times.sort_by(f64::total_cmp);
        let parsed = parse_events(&format_events(&times), true).unwrap();
        prop_assert_eq!(parsed.times(), &times[..]);
    }

    #[test]
    fn config_round_trips(
        nu in 1e-4f64..10.0,
        alpha in 0.01f64..10.0,
        beta in 0.01f64..10.0,
        particles in 1usize..100_000,
        threshold in 0.0f64..1.0,
        burn_in in 0usize..1000,
        extra in 1usize..5000,
        chained in proptest::option::of((0.1f64..10.0, 0.1f64..10.0, 0.1f64..10.0)),
        grid in proptest::option::of(prop::collection::vec(0.01f64..5.0, 1..6)),
        seed in any::<u64>(),
        flags in any::<(bool, bool, bool, bool)>(),
    ) {
        let cfg = RunConfig {
            model: if flags.0 { ModelKind::ShotNoise } else { ModelKind::PoissonGamma },
            nu,
            alpha,
            beta,
            alpha_dm: chained.map(|c| c.0),
            beta_dm: chained.map(|c| c.1),
            chi: chained.map(|c| c.2),
            update_times: grid.map(|g| g.iter().scan(0.0, |t, d| { *t += d; Some(*t) }).collect()),
            particles,
            ess_threshold: threshold,
            iterations: burn_in + extra,
            burn_in,
            t_star_rule: if flags.1 { TStarRule::PreviousUpdate } else { TStarRule::Origin },
            permute: flags.2,
            allocation_timing: if flags.3 { AllocationTiming::Lagged } else { AllocationTiming::Pilot },
            seed,
            output: PathBuf::from("results/run"),
            ..RunConfig::default()
        };
        prop_assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn violated_shot_is_impossible(
        lambda0 in 0.1f64..10.0,
        tau in 0.5f64..9.5,
        shrink in 0.0f64..1.0,
        kappa in 0.001f64..1.0,
    ) {
        // the second level sits at or below the decayed first level
        let before = lambda0 * (-kappa * tau).exp();
        let config = ChangepointConfiguration::new(vec![tau], Some(vec![lambda0, before * shrink])).unwrap();
        let events = EventStream::new(vec![0.3, 4.0, 9.9]).unwrap();
        let window = events.window(0.0, 10.0).unwrap();
        prop_assert_eq!(sncp_log_likelihood(&config, &window, kappa).unwrap(), f64::NEG_INFINITY);
        prop_assert_eq!(sncp_prior_log_density(&config, 0.0, kappa, 2.0 / 3.0).unwrap(), f64::NEG_INFINITY);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn filtered_configurations_stay_sorted_inside_the_horizon(
        mut times in prop::collection::vec(0.0f64..20.0, 0..40),
        seed in any::<u64>(),
    ) {
        times.sort_by(f64::total_cmp);
        let events = EventStream::new(times).unwrap();
        let model = SegmentModel::from(PoissonGammaModel::new(0.2, 1.0, 1.0).unwrap());
        let mut settings = SmcSettings { n_particles: 100, ..SmcSettings::default() };
        settings.rjmcmc.iterations = 400;
        settings.rjmcmc.burn_in = 100;
        let mut rng = stream_rng(seed, 0);
        let mut state = SmcState::new();
        for t in [5.0, 10.0, 15.0, 20.0] {
            smc_update(&mut state, &model, &events, t, &settings, &mut rng).unwrap();
            for p in state.set.particles() {
                let taus = p.taus();
                prop_assert!(taus.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(taus.iter().all(|&x| x > 0.0 && x < t));
            }
        }
    }
}
