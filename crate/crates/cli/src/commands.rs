use std::fmt::Write as _;
use std::fs;

use anyhow::{Context, Result as AnyResult};
use cpsmc::io::{load_events, write_events, RunConfig};
use cpsmc::models::SegmentModel;
use cpsmc::multistream::{run_parallel, stream_rng};
use cpsmc::output::{emit_results, CompareRow, RunResults};
use cpsmc::simulate::{simulate_stream, StreamSpec};
use cpsmc::smc::{smc_update, SmcSettings, SmcState};
use cpsmc::smcmc::smcmc_run;
use cpsmc::summary::{chained_intensity_summary, intensity_summary, unique_particle_curve, IntensitySummary};
use cpsmc::{EventStream, WeightedParticleSet};
use rand::Rng;

use crate::{ConfigArgs, Failure, MultiArgs, SimKind, SimulateArgs, StreamArgs};

fn input<T, E: Into<anyhow::Error>>(r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Input(e.into()))
}

fn runtime<T, E: Into<anyhow::Error>>(r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Runtime(e.into()))
}

fn config(args: &ConfigArgs) -> AnyResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => RunConfig::default(),
    };
    for (key, value) in args.overrides() {
        cfg.set(key, value).with_context(|| format!("--{}", key.replace('_', "-")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Prepared {
    cfg: RunConfig,
    model: SegmentModel,
    grid: Vec<f64>,
    events: EventStream,
}

fn prepare(args: &StreamArgs) -> Result<Prepared, Failure> {
    let cfg = input(config(&args.config))?;
    let events = input(
        load_events(&args.events, args.strict).with_context(|| format!("reading {}", args.events.display())),
    )?;
    Ok(Prepared {
        model: input(cfg.segment_model())?,
        grid: input(cfg.update_grid())?,
        cfg,
        events,
    })
}

fn summarize<R: Rng + ?Sized>(
    p: &Prepared,
    set: &WeightedParticleSet,
    t: f64,
    rng: &mut R,
) -> cpsmc::Result<Option<IntensitySummary>> {
    if p.cfg.model == cpsmc::io::ModelKind::PriorOnly {
        return Ok(None);
    }
    match p.cfg.chained_prior()? {
        Some(chain) if p.model.conjugate().is_some() => {
            chained_intensity_summary(&p.model, (p.cfg.alpha, p.cfg.beta), &chain, &p.events, set, t, rng).map(Some)
        }
        _ => intensity_summary(&p.model, &p.events, set, t).map(Some),
    }
}

fn filter<R: Rng + ?Sized>(
    p: &Prepared,
    settings: &SmcSettings,
    rng: &mut R,
) -> cpsmc::Result<(SmcState, Vec<IntensitySummary>)> {
    let mut state = SmcState::new();
    let mut curve = Vec::with_capacity(p.grid.len());
    for &t in &p.grid {
        smc_update(&mut state, &p.model, &p.events, t, settings, rng)?;
        if let Some(s) = summarize(p, &state.set, t, rng)? {
            curve.push(s);
        }
    }
    Ok((state, curve))
}

pub fn run(args: &StreamArgs) -> Result<(), Failure> {
    let p = prepare(args)?;
    let settings = input(p.cfg.smc_settings())?;
    let mut rng = stream_rng(p.cfg.seed, 0);
    let (state, intensity) = runtime(filter(&p, &settings, &mut rng))?;
    let unique = runtime(unique_particle_curve(&state.set, &p.grid, &mut rng))?;
    let results = RunResults {
        intensity: (p.cfg.model != cpsmc::io::ModelKind::PriorOnly).then_some(intensity),
        history: Some(state.history),
        unique: Some(unique),
        ..RunResults::default()
    };
    runtime(emit_results(&p.cfg.output, &results))
}

pub fn smcmc(args: &StreamArgs) -> Result<(), Failure> {
    let p = prepare(args)?;
    let settings = input(p.cfg.smcmc_settings())?;
    let mut rng = stream_rng(p.cfg.seed, 0);
    let updates = runtime(smcmc_run(&p.model, &p.events, &p.grid, &settings, &mut rng))?;
    let mut intensity = Vec::with_capacity(updates.len());
    for u in &updates {
        if let Some(s) = runtime(summarize(&p, &u.draws, u.t_now, &mut rng))? {
            intensity.push(s);
        }
    }
    let results = RunResults {
        intensity: Some(intensity),
        ..RunResults::default()
    };
    runtime(emit_results(&p.cfg.output, &results))
}

pub fn compare(args: &StreamArgs) -> Result<(), Failure> {
    let p = prepare(args)?;
    if p.model.conjugate().is_some_and(|c| c.intensity_posterior(0, 1.0).is_none()) {
        return Err(Failure::Input(anyhow::anyhow!("compare needs a model with an intensity")));
    }
    let smc_settings = input(p.cfg.smc_settings())?;
    let smcmc_settings = input(p.cfg.smcmc_settings())?;
    let mut rng = stream_rng(p.cfg.seed, 0);
    let (state, intensity) = runtime(filter(&p, &smc_settings, &mut rng))?;
    let mut rng = stream_rng(p.cfg.seed, 1);
    let reference = runtime(smcmc_run(&p.model, &p.events, &p.grid, &smcmc_settings, &mut rng))?;
    let rows = intensity
        .iter()
        .zip(&reference)
        .map(|(s, r)| CompareRow {
            time: s.time,
            smc_mean: s.mean,
            smcmc_mean: r.intensity.map_or(f64::NAN, |i| i.mean),
            smcmc_se: r.intensity_se,
        })
        .collect();
    let results = RunResults {
        intensity: Some(intensity),
        history: Some(state.history),
        compare: Some(rows),
        ..RunResults::default()
    };
    runtime(emit_results(&p.cfg.output, &results))
}

pub fn multi(args: &MultiArgs) -> Result<(), Failure> {
    let cfg = input(config(&args.config))?;
    let model = input(cfg.segment_model())?;
    let grid = input(cfg.update_grid())?;
    let settings = input(cfg.multi_settings())?;
    let streams = args
        .events
        .iter()
        .map(|path| load_events(path, args.strict).with_context(|| format!("reading {}", path.display())))
        .collect::<AnyResult<Vec<_>>>();
    let streams = input(streams)?;
    let models = vec![model; streams.len()];
    let run = runtime(run_parallel(&streams, &models, &grid, &settings, cfg.seed))?;
    let results = RunResults {
        allocations: Some(run.log),
        ..RunResults::default()
    };
    runtime(emit_results(&cfg.output, &results))
}

pub fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let spec = match args.kind {
        SimKind::PiecewisePoisson => StreamSpec::PiecewisePoisson {
            changepoints: args.changepoints.clone(),
            rates: args.rates.clone(),
        },
        SimKind::ShotNoise => {
            StreamSpec::ShotNoise(input(cpsmc::models::ShotNoiseCoxModel::new(args.nu, args.kappa, args.alpha))?)
        }
    };
    let mut rng = stream_rng(args.seed, 0);
    let sim = input(simulate_stream(&spec, args.horizon, &mut rng))?;
    runtime(write_events(&args.out, &sim.events))?;
    if let Some(path) = &args.truth {
        let mut text = String::from("start,level\n");
        let starts = std::iter::once(0.0).chain(sim.changepoints.iter().copied());
        for (s, l) in starts.zip(&sim.levels) {
            writeln!(text, "{s},{l}").unwrap();
        }
        runtime(fs::write(path, text))?;
    }
    Ok(())
}
