//! Event files and run configuration.
//!
//! Event files hold one decimal time per line; blank lines and lines starting
//! with `#` are skipped. Configuration files hold `key = value` lines.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::events::EventStream;
use crate::models::{ChainedGammaPrior, PoissonGammaModel, PriorOnlyModel, SegmentModel, ShotNoiseCoxModel};
use crate::multistream::{AllocationTiming, MultiStreamSettings};
use crate::rjmcmc::{BirthProposal, RjmcmcSettings};
use crate::smc::{SmcSettings, TStarRule};
use crate::smcmc::SmcmcSettings;

/// Parses event times from text. Out-of-order times are sorted unless
/// `strict` is set, in which case they are an error.
pub fn parse_events(text: &str, strict: bool) -> Result<EventStream> {
    let mut times = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let t: f64 = line.parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("not a number: {line:?}"),
        })?;
        if !t.is_finite() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("not a finite time: {line:?}"),
            });
        }
        if strict && times.last().is_some_and(|&p| t < p) {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("time {t} precedes the previous event"),
            });
        }
        times.push(t);
    }
    EventStream::new(times)
}

pub fn load_events(path: &Path, strict: bool) -> Result<EventStream> {
    parse_events(&fs::read_to_string(path)?, strict)
}

/// One time per line in shortest round-trip form.
pub fn format_events(times: &[f64]) -> String {
    let mut out = String::with_capacity(times.len() * 20);
    for t in times {
        writeln!(out, "{t}").unwrap();
    }
    out
}

pub fn write_events(path: &Path, times: &[f64]) -> Result<()> {
    fs::write(path, format_events(times))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    PoissonGamma,
    PriorOnly,
    ShotNoise,
}

impl ModelKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "poisson-gamma" => Some(Self::PoissonGamma),
            "prior-only" => Some(Self::PriorOnly),
            "shot-noise" => Some(Self::ShotNoise),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::PoissonGamma => "poisson-gamma",
            Self::PriorOnly => "prior-only",
            Self::ShotNoise => "shot-noise",
        }
    }
}

/// Everything a run needs. For the shot-noise model `alpha` is the jump-size
/// rate; for the Poisson-gamma model `alpha` and `beta` are the gamma prior.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub alpha_dm: Option<f64>,
    pub beta_dm: Option<f64>,
    pub chi: Option<f64>,
    pub update_count: usize,
    pub update_spacing: f64,
    pub update_times: Option<Vec<f64>>,
    pub particles: usize,
    pub budget: usize,
    pub floor: usize,
    pub ess_threshold: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub move_steps: usize,
    pub data_driven_birth: bool,
    pub bin_width: f64,
    pub smoothing: f64,
    pub t_star_rule: TStarRule,
    pub permute: bool,
    pub allocation_timing: AllocationTiming,
    pub smcmc_iterations: usize,
    pub smcmc_burn_in: usize,
    pub smcmc_draws: usize,
    pub smcmc_batches: usize,
    pub seed: u64,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let smc = SmcSettings::default();
        let smcmc = SmcmcSettings::default();
        Self {
            model: ModelKind::PoissonGamma,
            nu: 0.01,
            alpha: 1.0,
            beta: 1.0,
            kappa: 0.01,
            alpha_dm: None,
            beta_dm: None,
            chi: None,
            update_count: 10,
            update_spacing: 1.0,
            update_times: None,
            particles: smc.n_particles,
            budget: 10_000,
            floor: 500,
            ess_threshold: smc.ess_threshold,
            iterations: smc.rjmcmc.iterations,
            burn_in: smc.rjmcmc.burn_in,
            move_steps: smc.move_steps,
            data_driven_birth: smc.rjmcmc.data_driven_birth,
            bin_width: smc.rjmcmc.birth_proposal.bin_width,
            smoothing: smc.rjmcmc.birth_proposal.smoothing,
            t_star_rule: smc.t_star_rule,
            permute: smc.permute,
            allocation_timing: AllocationTiming::default(),
            smcmc_iterations: smcmc.rjmcmc.iterations,
            smcmc_burn_in: smcmc.rjmcmc.burn_in,
            smcmc_draws: smcmc.draws,
            smcmc_batches: smcmc.batches,
            seed: 0,
            output: PathBuf::from("out"),
        }
    }
}

/// Keys accepted by [`RunConfig::set`].
pub const CONFIG_KEYS: &[&str] = &[
    "model",
    "nu",
    "alpha",
    "beta",
    "kappa",
    "alpha_dm",
    "beta_dm",
    "chi",
    "update_count",
    "update_spacing",
    "update_times",
    "particles",
    "budget",
    "floor",
    "ess_threshold",
    "iterations",
    "burn_in",
    "move_steps",
    "data_driven_birth",
    "bin_width",
    "smoothing",
    "t_star_rule",
    "permute",
    "allocation_timing",
    "smcmc_iterations",
    "smcmc_burn_in",
    "smcmc_draws",
    "smcmc_batches",
    "seed",
    "output",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid_config(format!("{key}: cannot parse {value:?}")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::invalid_config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl RunConfig {
    /// Parses `key = value` lines over the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "model" => {
                self.model = ModelKind::parse(value).ok_or_else(|| {
                    Error::invalid_config(format!(
                        "model: expected poisson-gamma, prior-only or shot-noise, got {value:?}"
                    ))
                })?
            }
            "nu" => self.nu = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "kappa" => self.kappa = num(key, value)?,
            "alpha_dm" => self.alpha_dm = Some(num(key, value)?),
            "beta_dm" => self.beta_dm = Some(num(key, value)?),
            "chi" => self.chi = Some(num(key, value)?),
            "update_count" => self.update_count = num(key, value)?,
            "update_spacing" => self.update_spacing = num(key, value)?,
            "update_times" => {
                let times = value
                    .split(',')
                    .map(|s| num::<f64>(key, s.trim()))
                    .collect::<Result<Vec<_>>>()?;
                self.update_times = Some(times);
            }
            "particles" => self.particles = num(key, value)?,
            "budget" => self.budget = num(key, value)?,
            "floor" => self.floor = num(key, value)?,
            "ess_threshold" => self.ess_threshold = num(key, value)?,
            "iterations" => self.iterations = num(key, value)?,
            "burn_in" => self.burn_in = num(key, value)?,
            "move_steps" => self.move_steps = num(key, value)?,
            "data_driven_birth" => self.data_driven_birth = flag(key, value)?,
            "bin_width" => self.bin_width = num(key, value)?,
            "smoothing" => self.smoothing = num(key, value)?,
            "t_star_rule" => {
                self.t_star_rule = match value {
                    "origin" => TStarRule::Origin,
                    "previous-update" => TStarRule::PreviousUpdate,
                    _ => {
                        return Err(Error::invalid_config(format!(
                            "t_star_rule: expected origin or previous-update, got {value:?}"
                        )))
                    }
                }
            }
            "permute" => self.permute = flag(key, value)?,
            "allocation_timing" => {
                self.allocation_timing = match value {
                    "pilot" => AllocationTiming::Pilot,
                    "lagged" => AllocationTiming::Lagged,
                    _ => {
                        return Err(Error::invalid_config(format!(
                            "allocation_timing: expected pilot or lagged, got {value:?}"
                        )))
                    }
                }
            }
            "smcmc_iterations" => self.smcmc_iterations = num(key, value)?,
            "smcmc_burn_in" => self.smcmc_burn_in = num(key, value)?,
            "smcmc_draws" => self.smcmc_draws = num(key, value)?,
            "smcmc_batches" => self.smcmc_batches = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "output" => self.output = PathBuf::from(value),
            _ => return Err(Error::invalid_config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// `key = value` lines that [`RunConfig::parse`] reads back unchanged.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        put("model", self.model.name().into());
        put("nu", self.nu.to_string());
        put("alpha", self.alpha.to_string());
        put("beta", self.beta.to_string());
        put("kappa", self.kappa.to_string());
        if let Some(v) = self.alpha_dm {
            put("alpha_dm", v.to_string());
        }
        if let Some(v) = self.beta_dm {
            put("beta_dm", v.to_string());
        }
        if let Some(v) = self.chi {
            put("chi", v.to_string());
        }
        put("update_count", self.update_count.to_string());
        put("update_spacing", self.update_spacing.to_string());
        if let Some(ts) = &self.update_times {
            put(
                "update_times",
                ts.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
            );
        }
        put("particles", self.particles.to_string());
        put("budget", self.budget.to_string());
        put("floor", self.floor.to_string());
        put("ess_threshold", self.ess_threshold.to_string());
        put("iterations", self.iterations.to_string());
        put("burn_in", self.burn_in.to_string());
        put("move_steps", self.move_steps.to_string());
        put("data_driven_birth", self.data_driven_birth.to_string());
        put("bin_width", self.bin_width.to_string());
        put("smoothing", self.smoothing.to_string());
        put(
            "t_star_rule",
            match self.t_star_rule {
                TStarRule::Origin => "origin",
                TStarRule::PreviousUpdate => "previous-update",
            }
            .into(),
        );
        put("permute", self.permute.to_string());
        put(
            "allocation_timing",
            match self.allocation_timing {
                AllocationTiming::Pilot => "pilot",
                AllocationTiming::Lagged => "lagged",
            }
            .into(),
        );
        put("smcmc_iterations", self.smcmc_iterations.to_string());
        put("smcmc_burn_in", self.smcmc_burn_in.to_string());
        put("smcmc_draws", self.smcmc_draws.to_string());
        put("smcmc_batches", self.smcmc_batches.to_string());
        put("seed", self.seed.to_string());
        put("output", self.output.display().to_string());
        out
    }

    /// Explicit update times, or `update_count` multiples of `update_spacing`.
    pub fn update_grid(&self) -> Result<Vec<f64>> {
        let grid = match &self.update_times {
            Some(ts) => ts.clone(),
            None => {
                if !(self.update_spacing > 0.0 && self.update_spacing.is_finite()) {
                    return Err(Error::invalid_config("update_spacing must be positive"));
                }
                (1..=self.update_count).map(|i| i as f64 * self.update_spacing).collect()
            }
        };
        if grid.is_empty() {
            return Err(Error::invalid_config("no update times"));
        }
        if grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) || grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid_config("update times must be positive and strictly increasing"));
        }
        Ok(grid)
    }

    pub fn segment_model(&self) -> Result<SegmentModel> {
        Ok(match self.model {
            ModelKind::PoissonGamma => PoissonGammaModel::new(self.nu, self.alpha, self.beta)?.into(),
            ModelKind::PriorOnly => PriorOnlyModel::new(self.nu)?.into(),
            ModelKind::ShotNoise => ShotNoiseCoxModel::new(self.nu, self.kappa, self.alpha)?.into(),
        })
    }

    /// The chained-gamma prior, when all three of its parameters are set.
    pub fn chained_prior(&self) -> Result<Option<ChainedGammaPrior>> {
        match (self.alpha_dm, self.beta_dm, self.chi) {
            (None, None, None) => Ok(None),
            (Some(a), Some(b), Some(c)) => Ok(Some(ChainedGammaPrior::new(a, b, c)?)),
            _ => Err(Error::invalid_config("alpha_dm, beta_dm and chi must be set together")),
        }
    }

    pub fn rjmcmc_settings(&self) -> RjmcmcSettings {
        RjmcmcSettings {
            iterations: self.iterations,
            burn_in: self.burn_in,
            data_driven_birth: self.data_driven_birth,
            birth_proposal: BirthProposal {
                bin_width: self.bin_width,
                smoothing: self.smoothing,
            },
            ..RjmcmcSettings::default()
        }
    }

    pub fn smc_settings(&self) -> Result<SmcSettings> {
        let s = SmcSettings {
            n_particles: self.particles,
            ess_threshold: self.ess_threshold,
            rjmcmc: self.rjmcmc_settings(),
            move_steps: self.move_steps,
            t_star_rule: self.t_star_rule,
            permute: self.permute,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn smcmc_settings(&self) -> Result<SmcmcSettings> {
        let s = SmcmcSettings {
            rjmcmc: RjmcmcSettings {
                iterations: self.smcmc_iterations,
                burn_in: self.smcmc_burn_in,
                ..self.rjmcmc_settings()
            },
            draws: self.smcmc_draws,
            batches: self.smcmc_batches,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn multi_settings(&self) -> Result<MultiStreamSettings> {
        Ok(MultiStreamSettings {
            smc: self.smc_settings()?,
            total: self.budget,
            floor: self.floor,
            timing: self.allocation_timing,
        })
    }

    /// Checks parameters and the update grid.
    pub fn validate(&self) -> Result<()> {
        self.segment_model()?;
        self.chained_prior()?;
        self.update_grid()?;
        Ok(())
    }
}
