//! CSV results with fixed headers.
//!
//! Numbers are written in shortest round-trip form, so identical runs give
//! byte-identical files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::multistream::AllocationRecord;
use crate::smc::UpdateDiagnostics;
use crate::summary::{IntensitySummary, UniqueCount};

pub const INTENSITY_HEADER: &str = "time,mean,q05,q95";
pub const ESS_HEADER: &str = "update_index,time,ess,n_particles,resampled";
pub const UNIQUE_HEADER: &str = "update_index,time,unique_pre,unique_post";
pub const ALLOCATIONS_HEADER: &str = "update_index,stream_id,score,allocation,ess,resampled";
pub const COMPARE_HEADER: &str = "time,smc_mean,smcmc_mean,smcmc_se,difference,within_3se";

/// SMC and reference posterior means of the intensity at one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareRow {
    pub time: f64,
    pub smc_mean: f64,
    pub smcmc_mean: f64,
    pub smcmc_se: f64,
}

impl CompareRow {
    pub fn difference(&self) -> f64 {
        self.smc_mean - self.smcmc_mean
    }

    pub fn within_3se(&self) -> bool {
        self.difference().abs() <= 3.0 * self.smcmc_se
    }
}

fn write_csv<W: Write, T>(mut out: W, header: &str, rows: &[T], line: impl Fn(&T) -> String) -> Result<()> {
    writeln!(out, "{header}")?;
    for r in rows {
        writeln!(out, "{}", line(r))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_intensity<W: Write>(out: W, rows: &[IntensitySummary]) -> Result<()> {
    write_csv(out, INTENSITY_HEADER, rows, |r| format!("{},{},{},{}", r.time, r.mean, r.q05, r.q95))
}

pub fn write_ess<W: Write>(out: W, history: &[UpdateDiagnostics]) -> Result<()> {
    write_csv(out, ESS_HEADER, history, |d| {
        format!("{},{},{},{},{}", d.index, d.t_now, d.ess, d.n_particles, d.resampled)
    })
}

pub fn write_unique<W: Write>(out: W, rows: &[UniqueCount]) -> Result<()> {
    write_csv(out, UNIQUE_HEADER, rows, |r| format!("{},{},{},{}", r.update_index, r.time, r.pre, r.post))
}

pub fn write_allocations<W: Write>(out: W, rows: &[AllocationRecord]) -> Result<()> {
    write_csv(out, ALLOCATIONS_HEADER, rows, |r| {
        format!("{},{},{},{},{},{}", r.update_index, r.stream_id, r.score, r.allocation, r.ess, r.resampled)
    })
}

pub fn write_compare<W: Write>(out: W, rows: &[CompareRow]) -> Result<()> {
    write_csv(out, COMPARE_HEADER, rows, |r| {
        format!(
            "{},{},{},{},{},{}",
            r.time,
            r.smc_mean,
            r.smcmc_mean,
            r.smcmc_se,
            r.difference(),
            r.within_3se()
        )
    })
}

/// Results of a run; each present part becomes one file.
#[derive(Debug, Clone, Default)]
pub struct RunResults {
    pub intensity: Option<Vec<IntensitySummary>>,
    pub history: Option<Vec<UpdateDiagnostics>>,
    pub unique: Option<Vec<UniqueCount>>,
    pub allocations: Option<Vec<AllocationRecord>>,
    pub compare: Option<Vec<CompareRow>>,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

/// Writes `intensity.csv`, `ess.csv`, `unique_particles.csv`,
/// `allocations.csv` and `compare.csv` for the parts that are present.
pub fn emit_results(dir: &Path, results: &RunResults) -> Result<()> {
    fs::create_dir_all(dir)?;
    if let Some(rows) = &results.intensity {
        write_intensity(create(dir, "intensity.csv")?, rows)?;
    }
    if let Some(rows) = &results.history {
        write_ess(create(dir, "ess.csv")?, rows)?;
    }
    if let Some(rows) = &results.unique {
        write_unique(create(dir, "unique_particles.csv")?, rows)?;
    }
    if let Some(rows) = &results.allocations {
        write_allocations(create(dir, "allocations.csv")?, rows)?;
    }
    if let Some(rows) = &results.compare {
        write_compare(create(dir, "compare.csv")?, rows)?;
    }
    Ok(())
}
