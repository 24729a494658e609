//! The four subcommands, as library functions.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mesoped_core::engine::Scenario;
use mesoped_core::metrics::{summarize_outcome, sweep_point, MetricsError, RunMetrics, SweepPoint};
use rayon::prelude::*;
use thiserror::Error;

use crate::output::{self, MetricsRow};
use crate::scenario::{ConfigError, LoadedScenario};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Engine(#[from] mesoped_core::EngineError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(
        "layouts are not 2x related: meso {meso_rows}x{meso_cols} @ {meso_size} m, \
         micro {micro_rows}x{micro_cols} @ {micro_size} m"
    )]
    DimensionMismatch {
        meso_rows: usize,
        meso_cols: usize,
        meso_size: f64,
        micro_rows: usize,
        micro_cols: usize,
        micro_size: f64,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write_csv<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> csv::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w).map_err(|source| CliError::Csv { path: path.to_path_buf(), source })?;
    w.flush().map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Parses `1..50`, `1..=50`, `5` or comma-separated mixes of those. Ranges are inclusive.
pub fn parse_populations(spec: &str) -> Result<Vec<u32>, ConfigError> {
    let invalid = |message: String| ConfigError::Invalid { origin: "--pop".into(), message };
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |s: &str| s.trim().parse::<u32>().map_err(|_| invalid(format!("invalid population `{s}`")));
        if let Some((a, b)) = part.split_once("..") {
            let (a, b) = (num(a)?, num(b.strip_prefix('=').unwrap_or(b))?);
            if a > b {
                return Err(invalid(format!("empty range `{part}`")));
            }
            out.extend(a..=b);
        } else {
            out.push(num(part)?);
        }
    }
    if out.is_empty() {
        return Err(invalid("no populations given".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub steps: Option<u64>,
    pub snapshots: bool,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub metrics: RunMetrics,
    pub completed: bool,
    pub unspawned: u32,
    pub steps: u64,
}

/// Runs one scenario and writes `field.csv`, `events.csv`, `metrics.csv` (and
/// `snapshots.txt`) into `out_dir`.
pub fn run(loaded: &LoadedScenario, opts: &RunOptions, out_dir: &Path) -> Result<RunReport, CliError> {
    let mut scenario = loaded.build()?;
    if let Some(steps) = opts.steps {
        scenario.max_steps = steps;
    }
    let seed = opts.seed.unwrap_or(loaded.config.seed);
    let mut snapshots = String::new();
    let outcome = scenario.run_observed(seed, |sim| {
        if opts.snapshots {
            let st = sim.state();
            snapshots.push_str(&output::snapshot_block(st.step(), st.clock_s(), sim.grid(), st.density()));
        }
    })?;
    let metrics = summarize_outcome(&outcome, scenario.grid.cell_size_m())?;
    log::info!(
        "{}: {} of {} agents exited in {} steps",
        loaded.config.name,
        metrics.n_exited,
        scenario.schedule.total(),
        outcome.steps
    );

    fs::create_dir_all(out_dir).map_err(|source| CliError::Io { path: out_dir.to_path_buf(), source })?;
    write_csv(&out_dir.join("field.csv"), |w| output::write_field_csv(&scenario.field, w))?;
    write_csv(&out_dir.join("events.csv"), |w| output::write_events_csv(&outcome.events, w))?;
    let row = MetricsRow::from_run(scenario.schedule.total(), &metrics);
    write_csv(&out_dir.join("metrics.csv"), |w| {
        output::write_metrics_csv(&[row], &sink_cells(&scenario), w)
    })?;
    if opts.snapshots {
        let path = out_dir.join("snapshots.txt");
        fs::write(&path, snapshots).map_err(|source| CliError::Io { path, source })?;
    }
    Ok(RunReport {
        completed: outcome.completed(),
        unspawned: outcome.unspawned,
        steps: outcome.steps,
        metrics,
    })
}

pub fn export_field(loaded: &LoadedScenario, out_file: &Path) -> Result<(), CliError> {
    let field = loaded.field()?;
    write_csv(out_file, |w| output::write_field_csv(&field, w))
}

/// Same numbers as [`mesoped_core::metrics::sweep`], with points run in parallel.
pub fn sweep_parallel(
    scenario: &Scenario,
    populations: &[u32],
    seeds: usize,
    base_seed: u64,
) -> Result<Vec<SweepPoint>, CliError> {
    if populations.is_empty() {
        return Err(ConfigError::Invalid {
            origin: "--pop".into(),
            message: "no populations given".into(),
        }
        .into());
    }
    populations
        .par_iter()
        .map(|&p| sweep_point(scenario, p, seeds, base_seed))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::from)
}

/// Population sweep written to `out_dir/metrics.csv`.
pub fn sweep(
    loaded: &LoadedScenario,
    populations: &[u32],
    seeds: usize,
    out_dir: &Path,
) -> Result<Vec<SweepPoint>, CliError> {
    let scenario = loaded.build()?;
    let points = sweep_parallel(&scenario, populations, seeds, loaded.config.seed)?;
    let rows: Vec<MetricsRow> = points.iter().map(MetricsRow::from_sweep).collect();
    write_csv(&out_dir.join("metrics.csv"), |w| {
        output::write_metrics_csv(&rows, &sink_cells(&scenario), w)
    })?;
    Ok(points)
}

/// Checks that `micro` refines `meso` by exactly 2 in each direction.
pub fn check_refinement(meso: &LoadedScenario, micro: &LoadedScenario) -> Result<(), CliError> {
    let (a, b) = (&meso.layout, &micro.layout);
    let ok = b.rows() == 2 * a.rows()
        && b.cols() == 2 * a.cols()
        && (2.0 * b.cell_size_m() - a.cell_size_m()).abs() <= 1e-9 * a.cell_size_m();
    if ok {
        Ok(())
    } else {
        Err(CliError::DimensionMismatch {
            meso_rows: a.rows(),
            meso_cols: a.cols(),
            meso_size: a.cell_size_m(),
            micro_rows: b.rows(),
            micro_cols: b.cols(),
            micro_size: b.cell_size_m(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub meso: Vec<SweepPoint>,
    pub micro: Vec<SweepPoint>,
}

impl Comparison {
    /// Populations whose micro average travel time differs from meso by more than `band_s`.
    pub fn outside_band(&self, band_s: f64) -> Vec<u32> {
        self.meso
            .iter()
            .zip(&self.micro)
            .filter(|(a, b)| match (a.avg_travel_time_s, b.avg_travel_time_s) {
                (Some(x), Some(y)) => (x - y).abs() > band_s,
                _ => true,
            })
            .map(|(a, _)| a.population)
            .collect()
    }
}

/// Paired sweep of the two models, written to `out_dir/compare.csv`.
pub fn compare(
    meso: &LoadedScenario,
    micro: &LoadedScenario,
    populations: &[u32],
    seeds: usize,
    out_dir: &Path,
) -> Result<Comparison, CliError> {
    let cmp = compare_only(meso, micro, populations, seeds)?;
    write_csv(&out_dir.join("compare.csv"), |w| output::write_compare_csv(&cmp.meso, &cmp.micro, w))?;
    Ok(cmp)
}

/// [`compare`] without writing anything.
pub fn compare_only(
    meso: &LoadedScenario,
    micro: &LoadedScenario,
    populations: &[u32],
    seeds: usize,
) -> Result<Comparison, CliError> {
    check_refinement(meso, micro)?;
    let (a, b) = (meso.build()?, micro.build()?);
    Ok(Comparison {
        meso: sweep_parallel(&a, populations, seeds, meso.config.seed)?,
        micro: sweep_parallel(&b, populations, seeds, micro.config.seed)?,
    })
}

fn sink_cells(scenario: &Scenario) -> Vec<mesoped_core::Cell> {
    scenario.grid.sinks().iter().map(|s| s.cell).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_specs() {
        assert_eq!(parse_populations("1..5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_populations("1..=3,10").unwrap(), vec![1, 2, 3, 10]);
        assert_eq!(parse_populations("30").unwrap(), vec![30]);
        assert!(parse_populations("").is_err());
        assert!(parse_populations("5..1").is_err());
        assert!(parse_populations("a..b").is_err());
    }
}
