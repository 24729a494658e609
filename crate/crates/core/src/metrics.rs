//! Run summaries computed from event logs, and population sweeps.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use thiserror::Error;

use crate::engine::{EngineError, Event, EventKind, RunOutcome, Scenario};
use crate::layout::Cell;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("malformed event log: agent {agent}: {problem}")]
    Malformed { agent: u32, problem: &'static str },
    #[error("no populations requested")]
    NoPopulations,
    #[error("at least one seed per point is required")]
    NoSeeds,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// Agents that entered the layout.
    pub n_agents: usize,
    pub n_exited: usize,
    /// Mean of `exit − spawn` over exited agents; `None` when nobody exited.
    pub avg_travel_time_s: Option<f64>,
    pub avg_distance_m: Option<f64>,
    pub per_exit_counts: BTreeMap<Cell, usize>,
    /// Every spawned agent exited (and, via [`summarize_outcome`], none were left
    /// unreleased).
    pub completed: bool,
}

impl RunMetrics {
    pub fn exit_share(&self, sink: Cell) -> f64 {
        if self.n_agents == 0 {
            return 0.0;
        }
        *self.per_exit_counts.get(&sink).unwrap_or(&0) as f64 / self.n_agents as f64
    }
}

#[derive(Default)]
struct Track {
    spawn: Option<f64>,
    at: Option<Cell>,
    distance: f64,
    exit: Option<(Cell, f64)>,
}

/// Summarises a log. Distances are rebuilt from the move events: a hop that changes
/// both row and column counts `√2 · cell_size_m`, otherwise `cell_size_m`.
///
/// Agents that have not exited make the result incomplete rather than failing it;
/// averages then cover exited agents only.
pub fn summarize(events: &[Event], cell_size_m: f64) -> Result<RunMetrics, MetricsError> {
    let mut tracks: BTreeMap<u32, Track> = BTreeMap::new();
    for e in events {
        let id = e.agent.0;
        let bad = |problem| MetricsError::Malformed { agent: id, problem };
        let t = tracks.entry(id).or_default();
        if t.exit.is_some() {
            return Err(bad("event after exit"));
        }
        match e.kind {
            EventKind::Spawn => {
                if t.spawn.is_some() {
                    return Err(bad("spawned twice"));
                }
                t.spawn = Some(e.clock_s);
                t.at = Some(e.cell);
            }
            EventKind::Move => {
                let from = t.at.ok_or_else(|| bad("move before spawn"))?;
                let dr = from.row.abs_diff(e.cell.row);
                let dc = from.col.abs_diff(e.cell.col);
                t.distance += match (dr, dc) {
                    (1, 1) => core::f64::consts::SQRT_2 * cell_size_m,
                    (0, 1) | (1, 0) => cell_size_m,
                    _ => return Err(bad("move is not a single hop")),
                };
                t.at = Some(e.cell);
            }
            EventKind::Stay => {
                if t.at != Some(e.cell) {
                    return Err(bad("stay away from current cell"));
                }
            }
            EventKind::Exit => {
                if t.at != Some(e.cell) {
                    return Err(bad("exit away from current cell"));
                }
                t.exit = Some((e.cell, e.clock_s));
            }
        }
    }

    let mut per_exit_counts = BTreeMap::new();
    let (mut time_sum, mut dist_sum, mut n_exited) = (0.0, 0.0, 0usize);
    for (id, t) in &tracks {
        let spawn = t.spawn.ok_or(MetricsError::Malformed {
            agent: *id,
            problem: "never spawned",
        })?;
        if let Some((sink, time)) = t.exit {
            *per_exit_counts.entry(sink).or_insert(0) += 1;
            time_sum += time - spawn;
            dist_sum += t.distance;
            n_exited += 1;
        }
    }
    let mean = |sum: f64| (n_exited > 0).then(|| sum / n_exited as f64);
    Ok(RunMetrics {
        n_agents: tracks.len(),
        n_exited,
        avg_travel_time_s: mean(time_sum),
        avg_distance_m: mean(dist_sum),
        per_exit_counts,
        completed: n_exited == tracks.len(),
    })
}

/// [`summarize`] plus the engine's knowledge of agents never released.
pub fn summarize_outcome(outcome: &RunOutcome, cell_size_m: f64) -> Result<RunMetrics, MetricsError> {
    let mut m = summarize(&outcome.events, cell_size_m)?;
    m.completed &= outcome.unspawned == 0;
    Ok(m)
}

/// Per-population averages over several seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub population: u32,
    pub runs: usize,
    /// Mean over runs of each run's average (runs where nobody exited are skipped).
    pub avg_travel_time_s: Option<f64>,
    pub avg_distance_m: Option<f64>,
    pub per_exit_counts: BTreeMap<Cell, f64>,
    /// All runs completed.
    pub completed: bool,
}

/// Seed of replicate `k` of a sweep point.
pub fn replicate_seed(base_seed: u64, k: usize) -> u64 {
    base_seed.wrapping_add(k as u64)
}

pub fn sweep_point(
    scenario: &Scenario,
    population: u32,
    seeds_per_point: usize,
    base_seed: u64,
) -> Result<SweepPoint, MetricsError> {
    if seeds_per_point == 0 {
        return Err(MetricsError::NoSeeds);
    }
    let scenario = scenario.with_population(population);
    let runs = (0..seeds_per_point)
        .map(|k| {
            let out = scenario.run(replicate_seed(base_seed, k))?;
            summarize_outcome(&out, scenario.grid.cell_size_m())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(average(population, &runs))
}

/// Runs every population for `seeds_per_point` seeds and averages per population.
pub fn sweep(
    scenario: &Scenario,
    populations: &[u32],
    seeds_per_point: usize,
    base_seed: u64,
) -> Result<Vec<SweepPoint>, MetricsError> {
    if populations.is_empty() {
        return Err(MetricsError::NoPopulations);
    }
    populations
        .iter()
        .map(|&p| sweep_point(scenario, p, seeds_per_point, base_seed))
        .collect()
}

pub fn average(population: u32, runs: &[RunMetrics]) -> SweepPoint {
    let mean_of = |pick: fn(&RunMetrics) -> Option<f64>| {
        let vals: Vec<f64> = runs.iter().filter_map(pick).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let mut per_exit_counts = BTreeMap::new();
    for r in runs {
        for (sink, n) in &r.per_exit_counts {
            *per_exit_counts.entry(*sink).or_insert(0.0) += *n as f64;
        }
    }
    for v in per_exit_counts.values_mut() {
        *v /= runs.len() as f64;
    }
    SweepPoint {
        population,
        runs: runs.len(),
        avg_travel_time_s: mean_of(|r| r.avg_travel_time_s),
        avg_distance_m: mean_of(|r| r.avg_distance_m),
        per_exit_counts,
        completed: runs.iter().all(|r| r.completed),
    }
}
