//! Time-stepped agent movement over a layout and a floor field.
//!
//! Each step:
//!
//! 1. agents are visited in a freshly shuffled order;
//! 2. an agent whose dwell time has elapsed scores every permitted neighbour with
//!    `entry_probability(density) × N` and moves to the best one, orthogonal moves
//!    winning ties, remaining ties drawn from the seeded generator; if nothing scores
//!    above zero it stays put;
//! 3. agents standing on a sink are removed;
//! 4. the clock advances and scheduled agents are released at their sources while the
//!    source has room.
//!
//! The dwell time in a cell is `diameter / speed`, where the diameter is the mean of the
//! inscribed and circumscribed circle diameters and the speed comes from the
//! speed–density table at the number of *other* agents sharing the cell.

use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::choice::top_candidates;
use crate::floorfield::FloorField;
use crate::layout::{Cell, Direction, LayoutGrid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid speed-density table: {0}")]
    InvalidTable(&'static str),
    #[error("density {0} is outside the speed-density table")]
    DensityOutOfRange(u32),
    #[error("time step must be positive and finite")]
    InvalidTimeStep,
    #[error("floor field does not match the layout")]
    FieldMismatch,
    #[error("spawn source {0} is not a source of the layout")]
    UnknownSource(Cell),
    #[error("{unspawned} scheduled agents were never released")]
    ScheduleOverflow { unspawned: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedDensityRow {
    pub density: u32,
    pub speed_mps: f64,
    pub entry_probability: f64,
}

/// Density → (speed, entry probability) lookup, one row per integer density from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedDensityTable {
    rows: Vec<SpeedDensityRow>,
    capacity: u32,
}

impl SpeedDensityTable {
    pub fn new(rows: Vec<SpeedDensityRow>) -> Result<SpeedDensityTable, EngineError> {
        if rows.is_empty() {
            return Err(EngineError::InvalidTable("no rows"));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.density as usize != i {
                return Err(EngineError::InvalidTable("densities must run 0, 1, 2, ..."));
            }
            if !(row.speed_mps >= 0.0) || !row.speed_mps.is_finite() {
                return Err(EngineError::InvalidTable("speed must be non-negative"));
            }
            if !(0.0..=1.0).contains(&row.entry_probability) {
                return Err(EngineError::InvalidTable("entry probability must lie in [0, 1]"));
            }
        }
        for pair in rows.windows(2) {
            if pair[1].speed_mps > pair[0].speed_mps
                || pair[1].entry_probability > pair[0].entry_probability
            {
                return Err(EngineError::InvalidTable("speed and entry probability must not increase with density"));
            }
        }
        if rows[rows.len() - 1].entry_probability != 0.0 {
            return Err(EngineError::InvalidTable("last row must have entry probability 0"));
        }
        if rows[0].entry_probability == 0.0 {
            return Err(EngineError::InvalidTable("an empty cell must be enterable"));
        }
        let capacity = rows.iter().filter(|r| r.entry_probability > 0.0).count() as u32;
        Ok(SpeedDensityTable { rows, capacity })
    }

    /// Mesoscopic 1 m × 1 m cells.
    pub fn mesoscopic() -> SpeedDensityTable {
        let rows = [
            (1.44, 1.0),
            (1.12, 0.8),
            (0.84, 0.6),
            (0.56, 0.4),
            (0.28, 0.2),
            (0.00, 0.0),
        ];
        Self::from_pairs(&rows)
    }

    /// Single-occupancy 0.5 m cells.
    pub fn microscopic() -> SpeedDensityTable {
        Self::from_pairs(&[(1.44, 1.0), (0.0, 0.0)])
    }

    fn from_pairs(pairs: &[(f64, f64)]) -> SpeedDensityTable {
        let rows = pairs
            .iter()
            .enumerate()
            .map(|(i, &(speed_mps, entry_probability))| SpeedDensityRow {
                density: i as u32,
                speed_mps,
                entry_probability,
            })
            .collect();
        SpeedDensityTable::new(rows).expect("built-in tables are valid")
    }

    pub fn rows(&self) -> &[SpeedDensityRow] {
        &self.rows
    }

    /// Largest number of agents a cell may hold.
    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    fn row(&self, density: u32) -> Result<&SpeedDensityRow, EngineError> {
        self.rows
            .get(density as usize)
            .ok_or(EngineError::DensityOutOfRange(density))
    }

    pub fn speed(&self, density: u32) -> Result<f64, EngineError> {
        Ok(self.row(density)?.speed_mps)
    }

    pub fn entry_probability(&self, density: u32) -> Result<f64, EngineError> {
        Ok(self.row(density)?.entry_probability)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Meso,
    Micro,
}

impl Mode {
    pub fn table(self) -> SpeedDensityTable {
        match self {
            Mode::Meso => SpeedDensityTable::mesoscopic(),
            Mode::Micro => SpeedDensityTable::microscopic(),
        }
    }

    pub fn cell_size_m(self) -> f64 {
        match self {
            Mode::Meso => 1.0,
            Mode::Micro => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    pub cell_size_m: f64,
    pub diameter_m: f64,
}

impl CellGeometry {
    pub fn new(cell_size_m: f64) -> CellGeometry {
        // inscribed circle: side; circumscribed circle: side * sqrt(2)
        CellGeometry {
            cell_size_m,
            diameter_m: cell_size_m * (1.0 + core::f64::consts::SQRT_2) / 2.0,
        }
    }

    /// Time to cross the cell at the speed for `others` co-occupants; `None` when the
    /// speed is zero.
    pub fn dwell_time(&self, table: &SpeedDensityTable, others: u32) -> Result<Option<f64>, EngineError> {
        let speed = table.speed(others)?;
        Ok((speed > 0.0).then(|| self.diameter_m / speed))
    }
}

/// `clock ≥ t_in + dwell`; never true for an infinite dwell.
pub fn dwell_elapsed(clock_s: f64, t_in: f64, dwell: Option<f64>) -> bool {
    dwell.is_some_and(|d| clock_s >= t_in + d)
}

/// Picks the move with the highest score. Orthogonal moves win ties against diagonal
/// ones; remaining ties are drawn uniformly from `rng`. `None` means stay.
pub fn choose_move<R: Rng + ?Sized>(scores: &[(Direction, f64)], rng: &mut R) -> Option<Direction> {
    let best = top_candidates(scores);
    match best.len() {
        0 => None,
        1 => Some(scores[best[0]].0),
        n => Some(scores[best[rng.gen_range(0..n)]].0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: AgentId,
    pub cell: Cell,
    /// Time the agent entered its current cell.
    pub t_in: f64,
    pub spawn_time: f64,
    pub distance_m: f64,
    /// Sink and time of absorption.
    pub exit: Option<(Cell, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpawnEntry {
    pub source: Cell,
    pub count: u32,
    pub release_step: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpawnSchedule {
    pub entries: Vec<SpawnEntry>,
}

impl SpawnSchedule {
    pub fn new(entries: Vec<SpawnEntry>) -> SpawnSchedule {
        SpawnSchedule { entries }
    }

    pub fn total(&self) -> u32 {
        self.entries.iter().map(|e| e.count).sum()
    }

    /// Same sources and release steps, `population` agents dealt out round-robin in
    /// entry order.
    pub fn with_population(&self, population: u32) -> SpawnSchedule {
        let n = self.entries.len() as u32;
        let entries = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| SpawnEntry {
                count: if n == 0 {
                    0
                } else {
                    population / n + u32::from((i as u32) < population % n)
                },
                ..*e
            })
            .collect();
        SpawnSchedule { entries }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Spawn,
    Move,
    Stay,
    Exit,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Spawn => "spawn",
            EventKind::Move => "move",
            EventKind::Stay => "stay",
            EventKind::Exit => "exit",
        }
    }
}

impl core::str::FromStr for EventKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "spawn" => Ok(EventKind::Spawn),
            "move" => Ok(EventKind::Move),
            "stay" => Ok(EventKind::Stay),
            "exit" => Ok(EventKind::Exit),
            _ => Err(()),
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One line of the event log. `cell` is where the agent is after the event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub step: u64,
    pub clock_s: f64,
    pub agent: AgentId,
    pub kind: EventKind,
    pub cell: Cell,
}

#[derive(Debug, Clone)]
pub struct SimulationState {
    clock_s: f64,
    step: u64,
    density: Vec<u32>,
    agents: Vec<Agent>,
    exited: Vec<Agent>,
    spawned: u32,
    rng: ChaCha8Rng,
}

impl SimulationState {
    pub fn clock_s(&self) -> f64 {
        self.clock_s
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Row-major agent counts per cell.
    pub fn density(&self) -> &[u32] {
        &self.density
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn exited(&self) -> &[Agent] {
        &self.exited
    }

    pub fn spawned(&self) -> u32 {
        self.spawned
    }
}

/// A single run. Borrows the immutable inputs; owns all mutable state.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    grid: &'a LayoutGrid,
    field: &'a FloorField,
    table: &'a SpeedDensityTable,
    geometry: CellGeometry,
    dt_s: f64,
    pending: Vec<SpawnEntry>,
    state: SimulationState,
    events: Vec<Event>,
}

impl<'a> Simulation<'a> {
    /// Sets up the run and releases everything scheduled for step 0.
    pub fn new(
        grid: &'a LayoutGrid,
        field: &'a FloorField,
        table: &'a SpeedDensityTable,
        dt_s: f64,
        schedule: &SpawnSchedule,
        seed: u64,
    ) -> Result<Simulation<'a>, EngineError> {
        if !(dt_s > 0.0) || !dt_s.is_finite() {
            return Err(EngineError::InvalidTimeStep);
        }
        if !field.matches(grid) {
            return Err(EngineError::FieldMismatch);
        }
        if let Some(e) = schedule.entries.iter().find(|e| !grid.is_source(e.source)) {
            return Err(EngineError::UnknownSource(e.source));
        }
        let mut sim = Simulation {
            grid,
            field,
            table,
            geometry: CellGeometry::new(grid.cell_size_m()),
            dt_s,
            pending: schedule.entries.clone(),
            state: SimulationState {
                clock_s: 0.0,
                step: 0,
                density: alloc::vec![0; grid.len()],
                agents: Vec::new(),
                exited: Vec::new(),
                spawned: 0,
                rng: ChaCha8Rng::seed_from_u64(seed),
            },
            events: Vec::new(),
        };
        sim.release();
        Ok(sim)
    }

    pub fn state(&self) -> &SimulationState {
        &self.state
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn grid(&self) -> &LayoutGrid {
        self.grid
    }

    pub fn geometry(&self) -> CellGeometry {
        self.geometry
    }

    /// Agents scheduled but not yet released.
    pub fn unspawned(&self) -> u32 {
        self.pending.iter().map(|e| e.count).sum()
    }

    pub fn is_finished(&self) -> bool {
        self.state.agents.is_empty() && self.unspawned() == 0
    }

    pub fn dwell_elapsed(&self, agent: &Agent) -> bool {
        let others = self.state.density[self.grid.index(agent.cell)].saturating_sub(1);
        // densities never exceed table capacity, so the lookup cannot fail
        let dwell = self.geometry.dwell_time(self.table, others).unwrap_or(None);
        dwell_elapsed(self.state.clock_s, agent.t_in, dwell)
    }

    /// `(direction, entry_probability × N)` for every permitted move out of `cell`,
    /// using current densities (moves already made this step included).
    pub fn score_candidates(&self, cell: Cell) -> Vec<(Direction, f64)> {
        let here = self.grid.index(cell);
        self.grid
            .moves_at(here)
            .iter()
            .map(|dir| {
                let next = self.grid.neighbor(cell, dir).expect("permitted moves stay in bounds");
                let density = self.state.density[self.grid.index(next)];
                let p = self.table.entry_probability(density).unwrap_or(0.0);
                (dir, p * self.field.value(next))
            })
            .collect()
    }

    pub fn step(&mut self) {
        let clock = self.state.clock_s;
        let step = self.state.step;

        let mut order: Vec<usize> = (0..self.state.agents.len()).collect();
        order.shuffle(&mut self.state.rng);
        for k in order {
            let agent = &self.state.agents[k];
            if !self.dwell_elapsed(agent) {
                continue;
            }
            let from = agent.cell;
            let scores = self.score_candidates(from);
            let choice = choose_move(&scores, &mut self.state.rng);
            let agent = &mut self.state.agents[k];
            match choice {
                Some(dir) => {
                    let to = self.grid.neighbor(from, dir).expect("permitted moves stay in bounds");
                    self.state.density[self.grid.index(from)] -= 1;
                    self.state.density[self.grid.index(to)] += 1;
                    agent.cell = to;
                    agent.t_in = clock;
                    agent.distance_m += dir.hop_length() * self.geometry.cell_size_m;
                    self.events.push(Event {
                        step,
                        clock_s: clock,
                        agent: agent.id,
                        kind: EventKind::Move,
                        cell: to,
                    });
                }
                None => self.events.push(Event {
                    step,
                    clock_s: clock,
                    agent: agent.id,
                    kind: EventKind::Stay,
                    cell: from,
                }),
            }
        }

        let exit_time = clock + self.dt_s;
        let mut remaining = Vec::with_capacity(self.state.agents.len());
        for mut agent in core::mem::take(&mut self.state.agents) {
            if self.grid.is_sink(agent.cell) {
                self.state.density[self.grid.index(agent.cell)] -= 1;
                agent.exit = Some((agent.cell, exit_time));
                self.events.push(Event {
                    step,
                    clock_s: exit_time,
                    agent: agent.id,
                    kind: EventKind::Exit,
                    cell: agent.cell,
                });
                self.state.exited.push(agent);
            } else {
                remaining.push(agent);
            }
        }
        self.state.agents = remaining;

        self.state.step += 1;
        self.state.clock_s = self.state.step as f64 * self.dt_s;
        self.release();
    }

    /// Places due agents on their sources while the source has room.
    fn release(&mut self) {
        let step = self.state.step;
        let clock = self.state.clock_s;
        let capacity = self.table.capacity();
        for entry in self.pending.iter_mut() {
            if entry.release_step > step {
                continue;
            }
            let i = self.grid.index(entry.source);
            while entry.count > 0 && self.state.density[i] < capacity {
                let id = AgentId(self.state.spawned);
                self.state.spawned += 1;
                self.state.density[i] += 1;
                entry.count -= 1;
                self.state.agents.push(Agent {
                    id,
                    cell: entry.source,
                    t_in: clock,
                    spawn_time: clock,
                    distance_m: 0.0,
                    exit: None,
                });
                self.events.push(Event {
                    step,
                    clock_s: clock,
                    agent: id,
                    kind: EventKind::Spawn,
                    cell: entry.source,
                });
            }
        }
    }

    pub fn into_outcome(self) -> RunOutcome {
        RunOutcome {
            unspawned: self.unspawned(),
            steps: self.state.step,
            active: self.state.agents.len(),
            events: self.events,
            exited: self.state.exited,
        }
    }
}

/// Result of [`Scenario::run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub events: Vec<Event>,
    pub exited: Vec<Agent>,
    pub steps: u64,
    /// Agents still inside when the run stopped.
    pub active: usize,
    /// Scheduled agents never released because their source stayed full.
    pub unspawned: u32,
}

impl RunOutcome {
    pub fn completed(&self) -> bool {
        self.active == 0 && self.unspawned == 0
    }

    pub fn check_schedule(&self) -> Result<(), EngineError> {
        if self.unspawned == 0 {
            Ok(())
        } else {
            Err(EngineError::ScheduleOverflow {
                unspawned: self.unspawned,
            })
        }
    }
}

/// Everything needed to repeat a run: layout, solved field, table, timing, schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: LayoutGrid,
    pub field: FloorField,
    pub table: SpeedDensityTable,
    pub dt_s: f64,
    pub max_steps: u64,
    pub schedule: SpawnSchedule,
}

impl Scenario {
    pub fn with_population(&self, population: u32) -> Scenario {
        Scenario {
            schedule: self.schedule.with_population(population),
            ..self.clone()
        }
    }

    pub fn simulation(&self, seed: u64) -> Result<Simulation<'_>, EngineError> {
        Simulation::new(&self.grid, &self.field, &self.table, self.dt_s, &self.schedule, seed)
    }

    /// Steps until everyone has left or `max_steps` is reached.
    pub fn run(&self, seed: u64) -> Result<RunOutcome, EngineError> {
        self.run_observed(seed, |_| {})
    }

    /// Like [`Scenario::run`], calling `observe` after setup and after every step.
    pub fn run_observed<F>(&self, seed: u64, mut observe: F) -> Result<RunOutcome, EngineError>
    where
        F: FnMut(&Simulation<'_>),
    {
        let mut sim = self.simulation(seed)?;
        observe(&sim);
        while sim.state.step < self.max_steps && !sim.is_finished() {
            sim.step();
            observe(&sim);
        }
        Ok(sim.into_outcome())
    }
}
