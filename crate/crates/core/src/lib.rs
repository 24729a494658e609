//! Mesoscopic pedestrian simulation.
//!
//! The model keeps three grids over a lattice of square cells:
//!
//! * the layout (`L`): per-cell 4-bit wall codes that decide which moves are permitted,
//! * the density (`D`): how many agents currently sit in each cell,
//! * the navigation field (`N`): a floor field computed once per sink configuration by
//!   value-iterating a Q-table whose only rewards are on exits.
//!
//! Agents dwell in a cell for a time set by the cell diameter and the density-dependent
//! speed, then step to the Moore neighbour that maximises `entry_probability × N`.
//!
//! The crate is `no_std` (it needs `alloc`); reading files, writing CSV and the command
//! line live in the `mesoped` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod choice;
pub mod engine;
pub mod floorfield;
pub mod layout;
pub mod metrics;
pub mod synth;

pub use engine::{
    Agent, AgentId, CellGeometry, EngineError, Event, EventKind, Mode, RunOutcome, Scenario,
    Simulation, SimulationState, SpawnEntry, SpawnSchedule, SpeedDensityRow, SpeedDensityTable,
};
pub use floorfield::{
    DistanceField, FieldError, FieldParams, FloorField, QMatrix, RewardsMatrix,
};
pub use layout::{Cell, Direction, LayoutError, LayoutGrid, MoveSet, Side, Sink, WallCode};
pub use metrics::{MetricsError, RunMetrics, SweepPoint};
