//! Artifact formats: field, event log, metrics and snapshots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use mesoped_core::engine::{AgentId, Event, EventKind};
use mesoped_core::floorfield::FloorField;
use mesoped_core::layout::{Cell, LayoutGrid, Side};
use mesoped_core::metrics::{RunMetrics, SweepPoint};

pub const EVENTS_HEADER: [&str; 6] = ["step", "clock_s", "agent_id", "event", "row", "col"];

/// One `metrics.csv` row. Exit counts are averages for sweep rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub population: u32,
    pub avg_travel_time_s: Option<f64>,
    pub avg_distance_m: Option<f64>,
    pub exit_counts: BTreeMap<Cell, f64>,
    pub completed: bool,
}

impl MetricsRow {
    pub fn from_run(population: u32, m: &RunMetrics) -> MetricsRow {
        MetricsRow {
            population,
            avg_travel_time_s: m.avg_travel_time_s,
            avg_distance_m: m.avg_distance_m,
            exit_counts: m.per_exit_counts.iter().map(|(c, n)| (*c, *n as f64)).collect(),
            completed: m.completed,
        }
    }

    pub fn from_sweep(p: &SweepPoint) -> MetricsRow {
        MetricsRow {
            population: p.population,
            avg_travel_time_s: p.avg_travel_time_s,
            avg_distance_m: p.avg_distance_m,
            exit_counts: p.per_exit_counts.clone(),
            completed: p.completed,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One line per row, values at full precision.
pub fn write_field_csv<W: Write>(field: &FloorField, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in field.values().chunks(field.cols()) {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field_csv<R: Read>(input: R) -> csv::Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(rec.iter().map(|s| s.parse().unwrap_or(f64::NAN)).collect());
    }
    Ok(rows)
}

pub fn write_events_csv<W: Write>(events: &[Event], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVENTS_HEADER)?;
    for e in events {
        w.write_record([
            e.step.to_string(),
            e.clock_s.to_string(),
            e.agent.0.to_string(),
            e.kind.as_str().to_string(),
            e.cell.row.to_string(),
            e.cell.col.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Bad { line: u64, message: String },
}

/// Reads back a log written by [`write_events_csv`].
pub fn read_events_csv<R: Read>(input: R) -> Result<Vec<Event>, ReadError> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().ne(EVENTS_HEADER) {
        return Err(ReadError::Bad {
            line: 1,
            message: "unexpected header".into(),
        });
    }
    let mut events = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str| ReadError::Bad {
            line,
            message: format!("invalid {what}"),
        };
        let field = |i: usize| rec.get(i).unwrap_or("");
        events.push(Event {
            step: field(0).parse().map_err(|_| bad("step"))?,
            clock_s: field(1).parse().map_err(|_| bad("clock"))?,
            agent: AgentId(field(2).parse().map_err(|_| bad("agent id"))?),
            kind: field(3).parse::<EventKind>().map_err(|_| bad("event kind"))?,
            cell: Cell::new(
                field(4).parse().map_err(|_| bad("row"))?,
                field(5).parse().map_err(|_| bad("col"))?,
            ),
        });
    }
    Ok(events)
}

/// `population,avg_travel_time_s,avg_distance_m,exit_<r>_<c>_count...,completed`, one exit
/// column per sink of `sinks` in the given order. Missing averages are left empty.
pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], sinks: &[Cell], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["population".to_string(), "avg_travel_time_s".into(), "avg_distance_m".into()];
    header.extend(sinks.iter().map(|s| format!("exit_{}_{}_count", s.row, s.col)));
    header.push("completed".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.population.to_string(), opt(r.avg_travel_time_s), opt(r.avg_distance_m)];
        rec.extend(sinks.iter().map(|s| r.exit_counts.get(s).copied().unwrap_or(0.0).to_string()));
        rec.push(r.completed.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per population with both models side by side.
pub fn write_compare_csv<W: Write>(meso: &[SweepPoint], micro: &[SweepPoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "population",
        "meso_avg_travel_time_s",
        "meso_avg_distance_m",
        "meso_completed",
        "micro_avg_travel_time_s",
        "micro_avg_distance_m",
        "micro_completed",
    ])?;
    for (a, b) in meso.iter().zip(micro) {
        w.write_record([
            a.population.to_string(),
            opt(a.avg_travel_time_s),
            opt(a.avg_distance_m),
            a.completed.to_string(),
            opt(b.avg_travel_time_s),
            opt(b.avg_distance_m),
            b.completed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// ASCII picture of the walls with each cell's density (`.` when empty, `#` for a
/// fully walled cell).
pub fn render_snapshot(grid: &LayoutGrid, density: &[u32]) -> String {
    let mut s = String::new();
    for r in 0..grid.rows() {
        for c in 0..grid.cols() {
            let w = grid.walls()[r * grid.cols() + c];
            s.push('+');
            s.push(if w.is_closed(Side::Top) { '-' } else { ' ' });
        }
        s.push_str("+\n");
        for c in 0..grid.cols() {
            let w = grid.walls()[r * grid.cols() + c];
            if c == 0 {
                s.push(if w.is_closed(Side::Left) { '|' } else { ' ' });
            }
            let d = density[r * grid.cols() + c];
            s.push(match d {
                0 if w.value() == 15 => '#',
                0 => '.',
                1..=9 => char::from(b'0' + d as u8),
                _ => '*',
            });
            s.push(if w.is_closed(Side::Right) { '|' } else { ' ' });
        }
        s.push('\n');
    }
    let last = grid.rows() - 1;
    for c in 0..grid.cols() {
        let w = grid.walls()[last * grid.cols() + c];
        s.push('+');
        s.push(if w.is_closed(Side::Bottom) { '-' } else { ' ' });
    }
    s.push_str("+\n");
    s
}

pub fn snapshot_block(step: u64, clock_s: f64, grid: &LayoutGrid, density: &[u32]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "step {step} clock_s {clock_s}");
    s.push_str(&render_snapshot(grid, density));
    s.push('\n');
    s
}
