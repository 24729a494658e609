//! Random layout generation for fuzzing and property tests.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::layout::{Cell, LayoutGrid, Side, Sink, WallCode};

#[derive(Debug, Clone, PartialEq)]
pub struct RandomLayoutParams {
    pub min_rows: usize,
    pub max_rows: usize,
    pub min_cols: usize,
    pub max_cols: usize,
    pub min_sinks: usize,
    pub max_sinks: usize,
    pub max_sources: usize,
    /// Chance that an interior edge carries a wall.
    pub wall_probability: f64,
    /// Chance that a cell becomes a walled-in obstacle.
    pub obstacle_probability: f64,
    /// Sink weights are drawn from `[1, max_weight]`; 1.0 gives uniform weights.
    pub max_weight: f64,
    pub cell_size_m: f64,
}

impl Default for RandomLayoutParams {
    fn default() -> Self {
        RandomLayoutParams {
            min_rows: 2,
            max_rows: 30,
            min_cols: 2,
            max_cols: 30,
            min_sinks: 1,
            max_sinks: 5,
            max_sources: 3,
            wall_probability: 0.25,
            obstacle_probability: 0.08,
            max_weight: 4.0,
            cell_size_m: 1.0,
        }
    }
}

/// Draws a valid layout in which every cell that is not an obstacle can reach a sink.
pub fn random_layout<R: Rng + ?Sized>(rng: &mut R, params: &RandomLayoutParams) -> LayoutGrid {
    let rows = rng.gen_range(params.min_rows..=params.max_rows.max(params.min_rows));
    let cols = rng.gen_range(params.min_cols..=params.max_cols.max(params.min_cols));
    let n = rows * cols;
    let idx = |r: usize, c: usize| r * cols + c;

    let perimeter: Vec<Cell> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| Cell::new(r, c)))
        .filter(|c| c.row == 0 || c.col == 0 || c.row + 1 == rows || c.col + 1 == cols)
        .collect();
    let n_sinks = rng
        .gen_range(params.min_sinks..=params.max_sinks.max(params.min_sinks))
        .min(perimeter.len())
        .min(n.saturating_sub(1))
        .max(1);
    let sink_cells: Vec<Cell> = perimeter.choose_multiple(rng, n_sinks).copied().collect();
    let mut is_sink = alloc::vec![false; n];
    for s in &sink_cells {
        is_sink[idx(s.row, s.col)] = true;
    }

    let mut obstacle: Vec<bool> = (0..n)
        .map(|i| !is_sink[i] && rng.gen_bool(params.obstacle_probability))
        .collect();
    // keep at least one free non-sink cell for sources
    if (0..n).all(|i| obstacle[i] || is_sink[i]) {
        if let Some(i) = (0..n).find(|&i| !is_sink[i]) {
            obstacle[i] = false;
        }
    }

    // right[i]: wall between i and its east neighbour; down[i]: wall to the south
    let mut right = alloc::vec![true; n];
    let mut down = alloc::vec![true; n];
    for r in 0..rows {
        for c in 0..cols {
            let i = idx(r, c);
            if c + 1 < cols {
                right[i] = obstacle[i] || obstacle[i + 1] || rng.gen_bool(params.wall_probability);
            }
            if r + 1 < rows {
                down[i] = obstacle[i] || obstacle[i + cols] || rng.gen_bool(params.wall_probability);
            }
        }
    }

    // Carve walls until every free cell joins the sink component; free pockets fenced
    // in by obstacles are sealed off as obstacles themselves.
    loop {
        let mut reached = alloc::vec![false; n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for s in &sink_cells {
            let i = idx(s.row, s.col);
            reached[i] = true;
            queue.push_back(i);
        }
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / cols, i % cols);
            let mut visit = |j: usize, open: bool| {
                if open && !reached[j] {
                    reached[j] = true;
                    queue.push_back(j);
                }
            };
            if c + 1 < cols {
                visit(i + 1, !right[i]);
            }
            if c > 0 {
                visit(i - 1, !right[i - 1]);
            }
            if r + 1 < rows {
                visit(i + cols, !down[i]);
            }
            if r > 0 {
                visit(i - cols, !down[i - cols]);
            }
        }
        // frontier edges between a reached cell and an unreached free cell
        let mut frontier = Vec::new();
        for i in 0..n {
            if reached[i] || obstacle[i] {
                continue;
            }
            let (r, c) = (i / cols, i % cols);
            if c + 1 < cols && reached[i + 1] {
                frontier.push((i, Side::Right));
            }
            if c > 0 && reached[i - 1] {
                frontier.push((i - 1, Side::Right));
            }
            if r + 1 < rows && reached[i + cols] {
                frontier.push((i, Side::Bottom));
            }
            if r > 0 && reached[i - cols] {
                frontier.push((i - cols, Side::Bottom));
            }
        }
        let Some(&(i, side)) = frontier.choose(rng) else {
            let pockets: Vec<usize> = (0..n).filter(|&j| !reached[j] && !obstacle[j]).collect();
            for j in pockets {
                obstacle[j] = true;
                right[j] = true;
                down[j] = true;
                if j % cols > 0 {
                    right[j - 1] = true;
                }
                if j >= cols {
                    down[j - cols] = true;
                }
            }
            break;
        };
        match side {
            Side::Right => right[i] = false,
            _ => down[i] = false,
        }
    }

    let mut walls = alloc::vec![WallCode::OPEN; n];
    for r in 0..rows {
        for c in 0..cols {
            let i = idx(r, c);
            walls[i] = WallCode::from_sides(
                r == 0 || down[i - cols],
                c + 1 == cols || right[i],
                r + 1 == rows || down[i],
                c == 0 || right[i - 1],
            );
        }
    }
    for s in &sink_cells {
        let i = idx(s.row, s.col);
        let side = if s.row == 0 {
            Side::Top
        } else if s.row + 1 == rows {
            Side::Bottom
        } else if s.col == 0 {
            Side::Left
        } else {
            Side::Right
        };
        walls[i] = walls[i].with_side(side, false);
    }

    let sinks = sink_cells
        .into_iter()
        .map(|cell| Sink {
            cell,
            weight: if params.max_weight > 1.0 {
                rng.gen_range(1.0..=params.max_weight)
            } else {
                1.0
            },
        })
        .collect();
    let free: Vec<Cell> = (0..n)
        .filter(|&i| !obstacle[i] && !is_sink[i])
        .map(|i| Cell::new(i / cols, i % cols))
        .collect();
    let n_sources = rng.gen_range(1..=params.max_sources.max(1)).min(free.len());
    let sources = free.choose_multiple(rng, n_sources).copied().collect();

    LayoutGrid::new(rows, cols, params.cell_size_m, walls, sinks, sources)
        .expect("generated layouts satisfy the layout invariants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floorfield::distance_field;
    use rand::SeedableRng;

    #[test]
    fn generated_layouts_are_connected() {
        for seed in 0..200 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let grid = random_layout(&mut rng, &RandomLayoutParams::default());
            let dist = distance_field(&grid);
            for cell in grid.cells() {
                let sealed = grid.wall(cell).unwrap() == WallCode::CLOSED && !grid.is_sink(cell);
                assert_eq!(dist.get(cell).is_none(), sealed, "seed {seed} cell {cell}");
            }
            assert!(!grid.sources().is_empty());
        }
    }
}
