//! Navigation floor field.
//!
//! The layout is turned into a sparse rewards matrix whose states are cells and whose
//! actions are permitted moves (plus a self-loop per cell). Entering a sink pays
//! `base_reward × weight`; every other transition pays nothing. Sinks are absorbing.
//! Synchronous value-iteration sweeps of
//!
//! ```text
//! Q(i, j) ← R(i, j) + γ · max_k Q(j, k)      (j not a sink)
//! Q(i, j) ← R(i, j)                          (j a sink)
//! ```
//!
//! run to a fixed point, and the diagonal `N(i) = Q(i, i)` is the navigation field.
//! For a sink that is `base_reward × weight`; elsewhere it is `γ · max_k Q(i, k)`, which
//! strictly increases along some permitted move until a sink is reached.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use thiserror::Error;

use crate::choice::top_candidates;
use crate::layout::{Cell, Direction, LayoutGrid, Sink};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("invalid field parameter: {0}")]
    InvalidParams(&'static str),
    #[error("value iteration did not converge within {sweeps} sweeps")]
    NotConverged { sweeps: usize },
    #[error("field and layout dimensions differ")]
    DimensionMismatch,
    #[error("cell {0} is out of bounds")]
    OutOfBounds(Cell),
    #[error("no sink reachable from {0}")]
    Unreachable(Cell),
    #[error("descent stuck at {0}: no neighbour with a higher value")]
    Stuck(Cell),
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldParams {
    pub gamma: f64,
    pub base_reward: f64,
    pub epsilon: f64,
    /// Defaults to `10 · rows · cols` when `None`.
    pub max_sweeps: Option<usize>,
}

impl Default for FieldParams {
    fn default() -> Self {
        FieldParams {
            gamma: 0.8,
            base_reward: 100.0,
            epsilon: 1e-9,
            max_sweeps: None,
        }
    }
}

impl FieldParams {
    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(FieldError::InvalidParams("gamma must lie in (0, 1)"));
        }
        if !(self.base_reward > 0.0) || !self.base_reward.is_finite() {
            return Err(FieldError::InvalidParams("base_reward must be positive"));
        }
        if !(self.epsilon > 0.0) {
            return Err(FieldError::InvalidParams("epsilon must be positive"));
        }
        if self.max_sweeps == Some(0) {
            return Err(FieldError::InvalidParams("max_sweeps must be at least 1"));
        }
        Ok(())
    }

    fn sweep_limit(&self, grid: &LayoutGrid) -> usize {
        self.max_sweeps.unwrap_or(10 * grid.len())
    }
}

/// Sparse `(rows·cols)²` rewards matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardsMatrix {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    values: Vec<f64>,
    absorbing: Vec<bool>,
    base_reward: f64,
}

impl RewardsMatrix {
    pub fn states(&self) -> usize {
        self.absorbing.len()
    }

    pub fn nnz(&self) -> usize {
        self.targets.len()
    }

    pub fn get(&self, from: usize, to: usize) -> Option<f64> {
        self.row(from).find(|&(j, _)| j == to).map(|(_, r)| r)
    }

    /// Present entries `(target, reward)` of one row.
    pub fn row(&self, from: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[from]..self.offsets[from + 1];
        self.targets[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn is_absorbing(&self, state: usize) -> bool {
        self.absorbing[state]
    }

    pub fn base_reward(&self) -> f64 {
        self.base_reward
    }
}

/// Builds the rewards matrix for `grid`.
pub fn build_rewards(grid: &LayoutGrid, base_reward: f64) -> RewardsMatrix {
    let n = grid.len();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut targets = Vec::new();
    let mut values = Vec::new();
    let mut absorbing = Vec::with_capacity(n);
    let reward_into = |cell: Cell| grid.sink_weight(cell).map_or(0.0, |w| base_reward * w);
    offsets.push(0);
    for i in 0..n {
        let cell = grid.cell_of(i);
        let sink = grid.is_sink(cell);
        absorbing.push(sink);
        targets.push(i);
        values.push(reward_into(cell));
        if !sink {
            for dir in grid.moves_at(i).iter() {
                let next = grid
                    .neighbor(cell, dir)
                    .expect("permitted move stays in bounds");
                targets.push(grid.index(next));
                values.push(reward_into(next));
            }
        }
        offsets.push(targets.len());
    }
    RewardsMatrix {
        offsets,
        targets,
        values,
        absorbing,
        base_reward,
    }
}

/// Q-values over the rewards sparsity pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    values: Vec<f64>,
    pub converged: bool,
    pub gamma: f64,
    pub epsilon: f64,
    pub sweeps: usize,
    pub base_reward: f64,
}

impl QMatrix {
    pub fn get(&self, from: usize, to: usize) -> Option<f64> {
        self.row(from).find(|&(j, _)| j == to).map(|(_, q)| q)
    }

    pub fn row(&self, from: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[from]..self.offsets[from + 1];
        self.targets[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// `max_k Q(i, k)`.
    pub fn state_value(&self, state: usize) -> f64 {
        self.row(state).map(|(_, q)| q).fold(0.0, f64::max)
    }

    pub fn states(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Turns a non-converged result into [`FieldError::NotConverged`].
    pub fn require_converged(self) -> Result<QMatrix, FieldError> {
        if self.converged {
            Ok(self)
        } else {
            Err(FieldError::NotConverged { sweeps: self.sweeps })
        }
    }
}

/// Deterministic synchronous sweeps until the largest change drops below `epsilon`.
///
/// Hitting `max_sweeps` is not an error here: the result comes back with
/// `converged == false`.
pub fn solve_q(
    rewards: &RewardsMatrix,
    gamma: f64,
    epsilon: f64,
    max_sweeps: usize,
) -> Result<QMatrix, FieldError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(FieldError::InvalidParams("gamma must lie in (0, 1)"));
    }
    if !(epsilon > 0.0) {
        return Err(FieldError::InvalidParams("epsilon must be positive"));
    }
    let n = rewards.states();
    let mut q = alloc::vec![0.0; rewards.nnz()];
    let mut value = alloc::vec![0.0; n];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut delta: f64 = 0.0;
        for i in 0..n {
            for e in rewards.offsets[i]..rewards.offsets[i + 1] {
                let j = rewards.targets[e];
                let reward = rewards.values[e];
                let next = if rewards.absorbing[i] || rewards.absorbing[j] {
                    reward
                } else {
                    reward + gamma * value[j]
                };
                delta = delta.max((next - q[e]).abs());
                q[e] = next;
            }
        }
        for (i, v) in value.iter_mut().enumerate() {
            *v = q[rewards.offsets[i]..rewards.offsets[i + 1]]
                .iter()
                .copied()
                .fold(0.0, f64::max);
        }
        if delta < epsilon {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("value iteration stopped after {sweeps} sweeps without converging");
    }
    Ok(QMatrix {
        offsets: rewards.offsets.clone(),
        targets: rewards.targets.clone(),
        values: q,
        converged,
        gamma,
        epsilon,
        sweeps,
        base_reward: rewards.base_reward,
    })
}

/// Settings and inputs a field was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldProvenance {
    pub gamma: f64,
    pub base_reward: f64,
    pub epsilon: f64,
    pub sink_weights: Vec<Sink>,
    pub sweeps: usize,
    pub converged: bool,
}

/// The navigation matrix `N`. Unreachable and walled-off cells hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorField {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    provenance: FieldProvenance,
}

impl FloorField {
    /// Rewards, value iteration and extraction in one go. Fails if the solver does
    /// not converge.
    pub fn compute(grid: &LayoutGrid, params: &FieldParams) -> Result<FloorField, FieldError> {
        params.validate()?;
        let rewards = build_rewards(grid, params.base_reward);
        let q = solve_q(&rewards, params.gamma, params.epsilon, params.sweep_limit(grid))?
            .require_converged()?;
        Ok(extract_field(&q, grid))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, cell: Cell) -> f64 {
        self.values[cell.row * self.cols + cell.col]
    }

    pub fn provenance(&self) -> &FieldProvenance {
        &self.provenance
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn matches(&self, grid: &LayoutGrid) -> bool {
        self.rows == grid.rows() && self.cols == grid.cols()
    }
}

/// Reads the diagonal of `q` as the navigation field.
pub fn extract_field(q: &QMatrix, grid: &LayoutGrid) -> FloorField {
    if !q.converged {
        log::warn!("extracting a field from a non-converged Q matrix");
    }
    let values = (0..q.states())
        .map(|i| q.get(i, i).unwrap_or(0.0))
        .collect();
    FloorField {
        rows: grid.rows(),
        cols: grid.cols(),
        values,
        provenance: FieldProvenance {
            gamma: q.gamma,
            base_reward: q.base_reward,
            epsilon: q.epsilon,
            sink_weights: grid.sinks().to_vec(),
            sweeps: q.sweeps,
            converged: q.converged,
        },
    }
}

/// Breadth-first hop counts to the nearest sink over permitted moves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    cols: usize,
    hops: Vec<Option<u32>>,
}

impl DistanceField {
    /// `None` when no sink is reachable.
    pub fn get(&self, cell: Cell) -> Option<u32> {
        self.hops[cell.row * self.cols + cell.col]
    }

    pub fn hops(&self) -> &[Option<u32>] {
        &self.hops
    }
}

/// Moore-neighbourhood distance transform used as a cross-check on the Q field.
pub fn distance_field(grid: &LayoutGrid) -> DistanceField {
    let mut hops = alloc::vec![None; grid.len()];
    let mut queue = VecDeque::new();
    for sink in grid.sinks() {
        hops[grid.index(sink.cell)] = Some(0);
        queue.push_back(sink.cell);
    }
    while let Some(cell) = queue.pop_front() {
        let d = hops[grid.index(cell)].expect("queued cells have a distance");
        // moves are symmetric, so walking outward from the sinks is the same as
        // walking inward from every cell
        for dir in grid.moves_at(grid.index(cell)).iter() {
            let Some(next) = grid.neighbor(cell, dir) else {
                continue;
            };
            let slot = &mut hops[grid.index(next)];
            if slot.is_none() {
                *slot = Some(d + 1);
                queue.push_back(next);
            }
        }
    }
    DistanceField {
        cols: grid.cols(),
        hops,
    }
}

/// Follows the field uphill from `start` until a sink. Returns the visited cells,
/// `start` included.
///
/// Ties are broken the way the engine does (orthogonal before diagonal), then by
/// direction order N, NE, E, ... instead of at random.
pub fn greedy_descent(field: &FloorField, grid: &LayoutGrid, start: Cell) -> Result<Vec<Cell>, FieldError> {
    if !field.matches(grid) {
        return Err(FieldError::DimensionMismatch);
    }
    if !grid.contains(start) {
        return Err(FieldError::OutOfBounds(start));
    }
    if field.value(start) <= 0.0 {
        return Err(FieldError::Unreachable(start));
    }
    let mut path = alloc::vec![start];
    let mut current = start;
    while !grid.is_sink(current) {
        if path.len() > grid.len() {
            return Err(FieldError::Stuck(current));
        }
        let scores: Vec<(Direction, f64)> = grid
            .moves_at(grid.index(current))
            .iter()
            .map(|d| (d, field.value(grid.neighbor(current, d).expect("in bounds"))))
            .collect();
        let best = top_candidates(&scores);
        let Some(&pick) = best.first() else {
            return Err(FieldError::Stuck(current));
        };
        let (dir, value) = scores[pick];
        if value <= field.value(current) {
            return Err(FieldError::Stuck(current));
        }
        current = grid.neighbor(current, dir).expect("in bounds");
        path.push(current);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{parse_layout, WallCode};
    use crate::synth::{random_layout, RandomLayoutParams};
    use proptest::prelude::*;
    use rand::SeedableRng;

    const CORRIDOR: &str = "1 3 1\n11 10 14\nsink 0 2 1\nsource 0 0\n";

    fn corridor() -> LayoutGrid {
        parse_layout(CORRIDOR).unwrap()
    }

    fn solved(grid: &LayoutGrid, params: FieldParams) -> QMatrix {
        let r = build_rewards(grid, params.base_reward);
        solve_q(&r, params.gamma, params.epsilon, 10_000).unwrap()
    }

    /// Plain recursion over the three-state chain, written out by hand:
    /// V(right) = 100 (sink), Q(mid,right) = 100, V(mid) = 100,
    /// Q(left,mid) = 0.8 * 100 = 80, V(left) = 80,
    /// Q(i,i) = 0.8 * V(i) for non-sinks.
    #[test]
    fn corridor_values_match_hand_iteration() {
        let q = solved(&corridor(), FieldParams::default());
        assert!(q.converged);
        assert_eq!(q.get(1, 2), Some(100.0));
        assert_eq!(q.get(0, 1), Some(80.0));
        assert_eq!(q.get(2, 1), None);
        let field = extract_field(&q, &corridor());
        assert_eq!(field.values(), &[64.0, 80.0, 100.0]);
    }

    #[test]
    fn rewards_on_smallest_pair() {
        let grid = parse_layout("1 2 1\n11 14\nsink 0 1 1\nsource 0 0\n").unwrap();
        let r = build_rewards(&grid, 100.0);
        assert_eq!(r.get(0, 1), Some(100.0));
        assert_eq!(r.get(1, 1), Some(100.0));
        assert_eq!(r.get(0, 0), Some(0.0));
        assert_eq!(r.get(1, 0), None);

        let heavy = grid.scale_sink_weights(3.0).unwrap();
        assert_eq!(build_rewards(&heavy, 100.0).get(0, 1), Some(300.0));
    }

    #[test]
    fn walled_pair_has_only_zero_self_loops() {
        // Two sealed cells plus a sink cell so the layout validates.
        let grid = LayoutGrid::new(
            1,
            3,
            1.0,
            alloc::vec![WallCode::CLOSED, WallCode::CLOSED, WallCode::CLOSED],
            alloc::vec![Sink { cell: Cell::new(0, 2), weight: 1.0 }],
            Vec::new(),
        )
        .unwrap();
        let r = build_rewards(&grid, 100.0);
        for i in 0..2 {
            let row: Vec<_> = r.row(i).collect();
            assert_eq!(row, alloc::vec![(i, 0.0)]);
        }
        let q = solved(&grid, FieldParams::default());
        assert_eq!(q.row(0).map(|(_, v)| v).sum::<f64>(), 0.0);
        assert_eq!(extract_field(&q, &grid).values(), &[0.0, 0.0, 100.0]);
    }

    #[test]
    fn all_sink_grid_is_reward_times_weight() {
        let grid = LayoutGrid::new(
            1,
            2,
            1.0,
            alloc::vec![WallCode::new(11).unwrap(), WallCode::new(14).unwrap()],
            alloc::vec![
                Sink { cell: Cell::new(0, 0), weight: 2.0 },
                Sink { cell: Cell::new(0, 1), weight: 0.5 },
            ],
            Vec::new(),
        )
        .unwrap();
        let field = FloorField::compute(&grid, &FieldParams::default()).unwrap();
        assert_eq!(field.values(), &[200.0, 50.0]);
    }

    #[test]
    fn sweep_cap_reports_non_convergence() {
        let grid = corridor();
        let r = build_rewards(&grid, 100.0);
        let q = solve_q(&r, 0.8, 1e-9, 1).unwrap();
        assert!(!q.converged);
        assert_eq!(q.clone().require_converged(), Err(FieldError::NotConverged { sweeps: 1 }));
        let params = FieldParams { max_sweeps: Some(1), ..FieldParams::default() };
        assert_eq!(FloorField::compute(&grid, &params), Err(FieldError::NotConverged { sweeps: 1 }));
    }

    #[test]
    fn parameter_validation() {
        let r = build_rewards(&corridor(), 100.0);
        assert!(solve_q(&r, 1.0, 1e-9, 10).is_err());
        assert!(solve_q(&r, 0.0, 1e-9, 10).is_err());
        assert!(solve_q(&r, 0.5, 0.0, 10).is_err());
        let bad = FieldParams { base_reward: -1.0, ..FieldParams::default() };
        assert!(FloorField::compute(&corridor(), &bad).is_err());
    }

    #[test]
    fn distance_examples() {
        let grid = parse_layout("3 3 1\n9 8 12\n1 0 4\n3 2 6\nsink 0 0 1\nsource 2 2\n").unwrap();
        let d = distance_field(&grid);
        assert_eq!(d.get(Cell::new(0, 0)), Some(0));
        assert_eq!(d.get(Cell::new(2, 2)), Some(2));
        assert_eq!(d.get(Cell::new(1, 2)), Some(2));
    }

    #[test]
    fn greedy_descent_examples() {
        let grid = corridor();
        let field = FloorField::compute(&grid, &FieldParams::default()).unwrap();
        assert_eq!(greedy_descent(&field, &grid, Cell::new(0, 2)).unwrap(), alloc::vec![Cell::new(0, 2)]);
        assert_eq!(
            greedy_descent(&field, &grid, Cell::new(0, 0)).unwrap(),
            alloc::vec![Cell::new(0, 0), Cell::new(0, 1), Cell::new(0, 2)]
        );
    }

    #[test]
    fn open_room_descent_matches_bfs_from_every_start() {
        let mut text = alloc::string::String::from("10 10 1\n");
        for r in 0..10 {
            let row: Vec<alloc::string::String> = (0..10)
                .map(|c| {
                    let exit = r == 4 && c == 9;
                    WallCode::from_sides(r == 0, c == 9 && !exit, r == 9, c == 0).value().to_string()
                })
                .collect();
            text.push_str(&row.join(" "));
            text.push('\n');
        }
        text.push_str("sink 4 9 1\nsource 0 0\n");
        let grid = parse_layout(&text).unwrap();
        let field = FloorField::compute(&grid, &FieldParams::default()).unwrap();
        let dist = distance_field(&grid);
        for cell in grid.cells() {
            let path = greedy_descent(&field, &grid, cell).unwrap();
            assert_eq!(path.len() as u32 - 1, dist.get(cell).unwrap(), "from {cell}");
        }
    }

    #[test]
    fn unreachable_start_is_reported() {
        let grid = LayoutGrid::new(
            1,
            2,
            1.0,
            alloc::vec![WallCode::CLOSED, WallCode::CLOSED],
            alloc::vec![Sink { cell: Cell::new(0, 1), weight: 1.0 }],
            Vec::new(),
        )
        .unwrap();
        let field = FloorField::compute(&grid, &FieldParams::default()).unwrap();
        assert_eq!(greedy_descent(&field, &grid, Cell::new(0, 0)), Err(FieldError::Unreachable(Cell::new(0, 0))));
        assert_eq!(distance_field(&grid).get(Cell::new(0, 0)), None);
    }

    fn layout_from_seed(seed: u64, max_sinks: usize) -> LayoutGrid {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        random_layout(
            &mut rng,
            &RandomLayoutParams {
                max_rows: 12,
                max_cols: 12,
                max_sinks,
                ..RandomLayoutParams::default()
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn q_dominates_rewards_and_fixed_point_holds(seed in any::<u64>()) {
            let grid = layout_from_seed(seed, 4);
            let params = FieldParams::default();
            let rewards = build_rewards(&grid, params.base_reward);
            let q = solve_q(&rewards, params.gamma, params.epsilon, 10_000).unwrap();
            prop_assert!(q.converged);
            for i in 0..rewards.states() {
                for (j, r) in rewards.row(i) {
                    let qv = q.get(i, j).unwrap();
                    prop_assert!(qv >= r);
                    if !rewards.is_absorbing(i) && !rewards.is_absorbing(j) {
                        let expect = r + params.gamma * q.state_value(j);
                        prop_assert!((qv - expect).abs() < params.epsilon * 10.0);
                    }
                }
            }
        }

        #[test]
        fn field_is_positive_exactly_where_a_sink_is_reachable(seed in any::<u64>()) {
            let grid = layout_from_seed(seed, 4);
            let field = FloorField::compute(&grid, &FieldParams::default()).unwrap();
            let dist = distance_field(&grid);
            for cell in grid.cells() {
                prop_assert_eq!(field.value(cell) > 0.0, dist.get(cell).is_some());
            }
        }

        #[test]
        fn monotone_descent_and_bound(seed in any::<u64>()) {
            let grid = layout_from_seed(seed, 5);
            let field = FloorField::compute(&grid, &FieldParams::default()).unwrap();
            let top = FieldParams::default().base_reward * grid.max_sink_weight();
            prop_assert_eq!(field.max_value(), top);
            for cell in grid.cells() {
                let here = field.value(cell);
                if grid.is_sink(cell) {
                    prop_assert_eq!(here, 100.0 * grid.sink_weight(cell).unwrap());
                    continue;
                }
                if here == 0.0 {
                    continue;
                }
                let uphill = grid
                    .moves_of(cell)
                    .unwrap()
                    .iter()
                    .any(|d| field.value(grid.neighbor(cell, d).unwrap()) > here);
                prop_assert!(uphill, "no uphill neighbour at {}", cell);
            }
        }

        #[test]
        fn scaling_weights_scales_field(seed in any::<u64>(), c in prop::sample::select(alloc::vec![0.5, 3.0, 10.0, 0.1])) {
            let grid = layout_from_seed(seed, 3);
            let params = FieldParams::default();
            let base = FloorField::compute(&grid, &params).unwrap();
            let scaled = FloorField::compute(&grid.scale_sink_weights(c).unwrap(), &params).unwrap();
            for (a, b) in base.values().iter().zip(scaled.values()) {
                if *a == 0.0 {
                    prop_assert_eq!(*b, 0.0);
                } else {
                    prop_assert!(((b / a) - c).abs() <= 1e-9 * c);
                }
            }
        }

        #[test]
        fn field_is_deterministic(seed in any::<u64>()) {
            let grid = layout_from_seed(seed, 3);
            let a = FloorField::compute(&grid, &FieldParams::default()).unwrap();
            let b = FloorField::compute(&grid, &FieldParams::default()).unwrap();
            let bits = |f: &FloorField| f.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a), bits(&b));
        }
    }
}
