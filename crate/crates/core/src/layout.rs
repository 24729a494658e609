//! Grid layout with walls on cell edges.
//!
//! Every cell carries a [`WallCode`]: four bits in the order TOP, RIGHT, BOTTOM, LEFT with
//! TOP as the most significant bit, where a set bit means the side is closed. A wall
//! between two cells is stored twice, once in each cell, and the two copies must agree.
//!
//! Layout file format (UTF-8):
//!
//! ```text
//! # comment
//! rows cols cell_size_m
//! <rows lines of cols wall codes 0..=15>
//! sink r c weight
//! source r c
//! ```

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

use thiserror::Error;

/// Grid coordinate, row 0 at the top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Top,
    Right,
    Bottom,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Top, Side::Right, Side::Bottom, Side::Left];

    const fn bit(self) -> u8 {
        match self {
            Side::Top => 0b1000,
            Side::Right => 0b0100,
            Side::Bottom => 0b0010,
            Side::Left => 0b0001,
        }
    }

    pub const fn opposite(self) -> Side {
        match self {
            Side::Top => Side::Bottom,
            Side::Right => Side::Left,
            Side::Bottom => Side::Top,
            Side::Left => Side::Right,
        }
    }

    pub const fn direction(self) -> Direction {
        match self {
            Side::Top => Direction::N,
            Side::Right => Direction::E,
            Side::Bottom => Direction::S,
            Side::Left => Direction::W,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Top => "top",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Left => "left",
        })
    }
}

/// 4-bit wall mask of a cell. Bit set = side closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct WallCode(u8);

impl WallCode {
    pub const OPEN: WallCode = WallCode(0);
    pub const CLOSED: WallCode = WallCode(15);

    pub const fn new(value: u8) -> Option<WallCode> {
        if value <= 15 {
            Some(WallCode(value))
        } else {
            None
        }
    }

    pub const fn from_sides(top: bool, right: bool, bottom: bool, left: bool) -> WallCode {
        WallCode((top as u8) << 3 | (right as u8) << 2 | (bottom as u8) << 1 | left as u8)
    }

    /// Closed flags in TOP, RIGHT, BOTTOM, LEFT order.
    pub const fn sides(self) -> [bool; 4] {
        [
            self.0 & 0b1000 != 0,
            self.0 & 0b0100 != 0,
            self.0 & 0b0010 != 0,
            self.0 & 0b0001 != 0,
        ]
    }

    pub const fn value(self) -> u8 {
        self.0
    }

    pub const fn is_closed(self, side: Side) -> bool {
        self.0 & side.bit() != 0
    }

    pub const fn is_open(self, side: Side) -> bool {
        !self.is_closed(side)
    }

    #[must_use]
    pub const fn with_side(self, side: Side, closed: bool) -> WallCode {
        if closed {
            WallCode(self.0 | side.bit())
        } else {
            WallCode(self.0 & !side.bit())
        }
    }
}

/// The eight Moore-neighbourhood directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::N,
        Direction::NE,
        Direction::E,
        Direction::SE,
        Direction::S,
        Direction::SW,
        Direction::W,
        Direction::NW,
    ];

    /// (row, col) offset.
    pub const fn offset(self) -> (isize, isize) {
        match self {
            Direction::N => (-1, 0),
            Direction::NE => (-1, 1),
            Direction::E => (0, 1),
            Direction::SE => (1, 1),
            Direction::S => (1, 0),
            Direction::SW => (1, -1),
            Direction::W => (0, -1),
            Direction::NW => (-1, -1),
        }
    }

    pub const fn is_diagonal(self) -> bool {
        matches!(
            self,
            Direction::NE | Direction::SE | Direction::SW | Direction::NW
        )
    }

    pub const fn opposite(self) -> Direction {
        match self {
            Direction::N => Direction::S,
            Direction::NE => Direction::SW,
            Direction::E => Direction::W,
            Direction::SE => Direction::NW,
            Direction::S => Direction::N,
            Direction::SW => Direction::NE,
            Direction::W => Direction::E,
            Direction::NW => Direction::SE,
        }
    }

    const fn index(self) -> u8 {
        self as u8
    }

    /// The two cell sides a move in this direction crosses or brushes past.
    /// Orthogonal moves cross a single side, returned twice.
    const fn flanks(self) -> (Side, Side) {
        match self {
            Direction::N => (Side::Top, Side::Top),
            Direction::NE => (Side::Top, Side::Right),
            Direction::E => (Side::Right, Side::Right),
            Direction::SE => (Side::Bottom, Side::Right),
            Direction::S => (Side::Bottom, Side::Bottom),
            Direction::SW => (Side::Bottom, Side::Left),
            Direction::W => (Side::Left, Side::Left),
            Direction::NW => (Side::Top, Side::Left),
        }
    }

    /// Length of one hop in units of the cell size.
    pub fn hop_length(self) -> f64 {
        if self.is_diagonal() {
            core::f64::consts::SQRT_2
        } else {
            1.0
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Set of permitted moves out of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MoveSet(u8);

impl MoveSet {
    pub const EMPTY: MoveSet = MoveSet(0);

    pub fn contains(self, dir: Direction) -> bool {
        self.0 & (1 << dir.index()) != 0
    }

    pub fn insert(&mut self, dir: Direction) {
        self.0 |= 1 << dir.index();
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Directions in [`Direction::ALL`] order.
    pub fn iter(self) -> impl Iterator<Item = Direction> {
        Direction::ALL.into_iter().filter(move |d| self.contains(*d))
    }
}

impl FromIterator<Direction> for MoveSet {
    fn from_iter<I: IntoIterator<Item = Direction>>(iter: I) -> Self {
        let mut set = MoveSet::EMPTY;
        for d in iter {
            set.insert(d);
        }
        set
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sink {
    pub cell: Cell,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("grid must have at least one row and column and a positive cell size")]
    BadDimensions,
    #[error("wall mismatch between {a} and {b}")]
    Inconsistent { a: Cell, b: Cell },
    #[error("cell {cell} has an open {side} side on the perimeter but is not a sink")]
    OpenBoundary { cell: Cell, side: Side },
    #[error("layout has no {0}")]
    Empty(&'static str),
    #[error("cell {0} is out of bounds")]
    OutOfBounds(Cell),
    #[error("cell {0} is a source or sink")]
    ProtectedCell(Cell),
    #[error("sink {cell} has non-positive weight {weight}")]
    BadWeight { cell: Cell, weight: f64 },
    #[error("cell {0} is both a source and a sink")]
    SourceIsSink(Cell),
    #[error("cell {0} listed twice")]
    Duplicate(Cell),
}

/// Validated layout: the wall matrix plus sources and weighted sinks.
///
/// Immutable once built; the permitted moves of every cell are precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutGrid {
    rows: usize,
    cols: usize,
    cell_size_m: f64,
    walls: Vec<WallCode>,
    sinks: Vec<Sink>,
    sources: Vec<Cell>,
    moves: Vec<MoveSet>,
    sink_weight: Vec<Option<f64>>,
}

impl LayoutGrid {
    /// Builds and validates a layout. `walls` is row-major.
    ///
    /// A layout without sources is accepted here (field-only use); [`parse_layout`]
    /// insists on at least one.
    pub fn new(
        rows: usize,
        cols: usize,
        cell_size_m: f64,
        walls: Vec<WallCode>,
        sinks: Vec<Sink>,
        sources: Vec<Cell>,
    ) -> Result<LayoutGrid, LayoutError> {
        if rows == 0 || cols == 0 || !(cell_size_m > 0.0) || !cell_size_m.is_finite() {
            return Err(LayoutError::BadDimensions);
        }
        if walls.len() != rows * cols {
            return Err(LayoutError::BadDimensions);
        }
        let in_bounds = |c: Cell| c.row < rows && c.col < cols;

        let mut sink_weight = alloc::vec![None; rows * cols];
        for sink in &sinks {
            if !in_bounds(sink.cell) {
                return Err(LayoutError::OutOfBounds(sink.cell));
            }
            if !(sink.weight > 0.0) || !sink.weight.is_finite() {
                return Err(LayoutError::BadWeight {
                    cell: sink.cell,
                    weight: sink.weight,
                });
            }
            let slot = &mut sink_weight[sink.cell.row * cols + sink.cell.col];
            if slot.is_some() {
                return Err(LayoutError::Duplicate(sink.cell));
            }
            *slot = Some(sink.weight);
        }
        if sinks.is_empty() {
            return Err(LayoutError::Empty("sinks"));
        }
        let mut seen = BTreeSet::new();
        for &src in &sources {
            if !in_bounds(src) {
                return Err(LayoutError::OutOfBounds(src));
            }
            if sink_weight[src.row * cols + src.col].is_some() {
                return Err(LayoutError::SourceIsSink(src));
            }
            if !seen.insert(src) {
                return Err(LayoutError::Duplicate(src));
            }
        }

        for r in 0..rows {
            for c in 0..cols {
                let here = walls[r * cols + c];
                if c + 1 < cols && here.is_closed(Side::Right) != walls[r * cols + c + 1].is_closed(Side::Left)
                {
                    return Err(LayoutError::Inconsistent {
                        a: Cell::new(r, c),
                        b: Cell::new(r, c + 1),
                    });
                }
                if r + 1 < rows
                    && here.is_closed(Side::Bottom) != walls[(r + 1) * cols + c].is_closed(Side::Top)
                {
                    return Err(LayoutError::Inconsistent {
                        a: Cell::new(r, c),
                        b: Cell::new(r + 1, c),
                    });
                }
            }
        }
        for r in 0..rows {
            for c in 0..cols {
                let cell = Cell::new(r, c);
                if sink_weight[r * cols + c].is_some() {
                    continue;
                }
                let here = walls[r * cols + c];
                let exterior = [
                    (r == 0, Side::Top),
                    (c + 1 == cols, Side::Right),
                    (r + 1 == rows, Side::Bottom),
                    (c == 0, Side::Left),
                ];
                for (on_edge, side) in exterior {
                    if on_edge && here.is_open(side) {
                        return Err(LayoutError::OpenBoundary { cell, side });
                    }
                }
            }
        }

        let mut grid = LayoutGrid {
            rows,
            cols,
            cell_size_m,
            walls,
            sinks,
            sources,
            moves: Vec::new(),
            sink_weight,
        };
        grid.moves = (0..rows * cols)
            .map(|i| grid.compute_moves(grid.cell_of(i)))
            .collect();
        Ok(grid)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_size_m(&self) -> f64 {
        self.cell_size_m
    }

    pub fn walls(&self) -> &[WallCode] {
        &self.walls
    }

    pub fn sinks(&self) -> &[Sink] {
        &self.sinks
    }

    pub fn sources(&self) -> &[Cell] {
        &self.sources
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    /// Row-major index. Panics when out of bounds.
    pub fn index(&self, cell: Cell) -> usize {
        assert!(self.contains(cell), "cell {cell} out of bounds");
        cell.row * self.cols + cell.col
    }

    pub fn cell_of(&self, index: usize) -> Cell {
        Cell::new(index / self.cols, index % self.cols)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).map(|i| self.cell_of(i))
    }

    pub fn wall(&self, cell: Cell) -> Result<WallCode, LayoutError> {
        self.check(cell)?;
        Ok(self.walls[self.index(cell)])
    }

    pub fn sink_weight(&self, cell: Cell) -> Option<f64> {
        self.sink_weight.get(self.index_checked(cell)?).copied().flatten()
    }

    pub fn is_sink(&self, cell: Cell) -> bool {
        self.sink_weight(cell).is_some()
    }

    pub fn is_source(&self, cell: Cell) -> bool {
        self.sources.contains(&cell)
    }

    pub fn max_sink_weight(&self) -> f64 {
        self.sinks.iter().map(|s| s.weight).fold(0.0, f64::max)
    }

    pub fn neighbor(&self, cell: Cell, dir: Direction) -> Option<Cell> {
        let (dr, dc) = dir.offset();
        let row = cell.row.checked_add_signed(dr)?;
        let col = cell.col.checked_add_signed(dc)?;
        let next = Cell::new(row, col);
        self.contains(next).then_some(next)
    }

    /// Permitted moves out of `cell`.
    pub fn moves_of(&self, cell: Cell) -> Result<MoveSet, LayoutError> {
        self.check(cell)?;
        Ok(self.moves[self.index(cell)])
    }

    pub(crate) fn moves_at(&self, index: usize) -> MoveSet {
        self.moves[index]
    }

    fn compute_moves(&self, cell: Cell) -> MoveSet {
        let here = self.walls[self.index(cell)];
        Direction::ALL
            .into_iter()
            .filter(|&dir| {
                let Some(next) = self.neighbor(cell, dir) else {
                    return false;
                };
                let there = self.walls[self.index(next)];
                let (a, b) = dir.flanks();
                here.is_open(a)
                    && here.is_open(b)
                    && there.is_open(a.opposite())
                    && there.is_open(b.opposite())
            })
            .collect()
    }

    /// Returns a copy with `cell` walled in on all four sides.
    pub fn obstacle(&self, cell: Cell) -> Result<LayoutGrid, LayoutError> {
        self.check(cell)?;
        if self.is_sink(cell) || self.is_source(cell) {
            return Err(LayoutError::ProtectedCell(cell));
        }
        let mut walls = self.walls.clone();
        walls[self.index(cell)] = WallCode::CLOSED;
        for side in Side::ALL {
            if let Some(next) = self.neighbor(cell, side.direction()) {
                let i = self.index(next);
                walls[i] = walls[i].with_side(side.opposite(), true);
            }
        }
        LayoutGrid::new(
            self.rows,
            self.cols,
            self.cell_size_m,
            walls,
            self.sinks.clone(),
            self.sources.clone(),
        )
    }

    /// Returns a copy with the given sinks' weights multiplied.
    pub fn with_sink_multipliers(&self, multipliers: &[(Cell, f64)]) -> Result<LayoutGrid, LayoutError> {
        let mut sinks = self.sinks.clone();
        for &(cell, factor) in multipliers {
            let sink = sinks
                .iter_mut()
                .find(|s| s.cell == cell)
                .ok_or(LayoutError::OutOfBounds(cell))?;
            sink.weight *= factor;
        }
        LayoutGrid::new(
            self.rows,
            self.cols,
            self.cell_size_m,
            self.walls.clone(),
            sinks,
            self.sources.clone(),
        )
    }

    /// Returns a copy with every sink weight multiplied by `factor`.
    pub fn scale_sink_weights(&self, factor: f64) -> Result<LayoutGrid, LayoutError> {
        let all: Vec<(Cell, f64)> = self.sinks.iter().map(|s| (s.cell, factor)).collect();
        self.with_sink_multipliers(&all)
    }

    /// Refines every cell into a `factor × factor` block of cells `factor` times smaller.
    ///
    /// Walls stay on the block boundaries, sinks and sources cover their whole block.
    /// Sources are ordered so that the first `len(sources)` entries are the top-left
    /// sub-cell of each original source, in the original order.
    pub fn upscale(&self, factor: usize) -> Result<LayoutGrid, LayoutError> {
        if factor == 0 {
            return Err(LayoutError::BadDimensions);
        }
        let rows = self.rows * factor;
        let cols = self.cols * factor;
        let mut walls = alloc::vec![WallCode::OPEN; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                let parent = self.walls[(r / factor) * self.cols + c / factor];
                let (sr, sc) = (r % factor, c % factor);
                walls[r * cols + c] = WallCode::from_sides(
                    sr == 0 && parent.is_closed(Side::Top),
                    sc + 1 == factor && parent.is_closed(Side::Right),
                    sr + 1 == factor && parent.is_closed(Side::Bottom),
                    sc == 0 && parent.is_closed(Side::Left),
                );
            }
        }
        let block = |cell: Cell| {
            (0..factor * factor).map(move |k| {
                Cell::new(cell.row * factor + k / factor, cell.col * factor + k % factor)
            })
        };
        let sinks = self
            .sinks
            .iter()
            .flat_map(|s| block(s.cell).map(move |cell| Sink { cell, weight: s.weight }))
            .collect();
        let sources = (0..factor * factor)
            .flat_map(|k| {
                self.sources.iter().map(move |s| {
                    Cell::new(s.row * factor + k / factor, s.col * factor + k % factor)
                })
            })
            .collect();
        LayoutGrid::new(rows, cols, self.cell_size_m / factor as f64, walls, sinks, sources)
    }

    /// Canonical layout-file text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.rows, self.cols, self.cell_size_m);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if c > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{}", self.walls[r * self.cols + c].value());
            }
            out.push('\n');
        }
        for s in &self.sinks {
            let _ = writeln!(out, "sink {} {} {}", s.cell.row, s.cell.col, s.weight);
        }
        for s in &self.sources {
            let _ = writeln!(out, "source {} {}", s.row, s.col);
        }
        out
    }

    fn index_checked(&self, cell: Cell) -> Option<usize> {
        self.contains(cell).then(|| cell.row * self.cols + cell.col)
    }

    fn check(&self, cell: Cell) -> Result<(), LayoutError> {
        if self.contains(cell) {
            Ok(())
        } else {
            Err(LayoutError::OutOfBounds(cell))
        }
    }
}

fn parse_err(line: usize, message: impl ToString) -> LayoutError {
    LayoutError::Parse {
        line,
        message: message.to_string(),
    }
}

fn parse_num<T: core::str::FromStr>(line: usize, token: Option<&str>, what: &str) -> Result<T, LayoutError> {
    let token = token.ok_or_else(|| parse_err(line, alloc::format!("missing {what}")))?;
    token
        .parse()
        .map_err(|_| parse_err(line, alloc::format!("invalid {what} `{token}`")))
}

/// Parses a layout file. The result always has at least one sink and one source.
pub fn parse_layout(text: &str) -> Result<LayoutGrid, LayoutError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (line_no, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
    let mut tok = header.split_whitespace();
    let rows: usize = parse_num(line_no, tok.next(), "row count")?;
    let cols: usize = parse_num(line_no, tok.next(), "column count")?;
    let cell_size_m: f64 = parse_num(line_no, tok.next(), "cell size")?;
    if tok.next().is_some() {
        return Err(parse_err(line_no, "trailing tokens in header"));
    }
    if rows == 0 || cols == 0 || !(cell_size_m > 0.0) {
        return Err(LayoutError::BadDimensions);
    }

    let mut walls = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (line_no, row) = lines
            .next()
            .ok_or_else(|| parse_err(line_no, alloc::format!("expected {rows} grid rows, found {r}")))?;
        let before = walls.len();
        for token in row.split_whitespace() {
            let value: u8 = token
                .parse()
                .map_err(|_| parse_err(line_no, alloc::format!("invalid wall code `{token}`")))?;
            let code = WallCode::new(value)
                .ok_or_else(|| parse_err(line_no, alloc::format!("wall code {value} exceeds 15")))?;
            walls.push(code);
        }
        if walls.len() - before != cols {
            return Err(parse_err(
                line_no,
                alloc::format!("expected {cols} wall codes, found {}", walls.len() - before),
            ));
        }
    }

    let mut sinks = Vec::new();
    let mut sources = Vec::new();
    for (line_no, line) in lines {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("sink") => {
                let row = parse_num(line_no, tok.next(), "row")?;
                let col = parse_num(line_no, tok.next(), "column")?;
                let weight = parse_num(line_no, tok.next(), "weight")?;
                sinks.push(Sink {
                    cell: Cell::new(row, col),
                    weight,
                });
            }
            Some("source") => {
                let row = parse_num(line_no, tok.next(), "row")?;
                let col = parse_num(line_no, tok.next(), "column")?;
                sources.push(Cell::new(row, col));
            }
            Some(other) => return Err(parse_err(line_no, alloc::format!("unknown directive `{other}`"))),
            None => unreachable!(),
        }
        if tok.next().is_some() {
            return Err(parse_err(line_no, "trailing tokens"));
        }
    }
    if sinks.is_empty() {
        return Err(LayoutError::Empty("sinks"));
    }
    if sources.is_empty() {
        return Err(LayoutError::Empty("sources"));
    }
    LayoutGrid::new(rows, cols, cell_size_m, walls, sinks, sources)
}
