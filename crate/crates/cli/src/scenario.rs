//! Scenario files.
//!
//! Plain `key = value` lines grouped under `[section]` headers; `#` starts a comment.
//!
//! ```text
//! name = cinema_a
//!
//! [layout]
//! file = cinema.layout
//!
//! [run]
//! mode = meso          # meso | micro
//! dt_s = 0.5
//! max_steps = 600
//! seed = 1
//!
//! [field]
//! gamma = 0.8
//! base_reward = 100
//! epsilon = 1e-9
//! max_sweeps = 10000
//!
//! [sinks]
//! 8 29 = 3             # row col = weight multiplier
//!
//! [spawn]
//! population = 60      # dealt round-robin over the layout's sources at step 0
//! 4 0 = 5 2            # row col = count [release_step]
//!
//! [table]
//! 0 = 1.44 1.0         # density = speed entry_probability
//! ```

use std::path::{Path, PathBuf};

use mesoped_core::engine::{Mode, Scenario, SpawnEntry, SpawnSchedule, SpeedDensityRow, SpeedDensityTable};
use mesoped_core::floorfield::{FieldParams, FloorField};
use mesoped_core::layout::{parse_layout, Cell, LayoutGrid};
use thiserror::Error;

use crate::bundled;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}:{line}: {message}")]
    Syntax {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("{origin}: {message}")]
    Invalid { origin: String, message: String },
    #[error("{origin}: {source}")]
    Layout {
        origin: String,
        source: mesoped_core::LayoutError,
    },
    #[error("{origin}: {source}")]
    Field {
        origin: String,
        source: mesoped_core::FieldError,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unknown scenario `{0}` (not a file and not a bundled scenario)")]
    UnknownScenario(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpawnSpec {
    /// Explicit `(source, count, release_step)` entries.
    Entries(Vec<SpawnEntry>),
    /// `population` agents dealt over every layout source at step 0.
    Population(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub layout_file: String,
    pub mode: Mode,
    pub dt_s: f64,
    pub max_steps: u64,
    pub seed: u64,
    pub field: FieldParams,
    pub sink_multipliers: Vec<(Cell, f64)>,
    pub spawn: SpawnSpec,
    pub table: Option<Vec<SpeedDensityRow>>,
}

impl ScenarioConfig {
    fn defaults(name: &str) -> ScenarioConfig {
        ScenarioConfig {
            name: name.to_string(),
            layout_file: String::new(),
            mode: Mode::Meso,
            dt_s: 0.5,
            max_steps: 1000,
            seed: 0,
            field: FieldParams::default(),
            sink_multipliers: Vec::new(),
            spawn: SpawnSpec::Entries(Vec::new()),
            table: None,
        }
    }

    pub fn speed_density_table(&self) -> Result<SpeedDensityTable, mesoped_core::EngineError> {
        match &self.table {
            Some(rows) => SpeedDensityTable::new(rows.clone()),
            None => Ok(self.mode.table()),
        }
    }
}

/// Parses scenario text. `origin` is used in error messages; `default_name` when the
/// file has no `name` key.
pub fn parse_config(text: &str, origin: &str, default_name: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = ScenarioConfig::defaults(default_name);
    let mut entries = Vec::new();
    let mut population = None;
    let mut table_rows: Vec<SpeedDensityRow> = Vec::new();
    let mut section = String::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| ConfigError::Syntax {
            origin: origin.to_string(),
            line: line_no,
            message,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err("unterminated section header".into()))?
                .trim();
            match name {
                "layout" | "run" | "field" | "sinks" | "spawn" | "table" => section = name.to_string(),
                other => return Err(err(format!("unknown section [{other}]"))),
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err("expected `key = value`".into()))?;
        let num = |v: &str, what: &str| -> Result<f64, ConfigError> {
            v.parse::<f64>().map_err(|_| err(format!("invalid {what} `{v}`")))
        };
        let int = |v: &str, what: &str| -> Result<u64, ConfigError> {
            v.parse::<u64>().map_err(|_| err(format!("invalid {what} `{v}`")))
        };
        let cell = |k: &str| -> Result<Cell, ConfigError> {
            let mut t = k.split_whitespace();
            let (Some(r), Some(c), None) = (t.next(), t.next(), t.next()) else {
                return Err(err(format!("expected `row col`, found `{k}`")));
            };
            Ok(Cell::new(int(r, "row")? as usize, int(c, "column")? as usize))
        };
        match (section.as_str(), key) {
            ("", "name") => cfg.name = value.to_string(),
            ("layout", "file") => cfg.layout_file = value.to_string(),
            ("run", "mode") => {
                cfg.mode = match value {
                    "meso" => Mode::Meso,
                    "micro" => Mode::Micro,
                    other => return Err(err(format!("mode must be meso or micro, found `{other}`"))),
                }
            }
            ("run", "dt_s") => cfg.dt_s = num(value, "dt_s")?,
            ("run", "max_steps") => cfg.max_steps = int(value, "max_steps")?,
            ("run", "seed") => cfg.seed = int(value, "seed")?,
            ("field", "gamma") => cfg.field.gamma = num(value, "gamma")?,
            ("field", "base_reward") => cfg.field.base_reward = num(value, "base_reward")?,
            ("field", "epsilon") => cfg.field.epsilon = num(value, "epsilon")?,
            ("field", "max_sweeps") => cfg.field.max_sweeps = Some(int(value, "max_sweeps")? as usize),
            ("sinks", k) => cfg.sink_multipliers.push((cell(k)?, num(value, "multiplier")?)),
            ("spawn", "population") => population = Some(int(value, "population")? as u32),
            ("spawn", k) => {
                let source = cell(k)?;
                let mut t = value.split_whitespace();
                let count = int(t.next().unwrap_or(""), "count")? as u32;
                let release_step = match t.next() {
                    Some(s) => int(s, "release step")?,
                    None => 0,
                };
                if t.next().is_some() {
                    return Err(err("expected `count [release_step]`".into()));
                }
                entries.push(SpawnEntry {
                    source,
                    count,
                    release_step,
                });
            }
            ("table", k) => {
                let density = int(k, "density")? as u32;
                let mut t = value.split_whitespace();
                let speed_mps = num(t.next().unwrap_or(""), "speed")?;
                let entry_probability = num(t.next().unwrap_or(""), "entry probability")?;
                table_rows.push(SpeedDensityRow {
                    density,
                    speed_mps,
                    entry_probability,
                });
            }
            (s, k) => {
                let place = if s.is_empty() { "top level".to_string() } else { format!("[{s}]") };
                return Err(err(format!("unknown key `{k}` in {place}")));
            }
        }
    }

    let invalid = |message: &str| ConfigError::Invalid {
        origin: origin.to_string(),
        message: message.to_string(),
    };
    cfg.spawn = match (population, entries.is_empty()) {
        (Some(_), false) => return Err(invalid("use either `population` or explicit spawn entries, not both")),
        (Some(n), true) => SpawnSpec::Population(n),
        (None, _) => SpawnSpec::Entries(entries),
    };
    if !table_rows.is_empty() {
        table_rows.sort_by_key(|r| r.density);
        cfg.table = Some(table_rows);
    }
    if cfg.layout_file.is_empty() {
        return Err(invalid("[layout] file is required"));
    }
    if !(cfg.dt_s > 0.0) || !cfg.dt_s.is_finite() {
        return Err(invalid("dt_s must be positive"));
    }
    if cfg.max_steps < 1 {
        return Err(invalid("max_steps must be at least 1"));
    }
    if cfg.sink_multipliers.iter().any(|(_, m)| !(*m > 0.0) || !m.is_finite()) {
        return Err(invalid("sink multipliers must be positive"));
    }
    cfg.field
        .validate()
        .map_err(|e| invalid(&e.to_string()))?;
    cfg.speed_density_table()
        .map_err(|e| invalid(&e.to_string()))?;
    Ok(cfg)
}

/// A scenario file together with the layout it points at.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub config: ScenarioConfig,
    /// Layout as written in the file, before sink multipliers.
    pub layout: LayoutGrid,
    pub origin: String,
}

impl LoadedScenario {
    /// Resolves `arg` as a scenario file path, falling back to a bundled scenario name.
    pub fn load(arg: &str) -> Result<LoadedScenario, ConfigError> {
        let path = Path::new(arg);
        if path.is_file() {
            let text = read(path)?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
            let config = parse_config(&text, arg, stem)?;
            let dir = path.parent().unwrap_or(Path::new("."));
            let layout_path = dir.join(&config.layout_file);
            let (layout_text, layout_origin) = if layout_path.is_file() {
                (read(&layout_path)?, layout_path.display().to_string())
            } else if let Some(t) = bundled::layout(&config.layout_file) {
                (t.to_string(), config.layout_file.clone())
            } else {
                return Err(ConfigError::Io {
                    path: layout_path,
                    source: std::io::Error::from(std::io::ErrorKind::NotFound),
                });
            };
            Self::assemble(config, &layout_text, &layout_origin, arg)
        } else if let Some(text) = bundled::scenario(arg) {
            let origin = format!("<bundled>/{arg}.scn");
            let config = parse_config(text, &origin, arg)?;
            let layout_text = bundled::layout(&config.layout_file).ok_or_else(|| ConfigError::Invalid {
                origin: origin.clone(),
                message: format!("bundled layout `{}` not found", config.layout_file),
            })?;
            let layout_origin = format!("<bundled>/{}", config.layout_file);
            Self::assemble(config, layout_text, &layout_origin, &origin)
        } else {
            Err(ConfigError::UnknownScenario(arg.to_string()))
        }
    }

    /// Builds from already-read texts.
    pub fn from_texts(scenario: &str, layout: &str, name: &str) -> Result<LoadedScenario, ConfigError> {
        let config = parse_config(scenario, name, name)?;
        Self::assemble(config, layout, &config_layout_origin(name), name)
    }

    fn assemble(
        config: ScenarioConfig,
        layout_text: &str,
        layout_origin: &str,
        origin: &str,
    ) -> Result<LoadedScenario, ConfigError> {
        let layout = parse_layout(layout_text).map_err(|source| ConfigError::Layout {
            origin: layout_origin.to_string(),
            source,
        })?;
        let loaded = LoadedScenario {
            config,
            layout,
            origin: origin.to_string(),
        };
        loaded.weighted_layout()?;
        loaded.schedule()?;
        Ok(loaded)
    }

    /// Layout with the scenario's sink multipliers applied.
    pub fn weighted_layout(&self) -> Result<LayoutGrid, ConfigError> {
        for (cell, _) in &self.config.sink_multipliers {
            if !self.layout.is_sink(*cell) {
                return Err(self.invalid(format!("[sinks] entry {cell} is not a sink of the layout")));
            }
        }
        self.layout
            .with_sink_multipliers(&self.config.sink_multipliers)
            .map_err(|source| ConfigError::Layout {
                origin: self.origin.clone(),
                source,
            })
    }

    pub fn schedule(&self) -> Result<SpawnSchedule, ConfigError> {
        match &self.config.spawn {
            SpawnSpec::Population(n) => {
                let entries = self
                    .layout
                    .sources()
                    .iter()
                    .map(|&source| SpawnEntry {
                        source,
                        count: 0,
                        release_step: 0,
                    })
                    .collect();
                Ok(SpawnSchedule::new(entries).with_population(*n))
            }
            SpawnSpec::Entries(entries) => {
                if let Some(e) = entries.iter().find(|e| !self.layout.is_source(e.source)) {
                    return Err(self.invalid(format!("[spawn] entry {} is not a source of the layout", e.source)));
                }
                Ok(SpawnSchedule::new(entries.clone()))
            }
        }
    }

    pub fn field(&self) -> Result<FloorField, ConfigError> {
        FloorField::compute(&self.weighted_layout()?, &self.config.field).map_err(|source| ConfigError::Field {
            origin: self.origin.clone(),
            source,
        })
    }

    /// Solves the field and packages everything the engine needs.
    pub fn build(&self) -> Result<Scenario, ConfigError> {
        let grid = self.weighted_layout()?;
        let field = self.field()?;
        let table = self
            .config
            .speed_density_table()
            .map_err(|e| self.invalid(e.to_string()))?;
        Ok(Scenario {
            grid,
            field,
            table,
            dt_s: self.config.dt_s,
            max_steps: self.config.max_steps,
            schedule: self.schedule()?,
        })
    }

    fn invalid(&self, message: String) -> ConfigError {
        ConfigError::Invalid {
            origin: self.origin.clone(),
            message,
        }
    }
}

fn config_layout_origin(name: &str) -> String {
    format!("{name} (layout)")
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}
