//! Declarative parameter sweeps producing figure-ready tables.
//!
//! A sweep is described by a [`SweepConfig`] (usually read from a TOML file
//! and patched by command-line flags). [`run_sweep`] evaluates the selected
//! pipeline on every grid point and returns a column-oriented
//! [`FigureDataset`] that can be written as CSV (with a `#`-prefixed TOML
//! metadata preamble) or JSON, and parsed back losslessly.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::entanglement::{self, Partition};
use crate::error::{Error, Result};
use crate::fluctuations;
use crate::model::{NormalizedParams, Quadrature, DEFAULT_GAMMA_RATIO, DEFAULT_OMEGA};
use crate::oracle_sde::{self, SdeConfig};
use crate::steady_state::{self, BranchKind, BranchPoint, SteadyState};

/// Status written for grid points without an oscillating solution.
pub const BELOW_THRESHOLD: &str = "below-threshold";
/// Status written for unstable states in spectrum modes.
pub const SKIPPED_UNSTABLE: &str = "skipped: unstable";
pub const OK: &str = "ok";

/// Agreement threshold between analytic and simulated spectra, in standard errors.
pub const ORACLE_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    Steady,
    Duan,
    DuanRotated,
    Vlf,
    Oracle,
}

impl SweepMode {
    pub fn label(self) -> &'static str {
        match self {
            SweepMode::Steady => "steady",
            SweepMode::Duan => "duan",
            SweepMode::DuanRotated => "duan_rotated",
            SweepMode::Vlf => "vlf",
            SweepMode::Oracle => "oracle",
        }
    }
}

/// Linear grid `start:stop:count`; a bare number is a one-point axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn fixed(value: f64) -> Self {
        Self {
            start: value,
            stop: value,
            count: 1,
        }
    }

    pub fn linear(start: f64, stop: f64, count: usize) -> Self {
        Self { start, stop, count }
    }

    pub fn is_swept(&self) -> bool {
        self.count > 1
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let n = self.count - 1;
        (0..self.count)
            .map(|k| {
                if k == n {
                    self.stop
                } else {
                    self.start + (self.stop - self.start) * k as f64 / n as f64
                }
            })
            .collect()
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::Config(format!("{name}: bounds must be finite")));
        }
        if self.count == 0 {
            return Err(Error::Config(format!("{name}: count must be at least 1")));
        }
        if self.start > self.stop {
            return Err(Error::Config(format!("{name}: start exceeds stop")));
        }
        if self.count == 1 && self.start != self.stop {
            return Err(Error::Config(format!(
                "{name}: a single-point axis needs start = stop"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for AxisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.count == 1 {
            write!(f, "{:?}", self.start)
        } else {
            write!(f, "{:?}:{:?}:{}", self.start, self.stop, self.count)
        }
    }
}

impl FromStr for AxisSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "cannot parse axis {s:?}; expected v or start:stop:count"
            ))
        };
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        match parts.as_slice() {
            [v] => Ok(Self::fixed(v.parse().map_err(|_| bad())?)),
            [a, b, n] => Ok(Self::linear(
                a.parse().map_err(|_| bad())?,
                b.parse().map_err(|_| bad())?,
                n.parse().map_err(|_| bad())?,
            )),
            _ => Err(bad()),
        }
    }
}

impl Serialize for AxisSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for AxisSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(Self::fixed(v as f64)),
            Raw::Float(v) => Ok(Self::fixed(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub f2: AxisSpec,
    pub delta_p: AxisSpec,
    pub d3: AxisSpec,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            f2: AxisSpec::linear(0.25, 50.0, 200),
            delta_p: AxisSpec::fixed(0.0),
            d3: AxisSpec::fixed(0.0),
        }
    }
}

impl Grid {
    fn axes(&self) -> [(&'static str, &AxisSpec); 3] {
        [
            ("f2", &self.f2),
            ("delta_p", &self.delta_p),
            ("d3", &self.d3),
        ]
    }

    pub fn n_points(&self) -> usize {
        self.f2.count * self.delta_p.count * self.d3.count
    }

    pub fn swept_axes(&self) -> usize {
        self.axes().iter().filter(|(_, a)| a.is_swept()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedParams {
    pub omega: f64,
    pub gamma_ratio: f64,
}

impl Default for FixedParams {
    fn default() -> Self {
        Self {
            omega: DEFAULT_OMEGA,
            gamma_ratio: DEFAULT_GAMMA_RATIO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::Config(format!("unknown format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub mode: SweepMode,
    pub grid: Grid,
    pub fixed: FixedParams,
    pub output: OutputSpec,
    pub oracle: SdeConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self::new(SweepMode::Steady)
    }
}

impl SweepConfig {
    /// Defaults for `mode`: a pump-power sweep for the table modes, the
    /// empty cavity for the oracle.
    pub fn new(mode: SweepMode) -> Self {
        let mut grid = Grid::default();
        if mode == SweepMode::Oracle {
            grid.f2 = AxisSpec::fixed(0.0);
        }
        Self {
            mode,
            grid,
            fixed: FixedParams::default(),
            output: OutputSpec::default(),
            oracle: SdeConfig::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, axis) in self.grid.axes() {
            axis.validate(name)?;
        }
        if self.grid.f2.start < 0.0 {
            return Err(Error::Config("f2 must be non-negative".into()));
        }
        let swept = self.grid.swept_axes();
        let allowed = if self.mode == SweepMode::Oracle {
            0..=2
        } else {
            1..=2
        };
        if !allowed.contains(&swept) {
            return Err(Error::Config(format!(
                "{} sweeps need {}..={} swept axes, got {swept}",
                self.mode.label(),
                allowed.start(),
                allowed.end()
            )));
        }
        self.params_at(
            self.grid.f2.start,
            self.grid.delta_p.start,
            self.grid.d3.start,
        )?;
        if self.oracle.seed > i64::MAX as u64 {
            return Err(Error::Config(
                "seed must fit in a signed 64-bit integer".into(),
            ));
        }
        self.oracle.validate()
    }

    pub fn params_at(&self, f2: f64, delta_p: f64, d3: f64) -> Result<NormalizedParams> {
        NormalizedParams::new(f2, delta_p, d3, self.fixed.omega, self.fixed.gamma_ratio)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "lowercase")]
pub enum ColumnData {
    Number(Vec<Option<f64>>),
    Flag(Vec<Option<bool>>),
    Text(Vec<String>),
}

impl ColumnData {
    fn kind(&self) -> &'static str {
        match self {
            ColumnData::Number(_) => "number",
            ColumnData::Flag(_) => "flag",
            ColumnData::Text(_) => "text",
        }
    }

    fn empty(kind: &str) -> Result<Self> {
        match kind {
            "number" => Ok(ColumnData::Number(Vec::new())),
            "flag" => Ok(ColumnData::Flag(Vec::new())),
            "text" => Ok(ColumnData::Text(Vec::new())),
            other => Err(Error::Format(format!("unknown column kind {other:?}"))),
        }
    }

    fn len(&self) -> usize {
        match self {
            ColumnData::Number(v) => v.len(),
            ColumnData::Flag(v) => v.len(),
            ColumnData::Text(v) => v.len(),
        }
    }

    fn format_cell(&self, row: usize) -> String {
        match self {
            ColumnData::Number(v) => v[row].map(|x| format!("{x:.16e}")).unwrap_or_default(),
            ColumnData::Flag(v) => v[row].map(|b| b.to_string()).unwrap_or_default(),
            ColumnData::Text(v) => v[row].clone(),
        }
    }

    fn push_parsed(&mut self, cell: &str) -> Result<()> {
        let bad = || Error::Format(format!("cannot parse cell {cell:?}"));
        match self {
            ColumnData::Number(v) => v.push(if cell.is_empty() {
                None
            } else {
                Some(cell.parse().map_err(|_| bad())?)
            }),
            ColumnData::Flag(v) => v.push(match cell {
                "" => None,
                "true" => Some(true),
                "false" => Some(false),
                _ => return Err(bad()),
            }),
            ColumnData::Text(v) => v.push(cell.to_string()),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(flatten)]
    pub data: ColumnData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub generator: String,
    pub version: String,
    pub seed: u64,
    /// Periodogram window of the stochastic estimate.
    pub window: String,
    pub config: SweepConfig,
}

impl Metadata {
    pub fn for_config(config: &SweepConfig) -> Self {
        Self {
            generator: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.oracle.seed,
            window: "hann".to_string(),
            config: config.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureDataset {
    pub metadata: Metadata,
    pub columns: Vec<Column>,
}

impl FigureDataset {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.data.len())
    }

    pub fn column(&self, name: &str) -> Option<&ColumnData> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .map(|c| &c.data)
    }

    pub fn numbers(&self, name: &str) -> Option<&[Option<f64>]> {
        match self.column(name)? {
            ColumnData::Number(v) => Some(v),
            _ => None,
        }
    }

    pub fn flags(&self, name: &str) -> Option<&[Option<bool>]> {
        match self.column(name)? {
            ColumnData::Flag(v) => Some(v),
            _ => None,
        }
    }

    pub fn texts(&self, name: &str) -> Option<&[String]> {
        match self.column(name)? {
            ColumnData::Text(v) => Some(v),
            _ => None,
        }
    }

    fn check_shape(&self) -> Result<()> {
        let n = self.n_rows();
        for c in &self.columns {
            if c.data.len() != n {
                return Err(Error::Format(format!(
                    "column {} has ragged length",
                    c.name
                )));
            }
            if let ColumnData::Number(v) = &c.data {
                if v.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(Error::Format(format!(
                        "column {} holds a non-finite value",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Cell {
    Num(Option<f64>),
    Flag(Option<bool>),
    Text(String),
}

fn num(x: f64) -> Cell {
    Cell::Num(Some(x))
}

/// Row-wise builder that transposes into typed columns.
struct Table {
    names: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(names: Vec<String>) -> Self {
        Self {
            names,
            rows: Vec::new(),
        }
    }

    fn into_columns(self, kinds: &[&str]) -> Vec<Column> {
        let mut cols: Vec<Column> = self
            .names
            .into_iter()
            .zip(kinds)
            .map(|(name, kind)| Column {
                name,
                data: ColumnData::empty(kind).expect("known kind"),
            })
            .collect();
        for row in self.rows {
            assert_eq!(row.len(), cols.len(), "row width");
            for (col, cell) in cols.iter_mut().zip(row) {
                match (&mut col.data, cell) {
                    (ColumnData::Number(v), Cell::Num(x)) => v.push(x),
                    (ColumnData::Flag(v), Cell::Flag(b)) => v.push(b),
                    (ColumnData::Text(v), Cell::Text(t)) => v.push(t),
                    _ => panic!("cell type mismatch in column {}", col.name),
                }
            }
        }
        cols
    }
}

/// Column layout of one sweep mode as (name, kind) pairs.
fn schema(mode: SweepMode) -> Vec<(String, &'static str)> {
    let mut s: Vec<(String, &'static str)> = vec![
        ("f2".into(), "number"),
        ("delta_p".into(), "number"),
        ("d3".into(), "number"),
        ("branch".into(), "number"),
        ("kind".into(), "text"),
        ("stable".into(), "flag"),
        ("status".into(), "text"),
        ("pump_intensity".into(), "number"),
        ("signal_intensity".into(), "number"),
    ];
    match mode {
        SweepMode::Steady => {
            s.push(("idler_intensity".into(), "number"));
            s.push(("pump_phase".into(), "number"));
            s.push(("signal_phase".into(), "number"));
            s.push(("idler_phase".into(), "number"));
        }
        SweepMode::Duan => {
            s.push(("pump_classical_stable".into(), "flag"));
            s.push(("duan".into(), "number"));
            s.push(("duan_violated".into(), "flag"));
        }
        SweepMode::DuanRotated => {
            s.push(("pump_classical_stable".into(), "flag"));
            for name in ["duan", "duan_rotated", "c", "theta_plus", "theta_minus"] {
                s.push((name.into(), "number"));
            }
            s.push(("duan_violated".into(), "flag"));
            s.push(("duan_rotated_violated".into(), "flag"));
        }
        SweepMode::Vlf => {
            for p in Partition::ALL {
                let l = p.label();
                s.push((format!("vlf_{l}"), "number"));
                s.push((format!("vlf_bound_{l}"), "number"));
                s.push((format!("vlf_form_{l}"), "text"));
                s.push((format!("vlf_violated_{l}"), "flag"));
            }
            for k in 1..=4 {
                s.push((format!("schmidt_variance_{k}"), "number"));
            }
            s.push(("partition_symmetric".into(), "flag"));
        }
        SweepMode::Oracle => {
            s.push(("max_z".into(), "number"));
            s.push(("stationarity_z".into(), "number"));
            s.push(("agrees".into(), "flag"));
            for q in Quadrature::ALL {
                let l = q.label();
                s.push((format!("S_{l}_analytic"), "number"));
                s.push((format!("S_{l}_sde"), "number"));
                s.push((format!("S_{l}_stderr"), "number"));
            }
        }
    }
    s
}

fn state_cells(coords: [f64; 3], bp: &BranchPoint, status: &str) -> Vec<Cell> {
    let s = &bp.state;
    vec![
        num(coords[0]),
        num(coords[1]),
        num(coords[2]),
        num(bp.branch as f64),
        Cell::Text(s.kind.label().to_string()),
        Cell::Flag(Some(s.stable)),
        Cell::Text(status.to_string()),
        num(s.pump_intensity()),
        num(s.signal_intensity()),
    ]
}

fn gap_cells(coords: [f64; 3], kinds: &[&str]) -> Vec<Cell> {
    let mut row = vec![num(coords[0]), num(coords[1]), num(coords[2])];
    row.extend(kinds[3..].iter().map(|k| blank(k)));
    row[6] = Cell::Text(BELOW_THRESHOLD.to_string());
    row
}

fn blank(kind: &str) -> Cell {
    match kind {
        "number" => Cell::Num(None),
        "flag" => Cell::Flag(None),
        _ => Cell::Text(String::new()),
    }
}

fn mode_cells(mode: SweepMode, cfg: &SweepConfig, state: &SteadyState) -> Result<Vec<Cell>> {
    let omega = state.params.omega;
    match mode {
        SweepMode::Steady => Ok(vec![
            num(state.idler.intensity()),
            num(state.pump.phase),
            num(state.signal.phase),
            num(state.idler.phase),
        ]),
        SweepMode::Duan | SweepMode::DuanRotated => {
            let fs = fluctuations::linearize(state)?;
            let s4 = fluctuations::pump_classical_spectrum(&fs, omega)?;
            let duan = entanglement::duan_witness(&s4);
            if mode == SweepMode::Duan {
                return Ok(vec![
                    Cell::Flag(Some(true)),
                    num(duan),
                    Cell::Flag(Some(duan < 0.0)),
                ]);
            }
            let rot = entanglement::schmidt_rotation_2d(&s4);
            let (rotated, c) = entanglement::duan_rotated(&s4, &rot);
            Ok(vec![
                Cell::Flag(Some(true)),
                num(duan),
                num(rotated),
                num(c),
                num(rot.theta_plus),
                num(rot.theta_minus),
                Cell::Flag(Some(duan < 0.0)),
                Cell::Flag(Some(rotated < 0.0)),
            ])
        }
        SweepMode::Vlf => {
            let fs = fluctuations::linearize(state)?;
            let s6 = fluctuations::output_spectrum(&fs, omega)?;
            let mut cells = Vec::new();
            for p in Partition::ALL {
                let w = entanglement::schmidt_witness(&s6, p);
                cells.push(num(w.witness.margin()));
                cells.push(num(w.witness.bound));
                cells.push(Cell::Text(w.form.label()));
                cells.push(Cell::Flag(Some(w.witness.violated())));
            }
            let t = entanglement::schmidt_transform_4d(&s6);
            cells.extend(t.variances.iter().map(|&v| num(v)));
            cells.push(Cell::Flag(Some(entanglement::partition_symmetry_check(
                &s6,
            ))));
            Ok(cells)
        }
        SweepMode::Oracle => {
            let fs = fluctuations::linearize(state)?;
            let analytic = fluctuations::output_spectrum(&fs, omega)?;
            let run = oracle_sde::simulate_linear(&fs, &cfg.oracle, omega)?;
            let z = run.max_z_score(&analytic);
            let mut cells = vec![
                num(z),
                num(run.stationarity_z_score()),
                Cell::Flag(Some(z <= ORACLE_SIGMAS)),
            ];
            for q in Quadrature::ALL {
                let i = q.index();
                cells.push(num(analytic.matrix[(i, i)]));
                cells.push(num(run.spectrum.matrix[(i, i)]));
                cells.push(num(run.std_error[(i, i)]));
            }
            Ok(cells)
        }
    }
}

/// Rows for one grid point; witness modes keep only oscillating states and
/// mark points without any as gaps.
fn point_rows(
    cfg: &SweepConfig,
    coords: [f64; 3],
    points: &[BranchPoint],
    kinds: &[&str],
) -> Result<Vec<Vec<Cell>>> {
    let mode = cfg.mode;
    let witness_mode = matches!(
        mode,
        SweepMode::Duan | SweepMode::DuanRotated | SweepMode::Vlf
    );
    let selected: Vec<&BranchPoint> = points
        .iter()
        .filter(|bp| !witness_mode || bp.state.kind == BranchKind::Oscillating)
        .collect();
    if witness_mode && selected.is_empty() {
        return Ok(vec![gap_cells(coords, kinds)]);
    }
    let mut rows = Vec::with_capacity(selected.len());
    for bp in selected {
        let spectral = mode != SweepMode::Steady;
        if spectral && !bp.state.stable {
            let mut row = state_cells(coords, bp, SKIPPED_UNSTABLE);
            row.extend(kinds[row.len()..].iter().map(|k| blank(k)));
            rows.push(row);
            continue;
        }
        let mut row = state_cells(coords, bp, OK);
        match mode_cells(mode, cfg, &bp.state) {
            Ok(cells) => row.extend(cells),
            // A stable state whose pump-classical reduction has a growing mode.
            Err(Error::Unstable { .. }) => {
                row = state_cells(coords, bp, SKIPPED_UNSTABLE);
                row.extend(kinds[row.len()..].iter().map(|k| blank(k)));
                if matches!(mode, SweepMode::Duan | SweepMode::DuanRotated) {
                    row[9] = Cell::Flag(Some(false));
                }
            }
            Err(e) => return Err(e),
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Evaluates the configured pipeline over the grid.
///
/// The first swept axis (in the order f2, delta_p, d3) is the continuation
/// axis along which branches are labelled; rows are ordered by the remaining
/// axes (d3 outermost) and then by the continuation axis.
pub fn run_sweep(cfg: &SweepConfig) -> Result<FigureDataset> {
    cfg.validate()?;
    let sch = schema(cfg.mode);
    let kinds: Vec<&str> = sch.iter().map(|(_, k)| *k).collect();
    let mut table = Table::new(sch.iter().map(|(n, _)| n.clone()).collect());

    let axes = [cfg.grid.f2, cfg.grid.delta_p, cfg.grid.d3];
    let fast = axes.iter().position(|a| a.is_swept()).unwrap_or(0);
    let slow: Vec<usize> = (0..3).rev().filter(|&k| k != fast).collect();
    let slow_values: Vec<Vec<f64>> = slow.iter().map(|&k| axes[k].values()).collect();

    for a in &slow_values[0] {
        for b in &slow_values[1] {
            let mut base = [0.0; 3];
            base[slow[0]] = *a;
            base[slow[1]] = *b;
            let coords_at = |v: f64| {
                let mut c = base;
                c[fast] = v;
                c
            };
            let line = steady_state::sweep(&axes[fast].values(), |v| {
                let c = coords_at(v);
                NormalizedParams {
                    f2: c[0],
                    delta_p: c[1],
                    d3: c[2],
                    omega: cfg.fixed.omega,
                    gamma_ratio: cfg.fixed.gamma_ratio,
                }
            });
            let per_point: Vec<Result<Vec<Vec<Cell>>>> = if cfg.mode == SweepMode::Oracle {
                // The simulation is already parallel across trajectories.
                line.axis
                    .iter()
                    .zip(&line.points)
                    .map(|(&v, pts)| point_rows(cfg, coords_at(v), pts, &kinds))
                    .collect()
            } else {
                line.axis
                    .par_iter()
                    .zip(line.points.par_iter())
                    .map(|(&v, pts)| point_rows(cfg, coords_at(v), pts, &kinds))
                    .collect()
            };
            for rows in per_point {
                table.rows.extend(rows?);
            }
        }
    }

    Ok(FigureDataset {
        metadata: Metadata::for_config(cfg),
        columns: table.into_columns(&kinds),
    })
}

#[derive(Serialize, Deserialize)]
struct CsvPreamble {
    columns: Vec<String>,
    metadata: Metadata,
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// CSV text: `#`-prefixed TOML metadata, a header row, then one line per row.
pub fn to_csv_string(d: &FigureDataset) -> Result<String> {
    d.check_shape()?;
    let preamble = CsvPreamble {
        columns: d
            .columns
            .iter()
            .map(|c| format!("{}:{}", c.name, c.data.kind()))
            .collect(),
        metadata: d.metadata.clone(),
    };
    let toml = toml::to_string(&preamble).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = String::new();
    for line in toml.lines() {
        out.push_str(if line.is_empty() { "#" } else { "# " });
        out.push_str(line);
        out.push('\n');
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(d.columns.iter().map(|c| c.name.as_str()))
        .map_err(csv_err)?;
    for row in 0..d.n_rows() {
        w.write_record(d.columns.iter().map(|c| c.data.format_cell(row)))
            .map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    out.push_str(std::str::from_utf8(&body).expect("csv output is UTF-8"));
    Ok(out)
}

pub fn parse_csv(text: &str) -> Result<FigureDataset> {
    let mut preamble = String::new();
    let mut body_start = 0;
    for line in text.split_inclusive('\n') {
        let Some(rest) = line.strip_prefix('#') else {
            break;
        };
        preamble.push_str(rest.strip_prefix(' ').unwrap_or(rest));
        body_start += line.len();
    }
    let pre: CsvPreamble = toml::from_str(&preamble).map_err(|e| Error::Format(e.to_string()))?;
    let mut columns = Vec::new();
    for spec in &pre.columns {
        let (name, kind) = spec
            .rsplit_once(':')
            .ok_or_else(|| Error::Format(format!("bad column descriptor {spec:?}")))?;
        columns.push(Column {
            name: name.to_string(),
            data: ColumnData::empty(kind)?,
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(&text.as_bytes()[body_start..]);
    let header = reader.headers().map_err(|e| Error::Format(e.to_string()))?;
    if header.iter().ne(columns.iter().map(|c| c.name.as_str())) {
        return Err(Error::Format(
            "header does not match the column list".into(),
        ));
    }
    for record in reader.records() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        for (col, cell) in columns.iter_mut().zip(record.iter()) {
            col.data.push_parsed(cell)?;
        }
    }
    Ok(FigureDataset {
        metadata: pre.metadata,
        columns,
    })
}

pub fn to_json_string(d: &FigureDataset) -> Result<String> {
    d.check_shape()?;
    let mut s = serde_json::to_string_pretty(d).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn parse_json(text: &str) -> Result<FigureDataset> {
    let d: FigureDataset = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    d.check_shape()?;
    Ok(d)
}

pub fn emit_csv(d: &FigureDataset, path: &Path) -> Result<()> {
    let text = to_csv_string(d)?;
    fs::write(path, text).map_err(io_error(path))
}

pub fn emit_json(d: &FigureDataset, path: &Path) -> Result<()> {
    let text = to_json_string(d)?;
    fs::write(path, text).map_err(io_error(path))
}

/// Writes `d` in `format`, to `path` or to `out` when no path is given.
pub fn emit(
    d: &FigureDataset,
    format: OutputFormat,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    match (format, path) {
        (OutputFormat::Csv, Some(p)) => emit_csv(d, p),
        (OutputFormat::Json, Some(p)) => emit_json(d, p),
        (fmt, None) => {
            let text = match fmt {
                OutputFormat::Csv => to_csv_string(d)?,
                OutputFormat::Json => to_json_string(d)?,
            };
            out.write_all(text.as_bytes())
                .map_err(io_error(Path::new("<stdout>")))
        }
    }
}

pub fn read_dataset(path: &Path) -> Result<FigureDataset> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    if path.extension().is_some_and(|e| e == "json") {
        parse_json(&text)
    } else {
        parse_csv(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub params: NormalizedParams,
    pub checks: Vec<Check>,
    /// States skipped because they have no stationary spectrum.
    pub skipped: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        writeln!(
            f,
            "verify at f2 = {}, delta_p = {}, d3 = {}, omega = {}, gamma_ratio = {}",
            p.f2, p.delta_p, p.d3, p.omega, p.gamma_ratio
        )?;
        for s in &self.skipped {
            writeln!(f, "SKIP {s}")?;
        }
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {}: {}", c.name, c.detail)?;
        }
        write!(
            f,
            "{}",
            if self.passed() {
                "verify: PASS"
            } else {
                "verify: FAIL"
            }
        )
    }
}

/// Invariant suite plus simulated-versus-analytic spectra at a single grid point.
///
/// Every stable fixed point at the point is checked; unstable ones are
/// listed as skipped. A point with no stable fixed point is an error.
pub fn verify(cfg: &SweepConfig) -> Result<VerifyReport> {
    if cfg.mode != SweepMode::Oracle {
        return Err(Error::Config("verify requires mode = \"oracle\"".into()));
    }
    cfg.validate()?;
    if cfg.grid.n_points() != 1 {
        return Err(Error::Config("verify runs on a single grid point".into()));
    }
    let params = cfg.params_at(cfg.grid.f2.start, cfg.grid.delta_p.start, cfg.grid.d3.start)?;
    let omega = params.omega;
    let mut report = VerifyReport {
        params,
        checks: Vec::new(),
        skipped: Vec::new(),
    };
    let mut worst_growth = f64::NEG_INFINITY;
    for (k, state) in steady_state::solve_all(&params).iter().enumerate() {
        let tag = format!("state {k} ({})", state.kind.label());
        let fs = fluctuations::linearize(state)?;
        let st = fluctuations::stability(&fs);
        if !st.stable {
            worst_growth = worst_growth.max(st.max_growth);
            report.skipped.push(format!(
                "{tag}: unstable, max growth rate {:.3e}",
                st.max_growth
            ));
            continue;
        }
        let mut check = |name: &str, passed: bool, detail: String| {
            report.checks.push(Check {
                name: format!("{tag} {name}"),
                passed,
                detail,
            })
        };
        let r = state.residual();
        check(
            "residual",
            r <= steady_state::RESIDUAL_TOLERANCE,
            format!("{r:.2e}"),
        );
        let leak = fs.block_leakage();
        check(
            "difference-block decoupling",
            leak <= 1e-12,
            format!("{leak:.2e}"),
        );
        let s6 = fluctuations::output_spectrum(&fs, omega)?;
        let sym = s6.symmetry_error();
        check("spectrum symmetry", sym <= 1e-12, format!("{sym:.2e}"));
        let phys = s6.physicality_margin();
        check(
            "physicality",
            phys >= -1e-9,
            format!("min eigenvalue {phys:.3e}"),
        );
        let far = fluctuations::output_spectrum(&fs, 1e3)?;
        let shot = (far.matrix - fluctuations::FullSpectrum::vacuum(1e3).matrix).amax();
        check(
            "shot-noise limit",
            shot <= 1e-3,
            format!("{shot:.2e} at omega = 1e3"),
        );
        let run = oracle_sde::simulate_linear(&fs, &cfg.oracle, omega)?;
        let z = run.max_z_score(&s6);
        check(
            "stochastic oracle",
            z <= ORACLE_SIGMAS,
            format!(
                "max |z| = {z:.2} over {} trajectories",
                cfg.oracle.n_trajectories
            ),
        );
        if cfg.oracle.segments_per_trajectory > 1 {
            let zs = run.stationarity_z_score();
            check(
                "stationarity",
                zs <= ORACLE_SIGMAS,
                format!("first vs last segment max |z| = {zs:.2}"),
            );
        }
    }
    if report.checks.is_empty() {
        return Err(Error::Unstable {
            max_growth: worst_growth,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing() {
        assert_eq!("3".parse::<AxisSpec>().unwrap(), AxisSpec::fixed(3.0));
        let a: AxisSpec = "0.25:50:200".parse().unwrap();
        assert_eq!(a, AxisSpec::linear(0.25, 50.0, 200));
        let v = a.values();
        assert_eq!(v.len(), 200);
        assert_eq!((v[0], v[199]), (0.25, 50.0));
        assert!("1:2".parse::<AxisSpec>().is_err());
        assert!("a:2:3".parse::<AxisSpec>().is_err());
        assert_eq!(a.to_string().parse::<AxisSpec>().unwrap(), a);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SweepConfig::new(SweepMode::Duan);
        assert!(cfg.validate().is_ok());
        cfg.grid.f2 = AxisSpec::linear(5.0, 1.0, 3);
        assert!(cfg.validate().is_err());
        cfg.grid.f2 = AxisSpec::fixed(1.0);
        assert!(cfg.validate().is_err(), "no swept axis");
        cfg.mode = SweepMode::Oracle;
        assert!(cfg.validate().is_ok());
        cfg.mode = SweepMode::Steady;
        cfg.grid = Grid {
            f2: AxisSpec::linear(0.0, 1.0, 2),
            delta_p: AxisSpec::linear(0.0, 1.0, 2),
            d3: AxisSpec::linear(0.0, 1.0, 2),
        };
        assert!(cfg.validate().is_err(), "three swept axes");
        cfg.grid.d3 = AxisSpec::fixed(0.0);
        cfg.fixed.gamma_ratio = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_config_with_defaults() {
        let cfg = SweepConfig::from_toml_str(
            r#"
            mode = "duan_rotated"
            [grid]
            f2 = "1:20:5"
            d3 = -4
            "#,
        )
        .unwrap();
        assert_eq!(cfg.mode, SweepMode::DuanRotated);
        assert_eq!(cfg.grid.d3, AxisSpec::fixed(-4.0));
        assert_eq!(cfg.fixed.omega, 0.015);
        assert_eq!(cfg.fixed.gamma_ratio, 0.55);
        assert!(SweepConfig::from_toml_str("mode = \"duan\"\nbogus = 1").is_err());
        let back = SweepConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn steady_sweep_without_detuning_has_no_oscillation() {
        let cfg = SweepConfig::new(SweepMode::Steady);
        let d = run_sweep(&cfg).unwrap();
        assert_eq!(d.n_rows(), 200);
        assert!(d.texts("kind").unwrap().iter().all(|k| k == "pump-only"));
    }

    #[test]
    fn witness_sweep_marks_gaps() {
        let mut cfg = SweepConfig::new(SweepMode::Duan);
        cfg.grid.f2 = AxisSpec::linear(0.5, 6.0, 12);
        cfg.grid.d3 = AxisSpec::fixed(-4.0);
        let d = run_sweep(&cfg).unwrap();
        let status = d.texts("status").unwrap();
        assert_eq!(status[0], BELOW_THRESHOLD);
        assert!(status.iter().any(|s| s == OK));
        for (s, w) in status.iter().zip(d.numbers("duan").unwrap()) {
            assert_eq!(s == OK, w.is_some());
        }
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let d = FigureDataset {
            metadata: Metadata::for_config(&SweepConfig::default()),
            columns: vec![
                Column {
                    name: "f2".into(),
                    data: ColumnData::Number(vec![]),
                },
                Column {
                    name: "status".into(),
                    data: ColumnData::Text(vec![]),
                },
            ],
        };
        let csv = to_csv_string(&d).unwrap();
        let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body, vec!["f2,status"]);
        assert_eq!(parse_csv(&csv).unwrap(), d);
        assert!(csv.contains("gamma_ratio = 0.55"));
    }

    #[test]
    fn unwritable_path_names_the_path() {
        let d = run_sweep(&SweepConfig::new(SweepMode::Steady)).unwrap();
        let path = Path::new("/nonexistent-dir/out.csv");
        let err = emit_csv(&d, path).unwrap_err().to_string();
        assert!(err.contains("/nonexistent-dir/out.csv"), "{err}");
    }
}
