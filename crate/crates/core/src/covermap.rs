//! Grid sweeps: RSS coverage per tower, joint (nearest-tower) coverage,
//! empirical CDFs and channel-rank grids over altitudes and thresholds.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::{rank_from_singular_values, rss_mimo, rss_siso, synthesize_channel, ArrayConfig, Beamforming};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::raytrace::{Tracer, DEFAULT_MAX_REFLECTIONS};
use crate::scene::{Grid, Scene, Tower};

/// Out-of-coverage marker in text outputs.
pub const Z_MARKER: &str = "Z";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Siso,
    Mimo,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Siso => "siso",
            Mode::Mimo => "mimo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub max_reflections: usize,
    pub beam: Beamforming,
    pub exec: Exec,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            max_reflections: DEFAULT_MAX_REFLECTIONS,
            beam: Beamforming::Uniform,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    /// `None` for the joint grid.
    pub tower: Option<u32>,
    pub altitude: f64,
    pub mode: Mode,
    pub grid: Grid,
    /// RSS in dBm per grid index, `None` where out of coverage.
    pub values: Vec<Option<f64>>,
}

impl CoverageGrid {
    pub fn blockage_fraction(&self) -> f64 {
        blockage_fraction(&self.values)
    }
}

pub fn blockage_fraction<T>(values: &[Option<T>]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|v| v.is_none()).count() as f64 / values.len() as f64
}

fn receiver(grid: &Grid, index: usize, altitude: f64) -> [f64; 3] {
    let p = grid.position(index);
    [p[0], p[1], altitude]
}

pub fn compute_coverage(scene: &Scene, tower: &Tower, altitude: f64, mode: Mode) -> Result<CoverageGrid> {
    compute_coverage_with(scene, tower, altitude, mode, SweepOptions::default())
}

pub fn compute_coverage_with(
    scene: &Scene,
    tower: &Tower,
    altitude: f64,
    mode: Mode,
    opts: SweepOptions,
) -> Result<CoverageGrid> {
    if !(altitude > 0.0) {
        return Err(Error::invalid("altitude", "must be positive"));
    }
    let grid = scene.grid()?;
    let tracer = Tracer::new(scene);
    let wavelength = scene.wavelength();
    let values = opts.exec.map_indexed(grid.len(), |i| {
        let paths = tracer.trace(tower.location(), receiver(&grid, i, altitude), opts.max_reflections);
        let rss = match mode {
            Mode::Siso => rss_siso(&paths, scene.tx_power_w),
            Mode::Mimo => rss_mimo(&paths, &tower.array, &scene.rx_array, scene.tx_power_w, wavelength, opts.beam),
        };
        rss.ok()
    });
    Ok(CoverageGrid {
        tower: Some(tower.id),
        altitude,
        mode,
        grid,
        values,
    })
}

/// Assigns each cell to its horizontally nearest tower (lowest id on ties)
/// among the towers the grids belong to. Returns the joint grid and the
/// serving tower id per cell.
pub fn joint_coverage(scene: &Scene, grids: &[CoverageGrid]) -> Result<(CoverageGrid, Vec<u32>)> {
    let first = grids.first().ok_or_else(|| Error::Mismatch("no coverage grids".into()))?;
    let mut towers = Vec::with_capacity(grids.len());
    for g in grids {
        if g.altitude != first.altitude || g.mode != first.mode || g.grid != first.grid || g.values.len() != first.values.len() {
            return Err(Error::Mismatch("coverage grids differ in altitude, mode or dimensions".into()));
        }
        let id = g.tower.ok_or_else(|| Error::Mismatch("joint grid given as input".into()))?;
        let tower = scene
            .tower(id)
            .ok_or_else(|| Error::Mismatch(format!("tower {id} not in scene")))?;
        towers.push(tower);
    }
    let grid = first.grid;
    let mut serving = Vec::with_capacity(grid.len());
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let p = grid.position(i);
        let mut best = 0;
        let mut best_d2 = f64::INFINITY;
        for (k, t) in towers.iter().enumerate() {
            let d2 = (t.position[0] - p[0]).powi(2) + (t.position[1] - p[1]).powi(2);
            if d2 < best_d2 || (d2 == best_d2 && t.id < towers[best].id) {
                best = k;
                best_d2 = d2;
            }
        }
        serving.push(towers[best].id);
        values.push(grids[best].values[i]);
    }
    Ok((
        CoverageGrid {
            tower: None,
            altitude: first.altitude,
            mode: first.mode,
            grid,
            values,
        },
        serving,
    ))
}

/// Empirical CDF. Out-of-coverage cells form an atom below every value, so
/// the first fraction already includes `blockage_fraction`.
#[derive(Debug, Clone, PartialEq)]
pub struct RssCdf {
    pub blockage_fraction: f64,
    /// `(value_dbm, cumulative fraction)` at each distinct value, ascending.
    pub points: Vec<(f64, f64)>,
}

impl RssCdf {
    /// Fraction of cells with value ≤ `v` (out-of-coverage counted below all values).
    pub fn at(&self, v: f64) -> f64 {
        self.points
            .iter()
            .take_while(|(x, _)| *x <= v)
            .last()
            .map_or(self.blockage_fraction, |(_, f)| *f)
    }
}

pub fn rss_cdf(grid: &CoverageGrid) -> RssCdf {
    let total = grid.values.len();
    let mut vals: Vec<f64> = grid.values.iter().flatten().copied().collect();
    vals.sort_by(f64::total_cmp);
    let blocked = total - vals.len();
    let blockage = if total == 0 { 0.0 } else { blocked as f64 / total as f64 };
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (k, v) in vals.iter().enumerate() {
        let frac = (blocked + k + 1) as f64 / total as f64;
        match points.last_mut() {
            Some(last) if last.0 == *v => last.1 = frac,
            _ => points.push((*v, frac)),
        }
    }
    RssCdf {
        blockage_fraction: blockage,
        points,
    }
}

/// Channel rank per (altitude, threshold, cell), `None` where out of coverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankGrid {
    pub grid: Grid,
    pub altitudes: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// Serving tower id per cell (empty for synthetic fields).
    #[serde(default)]
    pub serving: Vec<u32>,
    /// Flat `[(altitude * n_thresholds + threshold) * n_cells + cell]`.
    pub ranks: Vec<Option<u8>>,
}

impl RankGrid {
    pub fn new(grid: Grid, altitudes: Vec<f64>, thresholds: Vec<f64>) -> Self {
        let n = grid.len() * altitudes.len() * thresholds.len();
        RankGrid {
            grid,
            altitudes,
            thresholds,
            serving: Vec::new(),
            ranks: vec![None; n],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.grid.len()
    }

    fn offset(&self, altitude: usize, threshold: usize) -> usize {
        (altitude * self.thresholds.len() + threshold) * self.n_cells()
    }

    pub fn get(&self, altitude: usize, threshold: usize, cell: usize) -> Option<u8> {
        self.ranks[self.offset(altitude, threshold) + cell]
    }

    pub fn set(&mut self, altitude: usize, threshold: usize, cell: usize, rank: Option<u8>) {
        let o = self.offset(altitude, threshold);
        self.ranks[o + cell] = rank;
    }

    pub fn slice(&self, altitude: usize, threshold: usize) -> &[Option<u8>] {
        let o = self.offset(altitude, threshold);
        &self.ranks[o..o + self.n_cells()]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_cells() * self.altitudes.len() * self.thresholds.len();
        if self.ranks.len() != n {
            return Err(Error::invalid(
                "ranks",
                format!("expected {n} entries, found {}", self.ranks.len()),
            ));
        }
        if !self.serving.is_empty() && self.serving.len() != self.n_cells() {
            return Err(Error::invalid("serving", "length differs from the grid"));
        }
        if self.thresholds.iter().any(|k| !(*k > 1.0)) {
            return Err(Error::invalid("thresholds", "must exceed 1"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("rank grid serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rg: RankGrid = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        rg.validate()?;
        Ok(rg)
    }
}

pub fn compute_rank_grid(scene: &Scene, thresholds: &[f64]) -> Result<RankGrid> {
    compute_rank_grid_with(scene, &scene.altitudes, thresholds, SweepOptions::default())
}

/// Ranks per cell and altitude, served by the nearest tower.
pub fn compute_rank_grid_with(
    scene: &Scene,
    altitudes: &[f64],
    thresholds: &[f64],
    opts: SweepOptions,
) -> Result<RankGrid> {
    if scene.towers.is_empty() {
        return Err(Error::invalid("towers", "at least one tower required"));
    }
    if thresholds.iter().any(|k| !(*k > 1.0)) {
        return Err(Error::invalid("thresholds", "must exceed 1"));
    }
    let grid = scene.grid()?;
    let tracer = Tracer::new(scene);
    let wavelength = scene.wavelength();
    let rx_array: &ArrayConfig = &scene.rx_array;

    let per_cell = opts.exec.map_indexed(grid.len(), |i| {
        let p = grid.position(i);
        let tower = &scene.towers[scene.nearest_tower(p).expect("towers present")];
        let ranks: Vec<Option<Vec<u8>>> = altitudes
            .iter()
            .map(|&h| {
                let paths = tracer.trace(tower.location(), [p[0], p[1], h], opts.max_reflections);
                let channel = synthesize_channel(&paths, &tower.array, rx_array, wavelength).ok()?;
                let sv = channel.singular_values();
                thresholds
                    .iter()
                    .map(|&k| rank_from_singular_values(&sv, k).ok().map(|r| r as u8))
                    .collect()
            })
            .collect();
        (tower.id, ranks)
    });

    let mut rg = RankGrid::new(grid, altitudes.to_vec(), thresholds.to_vec());
    rg.serving = per_cell.iter().map(|(id, _)| *id).collect();
    for (cell, (_, ranks)) in per_cell.iter().enumerate() {
        for (a, r) in ranks.iter().enumerate() {
            for k in 0..thresholds.len() {
                rg.set(a, k, cell, r.as_ref().map(|v| v[k]));
            }
        }
    }
    Ok(rg)
}

// ---------------------------------------------------------------------------
// writers

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => Z_MARKER.to_string(),
    }
}

/// `x_m,y_m,value` with `Z` for out-of-coverage cells.
pub fn write_grid_csv<W: Write, T: std::fmt::Display>(grid: &Grid, values: &[Option<T>], mut out: W) -> std::io::Result<()> {
    writeln!(out, "x_m,y_m,value")?;
    for (i, v) in values.iter().enumerate() {
        let p = grid.position(i);
        writeln!(out, "{},{},{}", p[0], p[1], fmt_opt(v))?;
    }
    Ok(())
}

/// 8-bit binary PGM, north row first. Values map linearly onto 1..=255 over
/// `[min_dbm, max_dbm]` (clamped); out-of-coverage cells are 0.
pub fn write_pgm<W: Write>(grid: &Grid, values: &[Option<f64>], min_dbm: f64, max_dbm: f64, mut out: W) -> std::io::Result<()> {
    write!(out, "P5\n{} {}\n255\n", grid.nx, grid.ny)?;
    let span = (max_dbm - min_dbm).max(f64::MIN_POSITIVE);
    let mut row = vec![0u8; grid.nx];
    for r in (0..grid.ny).rev() {
        for (c, px) in row.iter_mut().enumerate() {
            *px = match values[r * grid.nx + c] {
                None => 0,
                Some(v) => {
                    let t = ((v - min_dbm) / span).clamp(0.0, 1.0);
                    if t.is_nan() {
                        1
                    } else {
                        1 + (t * 254.0).round() as u8
                    }
                }
            };
        }
        out.write_all(&row)?;
    }
    Ok(())
}

/// `value_dbm,fraction`; the first row `Z,<blockage>` carries the
/// out-of-coverage atom.
pub fn write_cdf_csv<W: Write>(cdf: &RssCdf, mut out: W) -> std::io::Result<()> {
    writeln!(out, "value_dbm,fraction")?;
    writeln!(out, "{},{}", Z_MARKER, cdf.blockage_fraction)?;
    for (v, f) in &cdf.points {
        writeln!(out, "{v},{f}")?;
    }
    Ok(())
}
