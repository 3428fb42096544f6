//! Leave-one-out evaluation, measurement traces and offset calibration,
//! rank histograms.

use std::collections::BTreeMap;
use std::io::Write;
use std::str::FromStr;

use crate::baseline::{baseline_rank, BaselineMethod};
use crate::correlation::CorrelationModel;
use crate::covermap::{RankGrid, Z_MARKER};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::kriging::{column_variances, krige_rank, KrigingConfig, RankLayer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Kriging,
    Spline,
    Makima,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Kriging, Method::Spline, Method::Makima];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Kriging => "kriging",
            Method::Spline => "spline",
            Method::Makima => "makima",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kriging" => Ok(Method::Kriging),
            "spline" => Ok(Method::Spline),
            "makima" => Ok(Method::Makima),
            other => Err(Error::invalid("method", format!("unknown method `{other}`"))),
        }
    }
}

/// Mean absolute error over pairs where both sides are present.
pub fn mae(truth: &[Option<f64>], est: &[Option<f64>]) -> Result<f64> {
    if truth.len() != est.len() {
        return Err(Error::Mismatch(format!(
            "{} true values against {} estimates",
            truth.len(),
            est.len()
        )));
    }
    let (sum, n) = truth
        .iter()
        .zip(est)
        .filter_map(|(t, e)| Some((t.as_ref()? - e.as_ref()?).abs()))
        .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    if n == 0 {
        return Err(Error::InsufficientSamples { needed: 1, have: 0 });
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LooOptions {
    pub kriging: KrigingConfig,
    /// Round estimates to the nearest integer rank before scoring.
    pub round: bool,
    pub exec: Exec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaeEntry {
    pub method: Method,
    pub altitude: f64,
    pub threshold: f64,
    /// `None` when no cell could be evaluated.
    pub mae: Option<f64>,
    /// Cells predicted and scored.
    pub cells: usize,
    /// In-coverage cells without enough neighbours.
    pub skipped: usize,
    /// Out-of-coverage cells, never targets.
    pub out_of_coverage: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MaeReport {
    pub entries: Vec<MaeEntry>,
}

impl MaeReport {
    pub fn get(&self, method: Method, altitude: f64, threshold: f64) -> Option<&MaeEntry> {
        self.entries
            .iter()
            .find(|e| e.method == method && e.altitude == altitude && e.threshold == threshold)
    }

    /// Mean of the per-layer MAEs of `method`.
    pub fn mean(&self, method: Method) -> Option<f64> {
        let v: Vec<f64> = self
            .entries
            .iter()
            .filter(|e| e.method == method)
            .filter_map(|e| e.mae)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// `method,altitude_m,K,mae,cells`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "method,altitude_m,K,mae,cells")?;
        for e in &self.entries {
            let mae = e.mae.map(|m| m.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{}", e.method.as_str(), e.altitude, e.threshold, mae, e.cells)?;
        }
        Ok(())
    }
}

/// Leave-one-out predictions of one layer; `None` for out-of-coverage cells
/// and cells without enough neighbours.
pub fn loo_predictions(
    rg: &RankGrid,
    altitude: usize,
    threshold: usize,
    method: Method,
    model: &CorrelationModel,
    opts: &LooOptions,
) -> Vec<Option<f64>> {
    let variances = column_variances(rg, threshold);
    let layer = RankLayer::new(rg, altitude, threshold, &variances);
    opts.exec.map_indexed(rg.n_cells(), |cell| {
        layer.values[cell]?;
        let est = match method {
            Method::Kriging => {
                krige_rank(rg.grid.position(cell), &layer, &opts.kriging, model, Some(cell)).map(|e| e.estimate)
            }
            Method::Spline | Method::Makima => {
                let m = if method == Method::Spline {
                    BaselineMethod::Spline
                } else {
                    BaselineMethod::Makima
                };
                baseline_rank(&rg.grid, &layer.values, cell, &opts.kriging, m, Some(cell))
            }
        }
        .ok()?;
        Some(if opts.round { est.round() } else { est })
    })
}

pub fn loo_evaluate(rg: &RankGrid, method: Method, model: &CorrelationModel, opts: &LooOptions) -> MaeReport {
    loo_evaluate_methods(rg, &[method], model, opts)
}

/// Report rows ordered by method, then altitude, then threshold.
pub fn loo_evaluate_methods(
    rg: &RankGrid,
    methods: &[Method],
    model: &CorrelationModel,
    opts: &LooOptions,
) -> MaeReport {
    let mut entries = Vec::new();
    for &method in methods {
        for (a, &altitude) in rg.altitudes.iter().enumerate() {
            for (k, &threshold) in rg.thresholds.iter().enumerate() {
                let truth: Vec<Option<f64>> = rg.slice(a, k).iter().map(|r| r.map(f64::from)).collect();
                let est = loo_predictions(rg, a, k, method, model, opts);
                let present = truth.iter().filter(|t| t.is_some()).count();
                let cells = est.iter().filter(|e| e.is_some()).count();
                entries.push(MaeEntry {
                    method,
                    altitude,
                    threshold,
                    mae: mae(&truth, &est).ok(),
                    cells,
                    skipped: present - cells,
                    out_of_coverage: truth.len() - present,
                });
            }
        }
    }
    MaeReport { entries }
}

// ---------------------------------------------------------------------------
// traces

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub position: [f64; 3],
    /// RSS in dBm, or a rank.
    pub value: f64,
    pub tower: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceQuantity {
    RssDbm,
    Rank,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub quantity: TraceQuantity,
    pub samples: Vec<TraceSample>,
}

/// Nearest-sample join window, seconds.
pub const JOIN_WINDOW_S: f64 = 0.05;

impl Trace {
    pub fn new(quantity: TraceQuantity, samples: Vec<TraceSample>) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].t >= w[0].t)) {
            return Err(Error::invalid("t_s", "timestamps must be non-decreasing"));
        }
        Ok(Trace { quantity, samples })
    }

    /// Samples belonging to `tower` (all samples when `None`).
    pub fn for_tower(&self, tower: Option<u32>) -> Trace {
        Trace {
            quantity: self.quantity,
            samples: self
                .samples
                .iter()
                .filter(|s| tower.is_none() || s.tower == tower)
                .copied()
                .collect(),
        }
    }

    pub fn towers(&self) -> Vec<Option<u32>> {
        let mut ids: Vec<Option<u32>> = self.samples.iter().map(|s| s.tower).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

/// Parses `t_s,x_m,y_m,z_m,rss_dbm` (or `rank`) with an optional `tower_id`
/// column, in any column order.
pub fn read_trace_csv(text: &str) -> Result<Trace> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, column: 1, message: e.to_string() })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| Error::invalid(name, "missing column"));
    let (ct, cx, cy, cz) = (need("t_s")?, need("x_m")?, need("y_m")?, need("z_m")?);
    let (quantity, cv) = match (col("rss_dbm"), col("rank")) {
        (Some(c), None) => (TraceQuantity::RssDbm, c),
        (None, Some(c)) => (TraceQuantity::Rank, c),
        _ => return Err(Error::invalid("rss_dbm", "exactly one of rss_dbm or rank is required")),
    };
    let ctower = col("tower_id");

    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| Error::Parse { line, column: 1, message: e.to_string() })?;
        let num = |c: usize| -> Result<f64> {
            let field = record.get(c).unwrap_or("");
            field.parse::<f64>().map_err(|_| Error::Parse {
                line,
                column: c + 1,
                message: format!("`{field}` is not a number"),
            })
        };
        let tower = match ctower.and_then(|c| record.get(c)).filter(|s| !s.is_empty()) {
            Some(s) => Some(s.parse::<u32>().map_err(|_| Error::Parse {
                line,
                column: ctower.unwrap() + 1,
                message: format!("`{s}` is not a tower id"),
            })?),
            None => None,
        };
        samples.push(TraceSample {
            t: num(ct)?,
            position: [num(cx)?, num(cy)?, num(cz)?],
            value: num(cv)?,
            tower,
        });
    }
    Trace::new(quantity, samples)
}

pub fn write_trace_csv<W: Write>(trace: &Trace, mut out: W) -> std::io::Result<()> {
    let q = match trace.quantity {
        TraceQuantity::RssDbm => "rss_dbm",
        TraceQuantity::Rank => "rank",
    };
    let with_tower = trace.samples.iter().any(|s| s.tower.is_some());
    write!(out, "t_s,x_m,y_m,z_m,{q}")?;
    writeln!(out, "{}", if with_tower { ",tower_id" } else { "" })?;
    for s in &trace.samples {
        write!(out, "{},{},{},{},{}", s.t, s.position[0], s.position[1], s.position[2], s.value)?;
        match (with_tower, s.tower) {
            (true, Some(id)) => writeln!(out, ",{id}")?,
            (true, None) => writeln!(out, ",")?,
            _ => writeln!(out)?,
        }
    }
    Ok(())
}

/// Pairs each measured sample with the time-nearest simulated sample within
/// the join window. Returns `(measured, simulated)` values.
pub fn join_traces(measured: &Trace, simulated: &Trace) -> Vec<(f64, f64)> {
    let sim = &simulated.samples;
    if sim.is_empty() {
        return Vec::new();
    }
    measured
        .samples
        .iter()
        .filter_map(|m| {
            let i = sim.partition_point(|s| s.t < m.t);
            let best = [i.checked_sub(1), (i < sim.len()).then_some(i)]
                .into_iter()
                .flatten()
                .min_by(|&a, &b| (sim[a].t - m.t).abs().total_cmp(&(sim[b].t - m.t).abs()))?;
            ((sim[best].t - m.t).abs() <= JOIN_WINDOW_S + 1e-9).then(|| (m.value, sim[best].value))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub offset_db: f64,
    pub rmse_db: f64,
    pub rmse_before_db: f64,
    pub pairs: usize,
}

fn rmse_with(pairs: &[(f64, f64)], offset: f64) -> f64 {
    (pairs.iter().map(|(m, s)| (m - (s + offset)).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt()
}

/// Offset in `{-50.0, -49.9, ..., 50.0}` dB minimising the RMSE between the
/// measured trace and the offset simulated trace; ties go to the smaller
/// magnitude.
pub fn calibrate_offset(measured: &Trace, simulated: &Trace) -> Result<Calibration> {
    let pairs = join_traces(measured, simulated);
    if pairs.is_empty() {
        return Err(Error::NoOverlap);
    }
    let mut best = (0.0f64, f64::INFINITY);
    // visiting offsets by increasing magnitude lets strict improvement keep
    // the smaller-magnitude candidate on ties
    for step in 0..=500i32 {
        for k in if step == 0 { vec![0] } else { vec![-step, step] } {
            let offset = k as f64 / 10.0;
            let rmse = rmse_with(&pairs, offset);
            if rmse < best.1 * (1.0 - 1e-12) {
                best = (offset, rmse);
            }
        }
    }
    Ok(Calibration {
        offset_db: best.0,
        rmse_db: best.1,
        rmse_before_db: rmse_with(&pairs, 0.0),
        pairs: pairs.len(),
    })
}

// ---------------------------------------------------------------------------
// histograms

#[derive(Debug, Clone, PartialEq)]
pub struct RankHistogram {
    /// Fraction per observed rank, ascending.
    pub ranks: BTreeMap<u8, f64>,
    pub z_fraction: f64,
}

impl RankHistogram {
    pub fn total(&self) -> f64 {
        self.ranks.values().sum::<f64>() + self.z_fraction
    }

    /// `rank,fraction` with a trailing `Z` row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "rank,fraction")?;
        for (r, f) in &self.ranks {
            writeln!(out, "{r},{f}")?;
        }
        writeln!(out, "{Z_MARKER},{}", self.z_fraction)
    }
}

pub fn rank_histogram(rg: &RankGrid, altitude: usize, threshold: usize) -> RankHistogram {
    let layer = rg.slice(altitude, threshold);
    let n = layer.len() as f64;
    let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
    let mut z = 0usize;
    for r in layer {
        match r {
            Some(r) => *counts.entry(*r).or_default() += 1,
            None => z += 1,
        }
    }
    RankHistogram {
        ranks: counts.into_iter().map(|(r, c)| (r, c as f64 / n)).collect(),
        z_fraction: z as f64 / n,
    }
}
