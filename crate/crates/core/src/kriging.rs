//! Ordinary Kriging of channel rank.
//!
//! The semi-variogram is `γ(Δ) = v²·(1 − Φ(Δ))` with `Φ` the fitted
//! correlation model and `v²` the across-altitude rank variance averaged
//! over the selected neighbours.

use crate::correlation::CorrelationModel;
use crate::covermap::RankGrid;
use crate::error::{Error, Result};
use crate::linalg::{solve, Dense};
use crate::scene::Grid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrigingConfig {
    /// Maximum number of neighbours.
    pub m: usize,
    /// Sampling radius, meters.
    pub r0: f64,
}

impl Default for KrigingConfig {
    fn default() -> Self {
        KrigingConfig { m: 20, r0: 150.0 }
    }
}

impl KrigingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::invalid("m", "must be at least 1"));
        }
        if !(self.r0 > 0.0) || !self.r0.is_finite() {
            return Err(Error::invalid("r0", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingSolution {
    pub weights: Vec<f64>,
    pub lagrange: f64,
    /// The system could not be solved and all weight went to the nearest sample.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingEstimate {
    pub estimate: f64,
    /// Grid indices of the neighbours, nearest first.
    pub neighbours: Vec<usize>,
    pub variance: f64,
    pub solution: KrigingSolution,
}

/// Unbiased sample variance; 0 for fewer than two values.
pub fn rank_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn semivariogram(model: &CorrelationModel, v2: f64, pi: [f64; 2], pj: [f64; 2]) -> f64 {
    (v2 * (1.0 - model.eval(dist(pi, pj)))).max(0.0)
}

fn nearest(samples: &[[f64; 2]], target: [f64; 2]) -> usize {
    (0..samples.len())
        .min_by(|&i, &j| dist(samples[i], target).total_cmp(&dist(samples[j], target)).then(i.cmp(&j)))
        .unwrap()
}

fn nearest_only(samples: &[[f64; 2]], target: [f64; 2]) -> KrigingSolution {
    let mut weights = vec![0.0; samples.len()];
    weights[nearest(samples, target)] = 1.0;
    KrigingSolution {
        weights,
        lagrange: 0.0,
        fallback: true,
    }
}

/// Solves the Lagrange-augmented ordinary Kriging system. A singular system
/// falls back to the nearest sample and sets `fallback`.
pub fn solve_weights<F>(samples: &[[f64; 2]], target: [f64; 2], variogram: F) -> Result<KrigingSolution>
where
    F: Fn([f64; 2], [f64; 2]) -> f64,
{
    let m = samples.len();
    if m == 0 {
        return Err(Error::OutOfCoverage("no samples".into()));
    }
    let mut a = Dense::zeros(m + 1);
    let mut b = vec![0.0; m + 1];
    for i in 0..m {
        for j in i..m {
            let g = variogram(samples[i], samples[j]);
            a.set(i, j, g);
            a.set(j, i, g);
        }
        a.set(i, m, 1.0);
        a.set(m, i, 1.0);
        b[i] = variogram(samples[i], target);
    }
    b[m] = 1.0;
    match solve(&a, &b) {
        Ok(x) => Ok(KrigingSolution {
            weights: x[..m].to_vec(),
            lagrange: x[m],
            fallback: false,
        }),
        Err(Error::Singular) => Ok(nearest_only(samples, target)),
        Err(e) => Err(e),
    }
}

/// One (altitude, threshold) layer of a rank grid prepared for Kriging.
#[derive(Debug, Clone)]
pub struct RankLayer<'a> {
    pub grid: &'a Grid,
    pub values: Vec<Option<f64>>,
    /// Across-altitude variance per cell for this threshold.
    pub variances: &'a [f64],
}

impl<'a> RankLayer<'a> {
    pub fn new(rg: &'a RankGrid, altitude: usize, threshold: usize, variances: &'a [f64]) -> Self {
        RankLayer {
            grid: &rg.grid,
            values: rg.slice(altitude, threshold).iter().map(|r| r.map(f64::from)).collect(),
            variances,
        }
    }
}

/// Across-altitude variance of every cell under threshold `threshold`,
/// computed over the in-coverage altitudes.
pub fn column_variances(rg: &RankGrid, threshold: usize) -> Vec<f64> {
    (0..rg.n_cells())
        .map(|cell| {
            let col: Vec<f64> = (0..rg.altitudes.len())
                .filter_map(|a| rg.get(a, threshold, cell).map(f64::from))
                .collect();
            rank_variance(&col)
        })
        .collect()
}

/// The `cfg.m` nearest in-coverage cells within `cfg.r0` of `target`, nearest
/// first, ties broken by lower index. `exclude` is never returned.
pub fn select_neighbours(
    grid: &Grid,
    values: &[Option<f64>],
    target: [f64; 2],
    cfg: &KrigingConfig,
    exclude: Option<usize>,
) -> Vec<usize> {
    let d = grid.spacing;
    let span = |c: f64, n: usize| {
        let lo = ((c - cfg.r0) / d).floor().max(0.0) as usize;
        let hi = (((c + cfg.r0) / d).ceil().max(0.0) as usize).min(n.saturating_sub(1));
        (lo, hi)
    };
    let (c0, c1) = span(target[0], grid.nx);
    let (r0, r1) = span(target[1], grid.ny);
    let limit = cfg.r0 * (1.0 + 1e-12);
    let mut found: Vec<(f64, usize)> = Vec::new();
    for row in r0..=r1.min(grid.ny - 1) {
        for col in c0..=c1.min(grid.nx - 1) {
            let i = row * grid.nx + col;
            if Some(i) == exclude || values[i].is_none() {
                continue;
            }
            let dd = dist(grid.position(i), target);
            if dd <= limit {
                found.push((dd, i));
            }
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    found.truncate(cfg.m);
    found.into_iter().map(|(_, i)| i).collect()
}

/// Ordinary Kriging estimate of the layer at `target`, optionally ignoring
/// cell `exclude` (leave-one-out).
pub fn krige_rank(
    target: [f64; 2],
    layer: &RankLayer<'_>,
    cfg: &KrigingConfig,
    model: &CorrelationModel,
    exclude: Option<usize>,
) -> Result<KrigingEstimate> {
    let neighbours = select_neighbours(layer.grid, &layer.values, target, cfg, exclude);
    if neighbours.is_empty() {
        return Err(Error::OutOfCoverage(format!(
            "no samples within {} m of ({}, {})",
            cfg.r0, target[0], target[1]
        )));
    }
    let points: Vec<[f64; 2]> = neighbours.iter().map(|&i| layer.grid.position(i)).collect();
    let variance = neighbours.iter().map(|&i| layer.variances[i]).sum::<f64>() / neighbours.len() as f64;
    let solution = if variance > 0.0 {
        solve_weights(&points, target, |p, q| semivariogram(model, variance, p, q))?
    } else {
        nearest_only(&points, target)
    };
    let estimate = solution
        .weights
        .iter()
        .zip(&neighbours)
        .map(|(w, &i)| w * layer.values[i].expect("neighbours are in coverage"))
        .sum();
    Ok(KrigingEstimate {
        estimate,
        neighbours,
        variance,
        solution,
    })
}
