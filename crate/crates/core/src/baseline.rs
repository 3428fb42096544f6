//! Index-space interpolation baselines: natural cubic spline and makima.
//!
//! Samples are ordered by grid index and interpolated as a 1D series, so
//! geometry enters only through which cells are sampled.

use crate::error::{Error, Result};
use crate::kriging::{select_neighbours, KrigingConfig};
use crate::scene::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Spline,
    Makima,
}

/// Strictly increasing indices with their values.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedSamples {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl IndexedSamples {
    /// Sorts `pairs` by index. Fails on duplicate indices.
    pub fn new(mut pairs: Vec<(usize, f64)>) -> Result<Self> {
        pairs.sort_by_key(|p| p.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("indices", "duplicate sample index"));
        }
        Ok(IndexedSamples {
            x: pairs.iter().map(|p| p.0 as f64).collect(),
            y: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn indices(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    fn require_two(&self) -> Result<()> {
        if self.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                have: self.len(),
            });
        }
        Ok(())
    }

    /// Segment used for `x0`; outside the range the boundary segment.
    fn segment(&self, x0: f64) -> usize {
        let n = self.len();
        self.x.partition_point(|&xi| xi <= x0).clamp(1, n - 1) - 1
    }
}

/// Second derivatives of the natural cubic spline (zero at both ends).
fn natural_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    // Thomas algorithm on the interior unknowns m[1..n-1].
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for i in 0..k {
        diag[i] = 2.0 * (h[i] + h[i + 1]);
        rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
    }
    for i in 1..k {
        let w = h[i] / diag[i - 1];
        diag[i] -= w * h[i];
        rhs[i] -= w * rhs[i - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for i in (0..k - 1).rev() {
        m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
    }
    m
}

pub fn spline_interp(s: &IndexedSamples, x0: f64) -> Result<f64> {
    s.require_two()?;
    let m = natural_second_derivatives(&s.x, &s.y);
    let i = s.segment(x0);
    let (xa, xb, ya, yb) = (s.x[i], s.x[i + 1], s.y[i], s.y[i + 1]);
    let h = xb - xa;
    let (a, b) = ((xb - x0) / h, (x0 - xa) / h);
    Ok(a * ya + b * yb + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0)
}

/// Modified-Akima knot slopes.
pub fn makima_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    // Extend by two differences on each side; e[i + 2] = δ_i.
    let mut e = Vec::with_capacity(n + 3);
    let d1 = 2.0 * delta[0] - delta[1];
    e.push(2.0 * d1 - delta[0]);
    e.push(d1);
    e.extend_from_slice(&delta);
    let m = delta.len();
    let dn = 2.0 * delta[m - 1] - delta[m - 2];
    e.push(dn);
    e.push(2.0 * dn - delta[m - 1]);

    (0..n)
        .map(|i| {
            let (dm2, dm1, d0, dp1) = (e[i], e[i + 1], e[i + 2], e[i + 3]);
            let w1 = (dp1 - d0).abs() + (dp1 + d0).abs() / 2.0;
            let w2 = (dm1 - dm2).abs() + (dm1 + dm2).abs() / 2.0;
            if w1 + w2 == 0.0 {
                0.5 * (dm1 + d0)
            } else {
                (w1 * dm1 + w2 * d0) / (w1 + w2)
            }
        })
        .collect()
}

pub fn makima_interp(s: &IndexedSamples, x0: f64) -> Result<f64> {
    s.require_two()?;
    let d = makima_slopes(&s.x, &s.y);
    let i = s.segment(x0);
    let h = s.x[i + 1] - s.x[i];
    let t = (x0 - s.x[i]) / h;
    let (t2, t3) = (t * t, t * t * t);
    Ok((2.0 * t3 - 3.0 * t2 + 1.0) * s.y[i]
        + (t3 - 2.0 * t2 + t) * h * d[i]
        + (-2.0 * t3 + 3.0 * t2) * s.y[i + 1]
        + (t3 - t2) * h * d[i + 1])
}

pub fn interpolate(s: &IndexedSamples, x0: f64, method: BaselineMethod) -> Result<f64> {
    match method {
        BaselineMethod::Spline => spline_interp(s, x0),
        BaselineMethod::Makima => makima_interp(s, x0),
    }
}

/// Baseline estimate at grid cell `target` from the same neighbourhood the
/// Kriging estimator samples.
pub fn baseline_rank(
    grid: &Grid,
    values: &[Option<f64>],
    target: usize,
    cfg: &KrigingConfig,
    method: BaselineMethod,
    exclude: Option<usize>,
) -> Result<f64> {
    let neighbours = select_neighbours(grid, values, grid.position(target), cfg, exclude);
    let pairs = neighbours
        .into_iter()
        .map(|i| (i, values[i].expect("neighbours are in coverage")))
        .collect();
    interpolate(&IndexedSamples::new(pairs)?, target as f64, method)
}
