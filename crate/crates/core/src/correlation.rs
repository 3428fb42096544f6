//! Spatial correlation of channel rank.
//!
//! Each location gets a rank vector stacking every altitude under every
//! threshold (`[K_1: h_1..h_N, K_2: h_1..h_N, ...]`). Pearson correlations of
//! all location pairs are binned by horizontal distance on the `d_rx`
//! lattice, and the binned means are fitted with a bi-exponential
//! `Φ(Δ) = c1·e^{c2Δ} + c3·e^{c4Δ}`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::covermap::RankGrid;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fit::{levenberg_marquardt, LmOptions, Residuals};

/// Default pair cutoff, meters.
pub const DEFAULT_MAX_DISTANCE: f64 = 500.0;

/// Rural-field bi-exponential coefficients `(c1, c2, c3, c4)`, distances in meters.
pub const RURAL_COEFFICIENTS: [f64; 4] = [0.2932, -0.0508, 0.7057, -0.001];

/// How out-of-coverage entries enter rank vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZPolicy {
    /// Drop any location with an out-of-coverage entry.
    #[default]
    Exclude,
    /// Treat out-of-coverage as rank 0.
    RankZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankVector {
    /// Grid index of the location.
    pub location: usize,
    pub values: Vec<f64>,
}

pub fn build_rank_vectors(rg: &RankGrid, policy: ZPolicy) -> Vec<RankVector> {
    let (n_h, n_k) = (rg.altitudes.len(), rg.thresholds.len());
    (0..rg.n_cells())
        .filter_map(|cell| {
            let mut values = Vec::with_capacity(n_h * n_k);
            for k in 0..n_k {
                for a in 0..n_h {
                    match (rg.get(a, k, cell), policy) {
                        (Some(r), _) => values.push(f64::from(r)),
                        (None, ZPolicy::RankZero) => values.push(0.0),
                        (None, ZPolicy::Exclude) => return None,
                    }
                }
            }
            Some(RankVector { location: cell, values })
        })
        .collect()
}

/// Centered, unit-norm copy of `v`; `None` for constant input.
fn standardize(v: &[f64]) -> Option<Vec<f64>> {
    if v.is_empty() {
        return None;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let centered: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let ss: f64 = centered.iter().map(|x| x * x).sum();
    if !(ss > 0.0) {
        return None;
    }
    let inv = ss.sqrt().recip();
    Some(centered.into_iter().map(|x| x * inv).collect())
}

/// Sample Pearson correlation; `None` when either input has zero variance.
pub fn pearson(u: &[f64], v: &[f64]) -> Option<f64> {
    assert_eq!(u.len(), v.len(), "pearson needs equal lengths");
    let (su, sv) = (standardize(u)?, standardize(v)?);
    let r: f64 = su.iter().zip(&sv).map(|(a, b)| a * b).sum();
    Some(r.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationBin {
    pub distance: f64,
    pub mean: f64,
    pub count: usize,
}

/// Bins pairwise correlations by horizontal distance rounded to the nearest
/// multiple of `d_rx`. Self-pairs populate the zero bin; pairs beyond
/// `max_distance` and pairs with a constant vector are skipped; empty bins
/// are omitted.
pub fn bin_correlations(
    vectors: &[RankVector],
    positions: &[[f64; 2]],
    d_rx: f64,
    max_distance: f64,
    exec: Exec,
) -> Vec<CorrelationBin> {
    let n_bins = (max_distance / d_rx).round() as usize + 1;
    let standardized: Vec<Option<Vec<f64>>> = vectors.iter().map(|v| standardize(&v.values)).collect();

    let partials = exec.map_indexed(vectors.len(), |i| {
        let mut acc = vec![(0.0f64, 0usize); n_bins];
        let Some(zi) = &standardized[i] else { return acc };
        let pi = positions[vectors[i].location];
        for j in i..vectors.len() {
            let Some(zj) = &standardized[j] else { continue };
            let pj = positions[vectors[j].location];
            let dist = ((pi[0] - pj[0]).powi(2) + (pi[1] - pj[1]).powi(2)).sqrt();
            if dist > max_distance {
                continue;
            }
            let bin = (dist / d_rx).round() as usize;
            if bin >= n_bins {
                continue;
            }
            let phi: f64 = zi.iter().zip(zj).map(|(a, b)| a * b).sum();
            acc[bin].0 += phi.clamp(-1.0, 1.0);
            acc[bin].1 += 1;
        }
        acc
    });

    let mut totals = vec![(0.0f64, 0usize); n_bins];
    for part in &partials {
        for (t, p) in totals.iter_mut().zip(part) {
            t.0 += p.0;
            t.1 += p.1;
        }
    }
    totals
        .into_iter()
        .enumerate()
        .filter(|(_, (_, c))| *c > 0)
        .map(|(n, (sum, count))| CorrelationBin {
            distance: n as f64 * d_rx,
            mean: sum / count as f64,
            count,
        })
        .collect()
}

/// Fitted correlation-vs-distance model.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationModel {
    pub bins: Vec<CorrelationBin>,
    pub coefficients: [f64; 4],
    pub rmse: f64,
    pub max_distance: f64,
}

impl CorrelationModel {
    pub fn from_coefficients(coefficients: [f64; 4], max_distance: f64) -> Self {
        CorrelationModel {
            bins: Vec::new(),
            coefficients,
            rmse: 0.0,
            max_distance,
        }
    }

    pub fn eval(&self, distance: f64) -> f64 {
        biexponential(&self.coefficients, distance)
    }

    pub fn to_file(&self) -> ModelFile {
        let [c1, c2, c3, c4] = self.coefficients;
        ModelFile {
            c1,
            c2,
            c3,
            c4,
            rmse: self.rmse,
            max_distance_m: self.max_distance,
        }
    }
}

pub fn biexponential(c: &[f64; 4], distance: f64) -> f64 {
    c[0] * (c[1] * distance).exp() + c[2] * (c[3] * distance).exp()
}

/// On-disk model: `{c1,c2,c3,c4,rmse,max_distance_m}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub rmse: f64,
    pub max_distance_m: f64,
}

impl From<ModelFile> for CorrelationModel {
    fn from(m: ModelFile) -> Self {
        CorrelationModel {
            bins: Vec::new(),
            coefficients: [m.c1, m.c2, m.c3, m.c4],
            rmse: m.rmse,
            max_distance: m.max_distance_m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiExpFit {
    pub coefficients: [f64; 4],
    pub rmse: f64,
    pub iterations: usize,
}

struct BiExpResiduals<'a> {
    bins: &'a [CorrelationBin],
}

impl Residuals<4> for BiExpResiduals<'_> {
    fn len(&self) -> usize {
        self.bins.len()
    }

    fn eval(&self, c: &[f64; 4], i: usize) -> (f64, [f64; 4]) {
        let d = self.bins[i].distance;
        let (e1, e2) = ((c[1] * d).exp(), (c[3] * d).exp());
        let r = c[0] * e1 + c[2] * e2 - self.bins[i].mean;
        (r, [e1, c[0] * d * e1, e2, c[2] * d * e2])
    }
}

/// Least-squares bi-exponential fit over the bins. The faster-decaying
/// component is reported first (`c2 ≤ c4`).
pub fn fit_biexponential(bins: &[CorrelationBin]) -> Result<BiExpFit> {
    if bins.len() < 4 {
        return Err(Error::InsufficientSamples {
            needed: 4,
            have: bins.len(),
        });
    }
    let phi0 = bins
        .iter()
        .min_by(|a, b| a.distance.total_cmp(&b.distance))
        .map(|b| b.mean)
        .unwrap();
    let start = [0.5 * phi0, -0.05, 0.5 * phi0, -0.001];
    let report = levenberg_marquardt(&BiExpResiduals { bins }, start, LmOptions::default())?;
    let mut c = report.params;
    if c[1] > c[3] {
        c = [c[2], c[3], c[0], c[1]];
    }
    Ok(BiExpFit {
        coefficients: c,
        rmse: (report.cost / bins.len() as f64).sqrt(),
        iterations: report.iterations,
    })
}

/// Rank vectors → binned correlations → fitted model.
pub fn fit_correlation_model(
    rg: &RankGrid,
    policy: ZPolicy,
    max_distance: f64,
    exec: Exec,
) -> Result<CorrelationModel> {
    let vectors = build_rank_vectors(rg, policy);
    let positions = rg.grid.positions();
    let bins = bin_correlations(&vectors, &positions, rg.grid.spacing, max_distance, exec);
    if bins.is_empty() {
        return Err(Error::NoValidPairs);
    }
    let fit = fit_biexponential(&bins)?;
    Ok(CorrelationModel {
        bins,
        coefficients: fit.coefficients,
        rmse: fit.rmse,
        max_distance,
    })
}

/// `distance_m,mean_correlation,pair_count`.
pub fn write_bins_csv<W: Write>(bins: &[CorrelationBin], mut out: W) -> std::io::Result<()> {
    writeln!(out, "distance_m,mean_correlation,pair_count")?;
    for b in bins {
        writeln!(out, "{},{},{}", b.distance, b.mean, b.count)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Grid;

    #[test]
    fn pearson_basics() {
        let v = [1.0, 2.0, 2.0, 3.0, 1.0];
        assert!((pearson(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((pearson(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]), None);
    }

    fn grid_3x1() -> RankGrid {
        let mut rg = RankGrid::new(Grid { nx: 3, ny: 1, spacing: 30.0 }, vec![30.0, 40.0, 50.0], vec![10.0, 100.0, 1000.0]);
        for cell in 0..3 {
            for a in 0..3 {
                for k in 0..3 {
                    rg.set(a, k, cell, Some((1 + (a + k + cell) % 3) as u8));
                }
            }
        }
        rg
    }

    #[test]
    fn rank_vector_ordering_and_length() {
        let rg = grid_3x1();
        let vs = build_rank_vectors(&rg, ZPolicy::Exclude);
        assert_eq!(vs.len(), 3);
        assert_eq!(vs[0].values.len(), 9);
        // altitudes vary fastest within each threshold block
        let expected: Vec<f64> = (0..3)
            .flat_map(|k| (0..3).map(move |a| (1 + (a + k) % 3) as f64))
            .collect();
        assert_eq!(vs[0].values, expected);
    }

    #[test]
    fn nine_altitudes_three_thresholds_give_length_27() {
        let mut rg = RankGrid::new(Grid { nx: 1, ny: 1, spacing: 30.0 }, Vec::new(), vec![10.0, 100.0, 1000.0]);
        rg.altitudes = (0..9).map(|i| 30.0 + 10.0 * i as f64).collect();
        rg.ranks = vec![Some(1); 27];
        assert_eq!(build_rank_vectors(&rg, ZPolicy::Exclude)[0].values.len(), 27);
    }

    #[test]
    fn z_locations_are_excluded_or_zeroed() {
        let mut rg = grid_3x1();
        for a in 0..3 {
            for k in 0..3 {
                rg.set(a, k, 1, None);
            }
        }
        let vs = build_rank_vectors(&rg, ZPolicy::Exclude);
        assert_eq!(vs.iter().map(|v| v.location).collect::<Vec<_>>(), vec![0, 2]);
        let vs = build_rank_vectors(&rg, ZPolicy::RankZero);
        assert_eq!(vs[1].values, vec![0.0; 9]);
    }

    #[test]
    fn single_entry_vectors() {
        let mut rg = RankGrid::new(Grid { nx: 2, ny: 1, spacing: 30.0 }, vec![30.0], vec![10.0]);
        rg.ranks = vec![Some(1), Some(2)];
        let vs = build_rank_vectors(&rg, ZPolicy::Exclude);
        assert!(vs.iter().all(|v| v.values.len() == 1));
        let bins = bin_correlations(&vs, &rg.grid.positions(), 30.0, 500.0, Exec::Sequential);
        assert!(bins.is_empty());
    }

    #[test]
    fn bins_average_and_cut_off() {
        let positions = [[0.0, 0.0], [30.0, 0.0], [60.0, 0.0], [510.0, 0.0]];
        let base = vec![1.0, 2.0, 3.0, 4.0];
        let vectors = vec![
            RankVector { location: 0, values: base.clone() },
            RankVector { location: 1, values: vec![1.0, 3.0, 2.0, 4.0] },
            RankVector { location: 2, values: vec![4.0, 3.0, 2.0, 1.0] },
            RankVector { location: 3, values: base.clone() },
        ];
        let bins = bin_correlations(&vectors, &positions, 30.0, 500.0, Exec::Sequential);
        assert_eq!(bins[0].distance, 0.0);
        assert_eq!(bins[0].mean, 1.0);
        assert_eq!(bins[0].count, 4);
        let p01 = pearson(&vectors[0].values, &vectors[1].values).unwrap();
        let p12 = pearson(&vectors[1].values, &vectors[2].values).unwrap();
        assert!((bins[1].mean - 0.5 * (p01 + p12)).abs() < 1e-12);
        assert_eq!(bins[1].count, 2);
        // (0,3) at 510 m is beyond the cutoff; (1,3) at 480 m is kept
        let total: usize = bins.iter().map(|b| b.count).sum();
        assert_eq!(total, 4 + 2 + 1 + 1 + 1);
    }

    #[test]
    fn bin_mean_arithmetic() {
        let positions = [[0.0, 0.0], [30.0, 0.0], [0.0, 30.0]];
        // φ(0,1) = 0.8 and φ(0,2) = 0.6 constructed directly through the API
        let u = [1.0, 0.0, -1.0, 0.0];
        let mk = |r: f64| {
            let s = (1.0 - r * r).sqrt();
            vec![r + 0.0, s, -r, -s]
        };
        let vectors = vec![
            RankVector { location: 0, values: u.to_vec() },
            RankVector { location: 1, values: mk(0.8) },
            RankVector { location: 2, values: mk(0.6) },
        ];
        assert!((pearson(&u, &mk(0.8)).unwrap() - 0.8).abs() < 1e-12);
        let bins = bin_correlations(&vectors, &positions, 30.0, 30.0, Exec::Sequential);
        let b1 = bins.iter().find(|b| b.distance == 30.0).unwrap();
        assert_eq!(b1.count, 2);
        assert!((b1.mean - 0.7).abs() < 1e-12);
    }

    #[test]
    fn diagonal_pairs_round_to_the_lattice() {
        let positions = [[0.0, 0.0], [30.0, 30.0]];
        let vectors = vec![
            RankVector { location: 0, values: vec![1.0, 2.0, 3.0] },
            RankVector { location: 1, values: vec![1.0, 3.0, 2.0] },
        ];
        let bins = bin_correlations(&vectors, &positions, 30.0, 500.0, Exec::Sequential);
        // 42.43 m rounds to 30 m
        assert_eq!(bins[1].distance, 30.0);
    }

    fn synthetic_bins(c: [f64; 4]) -> Vec<CorrelationBin> {
        (0..=16)
            .map(|n| {
                let d = 30.0 * n as f64;
                CorrelationBin { distance: d, mean: biexponential(&c, d), count: 1 }
            })
            .collect()
    }

    #[test]
    fn single_exponential_is_nested() {
        let fit = fit_biexponential(&synthetic_bins([0.9, -0.01, 0.0, -0.001])).unwrap();
        assert!(fit.rmse < 1e-6, "{fit:?}");
    }

    #[test]
    fn too_few_bins() {
        let bins = &synthetic_bins(RURAL_COEFFICIENTS)[..3];
        assert!(matches!(fit_biexponential(bins), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn bins_csv_format() {
        let mut buf = Vec::new();
        write_bins_csv(&[CorrelationBin { distance: 30.0, mean: 0.5, count: 7 }], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "distance_m,mean_correlation,pair_count\n30,0.5,7\n");
    }
}
