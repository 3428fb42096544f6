//! Seeded synthetic rank fields with a prescribed spatial correlation.
//!
//! A latent Gaussian field per altitude shares a common component, so rank
//! columns are correlated across altitude as well as across space. The
//! spatial covariance is the bi-exponential correlation model with a nugget
//! that brings the variance to one. Ranks are thresholds of the latent
//! field, with lower thresholds at larger `K` so rank never decreases in `K`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::correlation::biexponential;
use crate::covermap::RankGrid;
use crate::error::{Error, Result};
use crate::scene::Grid;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub altitudes: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// Weight of the component shared by all altitudes, in `[0, 1]`.
    pub altitude_coupling: f64,
    /// Latent level above which rank reaches 2, per threshold.
    pub levels: Vec<f64>,
    /// Extra latent height for each further rank.
    pub step: f64,
    pub max_rank: u8,
}

impl SynthConfig {
    pub fn new(altitudes: Vec<f64>, thresholds: Vec<f64>) -> Self {
        let levels = (0..thresholds.len()).map(|j| 1.0 - 0.65 * j as f64).collect();
        SynthConfig {
            altitudes,
            thresholds,
            altitude_coupling: 0.8,
            levels,
            step: 1.5,
            max_rank: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.altitudes.is_empty() || self.thresholds.is_empty() {
            return Err(Error::invalid("altitudes", "at least one altitude and threshold required"));
        }
        if self.levels.len() != self.thresholds.len() {
            return Err(Error::invalid("levels", "one level per threshold"));
        }
        if !(0.0..=1.0).contains(&self.altitude_coupling) {
            return Err(Error::invalid("altitude_coupling", "must lie in [0, 1]"));
        }
        if !(self.step > 0.0) || self.max_rank == 0 {
            return Err(Error::invalid("step", "must be positive"));
        }
        Ok(())
    }
}

/// Cholesky factor of the grid covariance; reusable across seeds.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    grid: Grid,
    factor: DMatrix<f64>,
}

impl FieldSampler {
    pub fn new(grid: Grid, coefficients: [f64; 4]) -> Result<Self> {
        let phi0 = biexponential(&coefficients, 0.0);
        if !(phi0 > 0.0 && phi0 <= 1.0) {
            return Err(Error::invalid("coefficients", "correlation at zero distance must lie in (0, 1]"));
        }
        let pts = grid.positions();
        let n = pts.len();
        let cov = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else {
                let d = (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]);
                biexponential(&coefficients, d)
            }
        });
        let chol = cov.cholesky().ok_or(Error::Singular)?;
        Ok(FieldSampler {
            grid,
            factor: chol.unpack(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// One unit-variance correlated field.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.grid.len();
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        (0..n)
            .map(|i| (0..=i).map(|j| self.factor[(i, j)] * z[j]).sum())
            .collect()
    }
}

fn rank_of(latent: f64, level: f64, step: f64, max_rank: u8) -> u8 {
    let mut r = 1u8;
    let mut cut = level;
    while r < max_rank && latent > cut {
        r += 1;
        cut += step;
    }
    r
}

/// Synthetic rank grid for `seed`. No cell is out of coverage.
pub fn generate(sampler: &FieldSampler, cfg: &SynthConfig, seed: u64) -> Result<RankGrid> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let common = sampler.sample(&mut rng);
    let a = cfg.altitude_coupling;
    let b = (1.0 - a * a).sqrt();
    let mut rg = RankGrid::new(*sampler.grid(), cfg.altitudes.clone(), cfg.thresholds.clone());
    for alt in 0..cfg.altitudes.len() {
        let own = sampler.sample(&mut rng);
        for cell in 0..rg.n_cells() {
            let latent = a * common[cell] + b * own[cell];
            for (k, &level) in cfg.levels.iter().enumerate() {
                rg.set(alt, k, cell, Some(rank_of(latent, level, cfg.step, cfg.max_rank)));
            }
        }
    }
    Ok(rg)
}
