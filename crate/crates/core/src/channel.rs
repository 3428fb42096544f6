//! Narrowband MIMO channel synthesis, singular values, thresholded rank and RSS.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::raytrace::RayPath;

/// Uniform linear array.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayConfig {
    pub elements: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
    /// Unit vector along the array.
    pub axis: [f64; 3],
}

impl ArrayConfig {
    pub const DEFAULT_ELEMENTS: usize = 4;
    pub const DEFAULT_SPACING: f64 = 0.5;
    pub const DEFAULT_AXIS: [f64; 3] = [0.0, 1.0, 0.0];

    pub fn new(elements: usize, spacing: f64, axis: [f64; 3]) -> Result<Self> {
        if elements == 0 {
            return Err(Error::invalid("elements", "must be at least 1"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid("spacing_wavelengths", "must be positive"));
        }
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::invalid("axis", "must be a nonzero vector"));
        }
        Ok(ArrayConfig {
            elements,
            spacing,
            axis: [axis[0] / norm, axis[1] / norm, axis[2] / norm],
        })
    }

    pub fn isotropic() -> Self {
        ArrayConfig {
            elements: 1,
            spacing: Self::DEFAULT_SPACING,
            axis: Self::DEFAULT_AXIS,
        }
    }
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig {
            elements: Self::DEFAULT_ELEMENTS,
            spacing: Self::DEFAULT_SPACING,
            axis: Self::DEFAULT_AXIS,
        }
    }
}

/// ULA response toward `direction` (unit vector). Element `k` carries phase
/// `2π/λ · k·Δ · (axis·direction)` with `Δ = spacing·λ`.
pub fn steering_vector(array: &ArrayConfig, direction: [f64; 3], wavelength: f64) -> DVector<Complex64> {
    let cos_angle = array.axis[0] * direction[0] + array.axis[1] * direction[1] + array.axis[2] * direction[2];
    let delta = array.spacing * wavelength;
    let step = 2.0 * PI / wavelength * delta * cos_angle;
    DVector::from_fn(array.elements, |k, _| Complex64::from_polar(1.0, step * k as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    /// `N_r × N_t`.
    pub entries: DMatrix<Complex64>,
    pub frequency_hz: f64,
}

impl ChannelMatrix {
    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn singular_values(&self) -> Vec<f64> {
        singular_values(&self.entries)
    }
}

/// `H = Σ_p g_p · a_rx(aoa_p) · a_tx(aod_p)^H`.
pub fn synthesize_channel(
    paths: &[RayPath],
    tx: &ArrayConfig,
    rx: &ArrayConfig,
    wavelength: f64,
) -> Result<ChannelMatrix> {
    if paths.is_empty() {
        return Err(Error::OutOfCoverage("no propagation paths".into()));
    }
    let mut h = DMatrix::<Complex64>::zeros(rx.elements, tx.elements);
    for p in paths {
        let a_rx = steering_vector(rx, p.aoa_direction(), wavelength);
        let a_tx = steering_vector(tx, p.aod_direction(), wavelength);
        h += (a_rx * p.gain) * a_tx.adjoint();
    }
    Ok(ChannelMatrix {
        entries: h,
        frequency_hz: crate::SPEED_OF_LIGHT / wavelength,
    })
}

/// Singular values in descending order.
pub fn singular_values(h: &DMatrix<Complex64>) -> Vec<f64> {
    let mut sv: Vec<f64> = h.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of singular values strictly above `σ_1 / k`.
pub fn rank_from_singular_values(sv: &[f64], k: f64) -> Result<usize> {
    let sigma1 = sv.first().copied().unwrap_or(0.0);
    if !(sigma1 > 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let threshold = sigma1 / k;
    Ok(sv.iter().filter(|&&s| s > threshold).count())
}

pub fn channel_rank(h: &ChannelMatrix, k: f64) -> Result<usize> {
    rank_from_singular_values(&h.singular_values(), k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankResult {
    pub singular_values: Vec<f64>,
    /// `(K_j, rank)` in the order the thresholds were given.
    pub ranks: Vec<(f64, usize)>,
}

pub fn rank_result(h: &ChannelMatrix, thresholds: &[f64]) -> Result<RankResult> {
    let sv = h.singular_values();
    let ranks = thresholds
        .iter()
        .map(|&k| rank_from_singular_values(&sv, k).map(|r| (k, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RankResult {
        singular_values: sv,
        ranks,
    })
}

/// Transmit weighting used for MIMO received power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Beamforming {
    /// Fixed co-phased broadside beam, `w = 1/√N_t`.
    #[default]
    Uniform,
    /// Average element-pair power `‖H‖_F² / (N_r N_t)`.
    SumPower,
    /// Maximum-ratio transmission toward the strongest singular vector.
    Mrt,
}

fn to_dbm(power_w: f64, channel_gain: f64) -> f64 {
    10.0 * (power_w * 1e3 * channel_gain).log10()
}

/// SISO received power in dBm from the coherent sum of path gains.
pub fn rss_siso(paths: &[RayPath], tx_power_w: f64) -> Result<f64> {
    if paths.is_empty() {
        return Err(Error::OutOfCoverage("no propagation paths".into()));
    }
    let sum: Complex64 = paths.iter().map(|p| p.gain).sum();
    Ok(to_dbm(tx_power_w, sum.norm_sqr()))
}

/// MIMO received power in dBm per receive element.
pub fn rss_mimo(
    paths: &[RayPath],
    tx: &ArrayConfig,
    rx: &ArrayConfig,
    tx_power_w: f64,
    wavelength: f64,
    beam: Beamforming,
) -> Result<f64> {
    let h = synthesize_channel(paths, tx, rx, wavelength)?;
    let (nr, nt) = (h.nrows() as f64, h.ncols() as f64);
    let gain = match beam {
        Beamforming::Uniform => {
            let w = DVector::from_element(h.ncols(), Complex64::new(1.0 / nt.sqrt(), 0.0));
            (&h.entries * w).norm_squared() / nr
        }
        Beamforming::SumPower => h.entries.norm_squared() / (nr * nt),
        Beamforming::Mrt => {
            let s1 = h.singular_values().first().copied().unwrap_or(0.0);
            s1 * s1 / nr
        }
    };
    Ok(to_dbm(tx_power_w, gain))
}

/// MIMO RSS with the default uniform broadside beam.
pub fn rss(paths: &[RayPath], tx: &ArrayConfig, rx: &ArrayConfig, tx_power_w: f64, wavelength: f64) -> Result<f64> {
    rss_mimo(paths, tx, rx, tx_power_w, wavelength, Beamforming::Uniform)
}
