//! Site-specific propagation and MIMO channel-rank toolkit.
//!
//! The pipeline runs scene → ray paths → channel matrices → coverage and rank
//! grids → spatial correlation model → Kriging / baseline rank interpolation
//! → leave-one-out evaluation. Grid sweeps go through [`exec::Exec`] so every
//! data-parallel loop has a sequential twin producing identical results.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod channel;
pub mod correlation;
pub mod covermap;
pub mod error;
pub mod eval;
pub mod exec;
pub mod fit;
pub mod kriging;
pub mod linalg;
pub mod raytrace;
pub mod scene;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Exec;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Vacuum permittivity, F/m.
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;

/// Default singular-value threshold ratios K_1..K_3.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [10.0, 100.0, 1000.0];
