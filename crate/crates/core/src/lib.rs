//! Spectra, eigenstate localization and PT-breaking diagnostics for
//! one-dimensional tight-binding chains with local non-Hermitian terms.
//!
//! The numerics are generic over [`Real`]; the `*64` aliases fix `f64`.

pub mod analysis;
pub mod band;
pub mod config;
pub mod effective;
pub mod eigen;
pub mod error;
pub mod lattice;
pub mod nonbloch;
pub mod scalar;
pub mod scan;

pub use error::{Error, Result};
pub use lattice::{
    apply_gauge_transform, build_hamiltonian, is_pt_symmetric, models, Boundary, DenseMatrix, FluxGauge, HoppingSet,
    ModelSpec, PerturbationTerm,
};
pub use scalar::Real;

pub type Complex64 = num_complex::Complex<f64>;
pub type Matrix64 = DenseMatrix<f64>;
pub type ModelSpec64 = ModelSpec<f64>;
pub type HoppingSet64 = HoppingSet<f64>;
pub type Spectrum64 = eigen::Spectrum<f64>;
pub type BetaRootSet64 = nonbloch::BetaRootSet<f64>;
pub type EffectiveBlock64 = effective::EffectiveBlock<f64>;
pub type SpectrumClassification64 = analysis::SpectrumClassification<f64>;
