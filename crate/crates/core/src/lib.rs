//! Moment closures for the one-locus Fokker-Planck equation of quantitative
//! genetics.
//!
//! The allele frequency density `u(t, x)` on `(0, 1)` evolves by
//!
//! ```text
//! ∂t u = ∂x [ (1/(4N)) ∂x(ξ u) − ½ ξ ∂x(α·A) u ],     ξ = x(1 − x),
//! ```
//!
//! with no-flux boundaries, and relaxes to `u_α ∝ exp(2N α·A)/ξ`. The crate
//! provides the stationary family and its moments ([`model`], [`quadrature`]),
//! a positivity preserving finite-volume solver ([`fp_solver`]), the
//! DynMaxEnt closure ODEs that replace `u(t)` by a stationary density with
//! moving parameters ([`dynmaxent`]), a spectral-gap computation
//! ([`spectral`]) and the error/entropy diagnostics that tie them together
//! ([`analysis`], [`experiment`]).
//!
//! Kernels are generic over [`Real`]; the aliases below fix `f64`.

pub mod analysis;
pub mod dynmaxent;
pub mod experiment;
pub mod fp_solver;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod real;
pub mod special;
pub mod spectral;

pub use model::{GammaSign, ModelError, Observable, ObservableSet, Point};
pub use quadrature::{Method, Moment, QuadratureError, QuadratureSpec};
pub use real::Real;
pub use dynmaxent::{ScalarRhsConvention, TimeScale, Variant};
pub use experiment::Table;

pub type ModelParams = model::ModelParams<f64>;
pub type ModelKind = model::ModelKind<f64>;
pub type NaturalParams = model::NaturalParams<f64>;
pub type MomentVector = quadrature::MomentVector<f64>;
pub type Matrix = linalg::Matrix<f64>;
pub type StationaryDensity = quadrature::StationaryDensity<f64>;
pub type Grid1D = fp_solver::Grid1D<f64>;
pub type DiscreteDensity = fp_solver::DiscreteDensity<f64>;
pub type FpTrajectory = fp_solver::FpTrajectory<f64>;
pub type ClosureTrajectory = dynmaxent::ClosureTrajectory<f64>;
pub type SpectralResult = spectral::SpectralResult<f64>;
pub type Settings = experiment::Settings<f64>;
pub type TableRun = experiment::TableRun<f64>;
