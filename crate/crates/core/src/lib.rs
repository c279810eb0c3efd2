//! Numerical laboratory for equilateral quantum graphs over `(q+1)`-regular
//! combinatorial graphs with generalized Kirchhoff vertex conditions.
//!
//! The crate is organized around the secular correspondence between the
//! metric Schrödinger operator `-ψ'' + Uψ` on the graph edges and the
//! adjacency matrix of the underlying combinatorial graph:
//!
//! - [`edge_ode`] solves the edge eigenproblem and provides the basis pair
//!   `(C_λ, S_λ)` together with quadrature moments;
//! - [`graph`] builds and diagonalizes regular graphs and exposes the
//!   directed-edge / non-backtracking structure;
//! - [`tree`] holds everything about the infinite regular quantum tree:
//!   the secular function `w(λ)`, spectral bands, Green's functions,
//!   spherical functions and the limit densities `Ψ_λ`, `Ψ_{λ,k}`;
//! - [`quantum`] assembles finite quantum graphs: band spectra, metric
//!   eigenfunction reconstruction, Kirchhoff residuals, non-backtracking
//!   lifts;
//! - [`ergodicity`] measures eigenfunction observables and quantum
//!   variances over families of graphs;
//! - [`validate`] bundles the exact-identity checks into a runnable suite.

pub mod edge_ode;
pub mod ergodicity;
pub mod graph;
pub mod quad;
pub mod quantum;
pub mod tree;
pub mod validate;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible graph parameters: {0}")]
    InfeasibleGraph(String),

    #[error("random graph retry budget exhausted after {attempts} attempts (n={n}, degree={degree})")]
    RetryBudgetExhausted { n: usize, degree: usize, attempts: usize },

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("potential is not symmetric: |U(L-x) - U(x)| = {deviation:.3e} at grid index {index} (tolerance {tol:.1e})")]
    NonSymmetricPotential { deviation: f64, index: usize, tol: f64 },

    #[error("grid mismatch: expected {expected} samples, got {got}")]
    GridMismatch { expected: usize, got: usize },

    #[error("grid size must be even and positive for Simpson quadrature, got {0}")]
    OddGrid(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("λ = {lambda} is outside the spectral band [{lo}, {hi}]")]
    OutsideBand { lambda: f64, lo: f64, hi: f64 },

    #[error("value m = {m} is outside the image w(band) = ({lo}, {hi})")]
    OutsideBandImage { m: f64, lo: f64, hi: f64 },

    #[error("m = {m} is within {tol:.1e} of the band edge |m| = 2√q; μ± degenerate")]
    DegenerateBandEdge { m: f64, tol: f64 },

    #[error("λ = {lambda} is too close to the Dirichlet set σ₂ (|s(λ)| = {s_abs:.3e})")]
    NearDirichlet { lambda: f64, s_abs: f64 },

    #[error("band scan too coarse: {0}; increase scan_n")]
    ScanTooCoarse(String),

    #[error("graph degree {degree} does not match model branching q+1 = {expected}")]
    DegreeMismatch { degree: usize, expected: usize },

    #[error("q = 1 is only supported with U ≡ 0 and α = 0 (cycle benchmark); got {0}")]
    UnsupportedCycleModel(String),

    #[error("cycle has odd length {0}: signs cannot alternate consistently")]
    OddCycle(usize),

    #[error("invalid observable: {0}")]
    InvalidObservable(String),

    #[error("path order k = {k} exceeds cap {cap} or memory guard ({bytes} bytes estimated)")]
    PathOrderCap { k: usize, cap: usize, bytes: usize },

    #[error("empty band spectrum: no adjacency eigenvalues in w(band)")]
    EmptyBandSpectrum,

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Wrap an error with call-site context (e.g. `(N, trial)` during sweeps).
    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
