//! # convexinterp
//!
//! Interpolation families of convex functions and numerical verification of
//! the log-concavity inequalities they encode.
//!
//! A family `F(t, x)` of convex functions on a lattice is built either in
//! closed form (inf-convolution, affine combination) or by a relaxation solve
//! of the p-interpolation equation
//!
//! ```text
//! ∂²ₜₜF = (1/p) (Hessₓ F)⁻¹ ∇∂ₜF · ∇∂ₜF
//! ```
//!
//! and the log-partition profile `α(t) = −log ∫ e^{−F(t,x)} dx` is computed
//! along it. On top of that sit checkers for Prékopa, Brunn-Minkowski,
//! Brascamp-Lieb, the functional Santaló inequality, Legendre duality
//! identities, Reinhardt complex interpolation and the Busemann inequality.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`grid`] | lattices, sampled functions, the analytic family catalog, finite differences |
//! | [`legendre`] | discrete Legendre–Fenchel transform and convex envelope |
//! | [`interp`] | space-time fields, closed-form families, the `H_p` residual |
//! | [`pde`] | Dirichlet solver for p-interpolation families |
//! | [`measures`] | probability weights, variance, α-profiles, integration by parts |
//! | [`checks`] | inequality checkers producing [`CheckReport`]s |
//! | [`busemann`] | the Busemann functional and its half-line variance inequality |
//! | [`reinhardt`] | Reinhardt shadows and coordinatewise geometric-mean interpolation |
//! | [`suite`] | the acceptance battery shared by the test-suite and the CLI |
//! | [`config`] | the line-oriented experiment configuration format |

use thiserror::Error;

pub mod busemann;
pub mod checks;
pub mod config;
pub mod geometry;
pub mod grid;
pub mod interp;
pub mod legendre;
mod lifted;
pub mod measures;
pub mod pde;
pub mod quadrature;
pub mod reinhardt;
pub mod report;
pub mod suite;

pub use checks::CheckReport;
pub use grid::{Axis, FamilySpec, GridFunction, Lattice};
pub use interp::SpaceTimeField;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("inverted bounds on axis {axis}: lower {lo} >= upper {hi}")]
    InvertedBounds { axis: usize, lo: f64, hi: f64 },

    #[error("axis {axis} needs at least 3 points, got {count}")]
    TooFewPoints { axis: usize, count: usize },

    #[error("non-finite lattice bound on axis {axis}")]
    NonFiniteBound { axis: usize },

    #[error("unsupported dimension {0} (expected 1 or 2)")]
    UnsupportedDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("lattices do not match")]
    LatticeMismatch,

    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("invalid body: {0}")]
    InvalidBody(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("function has empty finite support")]
    EmptySupport,

    #[error("zero mass: e^-F vanishes on every lattice point")]
    ZeroMass,

    #[error("mass overflow: e^-F is not representable")]
    MassOverflow,

    #[error("function is infinite on a point of positive mass (index {0})")]
    InfiniteOnSupport(usize),

    #[error("evenness violated at index {index}: |f(x) - f(-x)| = {gap}")]
    EvennessViolation { index: usize, gap: f64 },

    #[error("lattice is not symmetric about the origin")]
    AsymmetricLattice,

    #[error("boundary layer {0} requested; only interior layers have centred time differences")]
    BoundaryLayer(usize),

    #[error("layer {layer} lost strong convexity at x = {x:?}: smallest Hessian eigenvalue {min_eig}")]
    LostConvexity { layer: usize, x: [f64; 2], min_eig: f64 },

    #[error("origin is not an interior point of the body")]
    OriginOutside,

    #[error("polygon vertices are not in convex position")]
    NonConvexPolygon,

    #[error("ray integral diverges along direction {0:?}")]
    DivergentRay([f64; 2]),

    #[error("support of the test function touches the lattice boundary")]
    SupportTouchesBoundary,

    #[error("u/x is unbounded near the origin (first-cell ratio {0})")]
    UnboundedRatio(f64),

    #[error("shadow is empty")]
    EmptyShadow,

    #[error("shadow grids are incompatible")]
    IncompatibleGrids,

    #[error("dual point outside the dual window: {0:?}")]
    OutsideDualWindow([f64; 2]),

    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
