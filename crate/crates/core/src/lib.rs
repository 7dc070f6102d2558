//! Numerical continuation toolkit for two-parameter ODE families.
//!
//! Given a family `x' = X(x, theta)` over a rectangular parameter box, the crate
//! checks the S/Z boundary condition on one edge of the box, traces every fold
//! curve of the catastrophe manifold, classifies the codimension-2 points on
//! those curves (cusps, Bogdanov-Takens and fold-Hopf points) and decides the
//! cusp parity of the saddle component.
//!
//! Module map:
//! - [`family`]: vector-field families, derivatives, built-ins and family files.
//! - [`numerics`]: dense linear algebra, spectra, null vectors and Newton solvers.
//! - [`continuation`]: equilibrium branches, fold curves and lifts of parameter curves.
//! - [`detect`]: test functions, normal-form coefficients and orientation.
//! - [`szparity`]: boundary scan, saddle-component membership, traversal and verdict.
//! - [`report`]: run reports, the closed-form oracle and SVG rendering.

pub mod continuation;
pub mod detect;
pub mod error;
pub mod family;
pub mod numerics;
pub mod report;
pub mod settings;
pub mod szparity;

pub use error::{Error, Result, SzViolation};
pub use family::{Edge, FamilyKind, FamilySpec, ParamBox, Theta};
pub use settings::Settings;
