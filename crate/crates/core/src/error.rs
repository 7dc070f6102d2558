use std::fmt;

use thiserror::Error;

use crate::family::{Edge, Theta};

pub type Result<T> = std::result::Result<T, Error>;

/// Reasons a boundary fails the S/Z hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub enum SzViolation {
    /// The S/Z edge does not carry exactly two folds.
    FoldCount { edge: Edge, count: usize },
    /// Folds found on an edge other than the S/Z edge.
    ExtraFolds { edge: Edge, count: usize },
    /// A complex pair crosses the imaginary axis over the boundary.
    HopfOnBoundary { edge: Edge, theta: Theta },
    /// A non-hyperbolic equilibrium that is not a fold sits over the boundary.
    NonHyperbolic { edge: Edge, theta: Theta },
    /// The equilibria over the S/Z edge do not form one curve.
    BranchCount { count: usize },
    /// The middle arc is not made of 1-saddles.
    SaddleArcIndex { theta: Theta, index: usize },
    /// An outer arc is not made of attractors.
    OuterArcNotAttractor { theta: Theta, index: usize },
    /// The two folds are not opposed.
    NotOpposed,
}

impl fmt::Display for SzViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SzViolation::FoldCount { edge, count } => {
                write!(f, "S/Z edge {edge} carries {count} folds, expected 2")
            }
            SzViolation::ExtraFolds { edge, count } => {
                write!(f, "extra folds: {count} on edge {edge}")
            }
            SzViolation::HopfOnBoundary { edge, theta } => {
                write!(f, "Hopf event on edge {edge} near {theta:?}")
            }
            SzViolation::NonHyperbolic { edge, theta } => {
                write!(f, "non-hyperbolic equilibrium on edge {edge} near {theta:?}")
            }
            SzViolation::BranchCount { count } => {
                write!(f, "{count} equilibrium branches over the S/Z edge, expected 1")
            }
            SzViolation::SaddleArcIndex { theta, index } => {
                write!(f, "saddle arc has an index-{index} point at {theta:?}")
            }
            SzViolation::OuterArcNotAttractor { theta, index } => {
                write!(f, "outer arc has an index-{index} point at {theta:?}")
            }
            SzViolation::NotOpposed => write!(f, "the two S/Z folds are not opposed"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite vector field at x = {x:?}, theta = {theta:?}")]
    Evaluation { x: Vec<f64>, theta: Theta },
    #[error("unknown family `{0}`")]
    UnknownFamily(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("singular matrix (pivot {pivot:e})")]
    SingularMatrix { pivot: f64 },
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("ambiguous kernel: {count} eigenvalues pass the null gate")]
    AmbiguousKernel { count: usize },
    #[error("no convergence after {iterations} Newton iterations (residual {residual:e})")]
    MaxIter { iterations: usize, residual: f64 },
    #[error("branch lost near theta = {theta:?}")]
    BranchLost { theta: Theta },
    #[error("branch left the state ball near theta = {theta:?}")]
    BoundaryExit { theta: Theta },
    #[error("continuation step collapsed below {step:e}")]
    StepCollapse { step: f64 },
    #[error("degenerate seed: {0}")]
    SeedDegenerate(String),
    #[error("lift hits a fold at base sample {index} (theta = {theta:?})")]
    FoldOnPath { index: usize, theta: Theta },
    #[error("cusp frame unavailable: {0}")]
    FrameUnavailable(String),
    #[error("left/right null vectors are nearly orthogonal (Bogdanov-Takens proximity)")]
    DegenerateNormalization,
    #[error("degenerate cusp: cubic coefficient {c:e} below gate")]
    DegenerateCusp { c: f64 },
    #[error("refinement of {kind} point failed between theta = {from:?} and {to:?}")]
    RefinementFailed { kind: String, from: Theta, to: Theta },
    #[error("equilibrium is not pseudo-hyperbolic")]
    NotPseudoHyperbolic,
    #[error("fold orientation undefined at a cusp (a = {a:e})")]
    AtCusp { a: f64 },
    #[error("S/Z violation: {0}")]
    SzViolation(SzViolation),
    #[error("orientation transport broken near theta = {at:?}")]
    TransportBroken { at: Theta },
    #[error("membership of curve {curve} inconclusive near theta = {theta:?}")]
    InconclusiveMembership { curve: usize, theta: Theta },
    #[error("parity cross-check failed: {0}")]
    CrossCheckFailure(String),
    #[error("no fold curve joins the two S/Z folds")]
    MainCurveMissing,
    #[error("family is not parameter-linear: {0}")]
    NotParameterLinear(String),
    #[error("report schema `{found}` does not match `{expected}`")]
    SchemaMismatch { found: String, expected: String },
    #[error("report parse error: {0}")]
    ReportParse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<SzViolation> for Error {
    fn from(v: SzViolation) -> Self {
        Error::SzViolation(v)
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
