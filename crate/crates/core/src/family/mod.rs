//! Two-parameter vector-field families `x' = X(x, theta)` and their derivatives.
//!
//! A [`FamilySpec`] is an immutable bundle of evaluators. Missing analytic
//! derivatives fall back to central finite differences with step
//! `fd_step * (1 + |x|_inf)`.

pub mod builtins;
pub mod expr;
pub mod file;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use builtins::builtin;
pub use file::{load_family_file, parse_family};

/// A point `(theta1, theta2)` of the parameter plane.
pub type Theta = [f64; 2];

pub type RhsFn = Arc<dyn Fn(&DVector<f64>, Theta) -> DVector<f64> + Send + Sync>;
pub type MatFn = Arc<dyn Fn(&DVector<f64>, Theta) -> DMatrix<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(&DVector<f64>, Theta) -> f64 + Send + Sync>;
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub const DEFAULT_FD_STEP: f64 = 1e-5;
/// Step used for the mixed second difference behind third derivatives.
const THIRD_ORDER_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Bottom, Edge::Right, Edge::Top, Edge::Left];

    pub fn parse(s: &str) -> Option<Edge> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Some(Edge::Left),
            "right" => Some(Edge::Right),
            "bottom" => Some(Edge::Bottom),
            "top" => Some(Edge::Top),
            _ => None,
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Edge::Left => "left",
            Edge::Right => "right",
            Edge::Bottom => "bottom",
            Edge::Top => "top",
        };
        f.write_str(s)
    }
}

/// Rectangular parameter domain with the edge that carries the S/Z curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lo: Theta,
    pub hi: Theta,
    pub sz_edge: Edge,
}

impl ParamBox {
    pub fn new(lo: Theta, hi: Theta, sz_edge: Edge) -> Result<Self> {
        if !(lo[0] < hi[0] && lo[1] < hi[1]) || lo.iter().chain(&hi).any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: 0,
                msg: format!("box corners must satisfy lo < hi componentwise, got {lo:?} / {hi:?}"),
            });
        }
        Ok(Self { lo, hi, sz_edge })
    }

    pub fn width(&self) -> Theta {
        [self.hi[0] - self.lo[0], self.hi[1] - self.lo[1]]
    }

    pub fn contains(&self, t: Theta, tol: f64) -> bool {
        let w = self.width();
        (0..2).all(|k| t[k] >= self.lo[k] - tol * w[k] && t[k] <= self.hi[k] + tol * w[k])
    }

    /// Maps into the unit square.
    pub fn to_unit(&self, t: Theta) -> Theta {
        let w = self.width();
        [(t[0] - self.lo[0]) / w[0], (t[1] - self.lo[1]) / w[1]]
    }

    pub fn from_unit(&self, u: Theta) -> Theta {
        let w = self.width();
        [self.lo[0] + u[0] * w[0], self.lo[1] + u[1] * w[1]]
    }

    /// Distance in box-scaled parameter coordinates.
    pub fn scaled_dist(&self, a: Theta, b: Theta) -> f64 {
        let w = self.width();
        (((a[0] - b[0]) / w[0]).powi(2) + ((a[1] - b[1]) / w[1]).powi(2)).sqrt()
    }

    /// Start and end corner of an edge, traversed in increasing coordinate.
    pub fn edge_segment(&self, edge: Edge) -> (Theta, Theta) {
        let (lo, hi) = (self.lo, self.hi);
        match edge {
            Edge::Left => ([lo[0], lo[1]], [lo[0], hi[1]]),
            Edge::Right => ([hi[0], lo[1]], [hi[0], hi[1]]),
            Edge::Bottom => ([lo[0], lo[1]], [hi[0], lo[1]]),
            Edge::Top => ([lo[0], hi[1]], [hi[0], hi[1]]),
        }
    }

    /// Which edge (if any) a parameter point lies on, within a scaled tolerance.
    pub fn edge_of(&self, t: Theta, tol: f64) -> Option<Edge> {
        let u = self.to_unit(t);
        let mut best: Option<(f64, Edge)> = None;
        for (d, e) in [
            (u[0].abs(), Edge::Left),
            ((u[0] - 1.0).abs(), Edge::Right),
            (u[1].abs(), Edge::Bottom),
            ((u[1] - 1.0).abs(), Edge::Top),
        ] {
            if d <= tol && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, e));
            }
        }
        best.map(|(_, e)| e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    General,
    /// `X = -grad_x f` for a potential `f(x, theta)`.
    Gradient,
}

/// `x' = theta2 + theta1 g(x) + h(x)` in one state dimension, with derivatives.
#[derive(Clone)]
pub struct ParamLinearForm {
    pub g: RealFn,
    pub dg: RealFn,
    pub ddg: RealFn,
    pub h: RealFn,
    pub dh: RealFn,
    pub ddh: RealFn,
}

impl fmt::Debug for ParamLinearForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ParamLinearForm { .. }")
    }
}

#[derive(Clone)]
pub struct FamilySpec {
    pub name: String,
    pub dim: usize,
    pub bounds: ParamBox,
    pub fd_step: f64,
    /// Half-width of the cube random state starts are drawn from.
    pub state_radius: f64,
    kind: FamilyKind,
    rhs: RhsFn,
    jac_x: Option<MatFn>,
    jac_theta: Option<MatFn>,
    potential: Option<ScalarFn>,
    linear_form: Option<ParamLinearForm>,
    /// Source text for families loaded from files, kept for reports.
    pub source: Option<String>,
}

impl fmt::Debug for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FamilySpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("bounds", &self.bounds)
            .field("kind", &self.kind)
            .field("analytic_jacobian", &self.jac_x.is_some())
            .finish()
    }
}

impl FamilySpec {
    pub fn new(name: impl Into<String>, dim: usize, bounds: ParamBox, rhs: RhsFn) -> Self {
        assert!(dim >= 1, "state dimension must be at least 1");
        Self {
            name: name.into(),
            dim,
            bounds,
            fd_step: DEFAULT_FD_STEP,
            state_radius: 2.0,
            kind: FamilyKind::General,
            rhs,
            jac_x: None,
            jac_theta: None,
            potential: None,
            linear_form: None,
            source: None,
        }
    }

    pub fn with_jacobian(mut self, jac: MatFn) -> Self {
        self.jac_x = Some(jac);
        self
    }

    pub fn with_param_jacobian(mut self, jac: MatFn) -> Self {
        self.jac_theta = Some(jac);
        self
    }

    pub fn with_linear_form(mut self, form: ParamLinearForm) -> Self {
        self.linear_form = Some(form);
        self
    }

    pub fn with_state_radius(mut self, r: f64) -> Self {
        self.state_radius = r;
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn with_bounds(mut self, bounds: ParamBox) -> Self {
        self.bounds = bounds;
        self
    }

    /// Drops analytic derivatives so everything goes through finite differences.
    pub fn without_analytic_derivatives(mut self) -> Self {
        self.jac_x = None;
        self.jac_theta = None;
        self
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jac_x.is_some()
    }

    pub fn linear_form(&self) -> Option<&ParamLinearForm> {
        self.linear_form.as_ref()
    }

    fn step_for(&self, x: &DVector<f64>) -> f64 {
        self.fd_step * (1.0 + x.amax())
    }

    pub fn eval_rhs(&self, x: &DVector<f64>, theta: Theta) -> Result<DVector<f64>> {
        let v = (self.rhs)(x, theta);
        if v.len() != self.dim || v.iter().any(|c| !c.is_finite()) {
            return Err(Error::Evaluation { x: x.iter().copied().collect(), theta });
        }
        Ok(v)
    }

    pub fn jacobian_x(&self, x: &DVector<f64>, theta: Theta) -> Result<DMatrix<f64>> {
        if let Some(jac) = &self.jac_x {
            let j = jac(x, theta);
            if j.iter().any(|c| !c.is_finite()) {
                return Err(Error::Evaluation { x: x.iter().copied().collect(), theta });
            }
            return Ok(j);
        }
        self.fd_jacobian_x(x, theta)
    }

    /// Central-difference state Jacobian, regardless of analytic availability.
    pub fn fd_jacobian_x(&self, x: &DVector<f64>, theta: Theta) -> Result<DMatrix<f64>> {
        let h = self.step_for(x);
        let mut j = DMatrix::zeros(self.dim, self.dim);
        let mut xp = x.clone();
        for k in 0..self.dim {
            xp[k] = x[k] + h;
            let fp = self.eval_rhs(&xp, theta)?;
            xp[k] = x[k] - h;
            let fm = self.eval_rhs(&xp, theta)?;
            xp[k] = x[k];
            j.set_column(k, &((fp - fm) / (2.0 * h)));
        }
        Ok(j)
    }

    /// `n x 2` derivative with respect to the parameters.
    pub fn jacobian_theta(&self, x: &DVector<f64>, theta: Theta) -> Result<DMatrix<f64>> {
        if let Some(jac) = &self.jac_theta {
            return Ok(jac(x, theta));
        }
        let mut j = DMatrix::zeros(self.dim, 2);
        for k in 0..2 {
            let h = self.fd_step * (1.0 + theta[k].abs());
            let mut tp = theta;
            tp[k] += h;
            let fp = self.eval_rhs(x, tp)?;
            tp[k] = theta[k] - h;
            let fm = self.eval_rhs(x, tp)?;
            j.set_column(k, &((fp - fm) / (2.0 * h)));
        }
        Ok(j)
    }

    /// Derivative of `theta -> J(x, theta) v`, an `n x 2` matrix.
    pub fn jacobian_theta_of_jv(
        &self,
        x: &DVector<f64>,
        theta: Theta,
        v: &DVector<f64>,
    ) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.dim, 2);
        for k in 0..2 {
            let h = self.fd_step * (1.0 + theta[k].abs());
            let mut tp = theta;
            tp[k] += h;
            let jp = self.jacobian_x(x, tp)? * v;
            tp[k] = theta[k] - h;
            let jm = self.jacobian_x(x, tp)? * v;
            out.set_column(k, &((jp - jm) / (2.0 * h)));
        }
        Ok(out)
    }

    /// Second directional derivative `D^2 X (q1, q2)`.
    pub fn directional_b(
        &self,
        x: &DVector<f64>,
        theta: Theta,
        q1: &DVector<f64>,
        q2: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let h = self.step_for(x);
        let jp = self.jacobian_x(&(x + q2 * h), theta)?;
        let jm = self.jacobian_x(&(x - q2 * h), theta)?;
        Ok((jp - jm) * q1 / (2.0 * h))
    }

    /// Third directional derivative `D^3 X (q1, q2, q3)`.
    pub fn directional_c(
        &self,
        x: &DVector<f64>,
        theta: Theta,
        q1: &DVector<f64>,
        q2: &DVector<f64>,
        q3: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let h = THIRD_ORDER_STEP * (1.0 + x.amax());
        let mut acc = DVector::zeros(self.dim);
        for (s2, s3, w) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)]
        {
            let xs = x + q2 * (s2 * h) + q3 * (s3 * h);
            acc += self.jacobian_x(&xs, theta)? * q1 * w;
        }
        Ok(acc / (4.0 * h * h))
    }

    pub fn derivatives(&self, x: &DVector<f64>, theta: Theta) -> Result<DerivativeBundle<'_>> {
        Ok(DerivativeBundle {
            family: self,
            x: x.clone(),
            theta,
            j: self.jacobian_x(x, theta)?,
        })
    }

    /// Potential value for gradient families.
    pub fn potential(&self, x: &DVector<f64>, theta: Theta) -> Option<f64> {
        self.potential.as_ref().map(|f| f(x, theta))
    }
}

/// Jacobian plus multilinear derivative access at one point.
pub struct DerivativeBundle<'a> {
    family: &'a FamilySpec,
    pub x: DVector<f64>,
    pub theta: Theta,
    pub j: DMatrix<f64>,
}

impl DerivativeBundle<'_> {
    pub fn b(&self, q1: &DVector<f64>, q2: &DVector<f64>) -> Result<DVector<f64>> {
        self.family.directional_b(&self.x, self.theta, q1, q2)
    }

    pub fn c(&self, q1: &DVector<f64>, q2: &DVector<f64>, q3: &DVector<f64>) -> Result<DVector<f64>> {
        self.family.directional_c(&self.x, self.theta, q1, q2, q3)
    }
}

/// Builds `x' = -grad_x f(x, theta)`.
///
/// The analytic gradient and Hessian are used when given; otherwise they come
/// from central differences of the potential.
pub fn gradient_family_from_potential(
    name: impl Into<String>,
    dim: usize,
    bounds: ParamBox,
    potential: ScalarFn,
    gradient: Option<RhsFn>,
    hessian: Option<MatFn>,
) -> FamilySpec {
    let rhs: RhsFn = match gradient {
        Some(g) => Arc::new(move |x, t| -g(x, t)),
        None => {
            let f = potential.clone();
            Arc::new(move |x: &DVector<f64>, t| {
                let h = DEFAULT_FD_STEP * (1.0 + x.amax());
                let mut xp = x.clone();
                DVector::from_fn(x.len(), |k, _| {
                    xp[k] = x[k] + h;
                    let fp = f(&xp, t);
                    xp[k] = x[k] - h;
                    let fm = f(&xp, t);
                    xp[k] = x[k];
                    -(fp - fm) / (2.0 * h)
                })
            })
        }
    };
    let mut fam = FamilySpec::new(name, dim, bounds, rhs);
    if let Some(hess) = hessian {
        fam = fam.with_jacobian(Arc::new(move |x, t| -hess(x, t)));
    }
    fam.kind = FamilyKind::Gradient;
    fam.potential = Some(potential);
    fam
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::builtins::builtin;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn eval_rhs_examples() {
        let cusp = builtin("cusp1").unwrap();
        assert_eq!(cusp.eval_rhs(&v(&[0.0]), [0.0, 0.0]).unwrap()[0], 0.0);
        assert_eq!(cusp.eval_rhs(&v(&[1.0]), [1.0, 0.0]).unwrap()[0], 0.0);
        let quintic = builtin("quintic3").unwrap();
        assert_eq!(quintic.eval_rhs(&v(&[1.0]), [-1.0, 0.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn non_finite_rhs_is_an_evaluation_error() {
        let b = ParamBox::new([-1.0, -1.0], [1.0, 1.0], Edge::Right).unwrap();
        let fam = FamilySpec::new("bad", 1, b, Arc::new(|x: &DVector<f64>, _| x.map(|c| 1.0 / c)));
        let err = fam.eval_rhs(&v(&[0.0]), [0.5, 0.25]).unwrap_err();
        assert_eq!(err, Error::Evaluation { x: vec![0.0], theta: [0.5, 0.25] });
    }

    #[test]
    fn jacobian_examples() {
        let cusp = builtin("cusp1").unwrap();
        assert_eq!(cusp.jacobian_x(&v(&[0.0]), [0.0, 0.0]).unwrap()[(0, 0)], 0.0);
        assert_eq!(cusp.jacobian_x(&v(&[1.0]), [1.0, 0.3]).unwrap()[(0, 0)], -2.0);
        let bt = builtin("bt2").unwrap();
        let j = bt.jacobian_x(&v(&[0.0, 0.0]), [0.0, 0.0]).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn directional_derivative_examples() {
        let cusp = builtin("cusp1").unwrap();
        let q = v(&[1.0]);
        assert!(cusp.directional_b(&v(&[0.0]), [0.3, 0.1], &q, &q).unwrap()[0].abs() < 1e-9);
        assert!((cusp.directional_b(&v(&[1.0]), [0.3, 0.1], &q, &q).unwrap()[0] + 6.0).abs() < 1e-8);
        for x in [-1.5, 0.0, 0.7] {
            let c = cusp.directional_c(&v(&[x]), [0.0, 0.0], &q, &q, &q).unwrap()[0];
            assert!((c + 6.0).abs() < 1e-6, "C at {x}: {c}");
        }
    }

    #[test]
    fn gradient_family_examples() {
        let b = ParamBox::new([-1.0, -1.0], [1.0, 1.0], Edge::Right).unwrap();
        let well = gradient_family_from_potential(
            "well",
            1,
            b,
            Arc::new(|x: &DVector<f64>, t: Theta| {
                x[0].powi(4) / 4.0 - t[0] * x[0] * x[0] / 2.0 - t[1] * x[0]
            }),
            None,
            None,
        );
        assert_eq!(well.kind(), FamilyKind::Gradient);
        for (x, t) in [(0.3, [0.2, -0.4]), (-1.1, [0.9, 0.5]), (0.0, [0.0, 0.0])] {
            let got = well.eval_rhs(&v(&[x]), t).unwrap()[0];
            let expect = t[1] + t[0] * x - x * x * x;
            assert!((got - expect).abs() < 1e-8, "{got} vs {expect}");
        }
        let bowl = gradient_family_from_potential(
            "bowl",
            1,
            b,
            Arc::new(|x: &DVector<f64>, _| x[0] * x[0] / 2.0),
            None,
            None,
        );
        assert!((bowl.eval_rhs(&v(&[0.7]), [0.0, 0.0]).unwrap()[0] + 0.7).abs() < 1e-9);
        let hill = gradient_family_from_potential(
            "hill",
            1,
            b,
            Arc::new(|x: &DVector<f64>, _| -x[0] * x[0] / 2.0),
            None,
            None,
        );
        assert!((hill.eval_rhs(&v(&[0.7]), [0.0, 0.0]).unwrap()[0] - 0.7).abs() < 1e-9);
    }

    #[test]
    fn box_geometry() {
        let b = ParamBox::new([-3.0, -3.0], [1.0, 3.0], Edge::Right).unwrap();
        assert_eq!(b.edge_segment(Edge::Right), ([1.0, -3.0], [1.0, 3.0]));
        assert_eq!(b.edge_of([1.0, 0.2], 1e-9), Some(Edge::Right));
        assert_eq!(b.edge_of([0.0, 0.2], 1e-9), None);
        assert!(ParamBox::new([1.0, 0.0], [0.0, 1.0], Edge::Top).is_err());
        assert_eq!(b.from_unit(b.to_unit([0.25, -1.0])), [0.25, -1.0]);
    }
}
