//! Stability classes, normal-form coefficients and codimension-2 points on
//! fold curves.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::continuation::fold::{sign, FoldSystem};
use crate::continuation::{solve_equilibrium, FoldCurveRecord, FoldPoint};
use crate::error::{Error, Result};
use crate::family::{FamilySpec, Theta};
use crate::numerics::{align, brent, real_eigenvector, spectrum, solve_linear, NullPair, Spectrum};
use crate::settings::Settings;

/// Curve points used on each side of a cusp for the frame fit.
const FRAME_POINTS: usize = 24;
const FRAME_MIN_POINTS: usize = 8;
/// State offset along `q` used to sample the three sheets next to a cusp.
const SHEET_OFFSET: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityClass {
    Attractor,
    /// Hyperbolic with `k` unstable directions.
    Saddle(usize),
    NonHyperbolic,
}

impl StabilityClass {
    pub fn is_attractor(self) -> bool {
        self == Self::Attractor
    }

    pub fn is_one_saddle(self) -> bool {
        self == Self::Saddle(1)
    }

    /// Number of unstable directions for hyperbolic classes.
    pub fn index(self) -> Option<usize> {
        match self {
            Self::Attractor => Some(0),
            Self::Saddle(k) => Some(k),
            Self::NonHyperbolic => None,
        }
    }
}

pub fn classify_equilibrium(spec: &Spectrum, hyp_gate: f64) -> StabilityClass {
    if spec.min_abs_re() <= hyp_gate {
        return StabilityClass::NonHyperbolic;
    }
    match spec.count_re_above(hyp_gate) {
        0 => StabilityClass::Attractor,
        k => StabilityClass::Saddle(k),
    }
}

/// `a = <p, B(q, q)> / 2` with `<p, q> = 1`.
pub fn fold_coefficient_a(family: &FamilySpec, x: &DVector<f64>, theta: Theta, nullpair: &NullPair) -> Result<f64> {
    if nullpair.bt_flag {
        return Err(Error::DegenerateNormalization);
    }
    let q = nullpair.q_vec();
    Ok(0.5 * nullpair.p_vec().dot(&family.directional_b(x, theta, &q, &q)?))
}

/// Cubic coefficient of the centre-manifold reduction,
/// `c = <p, C(q, q, q) - 3 B(q, w)> / 6` with `J w = B(q, q)` solved in the
/// complement of `q` through the bordered system.
pub fn cusp_coefficient_raw(family: &FamilySpec, x: &DVector<f64>, theta: Theta, nullpair: &NullPair) -> Result<f64> {
    if nullpair.bt_flag {
        return Err(Error::DegenerateNormalization);
    }
    let n = family.dim;
    let q = nullpair.q_vec();
    let p = nullpair.p_vec();
    let b = family.directional_b(x, theta, &q, &q)?;
    let c = family.directional_c(x, theta, &q, &q, &q)?;
    let j = family.jacobian_x(x, theta)?;
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&j);
    m.view_mut((0, n), (n, 1)).copy_from(&p);
    m.view_mut((n, 0), (1, n)).copy_from(&q.transpose());
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(&b);
    let sol = solve_linear(&m, &rhs)?;
    let w = sol.rows(0, n).into_owned();
    let bw = family.directional_b(x, theta, &q, &w)?;
    Ok(p.dot(&(c - bw * 3.0)) / 6.0)
}

/// [`cusp_coefficient_raw`] with the degeneracy gate `|c| > cusp_gate`.
pub fn cusp_coefficient_c(
    family: &FamilySpec,
    x: &DVector<f64>,
    theta: Theta,
    nullpair: &NullPair,
    settings: &Settings,
) -> Result<f64> {
    let c = cusp_coefficient_raw(family, x, theta, nullpair)?;
    if c.abs() <= settings.cusp_gate {
        return Err(Error::DegenerateCusp { c });
    }
    Ok(c)
}

/// A unit centre direction `q` and the flow direction along it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientedTangent {
    pub q: Vec<f64>,
    /// `+1` or `-1` relative to `q`; `0` when unset.
    pub direction: i8,
}

impl OrientedTangent {
    pub fn q_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.q)
    }

    /// The oriented direction `direction * q`.
    pub fn oriented(&self) -> DVector<f64> {
        self.q_vec() * f64::from(self.direction)
    }
}

/// Eigenvector of the leading real eigenvalue at a pseudo-hyperbolic point.
pub fn centre_tangent(
    family: &FamilySpec,
    x: &DVector<f64>,
    theta: Theta,
    reference: Option<&DVector<f64>>,
    settings: &Settings,
) -> Result<OrientedTangent> {
    let j = family.jacobian_x(x, theta)?;
    let spec = spectrum(&j)?;
    let lead = spec
        .eigenvalues
        .iter()
        .min_by(|a, b| a.re.abs().total_cmp(&b.re.abs()))
        .ok_or(Error::NotPseudoHyperbolic)?;
    if lead.im != 0.0 || spec.gap_ratio <= settings.gap_min {
        return Err(Error::NotPseudoHyperbolic);
    }
    let q = real_eigenvector(&j, lead.re, reference).normalize();
    Ok(OrientedTangent { q: q.as_slice().to_vec(), direction: 0 })
}

/// Flow direction `sign(a)` near a fold, relative to the stored `q`.
pub fn fold_orientation(family: &FamilySpec, fold: &FoldPoint, settings: &Settings) -> Result<OrientedTangent> {
    let a = match fold.a_coeff {
        Some(a) => a,
        None => fold_coefficient_a(family, &fold.state(), fold.theta, &fold.nullpair)?,
    };
    if a.abs() <= settings.cusp_gate {
        return Err(Error::AtCusp { a });
    }
    Ok(OrientedTangent { q: fold.nullpair.q.clone(), direction: sign(a) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Codim2Kind {
    CuspStandard,
    CuspDual,
    BogdanovTakens,
    FoldHopf,
}

impl Codim2Kind {
    pub fn is_cusp(self) -> bool {
        matches!(self, Self::CuspStandard | Self::CuspDual)
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::CuspStandard => "cusp (standard)",
            Self::CuspDual => "cusp (dual)",
            Self::BogdanovTakens => "Bogdanov-Takens",
            Self::FoldHopf => "fold-Hopf",
        }
    }
}

/// Which test function vanishes at a marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Cusp,
    Bt,
    FoldHopf,
}

/// Defining quantities at an accepted codimension-2 point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codim2Residuals {
    /// Norm of the fold system residual.
    pub fold_residual: f64,
    pub a_coeff: Option<f64>,
    pub c_coeff: Option<f64>,
    /// `<p, q>` for unit null vectors.
    pub pq: f64,
    /// Real part of the complex pair nearest the imaginary axis.
    pub hopf_re: Option<f64>,
    /// The two smallest eigenvalue moduli.
    pub moduli: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codim2Point {
    pub kind: Codim2Kind,
    pub x: Vec<f64>,
    pub theta: Theta,
    pub residuals: Codim2Residuals,
    /// For cusps: the matrix taking normal-form parameters to parameter
    /// offsets from the cusp, row-major.
    pub frame: Option<[[f64; 2]; 2]>,
    /// The sheet pattern and the sign of `c` disagree.
    pub conflict: bool,
    /// Position of the marker in the curve's point list.
    pub position: usize,
}

/// Test functions whose sign differs between two consecutive curve points.
pub fn triggered(a: &FoldPoint, b: &FoldPoint) -> Vec<TestKind> {
    let flips = |u: f64, v: f64| u != 0.0 && v != 0.0 && u.signum() != v.signum();
    let mut out = Vec::new();
    if flips(a.psi.cusp, b.psi.cusp) {
        out.push(TestKind::Cusp);
    }
    if flips(a.psi.bt, b.psi.bt) {
        out.push(TestKind::Bt);
    }
    if let (Some(u), Some(v)) = (a.psi.fh, b.psi.fh) {
        if flips(u, v) {
            out.push(TestKind::FoldHopf);
        }
    }
    out
}

/// A refined zero of one test function between two curve points.
#[derive(Debug, Clone)]
pub struct RefinedMarker {
    /// Secant parameter of the zero in `[0, 1]`.
    pub sigma: f64,
    pub point: FoldPoint,
    pub marker: Codim2Point,
}

fn test_value(fp: &FoldPoint, kind: TestKind) -> Option<f64> {
    match kind {
        TestKind::Cusp => Some(fp.psi.cusp),
        TestKind::Bt => Some(fp.psi.bt),
        TestKind::FoldHopf => fp.psi.fh,
    }
}

/// Locates the zero of `kind` between `a` and `b` by Brent iteration on the
/// secant, correcting back to the curve at every evaluation.
pub fn refine_marker(
    family: &FamilySpec,
    a: &FoldPoint,
    b: &FoldPoint,
    kind: TestKind,
    settings: &Settings,
) -> Result<RefinedMarker> {
    let sys = FoldSystem::new(family, settings);
    let qa = a.q();
    let ua = sys.pack(&a.state(), &qa, a.theta);
    let ub = sys.pack(&b.state(), &align(b.q(), Some(&qa)), b.theta);
    let d = &ub - &ua;
    let normal = &d / sys.wnorm(&d);
    let p_ref = a.p_hat();
    let failed = || Error::RefinementFailed { kind: format!("{kind:?}"), from: a.theta, to: b.theta };
    let eval = |sigma: f64| -> Result<FoldPoint> {
        let g = &ua + &d * sigma;
        let (u, _) = sys.solve_with_hyperplane(&g, &g, &normal, 0.0, settings.newton_max_iter)?;
        let (x, q, theta) = sys.unpack(&u);
        let q = align(q.normalize(), Some(&qa));
        FoldPoint::evaluate(family, &x, theta, Some(&q), Some(&p_ref), settings)
    };
    let sigma = brent(|s| eval(s).and_then(|fp| test_value(&fp, kind).ok_or_else(failed)), 0.0, 1.0, 1e-15, 200)
        .map_err(|_| failed())?;
    let mut point = eval(sigma).map_err(|_| failed())?;
    let x = point.state();
    let res = crate::continuation::fold_residual(family, &x, &point.q(), point.theta)?.norm();
    let mut residuals = Codim2Residuals {
        fold_residual: res,
        a_coeff: point.a_coeff,
        c_coeff: None,
        pq: point.psi.bt,
        hopf_re: point.psi.fh,
        moduli: point.kernel_moduli.clone(),
    };
    let kind = match kind {
        TestKind::Bt => Codim2Kind::BogdanovTakens,
        TestKind::FoldHopf => Codim2Kind::FoldHopf,
        TestKind::Cusp => {
            point.orientation = 0;
            let c = cusp_coefficient_c(family, &x, point.theta, &point.nullpair, settings)?;
            residuals.c_coeff = Some(c);
            if c < 0.0 {
                Codim2Kind::CuspStandard
            } else {
                Codim2Kind::CuspDual
            }
        }
    };
    let marker = Codim2Point {
        kind,
        x: point.x.clone(),
        theta: point.theta,
        residuals,
        frame: None,
        conflict: false,
        position: 0,
    };
    Ok(RefinedMarker { sigma, point, marker })
}

/// Refines every test-function zero between `a` and `b`, ordered along the
/// segment. Failures are returned in place.
pub fn classify_codim2(family: &FamilySpec, a: &FoldPoint, b: &FoldPoint, settings: &Settings) -> Vec<Result<RefinedMarker>> {
    let mut out: Vec<Result<RefinedMarker>> =
        triggered(a, b).into_iter().map(|k| refine_marker(family, a, b, k, settings)).collect();
    out.sort_by(|u, v| match (u, v) {
        (Ok(u), Ok(v)) => u.sigma.total_cmp(&v.sigma),
        _ => std::cmp::Ordering::Equal,
    });
    out
}

/// Scans a continued curve, inserts refined markers into its point list and
/// classifies cusps.
pub fn attach_codim2(family: &FamilySpec, record: &mut FoldCurveRecord, settings: &Settings) -> Result<()> {
    let old = std::mem::take(&mut record.points);
    let mut points = Vec::with_capacity(old.len() + 4);
    let mut markers = Vec::new();
    for (i, fp) in old.iter().enumerate() {
        points.push(fp.clone());
        let Some(next) = old.get(i + 1) else { break };
        for found in classify_codim2(family, fp, next, settings) {
            match found {
                Ok(mut m) => {
                    m.point.codim2 = Some(markers.len());
                    m.marker.position = points.len();
                    points.push(m.point);
                    markers.push(m.marker);
                }
                Err(e) => warn!("codimension-2 refinement between {:?} and {:?} failed: {e}", fp.theta, next.theta),
            }
        }
    }
    record.points = points;
    for m in markers.iter_mut().filter(|m| m.kind.is_cusp()) {
        match cusp_frame(record, m.position) {
            Ok(frame) => {
                m.frame = Some(frame);
                if let Some(kind) = sheet_pattern(family, m, &record.points[m.position].q(), settings) {
                    if kind != m.kind {
                        warn!("cusp at {:?}: sheet pattern {kind:?} disagrees with sign of c", m.theta);
                        m.conflict = true;
                        m.kind = kind;
                    }
                }
            }
            Err(e) => debug!("no frame for cusp at {:?}: {e}", m.theta),
        }
    }
    record.codim2_points = markers;
    Ok(())
}

/// Least-squares fit `theta - theta_c ~ a1 xi + a2 xi^2 + a3 xi^3 + a4 xi^4`
/// along the curve, `xi = <q_c, x - x_c>`, returning `[a2 / 3 | -a3 / 2]`.
pub fn cusp_frame(record: &FoldCurveRecord, position: usize) -> Result<[[f64; 2]; 2]> {
    let pts = &record.points;
    let centre = pts.get(position).ok_or_else(|| Error::FrameUnavailable("marker outside curve".into()))?;
    let qc = centre.q();
    let xc = centre.state();
    let lo = position.saturating_sub(FRAME_POINTS);
    let hi = (position + FRAME_POINTS).min(pts.len() - 1);
    let sample: Vec<&FoldPoint> = (lo..=hi).filter(|&i| i != position).map(|i| &pts[i]).collect();
    if sample.len() < FRAME_MIN_POINTS {
        return Err(Error::FrameUnavailable(format!("{} curve points near the cusp", sample.len())));
    }
    let m = sample.len();
    let mut design = DMatrix::zeros(m, 4);
    let mut rhs = DMatrix::zeros(m, 2);
    for (r, fp) in sample.iter().enumerate() {
        let xi = qc.dot(&(fp.state() - &xc));
        for k in 0..4 {
            design[(r, k)] = xi.powi(k as i32 + 1);
        }
        rhs[(r, 0)] = fp.theta[0] - centre.theta[0];
        rhs[(r, 1)] = fp.theta[1] - centre.theta[1];
    }
    let coef = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::FrameUnavailable(e.to_string()))?;
    let frame = [
        [coef[(1, 0)] / 3.0, -coef[(2, 0)] / 2.0],
        [coef[(1, 1)] / 3.0, -coef[(2, 1)] / 2.0],
    ];
    let det = frame[0][0] * frame[1][1] - frame[0][1] * frame[1][0];
    let scale = frame.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if !det.is_finite() || det.abs() <= 1e-10 * scale * scale || scale == 0.0 {
        return Err(Error::FrameUnavailable(format!("singular frame, det {det:.3e}")));
    }
    Ok(frame)
}

/// Standard or dual from the indices of the three equilibria just inside the
/// cusp region: outer sheets of index `i` around a middle of `i + 1` is
/// standard, the reverse is dual.
pub fn sheet_pattern(family: &FamilySpec, cusp: &Codim2Point, qc: &DVector<f64>, settings: &Settings) -> Option<Codim2Kind> {
    let frame = cusp.frame?;
    let eps = SHEET_OFFSET * SHEET_OFFSET;
    let theta = [cusp.theta[0] + frame[0][0] * eps, cusp.theta[1] + frame[1][0] * eps];
    let xc = DVector::from_column_slice(&cusp.x);
    let mut sheets: Vec<(f64, usize)> = Vec::with_capacity(3);
    for k in [-1.0, 0.0, 1.0] {
        let seed = &xc + qc * (k * SHEET_OFFSET);
        let x = solve_equilibrium(family, theta, &seed, settings).ok()?;
        let spec = spectrum(&family.jacobian_x(&x, theta).ok()?).ok()?;
        let index = classify_equilibrium(&spec, settings.hyp_gate).index()?;
        sheets.push((qc.dot(&(x - &xc)), index));
    }
    sheets.sort_by(|a, b| a.0.total_cmp(&b.0));
    let distinct = sheets.windows(2).all(|w| w[1].0 - w[0].0 > 0.1 * SHEET_OFFSET);
    if !distinct {
        return None;
    }
    let (lo, mid, hi) = (sheets[0].1, sheets[1].1, sheets[2].1);
    if lo != hi {
        return None;
    }
    if mid == lo + 1 {
        Some(Codim2Kind::CuspStandard)
    } else if lo == mid + 1 {
        Some(Codim2Kind::CuspDual)
    } else {
        None
    }
}
