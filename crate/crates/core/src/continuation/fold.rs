//! Fold curves of the catastrophe manifold.
//!
//! Unknowns are `u = (x, q, theta~)` with `theta~` the box-scaled parameters,
//! and the defining system is `G(u) = (F(x, theta), J(x, theta) q, |q|^2 - 1)`.
//! Steps are measured in the weighted norm that counts `x / state_scale` and
//! `theta~` but not `q`.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{find_equilibria, newton_options, segment_distance};
use crate::detect::{attach_codim2, Codim2Point};
use crate::error::{Error, Result};
use crate::family::{Edge, FamilySpec, ParamBox, Theta};
use crate::numerics::{
    align, gauss_newton_min_norm, newton_solve, norm_inf, normalize_pair, null_vectors, spectrum, NewtonOptions,
    NullPair,
};
use crate::settings::Settings;

const CORRECTOR_ITER: usize = 10;
/// Grid seeds closer than this (weighted) to a traced curve are skipped.
const SEED_COVER_GATE: f64 = 0.01;

/// Values of the codimension-2 test functions at a fold point.
///
/// `cusp = <p, B(q, q)>` and `bt = <p, q>` use the transported unit null
/// vectors; `fh` is the real part of the complex pair nearest the imaginary
/// axis, absent when no pair has `|Im| > hopf_gate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestValues {
    pub cusp: f64,
    pub bt: f64,
    pub fh: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPoint {
    pub x: Vec<f64>,
    pub theta: Theta,
    /// `q` is the transported unit right null vector; `p` satisfies
    /// `<p, q> = 1` unless `bt_flag` is set.
    pub nullpair: NullPair,
    /// Transported unit left null vector.
    pub p_unit: Vec<f64>,
    /// `a = <p, B(q, q)> / 2`; absent near Bogdanov-Takens points.
    pub a_coeff: Option<f64>,
    pub psi: TestValues,
    /// Sign of `psi.cusp`: the flow direction on the centre manifold relative
    /// to `q`, carried continuously through Bogdanov-Takens points. Zero only
    /// at a refined cusp.
    pub orientation: i8,
    /// The two smallest eigenvalue moduli (one when `n = 1`).
    pub kernel_moduli: Vec<f64>,
    /// Index into the curve's codimension-2 list when this point is a marker.
    pub codim2: Option<usize>,
}

impl FoldPoint {
    /// Evaluates null vectors, coefficients and test functions at `(x, theta)`.
    ///
    /// `q` is used as the right null vector when given (as it is on a
    /// continued curve); `p_ref` fixes the sign of the left null vector.
    pub fn evaluate(
        family: &FamilySpec,
        x: &DVector<f64>,
        theta: Theta,
        q: Option<&DVector<f64>>,
        p_ref: Option<&DVector<f64>>,
        settings: &Settings,
    ) -> Result<Self> {
        let j = family.jacobian_x(x, theta)?;
        let (q_inv, p_hat) = null_vectors(&j, q, p_ref);
        let q = q.map(|v| v.normalize()).unwrap_or(q_inv);
        let p_hat = if p_ref.is_none() && p_hat.dot(&q) < 0.0 { -p_hat } else { p_hat };
        let b = family.directional_b(x, theta, &q, &q)?;
        let spec = spectrum(&j)?;
        let psi = TestValues {
            cusp: p_hat.dot(&b),
            bt: p_hat.dot(&q),
            fh: spec.hopf_pair_re(settings.hopf_gate),
        };
        let nullpair = normalize_pair(q.clone(), p_hat.clone(), settings.bt_gate);
        let a_coeff = (!nullpair.bt_flag).then(|| 0.5 * nullpair.p_vec().dot(&b));
        let moduli = spec.sorted_moduli();
        Ok(Self {
            x: x.as_slice().to_vec(),
            theta,
            nullpair,
            p_unit: p_hat.as_slice().to_vec(),
            a_coeff,
            orientation: sign(psi.cusp),
            psi,
            kernel_moduli: moduli.into_iter().take(2).collect(),
            codim2: None,
        })
    }

    pub fn state(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }

    pub fn q(&self) -> DVector<f64> {
        self.nullpair.q_vec()
    }

    pub fn p_hat(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.p_unit)
    }
}

pub(crate) fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldCurveRecord {
    pub id: usize,
    pub points: Vec<FoldPoint>,
    pub closed: bool,
    /// Exit edges of the first and last point of an open curve.
    pub endpoints: Option<[Edge; 2]>,
    /// Length in the weighted `(x, theta~)` metric.
    pub arclength: f64,
    pub codim2_points: Vec<Codim2Point>,
}

impl FoldCurveRecord {
    pub fn thetas(&self) -> Vec<Theta> {
        self.points.iter().map(|p| p.theta).collect()
    }

    /// Number of sign discontinuities of the fold orientation along the curve.
    pub fn orientation_switches(&self) -> usize {
        let signs: Vec<i8> = self.points.iter().map(|p| p.orientation).filter(|&o| o != 0).collect();
        signs.windows(2).filter(|w| w[0] != w[1]).count()
    }

    pub fn cusp_count(&self) -> usize {
        self.codim2_points.iter().filter(|c| c.kind.is_cusp()).count()
    }
}

/// `(F(x, theta), J(x, theta) q, <q, q> - 1)`.
pub fn fold_residual(family: &FamilySpec, x: &DVector<f64>, q: &DVector<f64>, theta: Theta) -> Result<DVector<f64>> {
    let n = family.dim;
    let mut out = DVector::zeros(2 * n + 1);
    out.rows_mut(0, n).copy_from(&family.eval_rhs(x, theta)?);
    out.rows_mut(n, n).copy_from(&(family.jacobian_x(x, theta)? * q));
    out[2 * n] = q.norm_squared() - 1.0;
    Ok(out)
}

pub(crate) struct FoldSystem<'a> {
    pub family: &'a FamilySpec,
    pub settings: &'a Settings,
    pub bounds: ParamBox,
    pub n: usize,
    pub w: DVector<f64>,
}

impl<'a> FoldSystem<'a> {
    pub fn new(family: &'a FamilySpec, settings: &'a Settings) -> Self {
        let n = family.dim;
        let mut w = DVector::zeros(2 * n + 2);
        for i in 0..n {
            w[i] = 1.0 / (settings.state_scale * settings.state_scale);
        }
        w[2 * n] = 1.0;
        w[2 * n + 1] = 1.0;
        Self { family, settings, bounds: family.bounds, n, w }
    }

    pub fn pack(&self, x: &DVector<f64>, q: &DVector<f64>, theta: Theta) -> DVector<f64> {
        let n = self.n;
        let mut u = DVector::zeros(2 * n + 2);
        u.rows_mut(0, n).copy_from(x);
        u.rows_mut(n, n).copy_from(q);
        let t = self.bounds.to_unit(theta);
        u[2 * n] = t[0];
        u[2 * n + 1] = t[1];
        u
    }

    pub fn unpack(&self, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>, Theta) {
        let n = self.n;
        (
            u.rows(0, n).into_owned(),
            u.rows(n, n).into_owned(),
            self.bounds.from_unit([u[2 * n], u[2 * n + 1]]),
        )
    }

    pub fn unit_theta(&self, u: &DVector<f64>) -> Theta {
        [u[2 * self.n], u[2 * self.n + 1]]
    }

    pub fn residual(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let (x, q, theta) = self.unpack(u);
        fold_residual(self.family, &x, &q, theta)
    }

    pub fn jacobian(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.n;
        let (x, q, theta) = self.unpack(u);
        let width = self.bounds.width();
        let f = self.family;
        let j = f.jacobian_x(&x, theta)?;
        let jt = f.jacobian_theta(&x, theta)?;
        let jqt = f.jacobian_theta_of_jv(&x, theta, &q)?;
        let mut m = DMatrix::zeros(2 * n + 1, 2 * n + 2);
        m.view_mut((0, 0), (n, n)).copy_from(&j);
        m.view_mut((n, n), (n, n)).copy_from(&j);
        for c in 0..n {
            let mut e = DVector::zeros(n);
            e[c] = 1.0;
            m.view_mut((n, c), (n, 1)).copy_from(&f.directional_b(&x, theta, &q, &e)?);
        }
        for (k, w) in width.iter().enumerate() {
            m.view_mut((0, 2 * n + k), (n, 1)).copy_from(&(jt.column(k) * *w));
            m.view_mut((n, 2 * n + k), (n, 1)).copy_from(&(jqt.column(k) * *w));
        }
        for c in 0..n {
            m[(2 * n, n + c)] = 2.0 * q[c];
        }
        Ok(m)
    }

    pub fn wnorm(&self, v: &DVector<f64>) -> f64 {
        v.component_mul(&self.w).dot(v).sqrt()
    }

    pub fn wdist(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.wnorm(&(a - b))
    }

    /// Newton on `G(u) = 0` plus the hyperplane `<W (u - anchor), normal> = offset`.
    pub fn solve_with_hyperplane(
        &self,
        start: &DVector<f64>,
        anchor: &DVector<f64>,
        normal: &DVector<f64>,
        offset: f64,
        max_iter: usize,
    ) -> Result<(DVector<f64>, usize)> {
        let m = 2 * self.n + 1;
        let wn = normal.component_mul(&self.w);
        let sol = newton_solve(
            |u: &DVector<f64>| {
                let r = self.residual(u)?;
                let mut out = DVector::zeros(m + 1);
                out.rows_mut(0, m).copy_from(&r);
                out[m] = (u - anchor).dot(&wn) - offset;
                Ok(out)
            },
            |u: &DVector<f64>| {
                let a = self.jacobian(u)?;
                let mut out = DMatrix::zeros(m + 1, m + 1);
                out.view_mut((0, 0), (m, m + 1)).copy_from(&a);
                out.set_row(m, &wn.transpose());
                Ok(out)
            },
            start,
            NewtonOptions::with_tol(self.settings.newton_tol, max_iter),
        )?;
        Ok((sol.x, sol.iterations))
    }

    /// Newton with the scaled parameter `k` held at `value`.
    pub fn solve_fixed(&self, guess: &DVector<f64>, k: usize, value: f64) -> Result<DVector<f64>> {
        let n = self.n;
        let col = 2 * n + k;
        let mut start = guess.clone();
        start[col] = value;
        let keep: Vec<usize> = (0..2 * n + 2).filter(|&c| c != col).collect();
        let embed = |z: &DVector<f64>| {
            let mut u = DVector::zeros(2 * n + 2);
            for (i, &c) in keep.iter().enumerate() {
                u[c] = z[i];
            }
            u[col] = value;
            u
        };
        let z0 = DVector::from_iterator(keep.len(), keep.iter().map(|&c| start[c]));
        let sol = newton_solve(
            |z: &DVector<f64>| self.residual(&embed(z)),
            |z: &DVector<f64>| {
                let a = self.jacobian(&embed(z))?;
                Ok(a.select_columns(&keep))
            },
            &z0,
            newton_options(self.settings),
        )?;
        Ok(embed(&sol.x))
    }

    /// Unit (weighted) kernel vector of `DG`, from the SVD of the zero-padded
    /// square matrix.
    pub fn kernel_tangent(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let m = 2 * self.n + 1;
        let a = self.jacobian(u)?;
        let mut sq = DMatrix::zeros(m + 1, m + 1);
        sq.view_mut((0, 0), (m, m + 1)).copy_from(&a);
        let svd = sq.svd(false, true);
        let vt = svd.v_t.ok_or(Error::NoConvergence)?;
        let k = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .ok_or(Error::NoConvergence)?;
        let t = vt.row(k).transpose();
        let norm = self.wnorm(&t);
        if norm < 1e-12 {
            return Err(Error::SeedDegenerate("tangent has no state or parameter component".into()));
        }
        Ok(t / norm)
    }

    /// Corrected points strictly between `a` and `b` (dense output).
    fn interior(&self, a: &DVector<f64>, b: &DVector<f64>) -> Vec<DVector<f64>> {
        let k = self.settings.dense_output.max(1);
        let d = b - a;
        let dn = self.wnorm(&d);
        if dn == 0.0 {
            return Vec::new();
        }
        let normal = &d / dn;
        (1..k)
            .filter_map(|j| {
                let g = a + &d * (j as f64 / k as f64);
                self.solve_with_hyperplane(&g, &g, &normal, 0.0, CORRECTOR_ITER).ok().map(|(u, _)| u)
            })
            .collect()
    }

    fn outside(&self, u: &DVector<f64>) -> bool {
        let tol = self.settings.edge_tol;
        self.unit_theta(u).iter().any(|&t| t < -tol || t > 1.0 + tol)
    }
}

enum LegEnd {
    Edge(Edge),
    Closed,
}

struct Leg {
    points: Vec<DVector<f64>>,
    end: LegEnd,
}

fn edge_for(k: usize, value: f64) -> Edge {
    match (k, value > 0.5) {
        (0, false) => Edge::Left,
        (0, true) => Edge::Right,
        (_, false) => Edge::Bottom,
        (_, true) => Edge::Top,
    }
}

fn run_leg(sys: &FoldSystem<'_>, u0: &DVector<f64>, t0: &DVector<f64>) -> Result<Leg> {
    let st = sys.settings;
    let n = sys.n;
    let mut pts: Vec<DVector<f64>> = vec![u0.clone()];
    let mut cur = u0.clone();
    let mut dir = t0.clone();
    let mut h = st.h_init.min(st.h_max);
    let mut travelled = 0.0;
    let mut main_steps = 0usize;
    for _ in 0..st.max_steps {
        let attempt = sys.solve_with_hyperplane(&(&cur + &dir * h), &cur, &dir, h, CORRECTOR_ITER).and_then(|(u, it)| {
            let sec = &u - &cur;
            let len = sys.wnorm(&sec);
            let cos = sec.component_mul(&sys.w).dot(&dir) / len.max(f64::MIN_POSITIVE);
            let q_old = cur.rows(n, n);
            let q_new = u.rows(n, n);
            if sys.wdist(&u, &(&cur + &dir * h)) > 0.5 * h || cos < 0.8 || q_old.dot(&q_new) <= 0.0 {
                return Err(Error::StepCollapse { step: h });
            }
            Ok((u, it))
        });
        let (u, iters) = match attempt {
            Ok(v) => v,
            Err(_) => {
                h *= 0.5;
                if h < st.h_min {
                    let (_, _, theta) = sys.unpack(&cur);
                    debug!("fold continuation stalled near {theta:?}");
                    return Err(Error::StepCollapse { step: h });
                }
                continue;
            }
        };
        if sys.outside(&u) {
            let tc = sys.unit_theta(&cur);
            let tu = sys.unit_theta(&u);
            let mut best: Option<(f64, usize, f64)> = None;
            for k in 0..2 {
                for bound in [0.0, 1.0] {
                    let crosses = (tu[k] - bound) * (tc[k] - bound) < 0.0 || (tc[k] == bound && tu[k] != bound);
                    let beyond = if bound == 0.0 { tu[k] < -st.edge_tol } else { tu[k] > 1.0 + st.edge_tol };
                    if crosses && beyond {
                        let f = (bound - tc[k]) / (tu[k] - tc[k]);
                        if best.is_none_or(|(bf, _, _)| f < bf) {
                            best = Some((f, k, bound));
                        }
                    }
                }
            }
            let (f, k, bound) = best.ok_or(Error::StepCollapse { step: h })?;
            let guess = &cur + (&u - &cur) * f;
            let exit = sys.solve_fixed(&guess, k, bound)?;
            if sys.wdist(&exit, &cur) > 1e-9 {
                pts.extend(sys.interior(&cur, &exit));
                pts.push(exit);
            } else {
                let last = pts.len() - 1;
                pts[last] = exit;
            }
            return Ok(Leg { points: pts, end: LegEnd::Edge(edge_for(k, bound)) });
        }
        travelled += sys.wdist(&u, &cur);
        main_steps += 1;
        if main_steps >= 10
            && travelled > 4.0 * st.h_max
            && segment_distance(u0, &cur, &u, &sys.w) < st.closure_tol
        {
            pts.extend(sys.interior(&cur, u0));
            pts.push(u0.clone());
            return Ok(Leg { points: pts, end: LegEnd::Closed });
        }
        pts.extend(sys.interior(&cur, &u));
        pts.push(u.clone());
        let sec = &u - &cur;
        dir = &sec / sys.wnorm(&sec);
        cur = u;
        if iters <= 3 {
            h = (h * 1.5).min(st.h_max);
        }
    }
    Err(Error::StepCollapse { step: h })
}

/// Continues the fold curve through `seed` to the box boundary in both
/// directions, or until it closes. Codimension-2 markers are attached.
pub fn continue_fold_curve(family: &FamilySpec, seed: &FoldPoint, settings: &Settings) -> Result<FoldCurveRecord> {
    let sys = FoldSystem::new(family, settings);
    let x = seed.state();
    let q = seed.q().normalize();
    let res = fold_residual(family, &x, &q, seed.theta)?;
    if res.norm() > 1e-8 {
        return Err(Error::SeedDegenerate(format!("fold residual {:.3e} at seed", res.norm())));
    }
    let j = family.jacobian_x(&x, seed.theta)?;
    let gate = settings.null_gate * norm_inf(&j).max(1.0);
    if seed.kernel_moduli.len() > 1 && seed.kernel_moduli[1] < gate {
        return Err(Error::SeedDegenerate("seed is next to a double-zero eigenvalue".into()));
    }
    let u0 = sys.pack(&x, &q, seed.theta);
    let t0 = sys.kernel_tangent(&u0)?;
    let fwd = run_leg(&sys, &u0, &t0)?;
    let (us, closed, endpoints) = match fwd.end {
        LegEnd::Closed => (fwd.points, true, None),
        LegEnd::Edge(e_fwd) => {
            let bwd = run_leg(&sys, &u0, &(-&t0))?;
            let e_bwd = match bwd.end {
                LegEnd::Edge(e) => e,
                LegEnd::Closed => e_fwd,
            };
            let mut us: Vec<DVector<f64>> = bwd.points.into_iter().rev().collect();
            us.extend(fwd.points.into_iter().skip(1));
            (us, false, Some([e_bwd, e_fwd]))
        }
    };
    let mut record = build_record(&sys, &us, closed, endpoints)?;
    attach_codim2(family, &mut record, settings)?;
    Ok(record)
}

pub(crate) fn build_record(
    sys: &FoldSystem<'_>,
    us: &[DVector<f64>],
    closed: bool,
    endpoints: Option<[Edge; 2]>,
) -> Result<FoldCurveRecord> {
    let mut points: Vec<FoldPoint> = Vec::with_capacity(us.len());
    let mut arclength = 0.0;
    let mut q_prev: Option<DVector<f64>> = None;
    for (i, u) in us.iter().enumerate() {
        if i > 0 {
            arclength += sys.wdist(u, &us[i - 1]);
        }
        let (x, q, theta) = sys.unpack(u);
        let q = align(q.normalize(), q_prev.as_ref());
        let p_ref = points.last().map(|p| p.p_hat());
        let fp = FoldPoint::evaluate(sys.family, &x, theta, Some(&q), p_ref.as_ref(), sys.settings)?;
        q_prev = Some(q);
        points.push(fp);
    }
    Ok(FoldCurveRecord { id: 0, points, closed, endpoints, arclength, codim2_points: Vec::new() })
}

/// Pulls `(x, theta)` onto the fold manifold by minimum-norm Gauss-Newton.
pub fn refine_fold_point(family: &FamilySpec, x: &DVector<f64>, theta: Theta, settings: &Settings) -> Result<FoldPoint> {
    let sys = FoldSystem::new(family, settings);
    let j = family.jacobian_x(x, theta)?;
    let (q0, _) = null_vectors(&j, None, None);
    let u0 = sys.pack(x, &q0, theta);
    let sol = gauss_newton_min_norm(
        |u: &DVector<f64>| sys.residual(u),
        |u: &DVector<f64>| sys.jacobian(u),
        &u0,
        NewtonOptions::with_tol(settings.newton_tol, 30),
    )?;
    let (x, q, theta) = sys.unpack(&sol.x);
    FoldPoint::evaluate(family, &x, theta, Some(&q.normalize()), None, settings)
}

fn node_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Parameter grid nodes, row by row from the lower-left corner.
pub fn grid_nodes(bounds: &ParamBox, g: usize) -> Vec<Theta> {
    let g = g.max(2);
    let mut out = Vec::with_capacity(g * g);
    for j in 0..g {
        for i in 0..g {
            out.push(bounds.from_unit([i as f64 / (g - 1) as f64, j as f64 / (g - 1) as f64]));
        }
    }
    out
}

/// Fold candidates from one grid node, in deterministic order.
fn node_candidates(family: &FamilySpec, theta: Theta, index: usize, settings: &Settings) -> Vec<FoldPoint> {
    let mut rng = node_rng(settings.seed, index);
    let roots = find_equilibria(family, theta, &[], settings.restarts, &mut rng, settings);
    let mut out = Vec::new();
    for x in roots {
        let Ok(j) = family.jacobian_x(&x, theta) else { continue };
        let Ok(spec) = spectrum(&j) else { continue };
        if spec.min_modulus() >= settings.seed_gate {
            continue;
        }
        match refine_fold_point(family, &x, theta, settings) {
            Ok(fp) if family.bounds.contains(fp.theta, 1e-9) => out.push(fp),
            Ok(_) => {}
            Err(e) => debug!("fold refinement from node {index} failed: {e}"),
        }
    }
    out
}

/// Symmetric Hausdorff distance between two curves in the weighted
/// `(x, theta~)` metric, measured against polyline segments.
pub fn curve_hausdorff(family: &FamilySpec, a: &FoldCurveRecord, b: &FoldCurveRecord, settings: &Settings) -> f64 {
    let sys = FoldSystem::new(family, settings);
    let pack = |c: &FoldCurveRecord| -> Vec<DVector<f64>> {
        c.points.iter().map(|p| sys.pack(&p.state(), &DVector::zeros(family.dim), p.theta)).collect()
    };
    let (pa, pb) = (pack(a), pack(b));
    let one_sided = |from: &[DVector<f64>], to: &[DVector<f64>]| -> f64 {
        from.iter().map(|p| distance_to_polyline(p, to, &sys.w)).fold(0.0, f64::max)
    };
    one_sided(&pa, &pb).max(one_sided(&pb, &pa))
}

pub(crate) fn distance_to_polyline(p: &DVector<f64>, line: &[DVector<f64>], w: &DVector<f64>) -> f64 {
    if line.len() == 1 {
        let r = p - &line[0];
        return r.component_mul(w).dot(&r).sqrt();
    }
    line.windows(2).map(|s| segment_distance(p, &s[0], &s[1], w)).fold(f64::INFINITY, f64::min)
}

/// Discovers every fold curve reachable from a `G x G` grid of multi-start
/// equilibria. Curves are numbered in discovery order.
pub fn enumerate_fold_curves(family: &FamilySpec, settings: &Settings) -> Vec<FoldCurveRecord> {
    let nodes = grid_nodes(&family.bounds, settings.grid);
    let candidates: Vec<Vec<FoldPoint>> = nodes
        .par_iter()
        .enumerate()
        .map(|(i, &theta)| node_candidates(family, theta, i, settings))
        .collect();
    let sys = FoldSystem::new(family, settings);
    let mut curves: Vec<FoldCurveRecord> = Vec::new();
    let mut packed: Vec<Vec<DVector<f64>>> = Vec::new();
    let zero = DVector::zeros(family.dim);
    for (node, cands) in candidates.into_iter().enumerate() {
        for cand in cands {
            let u = sys.pack(&cand.state(), &zero, cand.theta);
            if packed.iter().any(|line| distance_to_polyline(&u, line, &sys.w) < SEED_COVER_GATE) {
                continue;
            }
            match continue_fold_curve(family, &cand, settings) {
                Ok(mut rec) => {
                    if curves.iter().any(|c| curve_hausdorff(family, c, &rec, settings) < settings.dedup_tol) {
                        continue;
                    }
                    rec.id = curves.len();
                    packed.push(rec.points.iter().map(|p| sys.pack(&p.state(), &zero, p.theta)).collect());
                    curves.push(rec);
                }
                Err(e) => warn!("fold curve from grid node {node} at {:?} failed: {e}", cand.theta),
            }
        }
    }
    curves
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::builtin;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn fold_residual_examples() {
        let cusp = builtin("cusp1").unwrap();
        let x = 1.0 / 3f64.sqrt();
        let r = fold_residual(&cusp, &v(&[x]), &v(&[1.0]), [1.0, x * x * x - x]).unwrap();
        assert!(r.norm() < 1e-12);
        assert_eq!(fold_residual(&cusp, &v(&[0.0]), &v(&[1.0]), [0.0, 0.0]).unwrap().norm(), 0.0);
        let bt = builtin("bt2").unwrap();
        assert_eq!(fold_residual(&bt, &v(&[0.0, 0.0]), &v(&[1.0, 0.0]), [0.0, 0.0]).unwrap().norm(), 0.0);
    }

    #[test]
    fn fold_jacobian_matches_finite_differences() {
        let fam = builtin("fh3").unwrap();
        let st = Settings::default();
        let sys = FoldSystem::new(&fam, &st);
        let u = sys.pack(&v(&[0.3, 0.1, -0.2]), &v(&[0.6, 0.0, 0.8]), [0.2, -0.4]);
        let an = sys.jacobian(&u).unwrap();
        let fd = super::super::fd_jacobian(|u| sys.residual(u), &u, 7, 1e-6).unwrap();
        assert!((an - fd).amax() < 1e-6);
    }

    #[test]
    fn cusp1_curve_from_right_edge_fold() {
        let fam = builtin("cusp1").unwrap();
        let st = Settings::default();
        let x = 1.0 / 3f64.sqrt();
        let seed = FoldPoint::evaluate(&fam, &v(&[x]), [1.0, x * x * x - x], None, None, &st).unwrap();
        let rec = continue_fold_curve(&fam, &seed, &st).unwrap();
        assert!(!rec.closed);
        assert_eq!(rec.endpoints, Some([Edge::Right, Edge::Right]));
        let rms = (rec.points.iter().map(|p| {
            let (t1, t2) = (p.theta[0], p.theta[1]);
            // distance along theta2 to the exact branch with the same sign
            let exact = 2.0 * (t1.max(0.0) / 3.0).powf(1.5) * t2.signum();
            (t2 - exact).powi(2)
        }).sum::<f64>() / rec.points.len() as f64).sqrt();
        assert!(rms < 1e-6, "rms {rms}");
        assert_eq!(rec.cusp_count(), 1);
        for w in rec.points.windows(2) {
            assert!(w[0].q().dot(&w[1].q()) > 0.9);
        }
    }

    #[test]
    fn enumeration_finds_nothing_without_folds() {
        let fam = builtin("cusp1").unwrap();
        let b = ParamBox::new([-1.0, -1.0], [-0.5, 1.0], Edge::Right).unwrap();
        let fam = fam.with_bounds(b);
        let st = Settings { grid: 12, ..Settings::default() };
        assert!(enumerate_fold_curves(&fam, &st).is_empty());
    }
}
