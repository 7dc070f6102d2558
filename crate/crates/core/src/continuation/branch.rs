//! Equilibrium branches over a parameter polyline.
//!
//! The branch is followed by pseudo-arclength continuation in `(x, s)`, where
//! `s` is box-scaled arclength along the path. Folds show up as sign changes of
//! the `s`-component of the tangent and are refined on the path-restricted fold
//! system `(F, J q, |q|^2 - 1) = 0` in `(x, q, s)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fold::FoldPoint;
use super::{fd_jacobian, newton_options, segment_distance, solve_equilibrium, BranchPoint};
use crate::error::{Error, Result};
use crate::family::{FamilySpec, ParamBox, Theta};
use crate::numerics::{newton_solve, null_vectors, solve_linear, NewtonOptions};
use crate::settings::Settings;

/// Consecutive step failures tolerated before a branch counts as lost.
const MAX_HALVINGS: usize = 4;
const CORRECTOR_ITER: usize = 10;

/// Piecewise-linear parameter path, parametrized by box-scaled arclength.
#[derive(Debug, Clone)]
pub struct ParamPath {
    vertices: Vec<Theta>,
    cum: Vec<f64>,
}

impl ParamPath {
    pub fn new(vertices: &[Theta], bounds: &ParamBox) -> Self {
        let mut vs: Vec<Theta> = Vec::with_capacity(vertices.len());
        let mut cum = Vec::with_capacity(vertices.len());
        for &v in vertices {
            match vs.last() {
                None => {
                    vs.push(v);
                    cum.push(0.0);
                }
                Some(&last) => {
                    let d = bounds.scaled_dist(last, v);
                    if d > 0.0 {
                        cum.push(cum.last().copied().unwrap_or(0.0) + d);
                        vs.push(v);
                    }
                }
            }
        }
        Self { vertices: vs, cum }
    }

    pub fn length(&self) -> f64 {
        self.cum.last().copied().unwrap_or(0.0)
    }

    pub fn start(&self) -> Theta {
        self.vertices[0]
    }

    fn segment(&self, s: f64) -> usize {
        if self.vertices.len() < 2 {
            return 0;
        }
        match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.vertices.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.vertices.len() - 2),
        }
    }

    /// Point at arclength `s`; linear extrapolation beyond the ends.
    pub fn theta(&self, s: f64) -> Theta {
        if self.vertices.len() < 2 {
            return self.vertices[0];
        }
        let i = self.segment(s);
        let (a, b) = (self.vertices[i], self.vertices[i + 1]);
        let t = (s - self.cum[i]) / (self.cum[i + 1] - self.cum[i]);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Arclengths of the interior vertices.
    fn corners(&self) -> &[f64] {
        if self.cum.len() > 2 {
            &self.cum[1..self.cum.len() - 1]
        } else {
            &[]
        }
    }

    /// `d theta / d s` on the segment containing `s`.
    pub fn dtheta(&self, s: f64) -> Theta {
        if self.vertices.len() < 2 {
            return [0.0, 0.0];
        }
        let i = self.segment(s);
        let (a, b) = (self.vertices[i], self.vertices[i + 1]);
        let l = self.cum[i + 1] - self.cum[i];
        [(b[0] - a[0]) / l, (b[1] - a[1]) / l]
    }
}

/// A fold on a branch, refined on the path-restricted fold system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFold {
    /// Path arclength of the fold.
    pub s: f64,
    /// The fold lies between branch samples `at` and `at + 1`.
    pub at: usize,
    pub point: FoldPoint,
}

/// A complex pair crossing the imaginary axis between two samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfEvent {
    pub s: f64,
    pub at: usize,
    pub theta: Theta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchTrace {
    pub points: Vec<BranchPoint>,
    /// Path arclength of each sample.
    pub s: Vec<f64>,
    pub folds: Vec<BranchFold>,
    pub hopf_events: Vec<HopfEvent>,
    /// True for an isola that returned to its start inside the path.
    pub closed: bool,
}

impl BranchTrace {
    /// The same branch traversed in the opposite direction.
    pub fn reversed(mut self) -> Self {
        let m = self.points.len();
        self.points.reverse();
        self.s.reverse();
        for f in &mut self.folds {
            f.at = m - 2 - f.at;
        }
        self.folds.reverse();
        for h in &mut self.hopf_events {
            h.at = m - 2 - h.at;
        }
        self.hopf_events.reverse();
        self
    }
}

struct Sample {
    y: DVector<f64>,
    tangent: DVector<f64>,
}

struct Tracer<'a> {
    family: &'a FamilySpec,
    path: &'a ParamPath,
    settings: &'a Settings,
    w: DVector<f64>,
    n: usize,
}

impl Tracer<'_> {
    fn residual(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let x = y.rows(0, self.n).into_owned();
        self.family.eval_rhs(&x, self.path.theta(y[self.n]))
    }

    fn dh(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.n;
        let x = y.rows(0, n).into_owned();
        let s = y[n];
        let theta = self.path.theta(s);
        let dt = self.path.dtheta(s);
        let j = self.family.jacobian_x(&x, theta)?;
        let jt = self.family.jacobian_theta(&x, theta)?;
        let mut m = DMatrix::zeros(n, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&j);
        m.set_column(n, &(jt.column(0) * dt[0] + jt.column(1) * dt[1]));
        Ok(m)
    }

    fn wnorm(&self, v: &DVector<f64>) -> f64 {
        v.component_mul(&self.w).dot(v).sqrt()
    }

    fn tangent(&self, y: &DVector<f64>, prev: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n;
        let mut a = DMatrix::zeros(n + 1, n + 1);
        a.view_mut((0, 0), (n, n + 1)).copy_from(&self.dh(y)?);
        a.set_row(n, &prev.component_mul(&self.w).transpose());
        let mut e = DVector::zeros(n + 1);
        e[n] = 1.0;
        let t = solve_linear(&a, &e)?;
        Ok(&t / self.wnorm(&t))
    }

    /// Kernel of `DH` oriented so that `s` moves in direction `dir`.
    fn initial_tangent(&self, y: &DVector<f64>, dir: f64) -> Result<DVector<f64>> {
        let n = self.n;
        let mut a = DMatrix::zeros(n + 1, n + 1);
        a.view_mut((0, 0), (n, n + 1)).copy_from(&self.dh(y)?);
        let svd = a.svd(false, true);
        let vt = svd.v_t.ok_or(Error::NoConvergence)?;
        let k = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(n);
        let mut t = vt.row(k).transpose();
        t /= self.wnorm(&t);
        if t[n] * dir < 0.0 {
            t = -t;
        }
        Ok(t)
    }

    fn correct(&self, base: &DVector<f64>, tangent: &DVector<f64>, h: f64) -> Result<(DVector<f64>, usize)> {
        let n = self.n;
        let pred = base + tangent * h;
        let wt = tangent.component_mul(&self.w);
        let sol = newton_solve(
            |y: &DVector<f64>| {
                let r = self.residual(y)?;
                let mut out = DVector::zeros(n + 1);
                out.rows_mut(0, n).copy_from(&r);
                out[n] = (y - base).dot(&wt) - h;
                Ok(out)
            },
            |y: &DVector<f64>| {
                let mut a = DMatrix::zeros(n + 1, n + 1);
                a.view_mut((0, 0), (n, n + 1)).copy_from(&self.dh(y)?);
                a.set_row(n, &wt.transpose());
                Ok(a)
            },
            &pred,
            NewtonOptions::with_tol(self.settings.newton_tol, CORRECTOR_ITER),
        )?;
        Ok((sol.x, sol.iterations))
    }

    fn solve_at(&self, s: f64, x0: &DVector<f64>) -> Result<DVector<f64>> {
        let x = solve_equilibrium(self.family, self.path.theta(s), x0, self.settings)?;
        let mut y = DVector::zeros(self.n + 1);
        y.rows_mut(0, self.n).copy_from(&x);
        y[self.n] = s;
        Ok(y)
    }

    /// Follows the branch from `y0` until it leaves `[0, L]`, returns to `y0`,
    /// or fails. Returns the samples and whether the branch closed.
    fn run(&self, y0: &DVector<f64>, dir: f64) -> Result<(Vec<Sample>, bool)> {
        let n = self.n;
        let len = self.path.length();
        let st = self.settings;
        let t0 = self.initial_tangent(y0, dir)?;
        let mut samples = vec![Sample { y: y0.clone(), tangent: t0 }];
        let mut h = st.h_init;
        let mut travelled = 0.0;
        let mut failures = 0;
        for _ in 0..st.max_steps {
            let cur = samples.last().expect("non-empty");
            let theta_here = self.path.theta(cur.y[n]);
            let reach = cur.tangent[n] * h;
            let ahead = self
                .path
                .corners()
                .iter()
                .copied()
                .filter(|&c| (c - cur.y[n]) * reach > 0.0 && (c - cur.y[n]).abs() < reach.abs())
                .min_by(|a, b| (a - cur.y[n]).abs().total_cmp(&(b - cur.y[n]).abs()));
            if let (Some(c), true) = (ahead, cur.tangent[n].abs() > 0.1) {
                let frac = (c - cur.y[n]) / reach;
                let guess = &cur.y + &cur.tangent * (h * frac);
                if let Ok(at) = self.solve_at(c, &guess.rows(0, n).into_owned()) {
                    let mut probe = at.clone();
                    probe[n] = c + reach.signum() * 1e-12;
                    let tangent = self.initial_tangent(&probe, reach.signum())?;
                    travelled += self.wnorm(&(&at - &cur.y));
                    samples.push(Sample { y: at, tangent });
                    continue;
                }
            }
            let attempt = self.correct(&cur.y, &cur.tangent, h).and_then(|(y, it)| {
                let jump = self.wnorm(&(&y - (&cur.y + &cur.tangent * h)));
                if jump > 0.5 * h {
                    return Err(Error::BranchLost { theta: theta_here });
                }
                let t = self.tangent(&y, &cur.tangent)?;
                if t.component_mul(&self.w).dot(&cur.tangent) < 0.5 {
                    return Err(Error::BranchLost { theta: theta_here });
                }
                Ok((y, t, it))
            });
            let (y, t, iters) = match attempt {
                Ok(v) => v,
                Err(_) => {
                    failures += 1;
                    if failures > MAX_HALVINGS || h * 0.5 < st.h_min {
                        return Err(Error::BranchLost { theta: theta_here });
                    }
                    h *= 0.5;
                    continue;
                }
            };
            failures = 0;
            let x = y.rows(0, n).into_owned();
            if x.norm() > st.state_cap {
                return Err(Error::BoundaryExit { theta: self.path.theta(y[n]) });
            }
            let prev = cur.y.clone();
            travelled += self.wnorm(&(&y - &prev));
            if y[n] < 0.0 || y[n] > len {
                let bound = if y[n] < 0.0 { 0.0 } else { len };
                let frac = (bound - prev[n]) / (y[n] - prev[n]);
                let guess = &prev + (&y - &prev) * frac;
                let end = self.solve_at(bound, &guess.rows(0, n).into_owned())?;
                let tangent = self.tangent(&end, &t).unwrap_or(t);
                samples.push(Sample { y: end, tangent });
                return Ok((samples, false));
            }
            let motion = y[n] - prev[n];
            let corner = self
                .path
                .corners()
                .iter()
                .copied()
                .filter(|&c| (c - prev[n]) * motion > 0.0 && (y[n] - c) * motion > 0.0)
                .min_by(|a, b| ((a - prev[n]).abs()).total_cmp(&(b - prev[n]).abs()));
            if let Some(c) = corner {
                let frac = (c - prev[n]) / motion;
                let guess = &prev + (&y - &prev) * frac;
                let at = self.solve_at(c, &guess.rows(0, n).into_owned())?;
                let mut probe = at.clone();
                probe[n] = c + motion.signum() * 1e-12;
                let tangent = self.initial_tangent(&probe, motion.signum())?;
                samples.push(Sample { y: at, tangent });
                continue;
            }
            if samples.len() >= 10
                && travelled > 4.0 * st.h_max
                && segment_distance(y0, &prev, &y, &self.w) < 0.25 * h
            {
                let tangent = samples[0].tangent.clone();
                samples.push(Sample { y: y0.clone(), tangent });
                return Ok((samples, true));
            }
            samples.push(Sample { y, tangent: t });
            if iters <= 3 {
                h = (h * 1.5).min(st.h_max);
            }
        }
        Err(Error::BranchLost { theta: self.path.theta(samples.last().expect("non-empty").y[n]) })
    }

    fn refine_fold(&self, a: &Sample, b: &Sample) -> Result<(f64, DVector<f64>, DVector<f64>)> {
        let n = self.n;
        let mid = (&a.y + &b.y) * 0.5;
        let x0 = mid.rows(0, n).into_owned();
        let j = self.family.jacobian_x(&x0, self.path.theta(mid[n]))?;
        let (q0, _) = null_vectors(&j, None, None);
        let mut z0 = DVector::zeros(2 * n + 1);
        z0.rows_mut(0, n).copy_from(&x0);
        z0.rows_mut(n, n).copy_from(&q0);
        z0[2 * n] = mid[n];
        let residual = |z: &DVector<f64>| -> Result<DVector<f64>> {
            let x = z.rows(0, n).into_owned();
            let q = z.rows(n, n).into_owned();
            let theta = self.path.theta(z[2 * n]);
            let mut out = DVector::zeros(2 * n + 1);
            out.rows_mut(0, n).copy_from(&self.family.eval_rhs(&x, theta)?);
            out.rows_mut(n, n).copy_from(&(self.family.jacobian_x(&x, theta)? * &q));
            out[2 * n] = q.norm_squared() - 1.0;
            Ok(out)
        };
        let sol = newton_solve(
            residual,
            |z: &DVector<f64>| fd_jacobian(residual, z, 2 * n + 1, 1e-7),
            &z0,
            newton_options(self.settings),
        )?;
        let z = sol.x;
        Ok((z[2 * n], z.rows(0, n).into_owned(), z.rows(n, n).into_owned()))
    }
}

fn assemble(tracer: &Tracer<'_>, samples: Vec<Sample>, closed: bool) -> Result<BranchTrace> {
    let n = tracer.n;
    let st = tracer.settings;
    let mut points = Vec::with_capacity(samples.len());
    let mut s = Vec::with_capacity(samples.len());
    for smp in &samples {
        let x = smp.y.rows(0, n).into_owned();
        let theta = tracer.path.theta(smp.y[n]);
        points.push(BranchPoint::new(tracer.family, &x, theta, st)?);
        s.push(smp.y[n]);
    }
    let mut folds = Vec::new();
    let mut hopf_events = Vec::new();
    for k in 0..samples.len().saturating_sub(1) {
        let (a, b) = (&samples[k], &samples[k + 1]);
        if a.tangent[n] * b.tangent[n] < 0.0 {
            let theta_a = tracer.path.theta(a.y[n]);
            let theta_b = tracer.path.theta(b.y[n]);
            let fail = || Error::RefinementFailed { kind: "fold".into(), from: theta_a, to: theta_b };
            let (sf, x, q) = tracer.refine_fold(a, b).map_err(|_| fail())?;
            let lo = a.y[n].min(b.y[n]) - st.h_max;
            let hi = a.y[n].max(b.y[n]) + st.h_max;
            if !(lo..=hi).contains(&sf) {
                return Err(fail());
            }
            let theta = tracer.path.theta(sf);
            let point = FoldPoint::evaluate(tracer.family, &x, theta, Some(&q), None, st)?;
            let min_mod = point.kernel_moduli.first().copied().unwrap_or(0.0);
            if min_mod >= st.fold_gate {
                return Err(fail());
            }
            folds.push(BranchFold { s: sf, at: k, point });
        }
        let ra = points[k].spectrum.hopf_pair_re(st.hopf_gate);
        let rb = points[k + 1].spectrum.hopf_pair_re(st.hopf_gate);
        if let (Some(ra), Some(rb)) = (ra, rb) {
            if ra * rb < 0.0 || (ra == 0.0) != (rb == 0.0) {
                let f = if ra == rb { 0.0 } else { ra / (ra - rb) };
                let sh = s[k] + f * (s[k + 1] - s[k]);
                hopf_events.push(HopfEvent { s: sh, at: k, theta: tracer.path.theta(sh) });
            }
        }
    }
    Ok(BranchTrace { points, s, folds, hopf_events, closed })
}

/// Traces the whole branch through `(s0, x0)`, in both path directions.
pub fn trace_branch(
    family: &FamilySpec,
    path: &ParamPath,
    s0: f64,
    x0: &DVector<f64>,
    settings: &Settings,
) -> Result<BranchTrace> {
    let n = family.dim;
    let tracer = Tracer { family, path, settings, w: weights(n, settings), n };
    let y0 = tracer.solve_at(s0, x0)?;
    let (fwd, closed) = tracer.run(&y0, 1.0)?;
    if closed {
        return assemble(&tracer, fwd, true);
    }
    let (bwd, _) = tracer.run(&y0, -1.0)?;
    let mut samples: Vec<Sample> = bwd
        .into_iter()
        .skip(1)
        .rev()
        .map(|s| Sample { tangent: -s.tangent, y: s.y })
        .collect();
    samples.extend(fwd);
    assemble(&tracer, samples, false)
}

fn weights(n: usize, settings: &Settings) -> DVector<f64> {
    let mut w = DVector::from_element(n + 1, 1.0 / (settings.state_scale * settings.state_scale));
    w[n] = 1.0;
    w
}

/// Continues the equilibrium branch seeded at the start of `path` in the
/// direction of increasing path arclength.
pub fn continue_equilibria_along_path(
    family: &FamilySpec,
    path: &[Theta],
    seed: &DVector<f64>,
    settings: &Settings,
) -> Result<BranchTrace> {
    let path = ParamPath::new(path, &family.bounds);
    let n = family.dim;
    let tracer = Tracer { family, path: &path, settings, w: weights(n, settings), n };
    if path.length() == 0.0 {
        let y = tracer.solve_at(0.0, seed)?;
        let theta = path.start();
        let x = y.rows(0, n).into_owned();
        return Ok(BranchTrace {
            points: vec![BranchPoint::new(family, &x, theta, settings)?],
            s: vec![0.0],
            folds: Vec::new(),
            hopf_events: Vec::new(),
            closed: false,
        });
    }
    let y0 = tracer.solve_at(0.0, seed)?;
    let (samples, closed) = tracer.run(&y0, 1.0)?;
    assemble(&tracer, samples, closed)
}
