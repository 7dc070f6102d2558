//! Dense linear algebra and root finding.
//!
//! Linear solves use a hand-rolled LU with partial pivoting so the singularity
//! gate and the regularized variant used by inverse iteration share one code
//! path. Eigenvalues come from nalgebra's real Schur decomposition.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot size below which a matrix counts as singular.
pub const PIVOT_GATE: f64 = 1e-14;
const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 10_000;
/// Eigenvalues with `|Im| <= REAL_TOL * (1 + |lambda|)` are treated as real.
const REAL_TOL: f64 = 1e-9;

/// Infinity norm (maximum absolute row sum).
pub fn norm_inf(a: &DMatrix<f64>) -> f64 {
    a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `PA = LU` with unit lower `L` packed below the diagonal.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: DMatrix<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Factorizes `a`, failing when a pivot drops below `PIVOT_GATE * ||a||`.
    pub fn factor(a: &DMatrix<f64>) -> Result<Self> {
        let gate = PIVOT_GATE * norm_inf(a);
        Self::factor_inner(a, |pivot| {
            if pivot.abs() <= gate || !pivot.is_finite() {
                Err(Error::SingularMatrix { pivot: pivot.abs() })
            } else {
                Ok(pivot)
            }
        })
    }

    /// Factorizes `a`, replacing tiny pivots by `eps * ||a||` so nearly
    /// singular systems can be used for inverse iteration.
    pub fn factor_regularized(a: &DMatrix<f64>) -> Self {
        let floor = (f64::EPSILON * norm_inf(a)).max(f64::MIN_POSITIVE);
        Self::factor_inner(a, |pivot| {
            Ok(if pivot.abs() < floor { floor.copysign(if pivot == 0.0 { 1.0 } else { pivot }) } else { pivot })
        })
        .expect("regularized factorization cannot fail")
    }

    fn factor_inner(a: &DMatrix<f64>, mut accept: impl FnMut(f64) -> Result<f64>) -> Result<Self> {
        assert!(a.is_square(), "LU needs a square matrix");
        let n = a.nrows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| lu[(i, k)].abs().total_cmp(&lu[(j, k)].abs()))
                .unwrap_or(k);
            if p != k {
                lu.swap_rows(p, k);
                perm.swap(p, k);
            }
            let pivot = accept(lu[(k, k)])?;
            lu[(k, k)] = pivot;
            for i in k + 1..n {
                let m = lu[(i, k)] / pivot;
                lu[(i, k)] = m;
                if m != 0.0 {
                    for j in k + 1..n {
                        lu[(i, j)] -= m * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.perm.len();
        let mut y = DVector::from_fn(n, |i, _| b[self.perm[i]]);
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * y[j];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * y[j];
            }
            y[i] = s / self.lu[(i, i)];
        }
        y
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.perm.len();
        let mut z = b.clone();
        for i in 0..n {
            let mut s = z[i];
            for j in 0..i {
                s -= self.lu[(j, i)] * z[j];
            }
            z[i] = s / self.lu[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for j in i + 1..n {
                s -= self.lu[(j, i)] * z[j];
            }
            z[i] = s;
        }
        let mut x = DVector::zeros(n);
        for i in 0..n {
            x[self.perm[i]] = z[i];
        }
        x
    }
}

pub fn solve_linear(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(Lu::factor(a)?.solve(b))
}

/// Eigenvalues sorted by real part, then imaginary part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    #[serde(with = "complex_pairs")]
    pub eigenvalues: Vec<Complex<f64>>,
    /// `|Re lambda_next| / |Re lambda_min|`, where `lambda_min` is the real
    /// eigenvalue of least `|Re|`. Infinite when that eigenvalue is zero or
    /// the matrix is `1 x 1`; zero when no real eigenvalue exists.
    #[serde(with = "extended_real")]
    pub gap_ratio: f64,
}

/// `f64` with infinities written as the strings `"inf"` and `"-inf"`.
mod extended_real {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            f64::INFINITY => s.serialize_str("inf"),
            f64::NEG_INFINITY => s.serialize_str("-inf"),
            v => s.serialize_f64(v),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(D::Error::custom(format!("expected a number, found `{t}`"))),
        }
    }
}

mod complex_pairs {
    use nalgebra::Complex;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex<f64>], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex<f64>>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| Complex::new(re, im)).collect())
    }
}

pub fn is_real(l: &Complex<f64>) -> bool {
    l.im.abs() <= REAL_TOL * (1.0 + l.norm())
}

impl Spectrum {
    pub fn from_eigenvalues(mut eigenvalues: Vec<Complex<f64>>) -> Self {
        for l in eigenvalues.iter_mut() {
            if is_real(l) {
                l.im = 0.0;
            }
        }
        eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let gap_ratio = gap_ratio(&eigenvalues);
        Self { eigenvalues, gap_ratio }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn min_modulus(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min)
    }

    /// Moduli in increasing order.
    pub fn sorted_moduli(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self.eigenvalues.iter().map(|l| l.norm()).collect();
        m.sort_by(f64::total_cmp);
        m
    }

    pub fn min_abs_re(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn count_re_above(&self, gate: f64) -> usize {
        self.eigenvalues.iter().filter(|l| l.re > gate).count()
    }

    /// Real part of the complex pair (`|Im| > hopf_gate`) closest to the
    /// imaginary axis.
    pub fn hopf_pair_re(&self, hopf_gate: f64) -> Option<f64> {
        self.eigenvalues
            .iter()
            .filter(|l| l.im.abs() > hopf_gate)
            .min_by(|a, b| a.re.abs().total_cmp(&b.re.abs()))
            .map(|l| l.re)
    }

    /// The real eigenvalue of least modulus, if any.
    pub fn smallest_real(&self) -> Option<f64> {
        self.eigenvalues
            .iter()
            .filter(|l| l.im == 0.0)
            .min_by(|a, b| a.re.abs().total_cmp(&b.re.abs()))
            .map(|l| l.re)
    }
}

fn gap_ratio(ev: &[Complex<f64>]) -> f64 {
    let Some((imin, lmin)) = ev
        .iter()
        .enumerate()
        .filter(|(_, l)| l.im == 0.0)
        .min_by(|a, b| a.1.re.abs().total_cmp(&b.1.re.abs()))
    else {
        return 0.0;
    };
    let next = ev
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != imin)
        .map(|(_, l)| l.re.abs())
        .fold(f64::INFINITY, f64::min);
    if lmin.re == 0.0 {
        f64::INFINITY
    } else {
        next / lmin.re.abs()
    }
}

pub fn spectrum(a: &DMatrix<f64>) -> Result<Spectrum> {
    assert!(a.is_square(), "spectrum needs a square matrix");
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence);
    }
    let n = a.nrows();
    if n == 1 {
        return Ok(Spectrum::from_eigenvalues(vec![Complex::new(a[(0, 0)], 0.0)]));
    }
    let schur = nalgebra::Schur::try_new(a.clone(), SCHUR_EPS, SCHUR_MAX_ITER).ok_or(Error::NoConvergence)?;
    Ok(Spectrum::from_eigenvalues(schur.complex_eigenvalues().iter().copied().collect()))
}

/// Right and left null directions of a (nearly) singular matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullPair {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// Set when `|<p,q>|` fell below the gate and `p` was unit-normalized.
    pub bt_flag: bool,
}

impl NullPair {
    pub fn q_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.q)
    }

    pub fn p_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.p)
    }
}

fn start_vector(n: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64).normalize()
}

/// Unit vector `v` with `(A - shift I) v ~ 0`, by inverse iteration.
fn inverse_iteration(a: &DMatrix<f64>, shift: f64, start: &DVector<f64>, transpose: bool) -> DVector<f64> {
    let n = a.nrows();
    let shifted = a - DMatrix::identity(n, n) * shift;
    let lu = Lu::factor_regularized(&shifted);
    let scale = norm_inf(&shifted).max(shift.abs()).max(f64::MIN_POSITIVE);
    let mut v = if start.norm() > 0.0 { start.normalize() } else { start_vector(n) };
    for it in 0..12 {
        let w = if transpose { lu.solve_transpose(&v) } else { lu.solve(&v) };
        let nw = w.norm();
        if !nw.is_finite() || nw == 0.0 {
            break;
        }
        v = w / nw;
        let r = if transpose { shifted.tr_mul(&v) } else { &shifted * &v };
        if it >= 2 && r.norm() <= 1e-13 * scale {
            break;
        }
    }
    v
}

/// Unit right and left null vectors of `a`, signed to agree with the references
/// when given. No gate is applied; see [`null_pair`] for the checked version.
pub fn null_vectors(
    a: &DMatrix<f64>,
    q_ref: Option<&DVector<f64>>,
    p_ref: Option<&DVector<f64>>,
) -> (DVector<f64>, DVector<f64>) {
    let n = a.nrows();
    let q0 = q_ref.cloned().unwrap_or_else(|| start_vector(n));
    let p0 = p_ref.cloned().unwrap_or_else(|| start_vector(n));
    let q = align(inverse_iteration(a, 0.0, &q0, false), q_ref);
    let p = align(inverse_iteration(a, 0.0, &p0, true), p_ref);
    (q, p)
}

/// Flips `v` to agree with `reference`, or to be lexicographically positive.
pub fn align(v: DVector<f64>, reference: Option<&DVector<f64>>) -> DVector<f64> {
    let flip = match reference {
        Some(r) => v.dot(r) < 0.0,
        None => v.iter().find(|c| c.abs() > 1e-12).is_some_and(|c| *c < 0.0),
    };
    if flip {
        -v
    } else {
        v
    }
}

/// Null pair with the kernel-dimension check and `<p,q> = 1` normalization.
pub fn null_pair(a: &DMatrix<f64>, null_gate: f64, bt_gate: f64) -> Result<NullPair> {
    let spec = spectrum(a)?;
    let gate = null_gate * norm_inf(a).max(1.0);
    let count = spec.eigenvalues.iter().filter(|l| l.norm() < gate).count();
    if count >= 2 {
        return Err(Error::AmbiguousKernel { count });
    }
    let (q, p) = null_vectors(a, None, None);
    Ok(normalize_pair(q, p, bt_gate))
}

/// Scales `p` so that `<p,q> = 1`, or flags BT proximity.
pub fn normalize_pair(q: DVector<f64>, p: DVector<f64>, bt_gate: f64) -> NullPair {
    let q = q.normalize();
    let p = p.normalize();
    let pq = p.dot(&q);
    if pq.abs() > bt_gate {
        NullPair { q: q.as_slice().to_vec(), p: (p / pq).as_slice().to_vec(), bt_flag: false }
    } else {
        NullPair { q: q.as_slice().to_vec(), p: p.as_slice().to_vec(), bt_flag: true }
    }
}

/// Unit eigenvector for a real eigenvalue `lambda`.
pub fn real_eigenvector(a: &DMatrix<f64>, lambda: f64, reference: Option<&DVector<f64>>) -> DVector<f64> {
    let start = reference.cloned().unwrap_or_else(|| start_vector(a.nrows()));
    align(inverse_iteration(a, lambda, &start, false), reference)
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50, max_halvings: 20 }
    }
}

impl NewtonOptions {
    pub fn with_tol(tol: f64, max_iter: usize) -> Self {
        Self { tol, max_iter, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonSolution {
    pub x: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn trial_norm<R>(residual: &mut R, x: &DVector<f64>) -> f64
where
    R: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    match residual(x) {
        Ok(r) => {
            let n = r.norm();
            if n.is_finite() {
                n
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Damped iteration `x <- x + lambda dx` with step-halving on residual growth.
fn damped_iteration<R, S>(
    mut residual: R,
    mut step: S,
    x0: &DVector<f64>,
    opts: NewtonOptions,
) -> Result<NewtonSolution>
where
    R: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    S: FnMut(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>>,
{
    let mut x = x0.clone();
    let mut r = residual(&x)?;
    let mut rn = r.norm();
    for it in 0..=opts.max_iter {
        if rn <= opts.tol {
            return Ok(NewtonSolution { x, residual: rn, iterations: it });
        }
        if it == opts.max_iter {
            break;
        }
        let dx = step(&x, &r)?;
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix { pivot: 0.0 });
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial = &x + &dx * lambda;
            let tn = trial_norm(&mut residual, &trial);
            if tn < rn {
                x = trial;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            // Residual stagnates at rounding level: accept a converged state.
            if dx.norm() <= 1e-13 * (1.0 + x.norm()) && rn <= 1e2 * opts.tol {
                return Ok(NewtonSolution { x, residual: rn, iterations: it });
            }
            return Err(Error::MaxIter { iterations: it + 1, residual: rn });
        }
        r = residual(&x)?;
        rn = r.norm();
    }
    Err(Error::MaxIter { iterations: opts.max_iter, residual: rn })
}

/// Damped Newton for square systems.
pub fn newton_solve<R, J>(residual: R, mut jacobian: J, x0: &DVector<f64>, opts: NewtonOptions) -> Result<NewtonSolution>
where
    R: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    J: FnMut(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    damped_iteration(residual, |x, r| Ok(-solve_linear(&jacobian(x)?, r)?), x0, opts)
}

/// Gauss-Newton for underdetermined systems using the minimum-norm step
/// `dx = -A^T (A A^T)^-1 r`.
pub fn gauss_newton_min_norm<R, J>(
    residual: R,
    mut jacobian: J,
    x0: &DVector<f64>,
    opts: NewtonOptions,
) -> Result<NewtonSolution>
where
    R: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    J: FnMut(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    damped_iteration(
        residual,
        |x, r| {
            let a = jacobian(x)?;
            let aat = &a * a.transpose();
            Ok(-(a.transpose() * solve_linear(&aat, r)?))
        },
        x0,
        opts,
    )
}

/// Newton with deflation of known roots: the step of the undeflated system is
/// rescaled by `1 / (1 - grad(log M) . dx)` with `M = prod(1/|x - r|^2 + 1)`.
/// The returned point is polished by plain Newton.
pub fn deflated_newton<R, J>(
    mut residual: R,
    mut jacobian: J,
    x0: &DVector<f64>,
    roots: &[DVector<f64>],
    max_step: f64,
    opts: NewtonOptions,
) -> Result<NewtonSolution>
where
    R: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    J: FnMut(&DVector<f64>) -> Result<DMatrix<f64>>,
{
    let mut x = x0.clone();
    for it in 0..opts.max_iter {
        let r = residual(&x)?;
        if r.norm() <= opts.tol {
            return newton_solve(&mut residual, &mut jacobian, &x, opts)
                .map(|s| NewtonSolution { iterations: s.iterations + it, ..s });
        }
        let mut dx = -solve_linear(&jacobian(&x)?, &r)?;
        let mut glog = DVector::zeros(x.len());
        for root in roots {
            let d = &x - root;
            let d2 = d.norm_squared();
            if d2 == 0.0 {
                return Err(Error::MaxIter { iterations: it, residual: r.norm() });
            }
            glog += &d * (-2.0 / (d2 * d2) / (1.0 / d2 + 1.0));
        }
        let denom = 1.0 - glog.dot(&dx);
        if denom.abs() > 1e-12 {
            dx /= denom;
        }
        let len = dx.norm();
        if !len.is_finite() {
            return Err(Error::SingularMatrix { pivot: 0.0 });
        }
        if len > max_step {
            dx *= max_step / len;
        }
        x += dx;
    }
    let rn = residual(&x).map(|r| r.norm()).unwrap_or(f64::INFINITY);
    Err(Error::MaxIter { iterations: opts.max_iter, residual: rn })
}

/// Simple bisection for a sign change of `f` on `[a, b]`.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Brent's method on a bracketing interval `f(a) f(b) <= 0`.
pub fn brent(mut f: impl FnMut(f64) -> Result<f64>, a: f64, b: f64, tol: f64, max_iter: usize) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if (fa > 0.0) == (fb > 0.0) {
        return Err(Error::MaxIter { iterations: 0, residual: fa.abs().min(fb.abs()) });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
    }
    Ok(b)
}
