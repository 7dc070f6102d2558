//! Continuation of equilibria and fold points.
//!
//! - [`branch`]: equilibrium branches over a parameter polyline, with fold and
//!   Hopf events.
//! - [`fold`]: fold curves of the catastrophe manifold in the full parameter
//!   plane, plus multi-start discovery of every curve in the box.
//! - [`lift`]: lifts of parameter curves to the catastrophe manifold and the
//!   approximating curves near a cusp.

pub mod branch;
pub mod fold;
pub mod lift;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detect::{classify_equilibrium, StabilityClass};
use crate::error::Result;
use crate::family::{FamilySpec, Theta};
use crate::numerics::{deflated_newton, newton_solve, spectrum, NewtonOptions, Spectrum};
use crate::settings::Settings;

pub use branch::{continue_equilibria_along_path, trace_branch, BranchFold, BranchTrace, HopfEvent, ParamPath};
pub use fold::{
    continue_fold_curve, enumerate_fold_curves, fold_residual, refine_fold_point, FoldCurveRecord,
    FoldPoint, TestValues,
};
pub use lift::{approximating_curve, lift_curve, LiftedCurve};

/// An equilibrium sample with its linear stability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub x: Vec<f64>,
    pub theta: Theta,
    pub spectrum: Spectrum,
    /// Number of eigenvalues with positive real part.
    pub index: usize,
    pub class: StabilityClass,
}

impl BranchPoint {
    pub fn new(family: &FamilySpec, x: &DVector<f64>, theta: Theta, settings: &Settings) -> Result<Self> {
        let spec = spectrum(&family.jacobian_x(x, theta)?)?;
        let class = classify_equilibrium(&spec, settings.hyp_gate);
        Ok(Self {
            x: x.as_slice().to_vec(),
            theta,
            index: spec.count_re_above(settings.hyp_gate),
            spectrum: spec,
            class,
        })
    }

    pub fn state(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }
}

pub(crate) fn newton_options(settings: &Settings) -> NewtonOptions {
    NewtonOptions::with_tol(settings.newton_tol, settings.newton_max_iter)
}

/// Newton-polishes an equilibrium at fixed parameters.
pub fn solve_equilibrium(
    family: &FamilySpec,
    theta: Theta,
    x0: &DVector<f64>,
    settings: &Settings,
) -> Result<DVector<f64>> {
    let sol = newton_solve(
        |x: &DVector<f64>| family.eval_rhs(x, theta),
        |x: &DVector<f64>| family.jacobian_x(x, theta),
        x0,
        newton_options(settings),
    )?;
    Ok(sol.x)
}

/// Multi-start Newton with deflation of the roots already found.
///
/// `hints` are tried first, then `starts` uniform random states from the cube
/// of half-width `family.state_radius`. Roots beyond `settings.state_cap` are
/// dropped. The result is sorted lexicographically.
pub fn find_equilibria<R: Rng>(
    family: &FamilySpec,
    theta: Theta,
    hints: &[DVector<f64>],
    starts: usize,
    rng: &mut R,
    settings: &Settings,
) -> Vec<DVector<f64>> {
    let n = family.dim;
    let r = family.state_radius;
    let mut roots: Vec<DVector<f64>> = Vec::new();
    let randoms: Vec<DVector<f64>> =
        (0..starts).map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-r..=r))).collect();
    for x0 in hints.iter().chain(randoms.iter()) {
        let sol = deflated_newton(
            |x: &DVector<f64>| family.eval_rhs(x, theta),
            |x: &DVector<f64>| family.jacobian_x(x, theta),
            x0,
            &roots,
            r,
            newton_options(settings),
        );
        let Ok(sol) = sol else { continue };
        let x = sol.x;
        if x.norm() > settings.state_cap || x.iter().any(|v| !v.is_finite()) {
            continue;
        }
        if roots.iter().any(|y| (y - &x).norm() <= 1e-7 * (1.0 + y.norm())) {
            continue;
        }
        roots.push(x);
    }
    roots.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    roots
}

/// Central-difference Jacobian of a vector residual.
pub(crate) fn fd_jacobian<F>(mut f: F, u: &DVector<f64>, rows: usize, step: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut jac = DMatrix::zeros(rows, u.len());
    let mut up = u.clone();
    for k in 0..u.len() {
        let h = step * (1.0 + u[k].abs());
        up[k] = u[k] + h;
        let fp = f(&up)?;
        up[k] = u[k] - h;
        let fm = f(&up)?;
        up[k] = u[k];
        jac.set_column(k, &((fp - fm) / (2.0 * h)));
    }
    Ok(jac)
}

/// Distance from `p` to the segment `[a, b]` under the diagonal weight `w`.
pub(crate) fn segment_distance(p: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let d = b - a;
    let dd = d.component_mul(w).dot(&d);
    let t = if dd > 0.0 { ((p - a).component_mul(w).dot(&d) / dd).clamp(0.0, 1.0) } else { 0.0 };
    let r = p - (a + d * t);
    r.component_mul(w).dot(&r).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::builtin;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn finds_all_three_cusp_roots() {
        let fam = builtin("cusp1").unwrap();
        let s = Settings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let roots = find_equilibria(&fam, [1.0, 0.1], &[], 8, &mut rng, &s);
        assert_eq!(roots.len(), 3);
        for r in &roots {
            assert!(fam.eval_rhs(r, [1.0, 0.1]).unwrap().norm() < 1e-10);
        }
    }

    #[test]
    fn segment_distance_examples() {
        let w = DVector::from_element(2, 1.0);
        let a = DVector::from_column_slice(&[0.0, 0.0]);
        let b = DVector::from_column_slice(&[1.0, 0.0]);
        let p = DVector::from_column_slice(&[0.5, 0.25]);
        assert!((segment_distance(&p, &a, &b, &w) - 0.25).abs() < 1e-15);
        let p = DVector::from_column_slice(&[2.0, 0.0]);
        assert!((segment_distance(&p, &a, &b, &w) - 1.0).abs() < 1e-15);
    }
}
