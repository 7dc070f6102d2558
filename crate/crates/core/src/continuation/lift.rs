//! Lifts of parameter curves to the catastrophe manifold, and the
//! approximating curves of a cusp.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{newton_options, solve_equilibrium};
use crate::detect::{classify_equilibrium, Codim2Point, StabilityClass};
use crate::error::{Error, Result};
use crate::family::{FamilySpec, Theta};
use crate::numerics::{newton_solve, spectrum, Lu};
use crate::settings::Settings;

const MAX_SUBDIVISION: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedCurve {
    pub base: Vec<Theta>,
    pub fiber: Vec<Vec<f64>>,
    pub classes: Vec<StabilityClass>,
    /// The base is closed and the fiber returns to its starting state.
    pub simple: bool,
}

impl LiftedCurve {
    pub fn closing_gap(&self) -> f64 {
        match (self.fiber.first(), self.fiber.last()) {
            (Some(a), Some(b)) => a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt(),
            _ => 0.0,
        }
    }
}

struct Lifter<'a> {
    family: &'a FamilySpec,
    settings: &'a Settings,
}

impl Lifter<'_> {
    fn step(&self, x: &DVector<f64>, from: Theta, to: Theta, depth: usize) -> Result<DVector<f64>> {
        let f = self.family;
        let dtheta = DVector::from_column_slice(&[to[0] - from[0], to[1] - from[1]]);
        let scaled = self.family.bounds.scaled_dist(from, to);
        let j = f.jacobian_x(x, from)?;
        let rhs = f.jacobian_theta(x, from)? * &dtheta;
        let dx = Lu::factor(&j).map(|lu| -lu.solve(&rhs)).unwrap_or_else(|_| DVector::zeros(f.dim));
        let pred = x + &dx;
        let attempt = newton_solve(
            |y: &DVector<f64>| f.eval_rhs(y, to),
            |y: &DVector<f64>| f.jacobian_x(y, to),
            &pred,
            newton_options(self.settings),
        );
        let gate = self.settings.jump_gate_factor * (dx.norm() + scaled * self.settings.state_scale);
        match attempt {
            Ok(sol) if (&sol.x - x).norm() <= gate.max(1e-12) => Ok(sol.x),
            _ if depth < MAX_SUBDIVISION => {
                let mid = [0.5 * (from[0] + to[0]), 0.5 * (from[1] + to[1])];
                let xm = self.step(x, from, mid, depth + 1)?;
                self.step(&xm, mid, to, depth + 1)
            }
            _ => Err(Error::BranchLost { theta: to }),
        }
    }
}

/// Tracks the equilibrium through `seed` along the polyline `base`.
///
/// A closed base (first and last vertex equal) sets `simple` when the lifted
/// state returns to its start within `1e-6 (1 + |x|)`.
pub fn lift_curve(family: &FamilySpec, base: &[Theta], seed: &DVector<f64>, settings: &Settings) -> Result<LiftedCurve> {
    let Some(&start) = base.first() else {
        return Ok(LiftedCurve { base: Vec::new(), fiber: Vec::new(), classes: Vec::new(), simple: false });
    };
    let lifter = Lifter { family, settings };
    let mut x = solve_equilibrium(family, start, seed, settings)?;
    let mut fiber = Vec::with_capacity(base.len());
    let mut classes = Vec::with_capacity(base.len());
    for (i, &theta) in base.iter().enumerate() {
        if i > 0 {
            x = lifter.step(&x, base[i - 1], theta, 0)?;
        }
        let spec = spectrum(&family.jacobian_x(&x, theta)?)?;
        if spec.min_modulus() < settings.fold_gate {
            return Err(Error::FoldOnPath { index: i, theta });
        }
        classes.push(classify_equilibrium(&spec, settings.hyp_gate));
        fiber.push(x.as_slice().to_vec());
    }
    let closed = base.len() > 1 && family.bounds.scaled_dist(base[0], base[base.len() - 1]) < 1e-12;
    let mut lifted = LiftedCurve { base: base.to_vec(), fiber, classes, simple: false };
    let x0 = seed_norm(&lifted.fiber[0]);
    lifted.simple = closed && lifted.closing_gap() <= 1e-6 * (1.0 + x0);
    Ok(lifted)
}

fn seed_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Normal-form coordinates of the approximating curve at `s`:
/// `(3 s^2 - phi, -2 s^3 + s phi)`. Along it the equilibrium `x = s` of the
/// cusp normal form has Jacobian `-phi`.
pub fn normal_form_point(s: f64, phi: f64) -> [f64; 2] {
    [3.0 * s * s - phi, -2.0 * s * s * s + s * phi]
}

fn through_frame(cusp: &Codim2Point, eta: [f64; 2]) -> Result<Theta> {
    let frame = cusp.frame.ok_or_else(|| Error::FrameUnavailable("cusp has no parameter frame".into()))?;
    Ok([
        cusp.theta[0] + frame[0][0] * eta[0] + frame[0][1] * eta[1],
        cusp.theta[1] + frame[1][0] * eta[0] + frame[1][1] * eta[1],
    ])
}

/// Approximating curve of a cusp with constant `phi`, for `s` in
/// `[-span, span]`, mapped through the cusp frame. Positive `phi` loops
/// around the cusp, negative `phi` nudges into it. 401 samples.
pub fn approximating_curve(cusp: &Codim2Point, phi: f64, span: f64) -> Result<Vec<Theta>> {
    approximating_curve_sampled(cusp, phi, span, 401)
}

pub fn approximating_curve_sampled(cusp: &Codim2Point, phi: f64, span: f64, samples: usize) -> Result<Vec<Theta>> {
    let m = samples.max(2);
    (0..m)
        .map(|i| {
            let s = -span + 2.0 * span * i as f64 / (m - 1) as f64;
            through_frame(cusp, normal_form_point(s, phi))
        })
        .collect()
}

/// Closed base built from the approximating curve.
///
/// A nudging curve is closed by the straight chord between its ends. A
/// looping curve is closed around the far side of the cusp through the
/// rectangle of half-height `2 |eta_2(span)|` in normal-form coordinates.
/// The result is resampled to `samples` points by arclength.
pub fn closed_approximating_base(cusp: &Codim2Point, phi: f64, span: f64, samples: usize) -> Result<Vec<Theta>> {
    let mut eta: Vec<[f64; 2]> = (0..401)
        .map(|i| normal_form_point(-span + 2.0 * span * i as f64 / 400.0, phi))
        .collect();
    let end = normal_form_point(span, phi);
    let start = normal_form_point(-span, phi);
    if phi > 0.0 {
        let r = 2.0 * end[1].abs();
        let left = -r.max(phi.abs() * 10.0);
        eta.extend([[end[0], r], [left, r], [left, -r], [start[0], -r]]);
    }
    eta.push(start);
    let poly: Vec<Theta> = eta.into_iter().map(|e| through_frame(cusp, e)).collect::<Result<_>>()?;
    Ok(resample(&poly, samples))
}

/// Resamples a polyline to `samples` points evenly spaced in arclength,
/// keeping both ends.
pub fn resample(poly: &[Theta], samples: usize) -> Vec<Theta> {
    if poly.len() < 2 || samples < 2 {
        return poly.to_vec();
    }
    let seg = |a: Theta, b: Theta| ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let mut cum = vec![0.0];
    for w in poly.windows(2) {
        cum.push(cum.last().unwrap() + seg(w[0], w[1]));
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(samples);
    let mut k = 0;
    for i in 0..samples {
        let s = total * i as f64 / (samples - 1) as f64;
        while k + 2 < cum.len() && cum[k + 1] < s {
            k += 1;
        }
        let len = cum[k + 1] - cum[k];
        let t = if len > 0.0 { ((s - cum[k]) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push([poly[k][0] + t * (poly[k + 1][0] - poly[k][0]), poly[k][1] + t * (poly[k + 1][1] - poly[k][1])]);
    }
    out[samples - 1] = poly[poly.len() - 1];
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{builtin, Edge, ParamBox};

    #[test]
    fn constant_path_lifts_to_constant_state() {
        let fam = builtin("cusp1").unwrap();
        let st = Settings::default();
        let base = vec![[-0.5, 0.2]; 5];
        let seed = DVector::from_column_slice(&[0.0]);
        let lift = lift_curve(&fam, &base, &seed, &st).unwrap();
        assert!(lift.fiber.windows(2).all(|w| w[0] == w[1]));
        assert!(lift.simple);
    }

    #[test]
    fn linear_family_lift_follows_theta2() {
        let lin = crate::family::parse_family("dim = 1\nrhs1 = -x1 + t2\nlo = -1, -1\nhi = 1, 1\n").unwrap();
        let base: Vec<Theta> = (0..11).map(|i| [0.0, -1.0 + 0.2 * i as f64]).collect();
        let lift = lift_curve(&lin, &base, &DVector::from_column_slice(&[-1.0]), &Settings::default()).unwrap();
        for (t, x) in base.iter().zip(&lift.fiber) {
            assert!((x[0] - t[1]).abs() < 1e-12);
        }
        assert!(!lift.simple);
    }

    #[test]
    fn crossing_a_fold_is_reported() {
        let fam = builtin("cusp1").unwrap().with_bounds(ParamBox::new([-1.0, -1.0], [1.0, 1.0], Edge::Right).unwrap());
        let base: Vec<Theta> = (0..201).map(|i| [1.0, -1.0 + 0.01 * i as f64]).collect();
        let seed = DVector::from_column_slice(&[-1.3]);
        let err = lift_curve(&fam, &base, &seed, &Settings::default()).unwrap_err();
        assert!(matches!(err, Error::FoldOnPath { .. } | Error::BranchLost { .. }), "{err:?}");
    }

    #[test]
    fn normal_form_curve_carries_equilibrium_with_jacobian_minus_phi() {
        for &phi in &[0.01, -0.01, 0.0] {
            for i in 0..=20 {
                let s = -0.3 + 0.03 * i as f64;
                let [t1, t2] = normal_form_point(s, phi);
                assert!((t2 + t1 * s - s * s * s).abs() < 1e-15);
                assert!(((t1 - 3.0 * s * s) + phi).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn resample_keeps_ends_and_spacing() {
        let poly = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]];
        let r = resample(&poly, 5);
        assert_eq!(r.len(), 5);
        assert_eq!(r[0], [0.0, 0.0]);
        assert_eq!(r[4], [1.0, 1.0]);
        assert!((r[2][0] - 1.0).abs() < 1e-15 && r[2][1].abs() < 1e-15);
    }
}
