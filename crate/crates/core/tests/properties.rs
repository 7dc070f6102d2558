use std::sync::Arc;

use cuspscan::detect::fold_coefficient_a;
use cuspscan::family::{builtin, parse_family};
use cuspscan::numerics::{null_pair, solve_linear, spectrum, NullPair};
use cuspscan::{FamilyKind, FamilySpec, Settings};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const ANALYTIC: [&str; 6] = ["cusp1", "quintic3", "bt2", "fh3", "dualcusp1", "dwell_grad"];

fn probe(fam: &FamilySpec, xs: &[f64], t: (f64, f64)) -> (DVector<f64>, [f64; 2]) {
    let r = fam.state_radius;
    let x = DVector::from_iterator(fam.dim, xs.iter().take(fam.dim).map(|v| v * r));
    let theta = fam.bounds.from_unit([t.0, t.1]);
    (x, theta)
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

fn unit(v: &[f64]) -> DVector<f64> {
    let d = DVector::from_column_slice(v);
    if d.norm() < 1e-3 {
        DVector::from_element(v.len(), 1.0).normalize()
    } else {
        d.normalize()
    }
}

fn potential_family_2d() -> FamilySpec {
    parse_family(
        "dim = 2\npotential = x1^4/4 + x2^4/4 + x1^2*x2^2/2 - t1*x1*x2 - t2*x1 + x2^2/2\nlo = -1, -1\nhi = 1, 1\n",
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn finite_difference_jacobians_match_analytic(
        xs in prop::collection::vec(-1.0f64..1.0, 3),
        t in (0.0f64..1.0, 0.0f64..1.0),
    ) {
        for name in ANALYTIC {
            let fam = builtin(name).unwrap();
            prop_assert!(fam.has_analytic_jacobian());
            let (x, theta) = probe(&fam, &xs, t);
            let exact = fam.jacobian_x(&x, theta).unwrap();
            let fd = fam.fd_jacobian_x(&x, theta).unwrap();
            prop_assert!(rel_err(&fd, &exact) < 1e-6, "{name}: {}", rel_err(&fd, &exact));
            let free = fam.clone().without_analytic_derivatives();
            let jt = fam.jacobian_theta(&x, theta).unwrap();
            let jt_fd = free.jacobian_theta(&x, theta).unwrap();
            prop_assert!(rel_err(&jt_fd, &jt) < 1e-6, "{name}: {}", rel_err(&jt_fd, &jt));
        }
    }

    #[test]
    fn multilinear_derivatives_are_symmetric(
        xs in prop::collection::vec(-1.0f64..1.0, 3),
        t in (0.0f64..1.0, 0.0f64..1.0),
        u in prop::collection::vec(-1.0f64..1.0, 9),
    ) {
        for name in ["bt2", "fh3", "quintic3"] {
            let fam = builtin(name).unwrap();
            let n = fam.dim;
            let (x, theta) = probe(&fam, &xs, t);
            let (q1, q2, q3) = (unit(&u[0..n]), unit(&u[3..3 + n]), unit(&u[6..6 + n]));
            let d = fam.derivatives(&x, theta).unwrap();
            let b12 = d.b(&q1, &q2).unwrap();
            let b21 = d.b(&q2, &q1).unwrap();
            prop_assert!((&b12 - &b21).norm() < 1e-5, "{name}: B {}", (&b12 - &b21).norm());
            let c = d.c(&q1, &q2, &q3).unwrap();
            for perm in [d.c(&q2, &q1, &q3), d.c(&q3, &q2, &q1), d.c(&q1, &q3, &q2)] {
                let e = (&c - perm.unwrap()).norm();
                prop_assert!(e < 1e-5, "{name}: C {e}");
            }
        }
    }

    #[test]
    fn gradient_jacobians_are_symmetric(
        xs in prop::collection::vec(-1.0f64..1.0, 3),
        t in (0.0f64..1.0, 0.0f64..1.0),
    ) {
        for fam in [builtin("dwell_grad").unwrap(), potential_family_2d()] {
            prop_assert_eq!(fam.kind(), FamilyKind::Gradient);
            let (x, theta) = probe(&fam, &xs, t);
            let j = fam.jacobian_x(&x, theta).unwrap();
            let asym = (&j - j.transpose()).amax() / j.amax().max(1.0);
            prop_assert!(asym < 1e-6, "{asym}");
        }
    }

}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn symmetric_spectra_are_real(entries in prop::collection::vec(-5.0f64..5.0, 16)) {
        let m = DMatrix::from_row_slice(4, 4, &entries);
        let s = &m + m.transpose();
        let spec = spectrum(&s).unwrap();
        prop_assert!(spec.eigenvalues.iter().all(|l| l.im.abs() < 1e-9));
    }

    #[test]
    fn solves_reproduce_the_right_hand_side(
        entries in prop::collection::vec(-1.0f64..1.0, 25),
        rhs in prop::collection::vec(-10.0f64..10.0, 5),
    ) {
        // diagonally dominant, so well conditioned
        let mut a = DMatrix::from_row_slice(5, 5, &entries);
        for i in 0..5 {
            a[(i, i)] += if a[(i, i)] >= 0.0 { 6.0 } else { -6.0 };
        }
        let b = DVector::from_column_slice(&rhs);
        let x = solve_linear(&a, &b).unwrap();
        prop_assert!((&a * &x - &b).norm() <= 1e-12 * (1.0 + b.norm()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fold_coefficient_sign_survives_q_flip_and_rescaling(s in 0.15f64..0.55, neg in any::<bool>(), c in 0.1f64..10.0) {
        // fold of cusp1 at x = s: theta = (3 s^2, -2 s^3), and with <p,q> = 1, a = -3 s q
        let x0 = if neg { -s } else { s };
        let settings = Settings::default();
        let base = builtin("cusp1").unwrap();
        let theta = [3.0 * x0 * x0, -2.0 * x0.powi(3)];
        let x = DVector::from_element(1, x0);
        let np = null_pair(&base.jacobian_x(&x, theta).unwrap(), settings.null_gate, settings.bt_gate).unwrap();
        let a = fold_coefficient_a(&base, &x, theta, &np).unwrap();
        prop_assert!((a + 3.0 * x0 * np.q[0]).abs() < 1e-6, "a = {a}");

        // B is quadratic: flipping q alone leaves a unchanged
        let flipped = NullPair { q: np.q.iter().map(|v| -v).collect(), ..np.clone() };
        let a_flip = fold_coefficient_a(&base, &x, theta, &flipped).unwrap();
        prop_assert!((a_flip - a).abs() < 1e-9);

        // renormalizing <p,q> = 1 after the flip flips a, and sign(a) q stays put
        let renorm = NullPair { q: flipped.q.clone(), p: np.p.iter().map(|v| -v).collect(), bt_flag: false };
        let a_renorm = fold_coefficient_a(&base, &x, theta, &renorm).unwrap();
        prop_assert!((a_renorm + a).abs() < 1e-9);
        prop_assert_eq!(a_renorm.signum() * renorm.q[0], a.signum() * np.q[0]);

        // positive constant rescaling of the field scales a by c
        let inner = base.clone();
        let scaled = FamilySpec::new("scaled", 1, base.bounds, Arc::new(move |x: &DVector<f64>, t| {
            inner.eval_rhs(x, t).unwrap() * c
        }));
        let nps = null_pair(&scaled.jacobian_x(&x, theta).unwrap(), settings.null_gate, settings.bt_gate).unwrap();
        let a_scaled = fold_coefficient_a(&scaled, &x, theta, &nps).unwrap() * nps.q[0].signum() * np.q[0].signum();
        prop_assert_eq!(a_scaled.signum(), a.signum());
        prop_assert!((a_scaled - c * a).abs() < 1e-4 * c.max(1.0));
    }
}
