use cuspscan::continuation::fold::curve_hausdorff;
use cuspscan::continuation::{enumerate_fold_curves, find_equilibria, FoldCurveRecord};
use cuspscan::detect::{centre_tangent, classify_equilibrium, StabilityClass};
use cuspscan::family::{builtin, parse_family};
use cuspscan::numerics::spectrum;
use cuspscan::{FamilySpec, Settings};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ALL: [&str; 6] = ["cusp1", "quintic3", "bt2", "fh3", "dualcusp1", "dwell_grad"];

fn curves(name: &str) -> (FamilySpec, Vec<FoldCurveRecord>) {
    let fam = builtin(name).unwrap();
    let c = enumerate_fold_curves(&fam, &Settings::default());
    (fam, c)
}

fn sign_changes(v: impl Iterator<Item = f64>) -> usize {
    let s: Vec<f64> = v.filter(|x| *x != 0.0).map(f64::signum).collect();
    s.windows(2).filter(|w| w[0] != w[1]).count()
}

#[test]
fn every_fold_point_meets_its_residual_bounds() {
    for name in ALL {
        let (fam, cs) = curves(name);
        assert!(!cs.is_empty(), "{name}");
        for c in &cs {
            for p in &c.points {
                let x = p.state();
                let f = fam.eval_rhs(&x, p.theta).unwrap().norm();
                let j = fam.jacobian_x(&x, p.theta).unwrap();
                let jq = (&j * p.q()).norm();
                assert!(f <= 1e-8, "{name}: |X| = {f:e} at {:?}", p.theta);
                assert!(jq <= 1e-8 * j.norm().max(1.0), "{name}: |Jq| = {jq:e} at {:?}", p.theta);
                assert!((p.q().norm() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn null_directions_vary_continuously() {
    let st = Settings::default();
    for name in ALL {
        let (_, cs) = curves(name);
        for c in &cs {
            let worst = c.points.windows(2).map(|w| w[0].q().dot(&w[1].q())).fold(1.0, f64::min);
            assert!(worst > st.transport_gate, "{name} curve {}: {worst}", c.id);
        }
    }
}

#[test]
fn fold_coefficient_is_away_from_zero_off_markers() {
    let st = Settings::default();
    for name in ["cusp1", "quintic3", "dualcusp1"] {
        let (_, cs) = curves(name);
        for p in cs.iter().flat_map(|c| &c.points).filter(|p| p.codim2.is_none()) {
            let a = p.a_coeff.expect("scalar folds are far from Bogdanov-Takens points");
            assert!(a.abs() > st.cusp_gate, "{name}: a = {a:e} at {:?}", p.theta);
        }
    }
}

#[test]
fn cusp1_curve_changes_cusp_test_sign_once() {
    let (_, cs) = curves("cusp1");
    assert_eq!(cs.len(), 1);
    assert_eq!(sign_changes(cs[0].points.iter().map(|p| p.psi.cusp)), 1);
    assert_eq!(cs[0].orientation_switches(), 1);
}

#[test]
fn bt2_curve_changes_bt_test_once_and_cusp_test_never() {
    let (_, cs) = curves("bt2");
    assert_eq!(cs.len(), 1);
    let pts = &cs[0].points;
    assert_eq!(sign_changes(pts.iter().map(|p| p.psi.bt)), 1);
    assert_eq!(sign_changes(pts.iter().map(|p| p.psi.cusp)), 0);
}

#[test]
fn cusp1_sheets_inside_the_cusp_region() {
    let fam = builtin("cusp1").unwrap();
    let st = Settings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let theta = [0.5, 0.0];
    let mut roots = find_equilibria(&fam, theta, &[], 20, &mut rng, &st);
    roots.sort_by(|a, b| a[0].total_cmp(&b[0]));
    assert_eq!(roots.len(), 3);
    let classes: Vec<StabilityClass> = roots
        .iter()
        .map(|x| classify_equilibrium(&spectrum(&fam.jacobian_x(x, theta).unwrap()).unwrap(), st.hyp_gate))
        .collect();
    assert_eq!(classes, [StabilityClass::Attractor, StabilityClass::Saddle(1), StabilityClass::Attractor]);
}

#[test]
fn centre_tangent_is_smooth_along_the_cusp1_curve() {
    let (fam, cs) = curves("cusp1");
    let st = Settings::default();
    let mut prev: Option<DVector<f64>> = None;
    for p in &cs[0].points {
        let t = centre_tangent(&fam, &p.state(), p.theta, prev.as_ref(), &st).unwrap();
        let q = t.q_vec();
        if let Some(r) = &prev {
            assert!(q.dot(r) > 0.9);
        }
        prev = Some(q);
    }
}

#[test]
fn closed_curves_return_to_their_start() {
    let fam = parse_family(
        "dim = 2\n\
         rhs1 = t2 + t1*x1 - x1^3\n\
         rhs2 = -x2 * ((x2 - 3)^2 - (0.04 - (t1 + 0.5)^2 - (t2 - 0.5)^2))\n\
         lo = -1, -1\nhi = 1, 1\nstate_radius = 4\n",
    )
    .unwrap();
    let st = Settings::default();
    let cs = enumerate_fold_curves(&fam, &st);
    let circle = cs.iter().find(|c| c.closed).expect("fold circle");
    let (a, b) = (&circle.points[0], circle.points.last().unwrap());
    let dx = (a.state() - b.state()).norm() / st.state_scale;
    let dt = fam.bounds.scaled_dist(a.theta, b.theta);
    assert!((dx * dx + dt * dt).sqrt() < st.closure_tol);
    // the circle of radius 0.2 about (-0.5, 0.5)
    for p in &circle.points {
        let r = ((p.theta[0] + 0.5).powi(2) + (p.theta[1] - 0.5).powi(2)).sqrt();
        assert!((r - 0.2).abs() < 1e-8, "{r}");
    }
}

#[test]
fn doubling_the_grid_finds_the_same_curves() {
    for name in ["cusp1", "quintic3", "fh3"] {
        let fam = builtin(name).unwrap();
        let st = Settings::default();
        let fine = Settings { grid: 2 * st.grid, ..st.clone() };
        let a = enumerate_fold_curves(&fam, &st);
        let b = enumerate_fold_curves(&fam, &fine);
        assert_eq!(a.len(), b.len(), "{name}");
        for c in &a {
            let best = b.iter().map(|d| curve_hausdorff(&fam, c, d, &st)).fold(f64::INFINITY, f64::min);
            assert!(best < st.dedup_tol, "{name}: {best}");
        }
    }
}
