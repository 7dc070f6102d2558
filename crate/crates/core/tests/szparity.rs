use cuspscan::continuation::{enumerate_fold_curves, BranchPoint, FoldPoint};
use cuspscan::detect::{Codim2Kind, StabilityClass};
use cuspscan::family::{builtin, parse_family};
use cuspscan::szparity::{
    boundary_scan, count_cusps, fold_switches, opposed_evidence, opposed_folds, saddle_component_membership,
    theorem_verdict, traversal_switch_count, OpposedMethod, Parity, SaddleCloud,
};
use cuspscan::{Edge, Error, ParamBox, Settings, SzViolation};
use nalgebra::DVector;

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn cusp1_boundary_is_a_valid_opposed_sz_edge() {
    let fam = builtin("cusp1").unwrap();
    let st = Settings::default();
    let sz = boundary_scan(&fam, &st).unwrap();
    // theta2 = x^3 - x at theta1 = 1, x = -+1/sqrt(3)
    let x = 1.0 / 3f64.sqrt();
    let expect = [-(x - x.powi(3)), x - x.powi(3)];
    for (fold, e) in sz.folds.iter().zip(expect) {
        assert!((fold.theta[0] - 1.0).abs() < 1e-12);
        assert!((fold.theta[1] - e).abs() < 1e-8, "{:?}", fold.theta);
    }
    assert!(sz.opposed);
    assert_eq!(sz.opposed_method, OpposedMethod::FlowOrientation);
    assert!(sz.other_edges_clean);
    let classes: Vec<StabilityClass> = sz.components.iter().map(|c| c.class).collect();
    assert_eq!(classes, [StabilityClass::Attractor, StabilityClass::Saddle(1), StabilityClass::Attractor]);
    assert!(sz.saddle_arc.iter().all(|p| p.class == StabilityClass::Saddle(1)));
    assert!(opposed_folds(&sz, &fam, &st).unwrap());
}

#[test]
fn quintic3_boundary_folds_match_closed_form() {
    let fam = builtin("quintic3").unwrap();
    let sz = boundary_scan(&fam, &Settings::default()).unwrap();
    // F_x = 1 + 6x^2 - 5x^4 = 0 at theta1 = 1
    let x = bisect(|x| 1.0 + 6.0 * x * x - 5.0 * x.powi(4), 1.0, 1.5);
    let t2 = x.powi(5) - 2.0 * x.powi(3) - x;
    assert!((t2.abs() - 2.182).abs() < 1e-3);
    assert!((sz.folds[0].theta[1] + t2.abs()).abs() < 1e-8);
    assert!((sz.folds[1].theta[1] - t2.abs()).abs() < 1e-8);
    assert!(sz.opposed);
}

#[test]
fn box_cutting_the_fold_set_reports_extra_folds() {
    // the left edge theta1 = 0.2 crosses both fold branches
    let fam = builtin("cusp1").unwrap().with_bounds(ParamBox::new([0.2, -1.0], [1.0, 1.0], Edge::Right).unwrap());
    match boundary_scan(&fam, &Settings::default()) {
        Err(Error::SzViolation(SzViolation::ExtraFolds { edge, count })) => {
            assert_eq!(edge, Edge::Left);
            assert_eq!(count, 2);
        }
        other => panic!("expected extra folds, got {other:?}"),
    }
}

#[test]
fn dual_cusp_has_saddle_outer_arcs() {
    let err = boundary_scan(&builtin("dualcusp1").unwrap(), &Settings::default()).unwrap_err();
    assert!(matches!(err, Error::SzViolation(SzViolation::OuterArcNotAttractor { .. })), "{err:?}");
}

#[test]
fn two_parabolas_give_folds_of_equal_orientation() {
    let fam = parse_family(
        "name = parabolas\ndim = 1\nrhs1 = (t2 - x1^2) * (t2 - (x1 - 3)^2 + 0.5)\nlo = -1, -1\nhi = 1, 1\n",
    )
    .unwrap();
    let st = Settings::default();
    let f1 = FoldPoint::evaluate(&fam, &DVector::from_element(1, 0.0), [0.0, 0.0], None, None, &st).unwrap();
    let f2 = FoldPoint::evaluate(&fam, &DVector::from_element(1, 3.0), [0.0, -0.5], None, None, &st).unwrap();
    // repellers: x in (0, 1.5) on the first parabola, x > 3 on the second
    let mut arc = Vec::new();
    for i in 1..=10 {
        let x = 0.1 * i as f64;
        arc.push(BranchPoint::new(&fam, &DVector::from_element(1, x), [0.0, x * x], &st).unwrap());
    }
    for i in 1..=10 {
        let x = 3.0 + 0.1 * i as f64;
        arc.push(BranchPoint::new(&fam, &DVector::from_element(1, x), [0.0, (x - 3.0).powi(2) - 0.5], &st).unwrap());
    }
    assert!(arc.iter().all(|p| p.class == StabilityClass::Saddle(1)));
    let ev = opposed_evidence(&fam, &arc, [&f1, &f2], &st).unwrap();
    assert_eq!(ev.flow_agrees[0], ev.flow_agrees[1]);
    assert!(!ev.flow_opposed);
    assert!(ev.slope_opposed.is_none());
}

#[test]
fn gradient_family_methods_agree() {
    let fam = builtin("dwell_grad").unwrap();
    let sz = boundary_scan(&fam, &Settings::default()).unwrap();
    assert_eq!(sz.opposed_method, OpposedMethod::PotentialSlope);
    assert_eq!(sz.evidence.slope_opposed, Some(true));
    assert!(sz.evidence.flow_opposed);
}

#[test]
fn bt2_curve_has_one_bt_point_and_no_switch() {
    let fam = builtin("bt2").unwrap();
    let st = Settings::default();
    let curves = enumerate_fold_curves(&fam, &st);
    let refs: Vec<_> = curves.iter().collect();
    let counts = count_cusps(&refs);
    assert_eq!(counts.total, 0);
    assert_eq!(counts.bt.len(), 1);
    let bt = &counts.bt[0];
    assert!(bt.theta[0].abs() < 1e-6 && bt.theta[1].abs() < 1e-6, "{:?}", bt.theta);
    let carrier = curves.iter().find(|c| c.codim2_points.iter().any(|m| m.kind == Codim2Kind::BogdanovTakens)).unwrap();
    assert!(fold_switches(carrier, &st).unwrap().is_empty());
}

#[test]
fn traversal_counts_one_switch_per_cusp() {
    let st = Settings::default();
    for (name, cusps) in [("cusp1", 1), ("quintic3", 3)] {
        let fam = builtin(name).unwrap();
        let sz = boundary_scan(&fam, &st).unwrap();
        let curves = enumerate_fold_curves(&fam, &st);
        let main = curves
            .iter()
            .find(|c| traversal_switch_count(&fam, c, &sz, &st).is_ok())
            .expect("main curve");
        let t = traversal_switch_count(&fam, main, &sz, &st).unwrap();
        assert_eq!(t.switch_count, cusps, "{name}");
        assert_eq!(t.switch_positions.len(), cusps);
        // opposed folds close the loop with one more discontinuity
        assert!(t.closing_discontinuity, "{name}");
        assert_eq!((t.switch_count + usize::from(t.closing_discontinuity)) % 2, 0);
    }
}

#[test]
fn verdicts_of_the_builtins() {
    let st = Settings::default();
    for (name, total) in [("cusp1", 1), ("quintic3", 3), ("dwell_grad", 1)] {
        let run = theorem_verdict(&builtin(name).unwrap(), &st).unwrap();
        let v = &run.verdict;
        assert!(!v.fh_found, "{name}");
        assert_eq!(v.cusp_count_total, total, "{name}");
        assert_eq!(v.parity, Parity::Odd);
        assert_eq!(v.cross_check, Some(true));
        assert!(v.theorem_satisfied);
        assert_eq!(v.resolution.membership_grid, st.membership_grid);
    }
}

#[test]
fn fh3_verdict_takes_the_fold_hopf_branch() {
    let run = theorem_verdict(&builtin("fh3").unwrap(), &Settings::default()).unwrap();
    let v = &run.verdict;
    assert!(v.fh_found);
    assert!(v.theorem_satisfied);
    assert_eq!(v.cross_check, None);
    assert_eq!(v.fh_locations.len(), 2);
    // fold curve (3x^2, -2x^3) meets the circle of radius 0.2 about (0.75, -0.25)
    let g = |x: f64| (3.0 * x * x - 0.75).powi(2) + (-2.0 * x.powi(3) + 0.25).powi(2) - 0.04;
    for (lo, hi) in [(0.3, 0.5), (0.5, 0.7)] {
        let x = bisect(g, lo, hi);
        let theta = [3.0 * x * x, -2.0 * x.powi(3)];
        let d = v
            .fh_locations
            .iter()
            .map(|t| ((t[0] - theta[0]).powi(2) + (t[1] - theta[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(d < 1e-6, "{theta:?} vs {:?}", v.fh_locations);
    }
}

#[test]
fn two_parabolas_fail_the_sz_hypothesis() {
    // the two folds sit on separate equilibrium branches over the right edge
    let fam = parse_family(
        "dim = 1\nrhs1 = (t2 - x1^2) * (t2 - (x1 - 3)^2 + 0.5)\nlo = -1, -1\nhi = 1, 1\n",
    )
    .unwrap();
    let err = theorem_verdict(&fam, &Settings::default()).unwrap_err();
    assert!(matches!(err, Error::SzViolation(_)), "{err:?}");
}

fn island_family() -> cuspscan::FamilySpec {
    parse_family(
        "name = island\ndim = 2\n\
         rhs1 = t2 + t1*x1 - x1^3\n\
         rhs2 = -x2 * ((x2 - 3)^2 - (0.04 - (t1 + 0.5)^2 - (t2 - 0.5)^2))\n\
         lo = -1, -1\nhi = 1, 1\nstate_radius = 4\n",
    )
    .unwrap()
}

#[test]
fn fold_circle_around_an_island_is_not_a_member() {
    let fam = island_family();
    let st = Settings::default();
    let sz = boundary_scan(&fam, &st).unwrap();
    let curves = enumerate_fold_curves(&fam, &st);
    let circle = curves.iter().find(|c| c.closed).expect("fold circle");
    let main = curves.iter().find(|c| !c.closed).expect("main curve");
    let cloud = SaddleCloud::build(&fam, &st);
    assert!(cloud.component_count() >= 2);
    let ev = cloud.membership(&fam, circle, &st).unwrap();
    assert!(!ev.member);
    let ev = saddle_component_membership(&fam, main, &sz, &st).unwrap();
    assert!(ev.member);
    for w in &ev.witness {
        let p = BranchPoint::new(&fam, &DVector::from_column_slice(&w.x), w.theta, &st).unwrap();
        assert_eq!(p.class, StabilityClass::Saddle(1));
    }
    let run = theorem_verdict(&fam, &st).unwrap();
    assert_eq!(run.verdict.cusp_count_total, 1);
    assert!(run.verdict.theorem_satisfied);
}

#[test]
fn positive_rescaling_keeps_folds_and_cusps() {
    let st = Settings::default();
    let plain = theorem_verdict(&builtin("cusp1").unwrap(), &st).unwrap();
    let scaled = parse_family(
        "dim = 1\nrhs1 = (2 + x1^2 + 0.5*t1) * (t2 + t1*x1 - x1^3)\nlo = -1, -1\nhi = 1, 1\n",
    )
    .unwrap();
    let run = theorem_verdict(&scaled, &st).unwrap();
    for k in 0..2 {
        let (a, b) = (plain.sz.folds[k].theta, run.sz.folds[k].theta);
        assert!((a[0] - b[0]).abs() < 1e-8 && (a[1] - b[1]).abs() < 1e-8);
    }
    assert_eq!(run.verdict.cusp_count_total, plain.verdict.cusp_count_total);
}
