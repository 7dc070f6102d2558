use cuspscan::continuation::{FoldCurveRecord, FoldPoint};
use cuspscan::family::builtin;
use cuspscan::report::{
    compare_with_oracle, decimate_curve, export_report, import_report, parameter_linear_oracle, render_svg,
    report_from_str, report_to_string, RunReport, SvgOptions, Timing, REPORT_SCHEMA,
};
use cuspscan::szparity::theorem_verdict;
use cuspscan::{Error, Settings};
use nalgebra::DVector;

fn cusp1_report() -> RunReport {
    let fam = builtin("cusp1").unwrap();
    let st = Settings::default();
    let run = theorem_verdict(&fam, &st).unwrap();
    RunReport::new(&fam, &st, Some(run.sz), &run.curves, Some(run.verdict), Timing::default())
}

/// 10 000 points on the cusp1 fold curve, `x` from -0.5 to 0.5.
fn long_curve(n: usize) -> FoldCurveRecord {
    let fam = builtin("cusp1").unwrap();
    let st = Settings::default();
    let points: Vec<FoldPoint> = (0..n)
        .map(|i| {
            let x = -0.5 + i as f64 / (n - 1) as f64 + 1e-7;
            FoldPoint::evaluate(&fam, &DVector::from_element(1, x), [3.0 * x * x, -2.0 * x.powi(3)], None, None, &st)
                .unwrap()
        })
        .collect();
    FoldCurveRecord { id: 0, points, closed: false, endpoints: None, arclength: 1.0, codim2_points: Vec::new() }
}

#[test]
fn export_then_import_is_lossless() {
    let report = cusp1_report();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cusp1.json");
    export_report(&report, &path).unwrap();
    let back = import_report(&path).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.schema, REPORT_SCHEMA);
    assert_eq!(back.codim2.len(), 1);
}

#[test]
fn future_schema_is_rejected() {
    let text = report_to_string(&cusp1_report()).unwrap().replacen(REPORT_SCHEMA, "cuspscan-report/2", 1);
    match report_from_str(&text) {
        Err(Error::SchemaMismatch { found, expected }) => {
            assert_eq!(found, "cuspscan-report/2");
            assert_eq!(expected, REPORT_SCHEMA);
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(report_from_str("{ not json"), Err(Error::ReportParse(_))));
}

#[test]
fn decimated_curve_survives_a_round_trip() {
    let fam = builtin("cusp1").unwrap();
    let st = Settings::default();
    let curve = long_curve(10_000);
    let report = RunReport::new(&fam, &st, None, std::slice::from_ref(&curve), None, Timing::default());
    assert!(report.curves[0].points.len() <= st.max_curve_points);
    assert_eq!(report.curves[0].points[0], curve.points[0]);
    assert_eq!(report.curves[0].points.last(), curve.points.last());
    let back = report_from_str(&report_to_string(&report).unwrap()).unwrap();
    assert_eq!(back.curves[0].points, report.curves[0].points);
}

#[test]
fn decimation_keeps_markers_and_renumbers_them() {
    let report = cusp1_report();
    let curve = &report.curves[0];
    let thin = decimate_curve(curve, 50);
    assert!(thin.points.len() <= 50);
    for m in &thin.codim2_points {
        let p = &thin.points[m.position];
        assert!(p.codim2.is_some());
        assert_eq!(p.theta, m.theta);
    }
}

#[test]
fn rendering_is_deterministic() {
    let report = cusp1_report();
    let a = render_svg(&report, &SvgOptions::default());
    let b = render_svg(&cusp1_report(), &SvgOptions::default());
    assert_eq!(a, b);
    assert_eq!(a.matches("fill=\"black\"/>").count(), 1, "one standard cusp glyph");
}

#[test]
fn quintic3_diagram_has_three_cusp_glyphs() {
    let fam = builtin("quintic3").unwrap();
    let st = Settings::default();
    let run = theorem_verdict(&fam, &st).unwrap();
    let report = RunReport::new(&fam, &st, Some(run.sz), &run.curves, Some(run.verdict), Timing::default());
    let svg = render_svg(&report, &SvgOptions::default());
    assert_eq!(svg.matches("<path").count(), 3);
    assert_eq!(svg.matches("<polyline").count(), 1);
}

#[test]
fn oracle_matches_continuation_on_parameter_linear_builtins() {
    let st = Settings::default();
    for name in ["cusp1", "quintic3", "dualcusp1", "dwell_grad"] {
        let fam = builtin(name).unwrap();
        let oracle = parameter_linear_oracle(&fam, &st).unwrap();
        let curves = cuspscan::continuation::enumerate_fold_curves(&fam, &st);
        let diff = compare_with_oracle(&fam.bounds, &oracle, &curves);
        assert!(diff.hausdorff < 1e-4, "{name}: {}", diff.hausdorff);
        assert_eq!(diff.oracle_cusps, diff.continuation_cusps, "{name}");
        assert!(diff.max_cusp_offset < 1e-6, "{name}: {}", diff.max_cusp_offset);
    }
}
