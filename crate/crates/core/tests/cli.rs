use std::process::{Command, Output};

fn cuspscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cuspscan")).args(args).output().expect("binary runs")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&out.stderr)))
}

#[test]
fn verdict_on_cusp1_exits_zero_with_one_cusp() {
    let out = cuspscan(&["verdict", "cusp1"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"]["cusp_count_total"], 1);
    assert_eq!(v["verdict"]["theorem_satisfied"], true);
}

#[test]
fn family_file_with_a_typo_exits_two_with_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.fam");
    std::fs::write(&path, "dim = 1\nrhs1 = t2 + t1*x1 - x1^^3\nlo = -1, -1\nhi = 1, 1\n").unwrap();
    let out = cuspscan(&["verdict", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let e = stderr_json(&out);
    assert_eq!(e["error"]["kind"], "parse");
    assert_eq!(e["error"]["line"], 2);
}

#[test]
fn sz_violation_exits_one() {
    let out = cuspscan(&["verdict", "dualcusp1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "sz_violation");
}

#[test]
fn family_file_runs_like_the_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cusp.fam");
    std::fs::write(&path, "name = cusp\ndim = 1\nrhs1 = t2 + t1*x1 - x1^3\nlo = -1, -1\nhi = 1, 1\nsz_edge = right\n")
        .unwrap();
    let report = dir.path().join("cusp.json");
    let out = cuspscan(&["verdict", path.to_str().unwrap(), "--report", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let back = cuspscan::report::import_report(&report).unwrap();
    assert_eq!(back.family.name, "cusp");
    assert_eq!(back.verdict.unwrap().cusp_count_total, 1);
}

#[test]
fn settings_file_and_seed_are_applied() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("s.toml");
    std::fs::write(&good, "grid = 20\nmembership_grid = 30\n").unwrap();
    let report = dir.path().join("r.json");
    let out = cuspscan(&[
        "--settings",
        good.to_str().unwrap(),
        "--seed",
        "99",
        "verdict",
        "cusp1",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let back = cuspscan::report::import_report(&report).unwrap();
    assert_eq!(back.settings.grid, 20);
    assert_eq!(back.settings.seed, 99);
    assert_eq!(back.verdict.unwrap().resolution.membership_grid, 30);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "grid = 20\nno_such_gate = 1\n").unwrap();
    let out = cuspscan(&["--settings", bad.to_str().unwrap(), "verdict", "cusp1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn boundary_and_fold_curves_print_json() {
    let out = cuspscan(&["boundary", "quintic3"]);
    assert_eq!(out.status.code(), Some(0));
    let sz: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(sz["opposed"], true);
    let out = cuspscan(&["fold-curves", "bt2"]);
    assert_eq!(out.status.code(), Some(0));
    let curves: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(curves[0]["codim2"][0]["kind"], "bogdanov_takens");
}

#[test]
fn oracle_on_quintic3_is_within_tolerance() {
    let out = cuspscan(&["oracle", "quintic3"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["diff"]["hausdorff"].as_f64().unwrap() < 1e-4);
    assert_eq!(v["diff"]["oracle_cusps"], 3);
    assert_eq!(v["diff"]["continuation_cusps"], 3);
}

#[test]
fn plot_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
    for p in [&a, &b] {
        let out = cuspscan(&["plot", "cusp1", "--out", p.to_str().unwrap(), "--approximating"]);
        assert_eq!(out.status.code(), Some(0));
    }
    let (sa, sb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(sa, sb);
    assert!(String::from_utf8(sa).unwrap().contains("looping"));
}

#[test]
fn demo_writes_report_and_diagram() {
    let dir = tempfile::tempdir().unwrap();
    let out = cuspscan(&["demo", "fh3", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("fh3.json").exists());
    assert!(dir.path().join("fh3.svg").exists());
    let report = cuspscan::report::import_report(dir.path().join("fh3.json")).unwrap();
    assert!(report.verdict.unwrap().fh_found);
}

#[test]
fn unknown_family_is_a_pipeline_error() {
    let out = cuspscan(&["verdict", "no_such_family"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "unknown_family");
}
