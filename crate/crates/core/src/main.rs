use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use cuspscan::continuation::{approximating_curve, enumerate_fold_curves, FoldCurveRecord};
use cuspscan::family::{builtin, load_family_file};
use cuspscan::report::{
    compare_with_oracle, export_report, parameter_linear_oracle, render_svg, Overlay, RunReport, SvgOptions, Timing,
};
use cuspscan::szparity::{boundary_scan, theorem_verdict};
use cuspscan::{Error, FamilySpec, Settings};

/// Exit status for a verdict whose theorem condition is not met.
const EXIT_NOT_SATISFIED: u8 = 4;

#[derive(Parser)]
#[command(name = "cuspscan", version, about = "Fold curves, cusps and cusp parity of two-parameter families")]
struct Cli {
    /// TOML file overriding gates and resolutions.
    #[arg(long, global = true)]
    settings: Option<PathBuf>,
    /// Seed for the multi-start generators.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Checks the S/Z boundary condition and prints the boundary report.
    Boundary { family: String },
    /// Enumerates fold curves and their codimension-2 points.
    FoldCurves {
        family: String,
        /// Write the full report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Runs the whole pipeline; exits 0 exactly when the theorem condition holds.
    Verdict {
        family: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Renders the bifurcation diagram as SVG.
    Plot {
        family: String,
        #[arg(long)]
        out: PathBuf,
        /// Overlay the looping and nudging curves of each cusp.
        #[arg(long)]
        approximating: bool,
    },
    /// Compares continuation with the closed-form fold set of a
    /// parameter-linear scalar family.
    Oracle { family: String },
    /// Runs a built-in family end to end.
    Demo {
        name: String,
        /// Directory for the report and the diagram.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::SzViolation(_) => "sz_violation",
        Error::CrossCheckFailure(_) => "cross_check_failure",
        Error::Parse { .. } => "parse",
        Error::UnknownFamily(_) => "unknown_family",
        Error::InconclusiveMembership { .. } => "inconclusive_membership",
        Error::TransportBroken { .. } => "transport_broken",
        Error::MainCurveMissing => "main_curve_missing",
        Error::NotParameterLinear(_) => "not_parameter_linear",
        Error::SchemaMismatch { .. } => "schema_mismatch",
        Error::ReportParse(_) => "report_parse",
        Error::Io(_) => "io",
        _ => "numerical",
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SzViolation(_) => 1,
        Error::CrossCheckFailure(_) => 3,
        _ => 2,
    }
}

fn fail(e: &Error) -> ExitCode {
    let mut block = json!({ "kind": error_kind(e), "message": e.to_string() });
    if let Error::Parse { line, .. } = e {
        block["line"] = json!(line);
    }
    eprintln!("{}", json!({ "error": block }));
    ExitCode::from(exit_code(e))
}

fn load_family(arg: &str) -> cuspscan::Result<FamilySpec> {
    if Path::new(arg).exists() {
        load_family_file(arg)
    } else {
        builtin(arg)
    }
}

fn load_settings(cli: &Cli) -> cuspscan::Result<Settings> {
    let mut s = match &cli.settings {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            Settings::from_toml(&text)?
        }
        None => Settings::default(),
    };
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn curve_summary(curves: &[FoldCurveRecord]) -> serde_json::Value {
    json!(curves
        .iter()
        .map(|c| json!({
            "id": c.id,
            "points": c.points.len(),
            "closed": c.closed,
            "endpoints": c.endpoints,
            "arclength": c.arclength,
            "orientation_switches": c.orientation_switches(),
            "codim2": c.codim2_points.iter().map(|m| json!({
                "kind": m.kind,
                "theta": m.theta,
                "x": m.x,
                "conflict": m.conflict,
            })).collect::<Vec<_>>(),
        }))
        .collect::<Vec<_>>())
}

/// Full pipeline; when the S/Z stage fails the report still carries the
/// fold curves and the failure reason.
fn pipeline(family: &FamilySpec, settings: &Settings) -> (RunReport, Option<Error>) {
    let start = Instant::now();
    let t = Instant::now();
    let sz = boundary_scan(family, settings);
    let boundary = t.elapsed().as_secs_f64();
    match sz {
        Ok(sz) => {
            let t = Instant::now();
            let run = theorem_verdict(family, settings);
            let verdict_time = t.elapsed().as_secs_f64();
            match run {
                Ok(run) => {
                    let timing = Timing {
                        boundary,
                        fold_curves: 0.0,
                        verdict: verdict_time,
                        total: start.elapsed().as_secs_f64(),
                    };
                    (RunReport::new(family, settings, Some(run.sz), &run.curves, Some(run.verdict), timing), None)
                }
                Err(e) => {
                    let curves = enumerate_fold_curves(family, settings);
                    let timing = Timing {
                        boundary,
                        verdict: verdict_time,
                        total: start.elapsed().as_secs_f64(),
                        ..Timing::default()
                    };
                    (RunReport::new(family, settings, Some(sz), &curves, None, timing).with_failure(e.to_string()), Some(e))
                }
            }
        }
        Err(e) => {
            let t = Instant::now();
            let curves = enumerate_fold_curves(family, settings);
            let timing = Timing {
                boundary,
                fold_curves: t.elapsed().as_secs_f64(),
                verdict: 0.0,
                total: start.elapsed().as_secs_f64(),
            };
            (RunReport::new(family, settings, None, &curves, None, timing).with_failure(e.to_string()), Some(e))
        }
    }
}

fn verdict_exit(report: &RunReport, err: Option<&Error>) -> ExitCode {
    match (err, &report.verdict) {
        (Some(e), _) => fail(e),
        (None, Some(v)) if v.theorem_satisfied => ExitCode::SUCCESS,
        _ => ExitCode::from(EXIT_NOT_SATISFIED),
    }
}

fn verdict_summary(report: &RunReport) -> serde_json::Value {
    json!({
        "family": report.family.name,
        "verdict": report.verdict,
        "failure": report.failure,
        "curves": curve_summary(&report.curves),
        "timing": report.timing,
    })
}

fn plot_options(report: &RunReport, approximating: bool) -> SvgOptions {
    let mut opts = SvgOptions::default();
    if approximating {
        for m in report.codim2.iter().filter(|m| m.kind.is_cusp() && m.frame.is_some()) {
            for (phi, color, label) in [(0.01, "#c0392b", "looping"), (-0.01, "#2471a3", "nudging")] {
                if let Ok(points) = approximating_curve(m, phi, 0.3) {
                    opts.overlays.push(Overlay { points, color: color.into(), label: label.into() });
                }
            }
        }
    }
    opts
}

fn run(cli: &Cli) -> cuspscan::Result<ExitCode> {
    let settings = load_settings(cli)?;
    match &cli.command {
        Command::Boundary { family } => {
            let fam = load_family(family)?;
            let sz = boundary_scan(&fam, &settings)?;
            print_json(&sz);
            Ok(ExitCode::SUCCESS)
        }
        Command::FoldCurves { family, report } => {
            let fam = load_family(family)?;
            let t = Instant::now();
            let curves = enumerate_fold_curves(&fam, &settings);
            let elapsed = t.elapsed().as_secs_f64();
            print_json(&curve_summary(&curves));
            if let Some(path) = report {
                let timing = Timing { fold_curves: elapsed, total: elapsed, ..Timing::default() };
                export_report(&RunReport::new(&fam, &settings, None, &curves, None, timing), path)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verdict { family, report } => {
            let fam = load_family(family)?;
            let (rep, err) = pipeline(&fam, &settings);
            if let Some(path) = report {
                export_report(&rep, path)?;
            }
            if err.is_none() {
                print_json(&verdict_summary(&rep));
            }
            Ok(verdict_exit(&rep, err.as_ref()))
        }
        Command::Plot { family, out, approximating } => {
            let fam = load_family(family)?;
            let (rep, _) = pipeline(&fam, &settings);
            std::fs::write(out, render_svg(&rep, &plot_options(&rep, *approximating)))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { family } => {
            let fam = load_family(family)?;
            let oracle = parameter_linear_oracle(&fam, &settings)?;
            let curves = enumerate_fold_curves(&fam, &settings);
            let diff = compare_with_oracle(&fam.bounds, &oracle, &curves);
            print_json(&json!({
                "family": fam.name,
                "oracle_fold_points": oracle.fold_points,
                "oracle_cusps": oracle.cusps,
                "gaps": oracle.gaps,
                "diff": diff,
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Demo { name, out_dir } => {
            let fam = builtin(name)?;
            let (rep, err) = pipeline(&fam, &settings);
            print_json(&verdict_summary(&rep));
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(dir)?;
                export_report(&rep, dir.join(format!("{name}.json")))?;
                std::fs::write(dir.join(format!("{name}.svg")), render_svg(&rep, &plot_options(&rep, true)))?;
            }
            Ok(verdict_exit(&rep, err.as_ref()))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}
