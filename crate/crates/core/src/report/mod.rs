//! Run reports: assembly, curve decimation and the versioned JSON format.

pub mod oracle;
pub mod svg;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::continuation::FoldCurveRecord;
use crate::detect::Codim2Point;
use crate::error::{Error, Result};
use crate::family::{FamilyKind, FamilySpec, ParamBox};
use crate::settings::Settings;
use crate::szparity::{ParityVerdict, SZReport};

pub use oracle::{compare_with_oracle, parameter_linear_oracle, OracleDiff, OraclePoint, OracleResult};
pub use svg::{render_svg, Overlay, SvgOptions};

/// Schema tag written into every report.
pub const REPORT_SCHEMA: &str = "cuspscan-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyDescriptor {
    pub name: String,
    pub dim: usize,
    pub kind: FamilyKind,
    pub bounds: ParamBox,
    pub state_radius: f64,
    pub source: Option<String>,
}

impl FamilyDescriptor {
    pub fn of(family: &FamilySpec) -> Self {
        Self {
            name: family.name.clone(),
            dim: family.dim,
            kind: family.kind(),
            bounds: family.bounds,
            state_radius: family.state_radius,
            source: family.source.clone(),
        }
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub boundary: f64,
    pub fold_curves: f64,
    pub verdict: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub family: FamilyDescriptor,
    pub settings: Settings,
    pub sz: Option<SZReport>,
    /// Fold curves, decimated to at most `settings.max_curve_points` points.
    pub curves: Vec<FoldCurveRecord>,
    pub codim2: Vec<Codim2Point>,
    pub verdict: Option<ParityVerdict>,
    /// Why the S/Z stage or the verdict did not complete, if it did not.
    pub failure: Option<String>,
    pub timing: Timing,
}

impl RunReport {
    pub fn new(
        family: &FamilySpec,
        settings: &Settings,
        sz: Option<SZReport>,
        curves: &[FoldCurveRecord],
        verdict: Option<ParityVerdict>,
        timing: Timing,
    ) -> Self {
        let curves: Vec<FoldCurveRecord> =
            curves.iter().map(|c| decimate_curve(c, settings.max_curve_points)).collect();
        let codim2 = curves.iter().flat_map(|c| c.codim2_points.iter().cloned()).collect();
        Self {
            schema: REPORT_SCHEMA.to_string(),
            family: FamilyDescriptor::of(family),
            settings: settings.clone(),
            sz,
            curves,
            codim2,
            verdict,
            failure: None,
            timing,
        }
    }

    pub fn with_failure(mut self, reason: impl Into<String>) -> Self {
        self.failure = Some(reason.into());
        self
    }

    /// Whether the curve with this id borders the saddle component, when a
    /// verdict was reached.
    pub fn is_member(&self, curve: usize) -> bool {
        self.verdict
            .as_ref()
            .is_some_and(|v| v.boundary_curves_of_ms.iter().any(|e| e.curve == curve && e.member))
    }
}

/// Thins a curve to at most `max_points` points spread evenly in arclength.
/// End points and codimension-2 markers are always kept and marker
/// positions are renumbered.
pub fn decimate_curve(curve: &FoldCurveRecord, max_points: usize) -> FoldCurveRecord {
    let n = curve.points.len();
    if n <= max_points.max(2) {
        return curve.clone();
    }
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    for (i, p) in curve.points.iter().enumerate() {
        if p.codim2.is_some() {
            keep[i] = true;
        }
    }
    let pinned = keep.iter().filter(|&&k| k).count();
    let budget = max_points.saturating_sub(pinned);
    let mut cum = Vec::with_capacity(n);
    cum.push(0.0);
    for w in curve.points.windows(2) {
        let dx: f64 = w[0].x.iter().zip(&w[1].x).map(|(a, b)| (a - b).powi(2)).sum();
        let dt = (w[0].theta[0] - w[1].theta[0]).powi(2) + (w[0].theta[1] - w[1].theta[1]).powi(2);
        cum.push(cum.last().unwrap() + (dx + dt).sqrt());
    }
    let total = cum[n - 1];
    let mut k = 0;
    for i in 1..=budget {
        let target = total * i as f64 / (budget + 1) as f64;
        while k + 1 < n && cum[k + 1] <= target {
            k += 1;
        }
        let pick = if k + 1 < n && cum[k + 1] - target < target - cum[k] { k + 1 } else { k };
        keep[pick] = true;
    }
    let mut remap = vec![usize::MAX; n];
    let mut points = Vec::new();
    for (i, p) in curve.points.iter().enumerate() {
        if keep[i] {
            remap[i] = points.len();
            points.push(p.clone());
        }
    }
    let codim2_points = curve
        .codim2_points
        .iter()
        .map(|m| {
            let mut m = m.clone();
            if let Some(&pos) = remap.get(m.position).filter(|&&r| r != usize::MAX) {
                m.position = pos;
            }
            m
        })
        .collect();
    FoldCurveRecord { points, codim2_points, ..curve.clone() }
}

pub fn report_to_string(report: &RunReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::ReportParse(e.to_string()))
}

pub fn report_from_str(text: &str) -> Result<RunReport> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::ReportParse(e.to_string()))?;
    let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("").to_string();
    if found != REPORT_SCHEMA {
        return Err(Error::SchemaMismatch { found, expected: REPORT_SCHEMA.to_string() });
    }
    serde_json::from_value(value).map_err(|e| Error::ReportParse(e.to_string()))
}

pub fn export_report(report: &RunReport, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, report_to_string(report)?)?;
    Ok(())
}

pub fn import_report(path: impl AsRef<Path>) -> Result<RunReport> {
    report_from_str(&std::fs::read_to_string(path)?)
}
