//! The S/Z boundary hypothesis, the saddle component and the cusp-parity
//! verdict.
//!
//! The pipeline behind [`theorem_verdict`]:
//!
//! 1. [`boundary_scan`] validates the S/Z edge and the rest of the boundary.
//! 2. Every fold curve is enumerated; the main curve is the one ending at the
//!    two S/Z folds.
//! 3. [`SaddleCloud`] decides which curves border the 1-saddle component of
//!    the boundary saddle arc.
//! 4. Cusps on those curves are counted, and the orientation traversal of the
//!    main curve cross-checks the parity.

pub mod boundary;
pub mod membership;

use log::info;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use boundary::{boundary_scan, opposed_evidence, opposed_folds, OpposedEvidence, OpposedMethod, SZReport};
pub use membership::{saddle_component_membership, MembershipEvidence, SaddleCloud};

use crate::continuation::{enumerate_fold_curves, FoldCurveRecord};
use crate::detect::{Codim2Kind, Codim2Point};
use crate::error::{Error, Result, SzViolation};
use crate::family::{FamilyKind, FamilySpec, Theta};
use crate::settings::Settings;

/// Main-curve endpoints must match the S/Z folds to this weighted distance.
const ENDPOINT_GATE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Odd,
    Even,
}

impl Parity {
    pub fn of(n: usize) -> Self {
        if n % 2 == 1 {
            Self::Odd
        } else {
            Self::Even
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuspCount {
    pub total: usize,
    /// `(curve id, cusps on that curve)`.
    pub per_curve: Vec<(usize, Vec<Codim2Point>)>,
    /// Bogdanov-Takens points, reported but not counted.
    pub bt: Vec<Codim2Point>,
}

/// Totals the cusp markers (standard and dual) on the given curves.
pub fn count_cusps(curves: &[&FoldCurveRecord]) -> CuspCount {
    let mut per_curve = Vec::with_capacity(curves.len());
    let mut bt = Vec::new();
    for c in curves {
        let cusps: Vec<Codim2Point> = c.codim2_points.iter().filter(|m| m.kind.is_cusp()).cloned().collect();
        bt.extend(c.codim2_points.iter().filter(|m| m.kind == Codim2Kind::BogdanovTakens).cloned());
        per_curve.push((c.id, cusps));
    }
    CuspCount { total: per_curve.iter().map(|(_, v)| v.len()).sum(), per_curve, bt }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Traversal {
    /// Orientation discontinuities met along the fold curve from `x1` to `x2`.
    pub switch_count: usize,
    /// Curve positions (in `x1`-to-`x2` order) where the switches happen.
    pub switch_positions: Vec<usize>,
    /// The orientation carried from `x2` back along the saddle arc disagrees
    /// with the fold orientation at `x1`.
    pub closing_discontinuity: bool,
}

/// Walks a curve from one end to the other and reports where the fold
/// orientation changes sign. The null direction must stay continuous.
pub fn fold_switches(curve: &FoldCurveRecord, settings: &Settings) -> Result<Vec<usize>> {
    for w in curve.points.windows(2) {
        if w[0].q().dot(&w[1].q()) <= settings.transport_gate {
            return Err(Error::TransportBroken { at: w[1].theta });
        }
    }
    let mut out = Vec::new();
    let mut last: Option<i8> = None;
    for (i, p) in curve.points.iter().enumerate() {
        if p.orientation == 0 {
            continue;
        }
        if last.is_some_and(|o| o != p.orientation) {
            out.push(i);
        }
        last = Some(p.orientation);
    }
    Ok(out)
}

fn weighted_distance(family: &FamilySpec, settings: &Settings, xa: &[f64], ta: Theta, xb: &[f64], tb: Theta) -> f64 {
    let dx: f64 = xa.iter().zip(xb).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / settings.state_scale.powi(2);
    let dt = family.bounds.scaled_dist(ta, tb);
    (dx + dt * dt).sqrt()
}

/// Whether the curve's ends are the two S/Z folds, and if so whether it
/// runs from `x2` to `x1`.
fn main_curve_orientation(family: &FamilySpec, curve: &FoldCurveRecord, sz: &SZReport, settings: &Settings) -> Option<bool> {
    if curve.closed {
        return None;
    }
    let (first, last) = (curve.points.first()?, curve.points.last()?);
    let d = |p: &crate::continuation::FoldPoint, k: usize| {
        weighted_distance(family, settings, &p.x, p.theta, &sz.folds[k].x, sz.folds[k].theta)
    };
    if d(first, 0) < ENDPOINT_GATE && d(last, 1) < ENDPOINT_GATE {
        Some(false)
    } else if d(first, 1) < ENDPOINT_GATE && d(last, 0) < ENDPOINT_GATE {
        Some(true)
    } else {
        None
    }
}

/// Orientation traversal of the main curve from `x1` to `x2`, closed through
/// the saddle arc. The saddle arc inherits the orientation at the
/// fold-to-saddle transition at `x2` and keeps it back to `x1`.
pub fn traversal_switch_count(
    family: &FamilySpec,
    main: &FoldCurveRecord,
    sz: &SZReport,
    settings: &Settings,
) -> Result<Traversal> {
    let reversed = main_curve_orientation(family, main, sz, settings).ok_or(Error::MainCurveMissing)?;
    let mut curve = main.clone();
    if reversed {
        curve.points.reverse();
    }
    let positions = fold_switches(&curve, settings)?;
    let oriented = |k: usize| -> Option<DVector<f64>> {
        let p = if k == 0 {
            curve.points.iter().find(|p| p.orientation != 0)?
        } else {
            curve.points.iter().rev().find(|p| p.orientation != 0)?
        };
        Some(p.q() * f64::from(p.orientation))
    };
    let (o1, o2) = (oriented(0).ok_or(Error::MainCurveMissing)?, oriented(1).ok_or(Error::MainCurveMissing)?);
    let v1 = DVector::from_column_slice(&sz.evidence.saddle_ends[0]);
    let v2 = DVector::from_column_slice(&sz.evidence.saddle_ends[1]);
    let sigma = if v2.dot(&o2) >= 0.0 { 1.0 } else { -1.0 };
    let at_x1 = v1 * sigma;
    Ok(Traversal {
        switch_count: positions.len(),
        switch_positions: positions,
        closing_discontinuity: at_x1.dot(&o1) < 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub grid: usize,
    pub restarts: usize,
    pub membership_grid: usize,
    pub membership_starts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityVerdict {
    pub fh_found: bool,
    pub fh_locations: Vec<Theta>,
    /// Membership evidence for every enumerated curve.
    pub boundary_curves_of_ms: Vec<MembershipEvidence>,
    pub main_curve: usize,
    pub cusp_count_total: usize,
    pub cusps_on_main: usize,
    pub bt_count: usize,
    pub parity: Parity,
    pub switch_count: usize,
    pub closing_discontinuity: bool,
    /// Switch parity equals cusp parity on the main curve; absent when an fH
    /// point decided the verdict.
    pub cross_check: Option<bool>,
    pub theorem_satisfied: bool,
    pub resolution: Resolution,
}

/// Everything the verdict pipeline produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRun {
    pub sz: SZReport,
    pub curves: Vec<FoldCurveRecord>,
    pub verdict: ParityVerdict,
}

/// Runs the full pipeline and decides whether the family has an fH point on
/// the boundary of the saddle component or an odd number of cusps there.
pub fn theorem_verdict(family: &FamilySpec, settings: &Settings) -> Result<VerdictRun> {
    let sz = boundary_scan(family, settings)?;
    if family.kind() == FamilyKind::Gradient {
        if let Some(slope) = sz.evidence.slope_opposed {
            if slope != sz.evidence.flow_opposed {
                return Err(Error::CrossCheckFailure(format!(
                    "potential slope says opposed = {slope}, flow orientation says {}",
                    sz.evidence.flow_opposed
                )));
            }
        }
    }
    if !sz.opposed {
        return Err(SzViolation::NotOpposed.into());
    }
    let curves = enumerate_fold_curves(family, settings);
    let main_idx = curves
        .iter()
        .position(|c| main_curve_orientation(family, c, &sz, settings).is_some())
        .ok_or(Error::MainCurveMissing)?;
    let cloud = SaddleCloud::build(family, settings);
    let mut evidence = Vec::with_capacity(curves.len());
    for (i, c) in curves.iter().enumerate() {
        match cloud.membership(family, c, settings) {
            Ok(ev) => evidence.push(ev),
            Err(e) if i == main_idx => {
                info!("main curve membership by region growing failed ({e}); it borders the saddle arc by construction");
                evidence.push(MembershipEvidence {
                    curve: c.id,
                    member: true,
                    linked_samples: 0,
                    tried_samples: 0,
                    witness: Vec::new(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let members: Vec<&FoldCurveRecord> =
        curves.iter().zip(&evidence).filter(|(_, ev)| ev.member).map(|(c, _)| c).collect();
    let fh_locations: Vec<Theta> = members
        .iter()
        .flat_map(|c| c.codim2_points.iter().filter(|m| m.kind == Codim2Kind::FoldHopf).map(|m| m.theta))
        .collect();
    let fh_found = !fh_locations.is_empty();
    let counts = count_cusps(&members);
    let main = &curves[main_idx];
    let cusps_on_main = main.cusp_count();
    let traversal = traversal_switch_count(family, main, &sz, settings)?;
    let consistent = traversal.switch_count % 2 == cusps_on_main % 2;
    let cross_check = (!fh_found).then_some(consistent);
    if cross_check == Some(false) {
        return Err(Error::CrossCheckFailure(format!(
            "{} orientation switches but {} cusps on the main curve",
            traversal.switch_count, cusps_on_main
        )));
    }
    let parity = Parity::of(counts.total);
    let verdict = ParityVerdict {
        fh_found,
        fh_locations,
        boundary_curves_of_ms: evidence,
        main_curve: main.id,
        cusp_count_total: counts.total,
        cusps_on_main,
        bt_count: counts.bt.len(),
        parity,
        switch_count: traversal.switch_count,
        closing_discontinuity: traversal.closing_discontinuity,
        cross_check,
        theorem_satisfied: fh_found || parity == Parity::Odd,
        resolution: Resolution {
            grid: settings.grid,
            restarts: settings.restarts,
            membership_grid: settings.membership_grid,
            membership_starts: settings.membership_starts,
        },
    };
    Ok(VerdictRun { sz, curves, verdict })
}
