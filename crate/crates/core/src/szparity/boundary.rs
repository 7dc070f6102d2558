//! Equilibria over the boundary of the parameter box and the S/Z conditions.

use log::debug;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::continuation::{find_equilibria, solve_equilibrium, trace_branch, BranchPoint, BranchTrace, FoldPoint, ParamPath};
use crate::detect::{classify_equilibrium, StabilityClass};
use crate::error::{Error, Result, SzViolation};
use crate::family::{Edge, FamilyKind, FamilySpec, Theta};
use crate::numerics::{align, real_eigenvector, spectrum};
use crate::settings::Settings;

/// Depth limit for midpoint refinement during eigenvector transport.
const TRANSPORT_DEPTH: usize = 10;
/// A multi-start root closer than this (in `(x / state_scale, s)`) to a
/// traced branch is already covered.
const COVER_GATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpposedMethod {
    FlowOrientation,
    PotentialSlope,
}

/// One of the three arcs of the S/Z branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcSummary {
    pub class: StabilityClass,
    /// Inclusive range of branch sample indices.
    pub first: usize,
    pub last: usize,
    pub s_range: [f64; 2],
}

/// How the folds were compared with the transported saddle direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpposedEvidence {
    /// Whether `sign(a) q` agrees with the transported unstable direction at
    /// `x1` and `x2`.
    pub flow_agrees: [bool; 2],
    pub flow_opposed: bool,
    /// Whether the potential increases along the transported direction at
    /// `x1` and `x2`; gradient families only.
    pub slope_increases: Option<[bool; 2]>,
    pub slope_opposed: Option<bool>,
    /// Transported unit unstable directions at the `x1` and `x2` ends.
    pub saddle_ends: [Vec<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeScan {
    pub edge: Edge,
    pub branches: Vec<BranchTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SZReport {
    pub edge: Edge,
    /// The branch over the S/Z edge, ordered by increasing path arclength at
    /// its ends.
    pub edge_branch: BranchTrace,
    /// `[x1, x2]`, with `x1` the fold of lower path arclength.
    pub folds: [FoldPoint; 2],
    pub fold_s: [f64; 2],
    /// Attractor, 1-saddle and attractor arcs in branch order.
    pub components: Vec<ArcSummary>,
    /// Branch samples of the saddle arc, ordered from `x1` to `x2`.
    pub saddle_arc: Vec<BranchPoint>,
    pub opposed: bool,
    pub opposed_method: OpposedMethod,
    pub evidence: OpposedEvidence,
    pub other_edges_clean: bool,
    pub other_edges: Vec<EdgeScan>,
}

fn edge_seed(settings: &Settings, edge: Edge, k: usize) -> u64 {
    let e = Edge::ALL.iter().position(|&x| x == edge).unwrap_or(0) as u64;
    settings.seed ^ (0xb0_0000 + e * 1000 + k as u64).wrapping_mul(0x2545_f491_4f6c_dd1d)
}

fn covered(branch: &BranchTrace, x: &DVector<f64>, s: f64, scale: f64) -> bool {
    let pt = |i: usize| {
        let v = branch.points[i].state() / scale;
        let n = v.len();
        v.insert_row(n, branch.s[i])
    };
    let n = x.len();
    let p = (x / scale).insert_row(n, s);
    let w = DVector::from_element(p.len(), 1.0);
    (0..branch.points.len().saturating_sub(1)).any(|i| {
        crate::continuation::fold::distance_to_polyline(&p, &[pt(i), pt(i + 1)], &w) < COVER_GATE
    }) || (branch.points.len() == 1 && (pt(0) - &p).norm() < COVER_GATE)
}

/// Every equilibrium branch over one edge, from multi-start seeds at
/// `boundary_samples` points along it.
pub fn scan_edge(family: &FamilySpec, edge: Edge, settings: &Settings) -> Result<EdgeScan> {
    let (a, b) = family.bounds.edge_segment(edge);
    let path = ParamPath::new(&[a, b], &family.bounds);
    let len = path.length();
    let m = settings.boundary_samples.max(2);
    let mut branches: Vec<BranchTrace> = Vec::new();
    for k in 0..m {
        let s = len * k as f64 / (m - 1) as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(edge_seed(settings, edge, k));
        let roots = find_equilibria(family, path.theta(s), &[], settings.restarts, &mut rng, settings);
        for x in roots {
            if branches.iter().any(|br| covered(br, &x, s, settings.state_scale)) {
                continue;
            }
            let mut br = trace_branch(family, &path, s, &x, settings)?;
            if br.s.first() > br.s.last() {
                br = br.reversed();
            }
            debug!("edge {edge}: branch with {} samples, {} folds", br.points.len(), br.folds.len());
            branches.push(br);
        }
    }
    Ok(EdgeScan { edge, branches })
}

fn check_clean(scan: &EdgeScan) -> Result<()> {
    let edge = scan.edge;
    let folds: usize = scan.branches.iter().map(|b| b.folds.len()).sum();
    if folds > 0 {
        return Err(SzViolation::ExtraFolds { edge, count: folds }.into());
    }
    for br in &scan.branches {
        if let Some(h) = br.hopf_events.first() {
            return Err(SzViolation::HopfOnBoundary { edge, theta: h.theta }.into());
        }
        if let Some(p) = br.points.iter().find(|p| p.class == StabilityClass::NonHyperbolic) {
            return Err(SzViolation::NonHyperbolic { edge, theta: p.theta }.into());
        }
    }
    Ok(())
}

/// Continues the equilibria around the whole boundary and checks the S/Z
/// conditions: one branch over the S/Z edge with two folds splitting it into
/// attractor, 1-saddle and attractor arcs, and no bifurcation over the rest
/// of the boundary. Opposedness is recorded, not enforced.
pub fn boundary_scan(family: &FamilySpec, settings: &Settings) -> Result<SZReport> {
    let sz_edge = family.bounds.sz_edge;
    let sz = scan_edge(family, sz_edge, settings)?;
    if sz.branches.len() != 1 {
        return Err(SzViolation::BranchCount { count: sz.branches.len() }.into());
    }
    let branch = sz.branches.into_iter().next().expect("one branch");
    if branch.folds.len() != 2 {
        return Err(SzViolation::FoldCount { edge: sz_edge, count: branch.folds.len() }.into());
    }
    if let Some(h) = branch.hopf_events.first() {
        return Err(SzViolation::HopfOnBoundary { edge: sz_edge, theta: h.theta }.into());
    }
    let (f0, f1) = (&branch.folds[0], &branch.folds[1]);
    let ranges = [(0, f0.at), (f0.at + 1, f1.at), (f1.at + 1, branch.points.len() - 1)];
    let mut components = Vec::with_capacity(3);
    for (k, &(first, last)) in ranges.iter().enumerate() {
        let want = if k == 1 { StabilityClass::Saddle(1) } else { StabilityClass::Attractor };
        if first > last {
            return Err(SzViolation::FoldCount { edge: sz_edge, count: 2 }.into());
        }
        for p in &branch.points[first..=last] {
            if p.class != want {
                let v = if k == 1 {
                    SzViolation::SaddleArcIndex { theta: p.theta, index: p.index }
                } else {
                    SzViolation::OuterArcNotAttractor { theta: p.theta, index: p.index }
                };
                return Err(v.into());
            }
        }
        components.push(ArcSummary { class: want, first, last, s_range: [branch.s[first], branch.s[last]] });
    }
    let mut other_edges = Vec::with_capacity(3);
    for edge in Edge::ALL.into_iter().filter(|&e| e != sz_edge) {
        let scan = scan_edge(family, edge, settings)?;
        check_clean(&scan)?;
        other_edges.push(scan);
    }
    let mut saddle_arc: Vec<BranchPoint> = branch.points[ranges[1].0..=ranges[1].1].to_vec();
    let mut folds = [f0.point.clone(), f1.point.clone()];
    let mut fold_s = [f0.s, f1.s];
    if f1.s < f0.s {
        saddle_arc.reverse();
        folds.swap(0, 1);
        fold_s.swap(0, 1);
    }
    let evidence = opposed_evidence(family, &saddle_arc, [&folds[0], &folds[1]], settings)?;
    let (opposed, opposed_method) = match (family.kind(), evidence.slope_opposed) {
        (FamilyKind::Gradient, Some(v)) => (v, OpposedMethod::PotentialSlope),
        _ => (evidence.flow_opposed, OpposedMethod::FlowOrientation),
    };
    Ok(SZReport {
        edge: sz_edge,
        edge_branch: branch,
        folds,
        fold_s,
        components,
        saddle_arc,
        opposed,
        opposed_method,
        evidence,
        other_edges_clean: true,
        other_edges,
    })
}

/// Opposedness of a validated S/Z report by its recorded method.
pub fn opposed_folds(sz: &SZReport, family: &FamilySpec, settings: &Settings) -> Result<bool> {
    let ev = opposed_evidence(family, &sz.saddle_arc, [&sz.folds[0], &sz.folds[1]], settings)?;
    Ok(match sz.opposed_method {
        OpposedMethod::PotentialSlope => ev.slope_opposed.unwrap_or(ev.flow_opposed),
        OpposedMethod::FlowOrientation => ev.flow_opposed,
    })
}

fn unstable_direction(
    family: &FamilySpec,
    x: &DVector<f64>,
    theta: Theta,
    reference: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let j = family.jacobian_x(x, theta)?;
    let spec = spectrum(&j)?;
    let lambda = spec
        .eigenvalues
        .iter()
        .filter(|l| l.im == 0.0 && l.re > 0.0)
        .map(|l| l.re)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        .ok_or(Error::TransportBroken { at: theta })?;
    Ok(real_eigenvector(&j, lambda, reference).normalize())
}

struct Transport<'a> {
    family: &'a FamilySpec,
    settings: &'a Settings,
}

impl Transport<'_> {
    /// Carries `v` from `(xa, ta)` to `(xb, tb)`, bisecting the parameter
    /// segment while consecutive directions fail the transport gate.
    fn carry(
        &self,
        v: &DVector<f64>,
        xa: &DVector<f64>,
        ta: Theta,
        xb: &DVector<f64>,
        tb: Theta,
        depth: usize,
    ) -> Result<DVector<f64>> {
        let w = unstable_direction(self.family, xb, tb, Some(v))?;
        if w.dot(v) > self.settings.transport_gate {
            return Ok(w);
        }
        if depth >= TRANSPORT_DEPTH {
            return Err(Error::TransportBroken { at: tb });
        }
        let tm = [0.5 * (ta[0] + tb[0]), 0.5 * (ta[1] + tb[1])];
        let xm = solve_equilibrium(self.family, tm, &((xa + xb) * 0.5), self.settings)
            .map_err(|_| Error::TransportBroken { at: tm })?;
        let vm = self.carry(v, xa, ta, &xm, tm, depth + 1)?;
        self.carry(&vm, &xm, tm, xb, tb, depth + 1)
    }
}

/// Transports the unstable direction along `arc` (ordered from `folds[0]`
/// to `folds[1]`) and compares it with the fold orientations, and for
/// gradient families with the slope of the potential.
pub fn opposed_evidence(
    family: &FamilySpec,
    arc: &[BranchPoint],
    folds: [&FoldPoint; 2],
    settings: &Settings,
) -> Result<OpposedEvidence> {
    let first = arc.first().ok_or(Error::TransportBroken { at: folds[0].theta })?;
    let tr = Transport { family, settings };
    let start = unstable_direction(family, &first.state(), first.theta, Some(&folds[0].q()))?;
    let mut v = start.clone();
    for w in arc.windows(2) {
        v = tr.carry(&v, &w[0].state(), w[0].theta, &w[1].state(), w[1].theta, 0)?;
    }
    let ends = [start, v];
    let mut flow_agrees = [false; 2];
    let mut slope = [false; 2];
    for k in 0..2 {
        let fold = folds[k];
        let q = align(fold.q(), Some(&ends[k]));
        let b = family.directional_b(&fold.state(), fold.theta, &q, &q)?;
        let j = family.jacobian_x(&fold.state(), fold.theta)?;
        let (_, p) = crate::numerics::null_vectors(&j, Some(&q), None);
        let pq = p.dot(&q);
        if pq.abs() <= settings.bt_gate {
            return Err(Error::DegenerateNormalization);
        }
        let a = 0.5 * p.dot(&b) / pq;
        if a.abs() <= settings.cusp_gate {
            return Err(Error::AtCusp { a });
        }
        flow_agrees[k] = a > 0.0;
        if family.kind() == FamilyKind::Gradient {
            let x = fold.state();
            let delta = 1e-2 * (1.0 + x.norm());
            let up = family.potential(&(&x + &ends[k] * delta), fold.theta);
            let down = family.potential(&(&x - &ends[k] * delta), fold.theta);
            if let (Some(u), Some(d)) = (up, down) {
                slope[k] = u > d;
            }
        }
    }
    let gradient = family.kind() == FamilyKind::Gradient;
    Ok(OpposedEvidence {
        flow_agrees,
        flow_opposed: flow_agrees[0] != flow_agrees[1],
        slope_increases: gradient.then_some(slope),
        slope_opposed: gradient.then_some(slope[0] != slope[1]),
        saddle_ends: [ends[0].as_slice().to_vec(), ends[1].as_slice().to_vec()],
    })
}

/// Stability class of the equilibrium at `(x, theta)`.
pub fn class_at(family: &FamilySpec, x: &DVector<f64>, theta: Theta, settings: &Settings) -> Result<StabilityClass> {
    Ok(classify_equilibrium(&spectrum(&family.jacobian_x(x, theta)?)?, settings.hyp_gate))
}
