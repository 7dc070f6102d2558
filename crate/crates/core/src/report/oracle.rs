//! Closed-form fold sets of parameter-linear scalar families
//! `x' = theta2 + theta1 g(x) + h(x)`.
//!
//! `F = F_x = 0` solves to `theta1 = -h'(x) / g'(x)`,
//! `theta2 = -theta1 g(x) - h(x)`, so the fold set is a curve parametrized by
//! `x`. Cusps sit where `F_xx = theta1 g'' + h''` changes sign along it.

use std::collections::HashMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::continuation::FoldCurveRecord;
use crate::error::{Error, Result};
use crate::family::{FamilySpec, ParamBox, ParamLinearForm, Theta};
use crate::settings::Settings;

/// `|g'|` below this excludes the sample from the sweep.
const DG_GATE: f64 = 1e-12;
const BISECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OraclePoint {
    pub x: f64,
    pub theta: Theta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Pieces of the fold set inside the box, each ordered by increasing `x`.
    pub pieces: Vec<Vec<OraclePoint>>,
    pub cusps: Vec<OraclePoint>,
    /// `x` intervals dropped because `g'` vanishes there.
    pub gaps: Vec<[f64; 2]>,
    pub fold_points: usize,
    pub cusp_count: usize,
}

struct Closed<'a>(&'a ParamLinearForm);

impl Closed<'_> {
    fn theta1(&self, x: f64) -> Option<f64> {
        let dg = (self.0.dg)(x);
        (dg.abs() > DG_GATE).then(|| -(self.0.dh)(x) / dg)
    }

    fn point(&self, x: f64) -> Option<OraclePoint> {
        let t1 = self.theta1(x)?;
        Some(OraclePoint { x, theta: [t1, -t1 * (self.0.g)(x) - (self.0.h)(x)] })
    }

    fn fxx(&self, x: f64) -> Option<f64> {
        Some(self.theta1(x)? * (self.0.ddg)(x) + (self.0.ddh)(x))
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let positive = f(lo) > 0.0;
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Signed distance to the box: positive inside.
fn inside_margin(bounds: &ParamBox, t: Theta) -> f64 {
    let m = [t[0] - bounds.lo[0], bounds.hi[0] - t[0], t[1] - bounds.lo[1], bounds.hi[1] - t[1]];
    m.into_iter().fold(f64::INFINITY, f64::min)
}

/// Sweeps `settings.oracle_points` states over `[-r, r]` with `r` the
/// family's state radius and clips the closed-form fold set to the box.
pub fn parameter_linear_oracle(family: &FamilySpec, settings: &Settings) -> Result<OracleResult> {
    let form = family
        .linear_form()
        .ok_or_else(|| Error::NotParameterLinear(format!("`{}` has no parameter-linear form", family.name)))?;
    if family.dim != 1 {
        return Err(Error::NotParameterLinear(format!("state dimension {} is not 1", family.dim)));
    }
    let cf = Closed(form);
    let bounds = &family.bounds;
    let r = family.state_radius;
    let m = settings.oracle_points.max(3);
    let xs: Vec<f64> = (0..m).map(|i| -r + 2.0 * r * i as f64 / (m - 1) as f64).collect();
    let margin = |x: f64| cf.point(x).map(|p| inside_margin(bounds, p.theta));

    let mut pieces: Vec<Vec<OraclePoint>> = Vec::new();
    let mut gaps: Vec<[f64; 2]> = Vec::new();
    let mut current: Vec<OraclePoint> = Vec::new();
    let mut gap_start: Option<f64> = None;
    let mut prev: Option<(f64, f64)> = None;
    for &x in &xs {
        let Some(mx) = margin(x) else {
            gap_start.get_or_insert(x);
            if !current.is_empty() {
                pieces.push(std::mem::take(&mut current));
            }
            prev = None;
            continue;
        };
        if let Some(g0) = gap_start.take() {
            gaps.push([g0, x]);
        }
        if let Some((xp, mp)) = prev {
            if (mp >= 0.0) != (mx >= 0.0) {
                let xc = bisect(|y| margin(y).unwrap_or(-1.0), xp, x);
                if let Some(p) = cf.point(xc) {
                    current.push(p);
                }
                if mx < 0.0 {
                    pieces.push(std::mem::take(&mut current));
                }
            }
        }
        if mx >= 0.0 {
            current.push(cf.point(x).expect("finite closed form"));
        }
        prev = Some((x, mx));
    }
    if !current.is_empty() {
        pieces.push(current);
    }
    if let Some(g0) = gap_start {
        gaps.push([g0, r]);
    }
    for g in &gaps {
        warn!("oracle: g' vanishes on [{:.6}, {:.6}]; samples dropped", g[0], g[1]);
    }

    let mut cusps = Vec::new();
    for w in xs.windows(2) {
        let (Some(a), Some(b)) = (cf.fxx(w[0]), cf.fxx(w[1])) else { continue };
        if a == 0.0 || a * b < 0.0 {
            let xc = if a == 0.0 { w[0] } else { bisect(|y| cf.fxx(y).unwrap_or(0.0), w[0], w[1]) };
            if let Some(p) = cf.point(xc) {
                if bounds.contains(p.theta, 0.0) {
                    cusps.push(p);
                }
            }
        }
    }
    let fold_points = pieces.iter().map(Vec::len).sum();
    Ok(OracleResult { cusp_count: cusps.len(), pieces, cusps, gaps, fold_points })
}

/// Segments bucketed on a square grid for exact nearest-segment queries.
struct SegmentGrid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    segments: Vec<(Theta, Theta)>,
    extent: i64,
}

impl SegmentGrid {
    fn new(segments: Vec<(Theta, Theta)>, cell: f64) -> Self {
        let key = |v: f64| (v / cell).floor() as i64;
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let mut extent = 0;
        for (k, (a, b)) in segments.iter().enumerate() {
            let (i0, i1) = (key(a[0].min(b[0])), key(a[0].max(b[0])));
            let (j0, j1) = (key(a[1].min(b[1])), key(a[1].max(b[1])));
            for i in i0..=i1 {
                for j in j0..=j1 {
                    cells.entry((i, j)).or_default().push(k);
                    extent = extent.max(i.abs()).max(j.abs());
                }
            }
        }
        Self { cell, cells, segments, extent }
    }

    fn distance(&self, p: Theta) -> f64 {
        let (ci, cj) = ((p[0] / self.cell).floor() as i64, (p[1] / self.cell).floor() as i64);
        let reach = self.extent + ci.abs().max(cj.abs()) + 1;
        let mut best = f64::INFINITY;
        for ring in 0..=reach {
            for i in ci - ring..=ci + ring {
                for j in cj - ring..=cj + ring {
                    if (i - ci).abs() != ring && (j - cj).abs() != ring {
                        continue;
                    }
                    if let Some(list) = self.cells.get(&(i, j)) {
                        for &k in list {
                            let (a, b) = self.segments[k];
                            best = best.min(point_segment(p, a, b));
                        }
                    }
                }
            }
            if best <= ring as f64 * self.cell {
                break;
            }
        }
        best
    }
}

fn point_segment(p: Theta, a: Theta, b: Theta) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    ((p[0] - a[0] - t * d[0]).powi(2) + (p[1] - a[1] - t * d[1]).powi(2)).sqrt()
}

fn segments_of(lines: &[Vec<Theta>]) -> Vec<(Theta, Theta)> {
    let mut out = Vec::new();
    for line in lines {
        match line.len() {
            0 => {}
            1 => out.push((line[0], line[0])),
            _ => out.extend(line.windows(2).map(|w| (w[0], w[1]))),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDiff {
    /// Symmetric Hausdorff distance between the fold sets in box-unit
    /// parameter coordinates.
    pub hausdorff: f64,
    pub oracle_cusps: usize,
    pub continuation_cusps: usize,
    /// Largest parameter distance from an oracle cusp to the nearest
    /// continuation cusp.
    pub max_cusp_offset: f64,
}

/// Compares continued fold curves with the oracle.
pub fn compare_with_oracle(bounds: &ParamBox, oracle: &OracleResult, curves: &[FoldCurveRecord]) -> OracleDiff {
    let cell = 1.0 / 512.0;
    let oracle_lines: Vec<Vec<Theta>> =
        oracle.pieces.iter().map(|p| p.iter().map(|o| bounds.to_unit(o.theta)).collect()).collect();
    let cont_lines: Vec<Vec<Theta>> =
        curves.iter().map(|c| c.points.iter().map(|p| bounds.to_unit(p.theta)).collect()).collect();
    let one_sided = |from: &[Vec<Theta>], to: &[Vec<Theta>]| -> f64 {
        let grid = SegmentGrid::new(segments_of(to), cell);
        if grid.segments.is_empty() {
            return if from.iter().all(Vec::is_empty) { 0.0 } else { f64::INFINITY };
        }
        from.iter().flatten().map(|&p| grid.distance(p)).fold(0.0, f64::max)
    };
    let hausdorff = one_sided(&oracle_lines, &cont_lines).max(one_sided(&cont_lines, &oracle_lines));
    let found: Vec<Theta> = curves
        .iter()
        .flat_map(|c| c.codim2_points.iter().filter(|m| m.kind.is_cusp()).map(|m| m.theta))
        .collect();
    let max_cusp_offset = oracle
        .cusps
        .iter()
        .map(|o| {
            found
                .iter()
                .map(|t| ((t[0] - o.theta[0]).powi(2) + (t[1] - o.theta[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    OracleDiff { hausdorff, oracle_cusps: oracle.cusp_count, continuation_cusps: found.len(), max_cusp_offset }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::builtin;

    fn small() -> Settings {
        Settings { oracle_points: 20_001, ..Settings::default() }
    }

    #[test]
    fn cusp1_closed_form() {
        let o = parameter_linear_oracle(&builtin("cusp1").unwrap(), &small()).unwrap();
        assert_eq!(o.cusp_count, 1);
        assert!(o.cusps[0].x.abs() < 1e-12);
        for p in o.pieces.iter().flatten() {
            assert!((p.theta[0] - 3.0 * p.x * p.x).abs() < 1e-12);
            assert!((p.theta[1] + 2.0 * p.x.powi(3)).abs() < 1e-12);
        }
        // theta1 = 3x^2 reaches the right edge at x = +-1/sqrt(3)
        let ends: Vec<f64> = o.pieces.iter().flat_map(|p| [p[0].x, p[p.len() - 1].x]).collect();
        assert_eq!(o.pieces.len(), 1);
        assert!((ends[0] + 1.0 / 3f64.sqrt()).abs() < 1e-11);
        assert!((ends[1] - 1.0 / 3f64.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn quintic3_cusps() {
        let o = parameter_linear_oracle(&builtin("quintic3").unwrap(), &small()).unwrap();
        let mut xs: Vec<f64> = o.cusps.iter().map(|c| c.x).collect();
        xs.sort_by(f64::total_cmp);
        let r = 0.6f64.sqrt();
        assert_eq!(xs.len(), 3);
        for (got, want) in xs.iter().zip([-r, 0.0, r]) {
            assert!((got - want).abs() < 1e-11);
        }
    }

    #[test]
    fn dual_cusp_sits_at_the_origin() {
        let o = parameter_linear_oracle(&builtin("dualcusp1").unwrap(), &small()).unwrap();
        assert_eq!(o.cusp_count, 1);
        assert!(o.cusps[0].theta[0].abs() < 1e-12 && o.cusps[0].theta[1].abs() < 1e-12);
        // theta1 = -3x^2 opens to the left
        assert!(o.pieces.iter().flatten().all(|p| p.theta[0] <= 1e-15));
    }

    #[test]
    fn multidimensional_family_is_rejected() {
        let err = parameter_linear_oracle(&builtin("bt2").unwrap(), &small()).unwrap_err();
        assert!(matches!(err, Error::NotParameterLinear(_)));
    }

    #[test]
    fn vanishing_g_prime_leaves_a_gap() {
        let fam = crate::family::parse_family("dim = 1\nrhs1 = t2 + t1*x1^2 - x1^3\nlo = -1, -1\nhi = 1, 1\n").unwrap();
        let o = parameter_linear_oracle(&fam, &Settings { oracle_points: 2001, ..Settings::default() }).unwrap();
        assert_eq!(o.gaps.len(), 1);
        assert!(o.gaps[0][0] <= 0.0 && o.gaps[0][1] >= 0.0);
    }

    #[test]
    fn grid_distance_matches_brute_force() {
        let segs: Vec<(Theta, Theta)> =
            (0..50).map(|i| ([i as f64 * 0.02, 0.3], [i as f64 * 0.02 + 0.02, 0.3 + 0.01 * i as f64])).collect();
        let grid = SegmentGrid::new(segs.clone(), 1.0 / 64.0);
        for p in [[0.5, 0.5], [-0.2, 0.1], [1.5, 2.0], [0.33, 0.31]] {
            let brute = segs.iter().map(|&(a, b)| point_segment(p, a, b)).fold(f64::INFINITY, f64::min);
            assert!((grid.distance(p) - brute).abs() < 1e-15);
        }
    }
}
