//! Connectivity of 1-saddle equilibria: which fold curves border the saddle
//! component that contains the boundary saddle arc.

use std::collections::VecDeque;

use log::debug;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::boundary::SZReport;
use crate::continuation::{find_equilibria, fold::grid_nodes, lift_curve, solve_equilibrium, FoldCurveRecord, FoldPoint};
use crate::detect::{classify_equilibrium, StabilityClass};
use crate::error::{Error, Result};
use crate::family::{FamilySpec, Theta};
use crate::numerics::spectrum;
use crate::settings::Settings;

/// Fold points sampled per curve.
const CURVE_SAMPLES: usize = 20;
/// Substeps of a continuation link between neighbouring grid nodes.
const LINK_STEPS: usize = 4;
/// Nearest grid nodes tried when linking a walked sample into the cloud.
const LINK_CANDIDATES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleSample {
    pub x: Vec<f64>,
    pub theta: Theta,
    /// Grid node `(i, j)`.
    pub node: (usize, usize),
}

/// Sampled 1-saddles over a parameter grid, grouped into connected pieces.
#[derive(Debug, Clone)]
pub struct SaddleCloud {
    pub grid: usize,
    pub points: Vec<SaddleSample>,
    /// Point indices per grid node, row-major from the lower-left corner.
    by_node: Vec<Vec<usize>>,
    adjacency: Vec<Vec<usize>>,
    component: Vec<usize>,
    /// Points over the S/Z edge.
    sz_points: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipEvidence {
    pub curve: usize,
    pub member: bool,
    /// Fold samples that were linked into the cloud, and how many were tried.
    pub linked_samples: usize,
    pub tried_samples: usize,
    /// 1-saddles from the curve's saddle side to the S/Z edge.
    pub witness: Vec<SaddleSample>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut k = i;
        while self.0[k] != r {
            let next = self.0[k];
            self.0[k] = r;
            k = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn is_one_saddle(family: &FamilySpec, x: &DVector<f64>, theta: Theta, settings: &Settings) -> bool {
    family
        .jacobian_x(x, theta)
        .and_then(|j| spectrum(&j))
        .map(|s| classify_equilibrium(&s, settings.hyp_gate) == StabilityClass::Saddle(1))
        .unwrap_or(false)
}

fn same_state(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    (a - b).norm() <= 1e-6 * (1.0 + a.norm())
}

/// Lifts the saddle at `(x, from)` straight to `to`, requiring a 1-saddle
/// at every substep.
fn saddle_link(family: &FamilySpec, x: &DVector<f64>, from: Theta, to: Theta, settings: &Settings) -> Option<DVector<f64>> {
    let base: Vec<Theta> = (0..=LINK_STEPS)
        .map(|k| {
            let t = k as f64 / LINK_STEPS as f64;
            [from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])]
        })
        .collect();
    let lift = lift_curve(family, &base, x, settings).ok()?;
    if lift.classes.iter().all(|c| c.is_one_saddle()) {
        lift.fiber.last().map(|v| DVector::from_column_slice(v))
    } else {
        None
    }
}

impl SaddleCloud {
    pub fn build(family: &FamilySpec, settings: &Settings) -> Self {
        let g = settings.membership_grid.max(2);
        let nodes = grid_nodes(&family.bounds, g);
        let per_node: Vec<Vec<DVector<f64>>> = nodes
            .par_iter()
            .enumerate()
            .map(|(idx, &theta)| {
                let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x5add_1e00 ^ (idx as u64).wrapping_mul(0x9e37_79b9));
                find_equilibria(family, theta, &[], settings.membership_starts, &mut rng, settings)
                    .into_iter()
                    .filter(|x| is_one_saddle(family, x, theta, settings))
                    .collect()
            })
            .collect();
        let mut points = Vec::new();
        let mut by_node = vec![Vec::new(); nodes.len()];
        for (idx, xs) in per_node.into_iter().enumerate() {
            for x in xs {
                by_node[idx].push(points.len());
                points.push(SaddleSample { x: x.as_slice().to_vec(), theta: nodes[idx], node: (idx % g, idx / g) });
            }
        }
        let spacing = 1.0 / (g - 1) as f64;
        let gate = settings.adjacency_factor * spacing;
        let scale = settings.state_scale;
        let edges: Vec<Vec<usize>> = (0..points.len())
            .into_par_iter()
            .map(|a| {
                let pa = &points[a];
                let xa = DVector::from_column_slice(&pa.x);
                let (i, j) = pa.node;
                let mut out = Vec::new();
                for (di, dj) in [(1i64, 0i64), (0, 1), (1, 1), (-1, 1)] {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= g as i64 || nj >= g as i64 {
                        continue;
                    }
                    let nidx = nj as usize * g + ni as usize;
                    let linked = saddle_link(family, &xa, pa.theta, nodes[nidx], settings);
                    for &b in &by_node[nidx] {
                        let pb = &points[b];
                        let xb = DVector::from_column_slice(&pb.x);
                        let dt = family.bounds.scaled_dist(pa.theta, pb.theta);
                        let d = (((&xa - &xb).norm() / scale).powi(2) + dt * dt).sqrt();
                        let by_link = linked.as_ref().is_some_and(|y| same_state(y, &xb));
                        if d <= gate || by_link {
                            out.push(b);
                        }
                    }
                }
                out
            })
            .collect();
        let mut adjacency = vec![Vec::new(); points.len()];
        let mut uf = UnionFind((0..points.len()).collect());
        for (a, list) in edges.into_iter().enumerate() {
            for b in list {
                adjacency[a].push(b);
                adjacency[b].push(a);
                uf.union(a, b);
            }
        }
        let component = (0..points.len()).map(|i| uf.find(i)).collect();
        let sz_points = (0..points.len())
            .filter(|&i| on_edge(family, points[i].theta))
            .collect();
        debug!("saddle cloud: {} points", points.len());
        Self { grid: g, points, by_node, adjacency, component, sz_points }
    }

    fn state(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.points[i].x)
    }

    /// Component labels that contain 1-saddles over the S/Z edge.
    pub fn sz_components(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.sz_points.iter().map(|&i| self.component[i]).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn component_count(&self) -> usize {
        let mut c = self.component.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    }

    /// Shortest adjacency path from `from` to any S/Z-edge point.
    fn witness(&self, from: usize) -> Vec<SaddleSample> {
        let mut prev = vec![usize::MAX; self.points.len()];
        let mut seen = vec![false; self.points.len()];
        let targets: std::collections::HashSet<usize> = self.sz_points.iter().copied().collect();
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(a) = queue.pop_front() {
            if targets.contains(&a) {
                let mut path = vec![self.points[a].clone()];
                let mut k = a;
                while prev[k] != usize::MAX {
                    k = prev[k];
                    path.push(self.points[k].clone());
                }
                path.reverse();
                return path;
            }
            for &b in &self.adjacency[a] {
                if !seen[b] {
                    seen[b] = true;
                    prev[b] = a;
                    queue.push_back(b);
                }
            }
        }
        Vec::new()
    }

    /// Links a 1-saddle at `(x, theta)` to a cloud point through a short
    /// saddle-only continuation to one of the nearest grid nodes.
    fn link(&self, family: &FamilySpec, x: &DVector<f64>, theta: Theta, settings: &Settings) -> Option<usize> {
        let g = self.grid;
        let u = family.bounds.to_unit(theta);
        let mut nodes: Vec<(f64, usize)> = Vec::new();
        let (ci, cj) = ((u[0] * (g - 1) as f64).round() as i64, (u[1] * (g - 1) as f64).round() as i64);
        for dj in -1..=1 {
            for di in -1..=1 {
                let (i, j) = (ci + di, cj + dj);
                if i < 0 || j < 0 || i >= g as i64 || j >= g as i64 {
                    continue;
                }
                let idx = j as usize * g + i as usize;
                let nu = [i as f64 / (g - 1) as f64, j as f64 / (g - 1) as f64];
                nodes.push((((nu[0] - u[0]).powi(2) + (nu[1] - u[1]).powi(2)).sqrt(), idx));
            }
        }
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(_, idx) in nodes.iter().take(LINK_CANDIDATES) {
            let Some(&first) = self.by_node[idx].first() else { continue };
            let target = self.points[first].theta;
            let Some(y) = saddle_link(family, x, theta, target, settings) else { continue };
            if let Some(&hit) = self.by_node[idx].iter().find(|&&k| same_state(&y, &self.state(k))) {
                return Some(hit);
            }
        }
        None
    }

    /// Membership of a fold curve in the boundary of the S/Z saddle component.
    pub fn membership(
        &self,
        family: &FamilySpec,
        curve: &FoldCurveRecord,
        settings: &Settings,
    ) -> Result<MembershipEvidence> {
        let sz = self.sz_components();
        let candidates: Vec<&FoldPoint> = curve
            .points
            .iter()
            .filter(|p| p.codim2.is_none() && p.a_coeff.is_some_and(|a| a.abs() > 1e-3))
            .collect();
        let stride = (candidates.len() / CURVE_SAMPLES).max(1);
        let samples: Vec<&FoldPoint> = candidates.iter().step_by(stride).copied().take(CURVE_SAMPLES).collect();
        let spacing = 1.0 / (self.grid - 1) as f64;
        let links: Vec<Option<usize>> = samples
            .par_iter()
            .map(|fp| {
                let (x, theta) = saddle_side(family, fp, 2.0 * spacing, settings)?;
                self.link(family, &x, theta, settings)
            })
            .collect();
        let linked: Vec<usize> = links.iter().flatten().copied().collect();
        if linked.is_empty() {
            let theta = samples.first().map(|p| p.theta).unwrap_or([f64::NAN, f64::NAN]);
            return Err(Error::InconclusiveMembership { curve: curve.id, theta });
        }
        let hit = linked.iter().copied().find(|&k| sz.contains(&self.component[k]));
        Ok(MembershipEvidence {
            curve: curve.id,
            member: hit.is_some(),
            linked_samples: linked.len(),
            tried_samples: samples.len(),
            witness: hit.map(|k| self.witness(k)).unwrap_or_default(),
        })
    }
}

fn on_edge(family: &FamilySpec, theta: Theta) -> bool {
    let u = family.bounds.to_unit(theta);
    let k = match family.bounds.sz_edge {
        crate::family::Edge::Left => (u[0]).abs(),
        crate::family::Edge::Right => (u[0] - 1.0).abs(),
        crate::family::Edge::Bottom => (u[1]).abs(),
        crate::family::Edge::Top => (u[1] - 1.0).abs(),
    };
    k < 1e-9
}

/// The 1-saddle next to a fold point, continued a box-scaled distance
/// `reach` into the parameter side where it exists.
pub fn saddle_side(family: &FamilySpec, fold: &FoldPoint, reach: f64, settings: &Settings) -> Option<(DVector<f64>, Theta)> {
    let a = fold.a_coeff?;
    let x = fold.state();
    let q = fold.q();
    let p = fold.nullpair.p_vec();
    let ft = family.jacobian_theta(&x, fold.theta).ok()?;
    let g = ft.tr_mul(&p);
    let width = family.bounds.width();
    // normal in box-scaled coordinates
    let gs = [g[0] * width[0], g[1] * width[1]];
    let gn = (gs[0] * gs[0] + gs[1] * gs[1]).sqrt();
    if gn == 0.0 {
        return None;
    }
    let dir_unit = [-a.signum() * gs[0] / gn, -a.signum() * gs[1] / gn];
    let at = |d: f64| [fold.theta[0] + d * dir_unit[0] * width[0], fold.theta[1] + d * dir_unit[1] * width[1]];
    let eps = 0.05 * reach;
    let t1 = at(eps);
    let alpha = g[0] * (t1[0] - fold.theta[0]) + g[1] * (t1[1] - fold.theta[1]);
    let xi = (-alpha / a).max(0.0).sqrt();
    let start = [1.0, -1.0].into_iter().find_map(|sgn| {
        let y = solve_equilibrium(family, t1, &(&x + &q * (sgn * xi)), settings).ok()?;
        is_one_saddle(family, &y, t1, settings).then_some(y)
    })?;
    let t2 = at(reach);
    let base: Vec<Theta> = (0..=8)
        .map(|k| {
            let s = k as f64 / 8.0;
            [t1[0] + s * (t2[0] - t1[0]), t1[1] + s * (t2[1] - t1[1])]
        })
        .collect();
    let lift = lift_curve(family, &base, &start, settings).ok()?;
    if !lift.classes.iter().all(|c| c.is_one_saddle()) {
        return None;
    }
    Some((DVector::from_column_slice(lift.fiber.last()?), t2))
}

/// Builds the saddle cloud and decides membership of one curve.
pub fn saddle_component_membership(
    family: &FamilySpec,
    curve: &FoldCurveRecord,
    _sz: &SZReport,
    settings: &Settings,
) -> Result<MembershipEvidence> {
    SaddleCloud::build(family, settings).membership(family, curve, settings)
}
