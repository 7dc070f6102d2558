//! SVG bifurcation diagrams.
//!
//! Output is a pure function of the report and the options: every number is
//! printed with fixed precision and elements are emitted in report order.

use std::fmt::Write;

use crate::detect::{Codim2Kind, StabilityClass};
use crate::family::Theta;

use super::RunReport;

/// An extra parameter-space polyline drawn over the diagram.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub points: Vec<Theta>,
    pub color: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvgOptions {
    /// Side of the square parameter panel in pixels.
    pub size: f64,
    pub overlays: Vec<Overlay>,
    /// Draw the lifted S/Z branch beside the panel for scalar families.
    pub inset: bool,
}

impl Default for SvgOptions {
    fn default() -> Self {
        Self { size: 560.0, overlays: Vec::new(), inset: true }
    }
}

const MARGIN: f64 = 48.0;
const INSET_GAP: f64 = 40.0;
const MEMBER: &str = "#b03a2e";
const OTHER: &str = "#566573";

struct Frame {
    lo: Theta,
    hi: Theta,
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
}

impl Frame {
    fn map(&self, t: Theta) -> (f64, f64) {
        (
            self.x0 + (t[0] - self.lo[0]) / (self.hi[0] - self.lo[0]) * self.w,
            self.y0 + (self.hi[1] - t[1]) / (self.hi[1] - self.lo[1]) * self.h,
        )
    }

    fn polyline(&self, pts: impl Iterator<Item = Theta>) -> String {
        let mut s = String::new();
        for (i, t) in pts.enumerate() {
            let (x, y) = self.map(t);
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{x:.2},{y:.2}");
        }
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn glyph(out: &mut String, kind: Codim2Kind, x: f64, y: f64) {
    let r = 6.0;
    let _ = match kind {
        Codim2Kind::CuspStandard => writeln!(
            out,
            r#"<path d="M{:.2},{:.2} L{:.2},{:.2} L{:.2},{:.2} Z" fill="black"/>"#,
            x, y - r, x + r, y + r * 0.8, x - r, y + r * 0.8
        ),
        Codim2Kind::CuspDual => writeln!(
            out,
            r#"<path d="M{:.2},{:.2} L{:.2},{:.2} L{:.2},{:.2} Z" fill="white" stroke="black" stroke-width="1.5"/>"#,
            x, y - r, x + r, y + r * 0.8, x - r, y + r * 0.8
        ),
        Codim2Kind::BogdanovTakens => writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#1f618d"/>"##,
            x - r * 0.8, y - r * 0.8, 1.6 * r, 1.6 * r
        ),
        Codim2Kind::FoldHopf => writeln!(
            out,
            r##"<path d="M{:.2},{:.2} L{:.2},{:.2} L{:.2},{:.2} L{:.2},{:.2} Z" fill="#d68910"/>"##,
            x, y - r, x + r, y, x, y + r, x - r, y
        ),
    };
}

fn class_color(c: StabilityClass) -> &'static str {
    match c {
        StabilityClass::Attractor => "#1f618d",
        StabilityClass::Saddle(1) => MEMBER,
        _ => "#7f8c8d",
    }
}

/// Renders the parameter box, the boundary events, the fold curves (curves
/// bordering the saddle component highlighted) and the codimension-2
/// glyphs. Scalar families with an S/Z report get an inset of the boundary
/// branch, state against boundary arclength.
pub fn render_svg(report: &RunReport, options: &SvgOptions) -> String {
    let b = report.family.bounds;
    let size = options.size;
    let inset = options.inset && report.family.dim == 1 && report.sz.is_some();
    let width = 2.0 * MARGIN + size + if inset { INSET_GAP + 0.6 * size } else { 0.0 };
    let height = 2.0 * MARGIN + size;
    let frame = Frame { lo: b.lo, hi: b.hi, x0: MARGIN, y0: MARGIN, w: size, h: size };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let title = match &report.verdict {
        Some(v) if v.fh_found => format!("{}: fold-Hopf on the saddle component", report.family.name),
        Some(v) => format!("{}: {} cusps on the saddle component", report.family.name, v.cusp_count_total),
        None => report.family.name.clone(),
    };
    let _ = writeln!(out, r#"<text x="{MARGIN:.0}" y="{:.0}" font-size="14">{}</text>"#, MARGIN - 20.0, escape(&title));
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN:.2}" y="{MARGIN:.2}" width="{size:.2}" height="{size:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">theta1 [{}, {}]</text>"#,
        MARGIN + size / 2.0,
        MARGIN + size + 30.0,
        b.lo[0],
        b.hi[0]
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">theta2 [{}, {}]</text>"#,
        MARGIN - 24.0,
        MARGIN + size / 2.0,
        MARGIN - 24.0,
        MARGIN + size / 2.0,
        b.lo[1],
        b.hi[1]
    );

    let (ea, eb) = b.edge_segment(b.sz_edge);
    let (x1, y1) = frame.map(ea);
    let (x2, y2) = frame.map(eb);
    let _ = writeln!(
        out,
        r##"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#117a65" stroke-width="4"/>"##
    );

    for c in &report.curves {
        let member = report.is_member(c.id);
        let (color, w) = if member { (MEMBER, 2.5) } else { (OTHER, 1.5) };
        let mut pts = frame.polyline(c.points.iter().map(|p| p.theta));
        if c.closed {
            if let Some(p) = c.points.first() {
                let (x, y) = frame.map(p.theta);
                let _ = write!(pts, " {x:.2},{y:.2}");
            }
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{w}" data-curve="{}"/>"#,
            c.id
        );
    }
    for ov in &options.overlays {
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5" stroke-dasharray="4 3"><title>{}</title></polyline>"#,
            frame.polyline(ov.points.iter().copied()),
            escape(&ov.color),
            escape(&ov.label)
        );
    }
    if let Some(sz) = &report.sz {
        for f in &sz.folds {
            let (x, y) = frame.map(f.theta);
            let _ = writeln!(out, r##"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="#117a65"/>"##);
        }
    }
    for m in &report.codim2 {
        let (x, y) = frame.map(m.theta);
        glyph(&mut out, m.kind, x, y);
    }

    if inset {
        let sz = report.sz.as_ref().expect("inset needs an S/Z report");
        let br = &sz.edge_branch;
        let s_max = br.s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s_min = br.s.iter().copied().fold(f64::INFINITY, f64::min);
        let (xmin, xmax) = br
            .points
            .iter()
            .map(|p| p.x[0])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let pad = 0.05 * (xmax - xmin).max(1e-9);
        let ix0 = MARGIN + size + INSET_GAP;
        let inset_frame = Frame {
            lo: [s_min, xmin - pad],
            hi: [s_max.max(s_min + 1e-9), xmax + pad],
            x0: ix0,
            y0: MARGIN,
            w: 0.6 * size,
            h: size,
        };
        let _ = writeln!(
            out,
            r#"<rect x="{ix0:.2}" y="{MARGIN:.2}" width="{:.2}" height="{size:.2}" fill="none" stroke="black"/>"#,
            0.6 * size
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">x over the {} edge</text>"#,
            ix0 + 0.3 * size,
            MARGIN + size + 30.0,
            sz.edge
        );
        for w in br.points.windows(2).zip(br.s.windows(2)) {
            let ((p, q), (s0, s1)) = ((&w.0[0], &w.0[1]), (w.1[0], w.1[1]));
            let (ax, ay) = inset_frame.map([s0, p.x[0]]);
            let (bx, by) = inset_frame.map([s1, q.x[0]]);
            let _ = writeln!(
                out,
                r#"<line x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{by:.2}" stroke="{}" stroke-width="2"/>"#,
                class_color(q.class)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::builtin;
    use crate::report::{RunReport, Timing};
    use crate::settings::Settings;

    #[test]
    fn empty_report_draws_the_box_only() {
        let fam = builtin("cusp1").unwrap();
        let r = RunReport::new(&fam, &Settings::default(), None, &[], None, Timing::default());
        let svg = render_svg(&r, &SvgOptions::default());
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(!svg.contains("<polyline"));
        assert_eq!(svg, render_svg(&r, &SvgOptions::default()));
    }

    #[test]
    fn text_is_escaped() {
        assert_eq!(escape("a<b & \"c\">"), "a&lt;b &amp; &quot;c&quot;&gt;");
    }
}
