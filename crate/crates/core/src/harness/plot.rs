//! Standalone SVG figures: task-space scenes with barriers and paths,
//! learning curves and landscape heatmaps.

use std::fmt::Write as _;

use crate::geometry::{Bounds, Point2, RegionSet};
use crate::homotopy::Trajectory;
use crate::rl::LandscapeGrid;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Affine map from world coordinates to SVG pixels with `y` pointing up in
/// the world and down on screen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub world: Bounds,
    pub scale: f64,
    pub margin: f64,
}

impl Frame {
    /// Fits `world` into a square of `size` pixels plus margins.
    pub fn fit(world: Bounds, size: f64, margin: f64) -> Self {
        let span = world.width().max(world.height()).max(1e-12);
        Frame {
            world,
            scale: size / span,
            margin,
        }
    }

    pub fn width(&self) -> f64 {
        self.world.width() * self.scale + 2.0 * self.margin
    }

    pub fn height(&self) -> f64 {
        self.world.height() * self.scale + 2.0 * self.margin
    }

    pub fn to_svg(&self, p: Point2) -> (f64, f64) {
        (
            self.margin + (p.x - self.world.min.x) * self.scale,
            self.margin + (self.world.max.y - p.y) * self.scale,
        )
    }

    pub fn to_world(&self, x: f64, y: f64) -> Point2 {
        Point2::new(
            self.world.min.x + (x - self.margin) / self.scale,
            self.world.max.y - (y - self.margin) / self.scale,
        )
    }
}

fn num(v: f64) -> String {
    format!("{v:.3}")
}

fn header(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        num(w),
        num(h),
        num(w),
        num(h)
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, num(w), num(h));
}

fn polygon_points(frame: &Frame, vertices: &[Point2]) -> String {
    vertices
        .iter()
        .map(|v| {
            let (x, y) = frame.to_svg(*v);
            format!("{},{}", num(x), num(y))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A path to draw in a scene.
pub struct Layer<'a> {
    pub label: &'a str,
    pub trajectory: &'a Trajectory,
}

/// Field outline, the full barrier, an optional active subset and the
/// given paths.
pub fn scene_svg(title: &str, field: Bounds, barrier: &RegionSet, active: Option<&RegionSet>, layers: &[Layer]) -> String {
    let frame = Frame::fit(field, 400.0, 30.0);
    let mut out = String::new();
    header(&mut out, frame.width(), frame.height());
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let corners = [
        field.min,
        Point2::new(field.max.x, field.min.y),
        field.max,
        Point2::new(field.min.x, field.max.y),
    ];
    let _ = writeln!(
        out,
        r#"<polygon class="field" points="{}" fill="none" stroke="black"/>"#,
        polygon_points(&frame, &corners)
    );
    for part in &barrier.parts {
        let _ = writeln!(
            out,
            r##"<polygon class="barrier" points="{}" fill="#bbbbbb" stroke="#555555"/>"##,
            polygon_points(&frame, part.vertices())
        );
    }
    if let Some(active) = active {
        for part in &active.parts {
            let _ = writeln!(
                out,
                r##"<polygon class="active" points="{}" fill="#e377c2" fill-opacity="0.6" stroke="none"/>"##,
                polygon_points(&frame, part.vertices())
            );
        }
    }
    for (i, layer) in layers.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<polyline class="path" data-label="{}" points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            escape(layer.label),
            polygon_points(&frame, layer.trajectory.states())
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{colour}">{}</text>"#,
            num(frame.margin + 4.0),
            num(frame.margin + 14.0 * (i as f64 + 1.0)),
            escape(layer.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Mean evaluation return against cumulative steps, one polyline per
/// stage, with dashed stage boundaries.
pub fn curve_svg(title: &str, stages: &[(String, Vec<(u64, f64)>)]) -> String {
    let points: Vec<(u64, f64)> = stages.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let (w, h, m) = (480.0, 300.0, 40.0);
    let mut out = String::new();
    header(&mut out, w + 2.0 * m, h + 2.0 * m);
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    if points.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let x_max = points.iter().map(|p| p.0).max().unwrap_or(1).max(1) as f64;
    let y_min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let y_max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let y_span = (y_max - y_min).max(1e-9);
    let map = |s: u64, r: f64| (m + s as f64 / x_max * w, m + (y_max - r) / y_span * h);
    let _ = writeln!(
        out,
        r#"<rect class="axes" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        num(m),
        num(m),
        num(w),
        num(h)
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11">{}</text>"#, num(2.0), num(m), num(y_max));
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11">{}</text>"#, num(2.0), num(m + h), num(y_min));
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="11">{} steps</text>"#,
        num(m + w - 60.0),
        num(m + h + 16.0),
        x_max
    );
    for (i, (label, pts)) in stages.iter().enumerate() {
        if pts.is_empty() {
            continue;
        }
        let colour = PALETTE[i % PALETTE.len()];
        let (x0, _) = map(pts[0].0, pts[0].1);
        let _ = writeln!(
            out,
            r##"<line class="stage-start" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999999" stroke-dasharray="4 3"/>"##,
            num(x0),
            num(m),
            num(x0),
            num(m + h)
        );
        let coords: Vec<String> = pts
            .iter()
            .map(|&(s, r)| {
                let (x, y) = map(s, r);
                format!("{},{}", num(x), num(y))
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="curve" data-label="{}" points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
            escape(label),
            coords.join(" ")
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Heatmap of `grid.losses` (warm is high) with the segment `a → b`.
pub fn heatmap_svg(title: &str, grid: &LandscapeGrid, a: (f64, f64), b: (f64, f64)) -> String {
    let n = grid.axis.len();
    let cell = 16.0;
    let m = 30.0;
    let size = n as f64 * cell;
    let mut out = String::new();
    header(&mut out, size + 2.0 * m, size + 2.0 * m);
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let values: Vec<f64> = grid.losses.iter().flatten().copied().collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    // Row i is θ1 (horizontal), column j is θ2 (vertical, up).
    for (i, row) in grid.losses.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let t = ((v - lo) / span).clamp(0.0, 1.0);
            let (r, g, bl) = (
                (255.0 * t).round() as u8,
                (255.0 * (1.0 - (2.0 * t - 1.0).abs())).round() as u8,
                (255.0 * (1.0 - t)).round() as u8,
            );
            let _ = writeln!(
                out,
                r##"<rect x="{}" y="{}" width="{}" height="{}" fill="#{r:02x}{g:02x}{bl:02x}"/>"##,
                num(m + i as f64 * cell),
                num(m + (n - 1 - j) as f64 * cell),
                num(cell),
                num(cell)
            );
        }
    }
    let step = if n > 1 { grid.axis[1] - grid.axis[0] } else { 1.0 };
    let at = |t: (f64, f64)| {
        (
            m + ((t.0 - grid.axis[0]) / step + 0.5) * cell,
            m + (n as f64 - 0.5 - (t.1 - grid.axis[0]) / step) * cell,
        )
    };
    let (x1, y1) = at(a);
    let (x2, y2) = at(b);
    let _ = writeln!(
        out,
        r#"<line class="segment" x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="2"/>"#,
        num(x1),
        num(y1),
        num(x2),
        num(y2)
    );
    let _ = writeln!(out, r#"<circle class="source" cx="{}" cy="{}" r="4" fill="white" stroke="black"/>"#, num(x1), num(y1));
    let _ = writeln!(out, r#"<circle class="target" cx="{}" cy="{}" r="4" fill="black"/>"#, num(x2), num(y2));
    out.push_str("</svg>\n");
    out
}
