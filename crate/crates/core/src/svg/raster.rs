//! Deterministic preview renderer for the subset.
//!
//! A pixel is covered when its center `(px + 0.5, py + 0.5)` falls inside the
//! shape; rect edges are half-open. No anti-aliasing.

use base64::Engine as _;
use image::{Rgb, RgbImage, RgbaImage};

use super::template::{parse_af_id, AF_PLACEHOLDER_CLASS};
use super::{Affine, NodeKind, PathCommand, SvgDocument, SvgNode};
use crate::font;
use crate::index::{label_color, token};
use crate::model::Point;

/// Largest preview edge; bigger requests are clamped.
pub const MAX_PREVIEW_EDGE: u32 = 8192;
const CURVE_STEPS: usize = 16;

pub fn rgb_from_hex(hex: &str) -> Option<[u8; 3]> {
    let h = hex.strip_prefix('#')?;
    if h.len() != 6 || !h.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    let v = u32::from_str_radix(h, 16).ok()?;
    Some([(v >> 16) as u8, (v >> 8) as u8, v as u8])
}

#[derive(Clone, Copy)]
struct Paint {
    fill: Option<[u8; 3]>,
    stroke: Option<[u8; 3]>,
    stroke_width: f64,
    opacity: f64,
    font_size: f64,
}

impl Paint {
    fn inherit(&self, node: &SvgNode) -> Paint {
        let color = |name: &str, current: Option<[u8; 3]>| match node.attr(name) {
            Some("none") => None,
            Some(v) => rgb_from_hex(v).or(current),
            None => current,
        };
        Paint {
            fill: color("fill", self.fill),
            stroke: color("stroke", self.stroke),
            stroke_width: node.num("stroke-width").unwrap_or(self.stroke_width),
            opacity: self.opacity * node.num("opacity").unwrap_or(1.0),
            font_size: node.num("font-size").unwrap_or(self.font_size),
        }
    }
}

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn blend(&mut self, x: i64, y: i64, color: [u8; 3], alpha: f64) {
        if x < 0 || y < 0 || x >= i64::from(self.img.width()) || y >= i64::from(self.img.height()) || alpha <= 0.0 {
            return;
        }
        let px = self.img.get_pixel_mut(x as u32, y as u32);
        if alpha >= 1.0 {
            *px = Rgb(color);
            return;
        }
        for (dst, &src) in px.0.iter_mut().zip(&color) {
            let v = f64::from(src) * alpha + f64::from(*dst) * (1.0 - alpha);
            *dst = v.round().clamp(0.0, 255.0) as u8;
        }
    }

    /// Pixel index range whose centers lie in `[lo, hi)`, clamped to `n`.
    fn span(lo: f64, hi: f64, n: u32) -> (i64, i64) {
        let a = (lo - 0.5).ceil().max(0.0);
        let b = (hi - 0.5).ceil().min(f64::from(n));
        // Also catches NaN bounds.
        if a.partial_cmp(&b) != Some(std::cmp::Ordering::Less) {
            return (0, 0);
        }
        (a as i64, b as i64)
    }

    fn fill_where(&mut self, bounds: [f64; 4], color: [u8; 3], alpha: f64, inside: impl Fn(f64, f64) -> bool) {
        let (x0, x1) = Self::span(bounds[0], bounds[2], self.img.width());
        let (y0, y1) = Self::span(bounds[1], bounds[3], self.img.height());
        for y in y0..y1 {
            for x in x0..x1 {
                if inside(x as f64 + 0.5, y as f64 + 0.5) {
                    self.blend(x, y, color, alpha);
                }
            }
        }
    }

    fn stroke_segments(&mut self, segs: &[(Point, Point)], width: f64, color: [u8; 3], alpha: f64) {
        let half = (width / 2.0).max(0.5);
        for (a, b) in segs {
            let bounds = [a.x.min(b.x) - half, a.y.min(b.y) - half, a.x.max(b.x) + half, a.y.max(b.y) + half];
            let (a, b) = (*a, *b);
            self.fill_where(bounds, color, alpha, |x, y| segment_distance(Point::new(x, y), a, b) <= half);
        }
    }
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) };
    p.distance(&Point::new(a.x + t * dx, a.y + t * dy))
}

fn flatten(cmds: &[PathCommand], tf: &Affine) -> Vec<Vec<Point>> {
    let mut polys: Vec<Vec<Point>> = Vec::new();
    let mut current: Vec<Point> = Vec::new();
    let mut start = Point::new(0.0, 0.0);
    for cmd in cmds {
        match *cmd {
            PathCommand::MoveTo(p) => {
                if current.len() > 1 {
                    polys.push(std::mem::take(&mut current));
                }
                current.clear();
                start = tf.apply(p);
                current.push(start);
            }
            PathCommand::LineTo(p) => current.push(tf.apply(p)),
            PathCommand::CubicTo(c1, c2, p) => {
                let p0 = *current.last().unwrap_or(&start);
                let (c1, c2, p3) = (tf.apply(c1), tf.apply(c2), tf.apply(p));
                for i in 1..=CURVE_STEPS {
                    let t = i as f64 / CURVE_STEPS as f64;
                    let u = 1.0 - t;
                    let x = u * u * u * p0.x + 3.0 * u * u * t * c1.x + 3.0 * u * t * t * c2.x + t * t * t * p3.x;
                    let y = u * u * u * p0.y + 3.0 * u * u * t * c1.y + 3.0 * u * t * t * c2.y + t * t * t * p3.y;
                    current.push(Point::new(x, y));
                }
            }
            PathCommand::Close => {
                current.push(start);
                if current.len() > 1 {
                    polys.push(std::mem::take(&mut current));
                }
                current.push(start);
            }
        }
    }
    if current.len() > 1 {
        polys.push(current);
    }
    polys
}

/// Nonzero-winding scanline fill of closed polygons.
fn fill_polygons(canvas: &mut Canvas, polys: &[Vec<Point>], color: [u8; 3], alpha: f64) {
    let pts = polys.iter().flatten();
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        y_lo = y_lo.min(p.y);
        y_hi = y_hi.max(p.y);
    }
    let (r0, r1) = Canvas::span(y_lo, y_hi, canvas.img.height());
    let mut crossings: Vec<(f64, i32)> = Vec::new();
    for row in r0..r1 {
        let yc = row as f64 + 0.5;
        crossings.clear();
        for poly in polys {
            let n = poly.len();
            for i in 0..n {
                let a = poly[i];
                let b = poly[(i + 1) % n];
                if (a.y <= yc) != (b.y <= yc) {
                    let x = a.x + (yc - a.y) / (b.y - a.y) * (b.x - a.x);
                    crossings.push((x, if b.y > a.y { 1 } else { -1 }));
                }
            }
        }
        crossings.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut winding = 0;
        for pair in crossings.windows(2) {
            winding += pair[0].1;
            if winding != 0 {
                let (x0, x1) = Canvas::span(pair[0].0, pair[1].0, canvas.img.width());
                for x in x0..x1 {
                    canvas.blend(x, row, color, alpha);
                }
            }
        }
    }
}

fn rect_outline(r: [f64; 4]) -> Vec<(Point, Point)> {
    let [x0, y0, x1, y1] = r;
    let c = [Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)];
    (0..4).map(|i| (c[i], c[(i + 1) % 4])).collect()
}

fn decode_data_png(href: &str) -> Option<RgbaImage> {
    let b64 = href.strip_prefix("data:image/png;base64,")?;
    let bytes = base64::engine::general_purpose::STANDARD.decode(b64.trim()).ok()?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).ok().map(|i| i.to_rgba8())
}

fn draw_node(canvas: &mut Canvas, node: &SvgNode, parent_tf: &Affine, parent_paint: &Paint) {
    let tf = parent_tf.then_inner(&node.transform());
    let paint = parent_paint.inherit(node);
    let stroke_px = paint.stroke_width * (tf.sx.abs() + tf.sy.abs()) / 2.0;
    let num = |name: &str| node.num(name).unwrap_or(0.0);
    match node.kind() {
        NodeKind::Group => {
            for child in &node.children {
                draw_node(canvas, child, &tf, &paint);
            }
            if node.has_class(AF_PLACEHOLDER_CLASS) {
                draw_slot_token(canvas, node, &tf);
            }
        }
        NodeKind::Rect => {
            let a = tf.apply(Point::new(num("x"), num("y")));
            let b = tf.apply(Point::new(num("x") + num("width"), num("y") + num("height")));
            let r = [a.x.min(b.x), a.y.min(b.y), a.x.max(b.x), a.y.max(b.y)];
            let rx = node.num("rx").or(node.num("ry")).unwrap_or(0.0) * tf.sx.abs();
            let ry = node.num("ry").or(node.num("rx")).unwrap_or(0.0) * tf.sy.abs();
            let rx = rx.min((r[2] - r[0]) / 2.0);
            let ry = ry.min((r[3] - r[1]) / 2.0);
            if let Some(fill) = paint.fill {
                canvas.fill_where(r, fill, paint.opacity, |x, y| {
                    if !(x >= r[0] && x < r[2] && y >= r[1] && y < r[3]) {
                        return false;
                    }
                    if rx <= 0.0 || ry <= 0.0 {
                        return true;
                    }
                    let cx = x.clamp(r[0] + rx, r[2] - rx);
                    let cy = y.clamp(r[1] + ry, r[3] - ry);
                    let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
                    dx * dx + dy * dy <= 1.0
                });
            }
            if let Some(stroke) = paint.stroke {
                canvas.stroke_segments(&rect_outline(r), stroke_px, stroke, paint.opacity);
            }
        }
        NodeKind::Circle => {
            let c = tf.apply(Point::new(num("cx"), num("cy")));
            let (rx, ry) = (num("r") * tf.sx.abs(), num("r") * tf.sy.abs());
            if rx <= 0.0 || ry <= 0.0 {
                return;
            }
            let bounds = [c.x - rx, c.y - ry, c.x + rx, c.y + ry];
            if let Some(fill) = paint.fill {
                canvas.fill_where(bounds, fill, paint.opacity, |x, y| {
                    let (dx, dy) = ((x - c.x) / rx, (y - c.y) / ry);
                    dx * dx + dy * dy <= 1.0
                });
            }
            if let Some(stroke) = paint.stroke {
                let half = (stroke_px / 2.0).max(0.5);
                let outer = [bounds[0] - half, bounds[1] - half, bounds[2] + half, bounds[3] + half];
                canvas.fill_where(outer, stroke, paint.opacity, |x, y| {
                    let (dx, dy) = (x - c.x, y - c.y);
                    let d = (dx * dx + dy * dy).sqrt();
                    let r = (rx + ry) / 2.0;
                    (d - r).abs() <= half
                });
            }
        }
        NodeKind::Line => {
            if let Some(stroke) = paint.stroke {
                let a = tf.apply(Point::new(num("x1"), num("y1")));
                let b = tf.apply(Point::new(num("x2"), num("y2")));
                canvas.stroke_segments(&[(a, b)], stroke_px, stroke, paint.opacity);
            }
        }
        NodeKind::Path => {
            let cmds = node.attr("d").and_then(|d| PathCommand::parse_path(d).ok()).unwrap_or_default();
            let polys = flatten(&cmds, &tf);
            if let Some(fill) = paint.fill {
                fill_polygons(canvas, &polys, fill, paint.opacity);
            }
            if let Some(stroke) = paint.stroke {
                let segs: Vec<(Point, Point)> =
                    polys.iter().flat_map(|p| p.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>()).collect();
                canvas.stroke_segments(&segs, stroke_px, stroke, paint.opacity);
            }
        }
        NodeKind::Text => {
            let Some(fill) = paint.fill else { return };
            let size_px = paint.font_size * tf.sy.abs();
            let scale = ((size_px / font::GLYPH_H as f64).round() as u32).clamp(1, 64);
            let text = node.text().trim();
            let (w, h) = font::text_extent(text, scale);
            let anchor = tf.apply(Point::new(num("x"), num("y")));
            let left = match node.attr("text-anchor") {
                Some("middle") => anchor.x - f64::from(w) / 2.0,
                Some("end") => anchor.x - f64::from(w),
                _ => anchor.x,
            };
            let top = anchor.y - f64::from(h);
            font::draw_text(text, left.round() as i64, top.round() as i64, scale, |x, y| {
                canvas.blend(x, y, fill, paint.opacity)
            });
        }
        NodeKind::Image => {
            let Some(src) = node.attr("href").and_then(decode_data_png) else { return };
            let a = tf.apply(Point::new(num("x"), num("y")));
            let b = tf.apply(Point::new(num("x") + num("width"), num("y") + num("height")));
            let r = [a.x.min(b.x), a.y.min(b.y), a.x.max(b.x), a.y.max(b.y)];
            let (w, h) = (r[2] - r[0], r[3] - r[1]);
            if w <= 0.0 || h <= 0.0 || src.width() == 0 || src.height() == 0 {
                return;
            }
            let (x0, x1) = Canvas::span(r[0], r[2], canvas.img.width());
            let (y0, y1) = Canvas::span(r[1], r[3], canvas.img.height());
            for y in y0..y1 {
                let v = ((y as f64 + 0.5 - r[1]) / h * f64::from(src.height())) as u32;
                for x in x0..x1 {
                    let u = ((x as f64 + 0.5 - r[0]) / w * f64::from(src.width())) as u32;
                    let p = src.get_pixel(u.min(src.width() - 1), v.min(src.height() - 1));
                    let alpha = f64::from(p.0[3]) / 255.0 * paint.opacity;
                    canvas.blend(x, y, [p.0[0], p.0[1], p.0[2]], alpha);
                }
            }
        }
    }
}

/// Overlays the `<AF>k` token centered on a placeholder's rect.
fn draw_slot_token(canvas: &mut Canvas, group: &SvgNode, tf: &Affine) {
    let Some(k) = group.id().and_then(parse_af_id) else { return };
    let [rect] = group.children.as_slice() else { return };
    if rect.kind() != NodeKind::Rect {
        return;
    }
    let rtf = tf.then_inner(&rect.transform());
    let num = |name: &str| rect.num(name).unwrap_or(0.0);
    let a = rtf.apply(Point::new(num("x"), num("y")));
    let b = rtf.apply(Point::new(num("x") + num("width"), num("y") + num("height")));
    let (x0, y0, x1, y1) = (a.x.min(b.x), a.y.min(b.y), a.x.max(b.x), a.y.max(b.y));
    let tone = rect.attr("fill").and_then(rgb_from_hex).unwrap_or([0, 0, 0]);
    let ink = label_color(tone);
    let label = token(k);
    let scale = (((x1 - x0).min(y1 - y0) / 3.0 / font::GLYPH_H as f64) as u32).clamp(1, 64);
    let (w, h) = font::text_extent(&label, scale);
    let left = ((x0 + x1) / 2.0 - f64::from(w) / 2.0).round() as i64;
    let top = ((y0 + y1) / 2.0 - f64::from(h) / 2.0).round() as i64;
    font::draw_text(&label, left, top, scale, |x, y| {
        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
        if cx >= x0 && cx < x1 && cy >= y0 && cy < y1 {
            canvas.blend(x, y, ink, 1.0);
        }
    });
}

/// Renders `doc` at `out_width` pixels; height keeps the view-box aspect.
pub fn rasterize_preview(doc: &SvgDocument, out_width: u32) -> RgbImage {
    let vb = doc.view_box;
    let width = out_width.clamp(1, MAX_PREVIEW_EDGE);
    let s = f64::from(width) / vb.width;
    let height = ((vb.height * s).round() as u32).clamp(1, MAX_PREVIEW_EDGE);
    let mut canvas = Canvas { img: RgbImage::from_pixel(width, height, Rgb([255, 255, 255])) };
    let tf = Affine { sx: s, sy: s, tx: -vb.min_x * s, ty: -vb.min_y * s };
    let paint = Paint { fill: Some([0, 0, 0]), stroke: None, stroke_width: 1.0, opacity: 1.0, font_size: 16.0 };
    for node in &doc.children {
        draw_node(&mut canvas, node, &tf, &paint);
    }
    canvas.img
}
