//! Deterministic offline backends.

use std::collections::BTreeMap;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{BackendError, ComponentHint, T2iBackend, T2iRequest, VlmBackend, VlmSvgRequest, VlmTask};
use crate::model::StyleReference;
use crate::segment::bucket;
use crate::svg::{
    discover_slots, fmt_num, node_at_mut, parse_svg, serialize_svg, transform_along, NodeKind, SvgDocument, SvgNode,
    ViewBox, ViewRect, AF_PLACEHOLDER_CLASS,
};

pub const MAX_MOCK_BLOCKS: usize = 12;
const PALETTE_LEVELS: u32 = 8;
const MAX_PALETTE: usize = 8;

pub const TAB10: [[u8; 3]; 10] = [
    [0x1f, 0x77, 0xb4],
    [0xff, 0x7f, 0x0e],
    [0x2c, 0xa0, 0x2c],
    [0xd6, 0x27, 0x28],
    [0x94, 0x67, 0xbd],
    [0x8c, 0x56, 0x4b],
    [0xe3, 0x77, 0xc2],
    [0x7f, 0x7f, 0x7f],
    [0xbc, 0xbd, 0x22],
    [0x17, 0xbe, 0xcf],
];

/// Dominant colors of a style reference, most frequent first.
///
/// Pixels are grouped by quantized bucket; near-white pixels (every channel
/// ≥ 224) are ignored as background. Each entry is the mean of its bucket.
pub fn style_palette(style: &StyleReference) -> Vec<[u8; 3]> {
    let mut buckets: BTreeMap<u32, (u64, [u64; 3])> = BTreeMap::new();
    for p in style.pixels().pixels() {
        if p.0.iter().all(|&c| c >= 224) {
            continue;
        }
        let key = (bucket(p.0[0], PALETTE_LEVELS) * PALETTE_LEVELS + bucket(p.0[1], PALETTE_LEVELS)) * PALETTE_LEVELS
            + bucket(p.0[2], PALETTE_LEVELS);
        let e = buckets.entry(key).or_default();
        e.0 += 1;
        for c in 0..3 {
            e.1[c] += u64::from(p.0[c]);
        }
    }
    let mut ranked: Vec<(u32, u64, [u64; 3])> = buckets.into_iter().map(|(k, (n, s))| (k, n, s)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
        .into_iter()
        .take(MAX_PALETTE)
        .map(|(_, n, s)| s.map(|v| ((v + n / 2) / n) as u8))
        .collect()
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Rect,
    Circle,
    Rounded,
}

/// Text-to-image stand-in: one flat shape per text block on a white canvas.
#[derive(Debug, Clone, Default)]
pub struct MockT2iBackend {
    blank: bool,
}

impl MockT2iBackend {
    pub fn new() -> Self {
        Self { blank: false }
    }

    /// Produces an empty white canvas, for exercising failure paths.
    pub fn blank() -> Self {
        Self { blank: true }
    }

    fn rng(req: &T2iRequest) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(req.text.body.as_bytes());
        h.update([0]);
        if let Some(style) = &req.style {
            h.update(style.content_hash().as_bytes());
        }
        h.update([0]);
        h.update(req.seed.unwrap_or(0).to_le_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

fn inside(shape: Shape, x: f64, y: f64, r: [f64; 4]) -> bool {
    let [x0, y0, x1, y1] = r;
    if x < x0 || x >= x1 || y < y0 || y >= y1 {
        return false;
    }
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let half = ((x1 - x0).min(y1 - y0)) / 2.0;
    match shape {
        Shape::Rect => true,
        Shape::Circle => (x - cx).powi(2) + (y - cy).powi(2) <= half * half,
        Shape::Rounded => {
            let rr = half * 0.4;
            let qx = x.clamp(x0 + rr, x1 - rr);
            let qy = y.clamp(y0 + rr, y1 - rr);
            (x - qx).powi(2) + (y - qy).powi(2) <= rr * rr
        }
    }
}

impl T2iBackend for MockT2iBackend {
    fn name(&self) -> &str {
        "mock-t2i"
    }

    fn generate(&self, req: &T2iRequest) -> Result<RgbImage, BackendError> {
        req.text.for_generation().map_err(|_| BackendError::EmptyInput)?;
        let (w, h) = (req.target_dims.width, req.target_dims.height);
        let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
        if self.blank {
            return Ok(img);
        }
        let palette = match req.style.as_ref().map(style_palette) {
            Some(p) if !p.is_empty() => p,
            _ => TAB10.to_vec(),
        };
        let n = req.text.blocks().len().clamp(1, MAX_MOCK_BLOCKS);
        let cols = (n as f64).sqrt().ceil() as usize;
        let rows = n.div_ceil(cols);
        let (cw, ch) = (f64::from(w) / cols as f64, f64::from(h) / rows as f64);
        let mut rng = Self::rng(req);
        for i in 0..n {
            let shape = [Shape::Rect, Shape::Circle, Shape::Rounded][i % 3];
            let (col, row) = ((i % cols) as f64, (i / cols) as f64);
            let jx = rng.random_range(-0.1..=0.1) * cw;
            let jy = rng.random_range(-0.1..=0.1) * ch;
            let (mx, my) = ((col + 0.5) * cw + jx, (row + 0.5) * ch + jy);
            let (sw, sh) = match shape {
                Shape::Circle => {
                    let d = 0.6 * cw.min(ch);
                    (d, d)
                }
                _ => (0.6 * cw, 0.6 * ch),
            };
            let r = [(mx - sw / 2.0).round(), (my - sh / 2.0).round(), (mx + sw / 2.0).round(), (my + sh / 2.0).round()];
            let color = Rgb(palette[i % palette.len()]);
            let (x0, y0) = (r[0].max(0.0) as u32, r[1].max(0.0) as u32);
            let (x1, y1) = ((r[2].max(0.0) as u32).min(w), (r[3].max(0.0) as u32).min(h));
            for y in y0..y1 {
                for x in x0..x1 {
                    if inside(shape, f64::from(x) + 0.5, f64::from(y) + 0.5, r) {
                        img.put_pixel(x, y, color);
                    }
                }
            }
        }
        Ok(img)
    }
}

/// Placeholder template whose slots are exactly the hinted boxes.
pub fn faithful_template(view_box: crate::model::Dims, hints: &[ComponentHint]) -> SvgDocument {
    let vb = ViewBox::new(0.0, 0.0, f64::from(view_box.width), f64::from(view_box.height))
        .expect("draft dimensions are positive");
    let mut doc = SvgDocument::new(vb);
    for hint in hints {
        doc.children.push(placeholder_node(hint));
    }
    doc
}

fn placeholder_node(hint: &ComponentHint) -> SvgNode {
    let b = hint.bbox;
    let fill = format!("#{:02x}{:02x}{:02x}", hint.tone[0], hint.tone[1], hint.tone[2]);
    let rect = SvgNode::new(NodeKind::Rect)
        .with_attr("x", b.x)
        .and_then(|n| n.with_attr("y", b.y))
        .and_then(|n| n.with_attr("width", b.w))
        .and_then(|n| n.with_attr("height", b.h))
        .and_then(|n| n.with_attr("fill", &fill))
        .expect("placeholder attributes are valid");
    let mut g = SvgNode::new(NodeKind::Group)
        .with_attr("id", format!("AF-{}", hint.af_id))
        .and_then(|n| n.with_attr("class", AF_PLACEHOLDER_CLASS))
        .and_then(|n| n.with_attr("data-af", hint.af_id))
        .expect("placeholder attributes are valid");
    g.children.push(rect);
    g
}

/// Moves every slot rect of `svg` to `target(hint, current)` in view-box
/// units, keeping all other nodes. Unparseable input comes back unchanged.
pub fn reposition_slots(svg: &str, hints: &[ComponentHint], target: impl Fn(&ComponentHint, ViewRect) -> ViewRect) -> String {
    let Ok(mut doc) = parse_svg(svg) else { return svg.to_string() };
    for slot in discover_slots(&doc) {
        let Some(hint) = hints.iter().find(|h| h.af_id == slot.af_id) else { continue };
        let mut rect_path = slot.path.clone();
        rect_path.push(0);
        let Some(tf) = transform_along(&doc, &rect_path) else { continue };
        let local = tf.inverse().apply_rect(&target(hint, slot.geometry));
        if let Some(rect) = node_at_mut(&mut doc, &rect_path) {
            for (name, v) in [("x", local.x), ("y", local.y), ("width", local.w), ("height", local.h)] {
                let _ = rect.set_attr(name, &fmt_num(v));
            }
        }
    }
    serialize_svg(&doc)
}

/// VLM stand-in that reads geometry straight from the component hints.
///
/// Templates place each slot on its bounding box; refinement puts every
/// slot back on its box.
#[derive(Debug, Clone, Copy, Default)]
pub struct GeometryFaithfulVlm;

impl VlmBackend for GeometryFaithfulVlm {
    fn name(&self) -> &str {
        "mock-vlm"
    }

    fn complete(&self, req: &VlmSvgRequest) -> Result<String, BackendError> {
        Ok(match req.task {
            VlmTask::Template => serialize_svg(&faithful_template(req.view_box, &req.components)),
            VlmTask::Refine => {
                let code = req.svg_code.as_deref().unwrap_or_default();
                reposition_slots(code, &req.components, |h, _| bbox_rect(h))
            }
        })
    }
}

/// Refinement stand-in that keeps slot sizes and centers each slot on its
/// mask centroid.
#[derive(Debug, Clone, Copy, Default)]
pub struct SnapToCentroidVlm;

impl VlmBackend for SnapToCentroidVlm {
    fn name(&self) -> &str {
        "mock-vlm-snap"
    }

    fn complete(&self, req: &VlmSvgRequest) -> Result<String, BackendError> {
        Ok(match req.task {
            VlmTask::Template => serialize_svg(&faithful_template(req.view_box, &req.components)),
            VlmTask::Refine => {
                let code = req.svg_code.as_deref().unwrap_or_default();
                reposition_slots(code, &req.components, |h, cur| ViewRect {
                    x: h.centroid.x - cur.w / 2.0,
                    y: h.centroid.y - cur.h / 2.0,
                    ..cur
                })
            }
        })
    }
}

fn bbox_rect(h: &ComponentHint) -> ViewRect {
    let b = h.bbox;
    ViewRect { x: f64::from(b.x), y: f64::from(b.y), w: f64::from(b.w), h: f64::from(b.h) }
}
