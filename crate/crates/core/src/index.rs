//! Indexed structural layout: each component painted in one flat tone and
//! tagged with its `<AF>k` token on a neutral background.

use std::collections::BTreeMap;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::font;
use crate::model::{mask_centroid, Component, Dims, Point, SegmentationResult};

pub const BACKGROUND: [u8; 3] = [200, 200, 200];
pub const GOLDEN_ANGLE_DEG: f64 = 137.508;
pub const TONE_SATURATION: f64 = 0.55;
pub const TONE_VALUE: f64 = 0.85;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IndexError {
    #[error("mask of component {id} is {got:?}, draft is {want:?}")]
    DimensionMismatch { id: u32, got: Dims, want: Dims },
    #[error("{tones} tones supplied for {k} components")]
    ToneCount { tones: usize, k: usize },
    #[error("legend json: {0}")]
    Legend(String),
}

/// Identifier token drawn on component `k`.
pub fn token(k: u32) -> String {
    format!("<AF>{k}")
}

fn hsv_to_rgb(hue_deg: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let h = hue_deg.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to8 = |f: f64| ((f + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [to8(r), to8(g), to8(b)]
}

/// Golden-angle tones for components `1..=k_count`.
pub fn assign_tones(k_count: usize) -> Vec<[u8; 3]> {
    (1..=k_count)
        .map(|k| hsv_to_rgb((k as f64 * GOLDEN_ANGLE_DEG) % 360.0, TONE_SATURATION, TONE_VALUE))
        .collect()
}

/// Black on light tones, white on dark ones.
pub fn label_color(tone: [u8; 3]) -> [u8; 3] {
    let lum = (0.2126 * f64::from(tone[0]) + 0.7152 * f64::from(tone[1]) + 0.0722 * f64::from(tone[2])) / 255.0;
    if lum > 0.5 {
        [0, 0, 0]
    } else {
        [255, 255, 255]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Labels {
    Draw,
    Skip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexedLayout {
    pub pixels: RgbImage,
    pub legend: BTreeMap<u32, [u8; 3]>,
    pub label_anchors: BTreeMap<u32, Point>,
}

#[derive(Serialize, Deserialize)]
struct LegendEntry {
    tone: [u8; 3],
    anchor: [f64; 2],
}

impl IndexedLayout {
    pub fn dims(&self) -> Dims {
        Dims::new(self.pixels.width(), self.pixels.height())
    }

    /// `indexed.legend.json`: `{"<k>": {"tone": [r,g,b], "anchor": [x,y]}}`.
    pub fn legend_json(&self) -> String {
        let map: BTreeMap<String, LegendEntry> = self
            .legend
            .iter()
            .map(|(k, tone)| {
                let a = self.label_anchors.get(k).copied().unwrap_or(Point::new(0.0, 0.0));
                (k.to_string(), LegendEntry { tone: *tone, anchor: [a.x, a.y] })
            })
            .collect();
        serde_json::to_string_pretty(&map).expect("legend serializes")
    }

    pub fn from_parts(pixels: RgbImage, legend_json: &str) -> Result<Self, IndexError> {
        let map: BTreeMap<String, LegendEntry> =
            serde_json::from_str(legend_json).map_err(|e| IndexError::Legend(e.to_string()))?;
        let mut legend = BTreeMap::new();
        let mut label_anchors = BTreeMap::new();
        for (k, entry) in map {
            let k: u32 = k.parse().map_err(|_| IndexError::Legend(format!("bad component key `{k}`")))?;
            legend.insert(k, entry.tone);
            label_anchors.insert(k, Point::new(entry.anchor[0], entry.anchor[1]));
        }
        Ok(Self { pixels, legend, label_anchors })
    }
}

/// Centroid if it lands on the mask, else the center of the nearest mask pixel.
fn label_anchor(component: &Component) -> Point {
    let c = mask_centroid(&component.mask).expect("segmented masks are non-empty");
    let bm = component.mask.bitmap();
    let (cx, cy) = (c.x.floor() as i64, c.y.floor() as i64);
    if cx >= 0 && cy >= 0 && bm.get(cx as u32, cy as u32) {
        return c;
    }
    let mut best = (f64::INFINITY, Point::new(0.0, 0.0));
    let b = component.bbox;
    for y in b.y..b.bottom() {
        for x in b.x..b.right() {
            if bm.get(x, y) {
                let p = Point::new(f64::from(x) + 0.5, f64::from(y) + 0.5);
                let d = p.distance(&c);
                if d < best.0 {
                    best = (d, p);
                }
            }
        }
    }
    best.1
}

pub fn render_indexed_layout(
    dims: Dims,
    seg: &SegmentationResult,
    tones: &[[u8; 3]],
) -> Result<IndexedLayout, IndexError> {
    render_indexed_layout_with(dims, seg, tones, Labels::Draw)
}

pub fn render_indexed_layout_with(
    dims: Dims,
    seg: &SegmentationResult,
    tones: &[[u8; 3]],
    labels: Labels,
) -> Result<IndexedLayout, IndexError> {
    if tones.len() != seg.k_count() {
        return Err(IndexError::ToneCount { tones: tones.len(), k: seg.k_count() });
    }
    for c in seg.components() {
        let got = c.mask.bitmap().dims();
        if got != dims {
            return Err(IndexError::DimensionMismatch { id: c.id(), got, want: dims });
        }
    }

    let mut pixels = RgbImage::from_pixel(dims.width, dims.height, Rgb(BACKGROUND));
    let mut legend = BTreeMap::new();
    let mut label_anchors = BTreeMap::new();
    for (c, tone) in seg.components().iter().zip(tones) {
        let b = c.bbox;
        let bm = c.mask.bitmap();
        for y in b.y..b.bottom() {
            for x in b.x..b.right() {
                if bm.get(x, y) {
                    pixels.put_pixel(x, y, Rgb(*tone));
                }
            }
        }
        legend.insert(c.id(), *tone);
        label_anchors.insert(c.id(), label_anchor(c));
    }

    if labels == Labels::Draw {
        for (c, tone) in seg.components().iter().zip(tones) {
            let text = token(c.id());
            let b = c.bbox;
            let scale = (b.w.min(b.h) / 3 / font::GLYPH_H).max(1);
            let (tw, th) = font::text_extent(&text, scale);
            let anchor = label_anchors[&c.id()];
            let left = (anchor.x - f64::from(tw) / 2.0).round() as i64;
            let top = (anchor.y - f64::from(th) / 2.0).round() as i64;
            let ink = Rgb(label_color(*tone));
            let (x0, y0, x1, y1) = (i64::from(b.x), i64::from(b.y), i64::from(b.right()), i64::from(b.bottom()));
            font::draw_text(&text, left, top, scale, |x, y| {
                if x >= x0 && x < x1 && y >= y0 && y < y1 {
                    pixels.put_pixel(x as u32, y as u32, ink);
                }
            });
        }
    }
    Ok(IndexedLayout { pixels, legend, label_anchors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mask_to_bbox, Bitmap, ComponentMask};
    use std::collections::HashSet;

    /// Alternative HSV→RGB formulation: f(n) = v − v·s·max(0, min(k, 4−k, 1)),
    /// k = (n + h/60) mod 6.
    fn hsv_oracle(h: f64, s: f64, v: f64) -> [u8; 3] {
        let f = |n: f64| {
            let k = (n + h / 60.0) % 6.0;
            v - v * s * k.min(4.0 - k).clamp(0.0, 1.0)
        };
        [f(5.0), f(3.0), f(1.0)].map(|c| (c * 255.0).round() as u8)
    }

    fn seg_with(dims: Dims, rects: &[(u32, u32, u32, u32)]) -> SegmentationResult {
        let comps = rects
            .iter()
            .enumerate()
            .map(|(i, &(x, y, w, h))| {
                let mut bm = Bitmap::new(dims.width, dims.height);
                for yy in y..y + h {
                    for xx in x..x + w {
                        bm.set(xx, yy, true);
                    }
                }
                let mask = ComponentMask::new(i as u32 + 1, bm);
                Component { bbox: mask_to_bbox(&mask).unwrap(), mask }
            })
            .collect();
        SegmentationResult::new(dims, comps).unwrap()
    }

    #[test]
    fn zero_tones() {
        assert!(assign_tones(0).is_empty());
    }

    #[test]
    fn first_tone_matches_formula() {
        let tones = assign_tones(1);
        assert_eq!(tones[0], hsv_oracle(137.508, 0.55, 0.85));
        assert_eq!(tones[0], [98, 217, 132]);
    }

    #[test]
    fn tones_agree_with_alternative_formula() {
        for (k, tone) in assign_tones(256).iter().enumerate() {
            let h = ((k + 1) as f64 * 137.508) % 360.0;
            assert_eq!(*tone, hsv_oracle(h, 0.55, 0.85), "k={}", k + 1);
        }
    }

    #[test]
    fn twelve_tones_are_well_separated() {
        let tones = assign_tones(12);
        let mut min = f64::INFINITY;
        for i in 0..tones.len() {
            for j in i + 1..tones.len() {
                let d: f64 = (0..3).map(|c| (f64::from(tones[i][c]) - f64::from(tones[j][c])).powi(2)).sum::<f64>().sqrt();
                min = min.min(d);
            }
        }
        assert!(min > 16.0, "min distance {min}");
    }

    #[test]
    fn tones_injective_up_to_256() {
        let tones = assign_tones(256);
        let set: HashSet<_> = tones.iter().collect();
        assert_eq!(set.len(), 256);
        assert!(!set.contains(&BACKGROUND));
    }

    #[test]
    fn empty_layout_is_uniform_gray() {
        let dims = Dims::new(20, 20);
        let seg = SegmentationResult::new(dims, vec![]).unwrap();
        let layout = render_indexed_layout(dims, &seg, &[]).unwrap();
        assert!(layout.pixels.pixels().all(|p| p.0 == BACKGROUND));
        assert!(layout.legend.is_empty());
    }

    #[test]
    fn square_is_filled_with_its_tone() {
        let dims = Dims::new(40, 40);
        let seg = seg_with(dims, &[(10, 10, 12, 12)]);
        let tones = assign_tones(1);
        let layout = render_indexed_layout_with(dims, &seg, &tones, Labels::Skip).unwrap();
        for (x, y) in [(10, 10), (21, 21), (15, 12)] {
            assert_eq!(layout.pixels.get_pixel(x, y).0, tones[0]);
        }
        for (x, y) in [(9, 10), (22, 21), (15, 9), (15, 22)] {
            assert_eq!(layout.pixels.get_pixel(x, y).0, BACKGROUND);
        }
    }

    #[test]
    fn texture_suppressed_color_count() {
        let dims = Dims::new(50, 50);
        let seg = seg_with(dims, &[(2, 2, 10, 10), (20, 20, 15, 8)]);
        let layout = render_indexed_layout_with(dims, &seg, &assign_tones(2), Labels::Skip).unwrap();
        let colors: HashSet<_> = layout.pixels.pixels().map(|p| p.0).collect();
        assert_eq!(colors.len(), 3);
        for c in seg.components() {
            let tone = layout.legend[&c.id()];
            for y in 0..50 {
                for x in 0..50 {
                    assert_eq!(layout.pixels.get_pixel(x, y).0 == tone, c.mask.bitmap().get(x, y));
                }
            }
        }
    }

    #[test]
    fn labels_stay_inside_their_box() {
        let dims = Dims::new(120, 80);
        let seg = seg_with(dims, &[(5, 5, 60, 40), (80, 50, 30, 25)]);
        let tones = assign_tones(2);
        let plain = render_indexed_layout_with(dims, &seg, &tones, Labels::Skip).unwrap();
        let labeled = render_indexed_layout(dims, &seg, &tones).unwrap();
        let mut changed = 0;
        for (x, y, p) in labeled.pixels.enumerate_pixels() {
            if p != plain.pixels.get_pixel(x, y) {
                changed += 1;
                assert!(seg.components().iter().any(|c| c.bbox.contains_point(Point::new(f64::from(x), f64::from(y)))));
            }
        }
        assert!(changed > 0);
        for c in seg.components() {
            assert!(c.bbox.contains_point(labeled.label_anchors[&c.id()]));
        }
    }

    #[test]
    fn concave_mask_anchor_is_clamped_onto_mask() {
        // A ring: the centroid falls in the hole.
        let dims = Dims::new(30, 30);
        let mut bm = Bitmap::new(30, 30);
        for y in 5..25 {
            for x in 5..25 {
                if !(9..21).contains(&x) || !(9..21).contains(&y) {
                    bm.set(x, y, true);
                }
            }
        }
        let mask = ComponentMask::new(1, bm);
        let comp = Component { bbox: mask_to_bbox(&mask).unwrap(), mask };
        let a = label_anchor(&comp);
        assert!(comp.mask.bitmap().get(a.x.floor() as u32, a.y.floor() as u32));
        let seg = SegmentationResult::new(dims, vec![comp]).unwrap();
        render_indexed_layout(dims, &seg, &assign_tones(1)).unwrap();
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let seg = seg_with(Dims::new(20, 20), &[(1, 1, 3, 3)]);
        assert!(matches!(
            render_indexed_layout(Dims::new(21, 20), &seg, &assign_tones(1)),
            Err(IndexError::DimensionMismatch { id: 1, .. })
        ));
        assert_eq!(
            render_indexed_layout(Dims::new(20, 20), &seg, &[]),
            Err(IndexError::ToneCount { tones: 0, k: 1 })
        );
    }

    #[test]
    fn legend_json_round_trip() {
        let dims = Dims::new(40, 40);
        let seg = seg_with(dims, &[(1, 1, 10, 10), (20, 20, 9, 9)]);
        let layout = render_indexed_layout(dims, &seg, &assign_tones(2)).unwrap();
        let back = IndexedLayout::from_parts(layout.pixels.clone(), &layout.legend_json()).unwrap();
        assert_eq!(back, layout);
    }
}
