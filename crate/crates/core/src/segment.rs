//! Decomposes a raster draft into instance masks and tight boxes.
//!
//! The built-in segmenter quantizes colors per channel, labels connected
//! regions of equal quantized color with a two-pass union-find scan, drops
//! the background region and renumbers the rest `1..=K` in raster scan
//! order of each region's first pixel. A remote segmentation backend returns
//! an instance map (one flat color per instance on black) that is normalized
//! through the same labeling.

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, SegmentationBackend};
use crate::model::{
    bbox_overlap_ratio, mask_to_bbox, Bitmap, Component, ComponentMask, Dims, RasterDraft,
    SegmentationResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmenterMode {
    Builtin,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackgroundRule {
    /// The largest region touching the raster border.
    LargestBorderRegion,
    /// Every region whose quantized color equals this color's.
    ExplicitColor([u8; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    pub mode: SegmenterMode,
    pub quantization_levels: u32,
    pub connectivity: Connectivity,
    pub min_area: u32,
    pub background_rule: BackgroundRule,
    pub merge_overlap_threshold: f64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            mode: SegmenterMode::Builtin,
            quantization_levels: 8,
            connectivity: Connectivity::Four,
            min_area: 64,
            background_rule: BackgroundRule::LargestBorderRegion,
            merge_overlap_threshold: 0.9,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if !(2..=64).contains(&self.quantization_levels) {
            return Err(SegmentError::InvalidConfig(format!(
                "quantization_levels {} outside 2..=64",
                self.quantization_levels
            )));
        }
        if self.min_area < 1 {
            return Err(SegmentError::InvalidConfig("min_area must be at least 1".into()));
        }
        let t = self.merge_overlap_threshold;
        if !(t > 0.0 && t <= 1.0) {
            return Err(SegmentError::InvalidConfig(format!("merge_overlap_threshold {t} outside (0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("no foreground components found")]
    NoComponents,
    #[error("invalid segmenter config: {0}")]
    InvalidConfig(String),
    #[error("remote mode requires a segmentation backend")]
    NoBackend,
    #[error("segmentation backend returned a {got_w}x{got_h} map for a {want_w}x{want_h} draft")]
    MapSize { got_w: u32, got_h: u32, want_w: u32, want_h: u32 },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Quantized per-channel bucket of one 8-bit channel value.
#[inline]
pub fn bucket(channel: u8, levels: u32) -> u32 {
    u32::from(channel) * levels / 256
}

#[inline]
fn pack(rgb: [u8; 3], levels: u32) -> u32 {
    (bucket(rgb[0], levels) * levels + bucket(rgb[1], levels)) * levels + bucket(rgb[2], levels)
}

/// Maps every pixel to a packed label of its per-channel buckets.
pub fn quantize_colors(pixels: &RgbImage, levels: u32) -> Vec<u32> {
    pixels.pixels().map(|p| pack(p.0, levels)).collect()
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn with_capacity(n: usize) -> Self {
        Self { parent: Vec::with_capacity(n) }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Keep the smaller (earlier) root so roots follow scan order.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Region {
    label: u32,
    area: u64,
    touches_border: bool,
}

/// Connected regions of equal label. Returns the per-pixel region index and
/// region summaries ordered by first pixel.
fn label_regions(labels: &[u32], dims: Dims, connectivity: Connectivity) -> (Vec<u32>, Vec<Region>) {
    let (w, h) = (dims.width as usize, dims.height as usize);
    let mut provisional = vec![0u32; w * h];
    let mut uf = UnionFind::with_capacity(w * h / 8 + 1);

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let label = labels[i];
            let mut assigned: Option<u32> = None;
            let join = |j: usize, uf: &mut UnionFind, assigned: &mut Option<u32>| {
                if labels[j] == label {
                    match *assigned {
                        None => *assigned = Some(provisional[j]),
                        Some(a) => uf.union(a, provisional[j]),
                    }
                }
            };
            if x > 0 {
                join(i - 1, &mut uf, &mut assigned);
            }
            if y > 0 {
                join(i - w, &mut uf, &mut assigned);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        join(i - w - 1, &mut uf, &mut assigned);
                    }
                    if x + 1 < w {
                        join(i - w + 1, &mut uf, &mut assigned);
                    }
                }
            }
            provisional[i] = match assigned {
                Some(a) => a,
                None => uf.make(),
            };
        }
    }

    // Regions are registered when the final scan first meets them, so they
    // come out ordered by first pixel.
    let mut root_to_region = vec![u32::MAX; uf.parent.len()];
    let mut regions: Vec<Region> = Vec::new();
    let mut region_of = vec![0u32; w * h];
    for i in 0..w * h {
        let root = uf.find(provisional[i]);
        let slot = &mut root_to_region[root as usize];
        if *slot == u32::MAX {
            *slot = regions.len() as u32;
            regions.push(Region { label: labels[i], area: 0, touches_border: false });
        }
        let r = &mut regions[*slot as usize];
        r.area += 1;
        let (x, y) = (i % w, i / w);
        if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
            r.touches_border = true;
        }
        region_of[i] = *slot;
    }
    (region_of, regions)
}

fn components_from_labels(
    labels: &[u32],
    dims: Dims,
    connectivity: Connectivity,
    background_label: Option<u32>,
) -> Result<SegmentationResult, SegmentError> {
    let (region_of, regions) = label_regions(labels, dims, connectivity);
    let is_background: Vec<bool> = match background_label {
        Some(bg) => regions.iter().map(|r| r.label == bg).collect(),
        None => {
            let mut best: Option<usize> = None;
            for (idx, r) in regions.iter().enumerate() {
                if r.touches_border && best.is_none_or(|b| r.area > regions[b].area) {
                    best = Some(idx);
                }
            }
            (0..regions.len()).map(|idx| Some(idx) == best).collect()
        }
    };

    let mut component_of = vec![u32::MAX; regions.len()];
    let mut next = 0u32;
    for (idx, bg) in is_background.iter().enumerate() {
        if !bg {
            component_of[idx] = next;
            next += 1;
        }
    }
    if next == 0 {
        return Err(SegmentError::NoComponents);
    }

    let mut bitmaps: Vec<Bitmap> = (0..next).map(|_| Bitmap::new(dims.width, dims.height)).collect();
    let w = dims.width as usize;
    for (i, &region) in region_of.iter().enumerate() {
        let c = component_of[region as usize];
        if c != u32::MAX {
            bitmaps[c as usize].set((i % w) as u32, (i / w) as u32, true);
        }
    }
    let components = bitmaps
        .into_iter()
        .enumerate()
        .map(|(i, bm)| {
            let mask = ComponentMask::new(i as u32 + 1, bm);
            let bbox = mask_to_bbox(&mask).expect("labeled region is non-empty");
            Component { mask, bbox }
        })
        .collect();
    Ok(SegmentationResult::new_unchecked(dims, components))
}

/// Built-in color-quantized connected-component segmentation.
pub fn segment(draft: &RasterDraft, config: &SegmenterConfig) -> Result<SegmentationResult, SegmentError> {
    config.validate()?;
    let levels = config.quantization_levels;
    let labels = quantize_colors(draft.pixels(), levels);
    let background = match config.background_rule {
        BackgroundRule::LargestBorderRegion => None,
        BackgroundRule::ExplicitColor(rgb) => Some(pack(rgb, levels)),
    };
    components_from_labels(&labels, draft.dims(), config.connectivity, background)
}

/// Segments according to `config.mode`, calling `remote` in remote mode.
pub fn segment_with(
    draft: &RasterDraft,
    config: &SegmenterConfig,
    remote: Option<&dyn SegmentationBackend>,
) -> Result<SegmentationResult, SegmentError> {
    match config.mode {
        SegmenterMode::Builtin => segment(draft, config),
        SegmenterMode::Remote => {
            config.validate()?;
            let backend = remote.ok_or(SegmentError::NoBackend)?;
            let map = backend.instance_map(draft)?;
            if map.dimensions() != draft.pixels().dimensions() {
                return Err(SegmentError::MapSize {
                    got_w: map.width(),
                    got_h: map.height(),
                    want_w: draft.width(),
                    want_h: draft.height(),
                });
            }
            let labels: Vec<u32> =
                map.pixels().map(|p| u32::from_be_bytes([0, p.0[0], p.0[1], p.0[2]])).collect();
            components_from_labels(&labels, draft.dims(), config.connectivity, Some(0))
        }
    }
}

/// Drops components below `min_area`, merges heavily overlapping pairs and
/// renumbers the survivors in scan order.
pub fn filter_and_merge(
    result: SegmentationResult,
    config: &SegmenterConfig,
) -> Result<SegmentationResult, SegmentError> {
    config.validate()?;
    let dims = result.dims();
    let mut kept: Vec<Component> =
        result.into_components().into_iter().filter(|c| c.mask.area() >= config.min_area).collect();
    if kept.is_empty() {
        return Err(SegmentError::NoComponents);
    }

    'merge: loop {
        for i in 0..kept.len() {
            for j in i + 1..kept.len() {
                if bbox_overlap_ratio(&kept[i].bbox, &kept[j].bbox) >= config.merge_overlap_threshold {
                    let absorbed = kept.remove(j);
                    let target = &mut kept[i];
                    let mut bitmap = target.mask.bitmap().clone();
                    bitmap.union_with(absorbed.mask.bitmap());
                    target.bbox = target.bbox.union(&absorbed.bbox);
                    target.mask = ComponentMask::new(target.mask.id, bitmap);
                    continue 'merge;
                }
            }
        }
        break;
    }

    let mut keyed: Vec<(usize, Component)> = kept
        .into_iter()
        .map(|c| {
            let first = c.mask.bitmap().bits().iter().position(|&b| b).unwrap_or(usize::MAX);
            (first, c)
        })
        .collect();
    keyed.sort_by_key(|(first, _)| *first);
    let components = keyed
        .into_iter()
        .enumerate()
        .map(|(i, (_, c))| Component { mask: ComponentMask::new(i as u32 + 1, c.mask.into_bitmap()), bbox: c.bbox })
        .collect();
    Ok(SegmentationResult::new_unchecked(dims, components))
}
