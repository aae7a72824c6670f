//! Shared domain types and the geometric primitives every stage relies on.
//!
//! Coordinates use a top-left origin with y growing downward. Pixel `(x, y)`
//! covers the unit square `[x, x+1) × [y, y+1)`, so its center sits at
//! `(x + 0.5, y + 0.5)`. The same convention holds in SVG view-box space,
//! which keeps draft pixels and template units interchangeable.

use image::{RgbImage, RgbaImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Smallest draft edge accepted by the pipeline.
pub const MIN_DRAFT_EDGE: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("raster draft is {width}x{height}; both edges must be at least {MIN_DRAFT_EDGE}")]
    DraftTooSmall { width: u32, height: u32 },
    #[error("style reference has zero extent")]
    EmptyStyle,
    #[error("source text is empty")]
    EmptyText,
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("bitmap data length {got} does not match {width}x{height}")]
    BitmapSize { width: u32, height: u32, got: usize },
}

/// Long-form input text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceText {
    pub body: String,
    pub token_estimate: usize,
}

impl SourceText {
    pub fn new(body: impl Into<String>) -> Self {
        let body = body.into();
        // Rough BPE-style estimate: one token per four characters.
        let token_estimate = body.chars().count().div_ceil(4);
        Self { body, token_estimate }
    }

    /// Returns the text if it carries anything besides whitespace.
    pub fn for_generation(&self) -> Result<&str, ModelError> {
        if self.body.trim().is_empty() {
            Err(ModelError::EmptyText)
        } else {
            Ok(&self.body)
        }
    }

    /// Blank-line separated blocks, trimmed, empty ones dropped.
    pub fn blocks(&self) -> Vec<&str> {
        let mut blocks = Vec::new();
        let mut start: Option<usize> = None;
        let mut end = 0;
        let mut offset = 0;
        for line in self.body.split_inclusive('\n') {
            if line.trim().is_empty() {
                if let Some(s) = start.take() {
                    blocks.push(self.body[s..end].trim());
                }
            } else {
                if start.is_none() {
                    start = Some(offset);
                }
                end = offset + line.len();
            }
            offset += line.len();
        }
        if let Some(s) = start {
            blocks.push(self.body[s..end].trim());
        }
        blocks
    }
}

/// Hex-encoded SHA-256 of a raster's dimensions and pixel bytes.
pub fn raster_digest(width: u32, height: u32, bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(width.to_le_bytes());
    hasher.update(height.to_le_bytes());
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Reference image that carries the target visual style.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleReference {
    pixels: RgbImage,
    content_hash: String,
}

impl StyleReference {
    pub fn new(pixels: RgbImage) -> Result<Self, ModelError> {
        if pixels.width() == 0 || pixels.height() == 0 {
            return Err(ModelError::EmptyStyle);
        }
        let content_hash = raster_digest(pixels.width(), pixels.height(), pixels.as_raw());
        Ok(Self { pixels, content_hash })
    }

    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }

    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend: String,
    pub seed: Option<u64>,
}

/// The intermediate bitmap from which all structure is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterDraft {
    pixels: RgbImage,
    pub provenance: Provenance,
}

impl RasterDraft {
    pub fn new(pixels: RgbImage, provenance: Provenance) -> Result<Self, ModelError> {
        let (width, height) = pixels.dimensions();
        if width < MIN_DRAFT_EDGE || height < MIN_DRAFT_EDGE {
            return Err(ModelError::DraftTooSmall { width, height });
        }
        Ok(Self { pixels, provenance })
    }

    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.width(), self.height())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub width: u32,
    pub height: u32,
}

impl Dims {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn diagonal(&self) -> f64 {
        f64::from(self.width).hypot(f64::from(self.height))
    }
}

/// Axis-aligned pixel box, top-left anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self, ModelError> {
        if w == 0 || h == 0 {
            return Err(ModelError::InvalidBox(format!("{w}x{h} has zero extent")));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn contains_point(&self, p: Point) -> bool {
        p.x >= f64::from(self.x)
            && p.x <= f64::from(self.right())
            && p.y >= f64::from(self.y)
            && p.y <= f64::from(self.bottom())
    }

    pub fn fits_in(&self, dims: Dims) -> bool {
        self.right() <= dims.width && self.bottom() <= dims.height
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        BoundingBox {
            x,
            y,
            w: self.right().max(other.right()) - x,
            h: self.bottom().max(other.bottom()) - y,
        }
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> u64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 <= x0 || y1 <= y0 {
            0
        } else {
            u64::from(x1 - x0) * u64::from(y1 - y0)
        }
    }

    pub fn center(&self) -> Point {
        Point {
            x: f64::from(self.x) + f64::from(self.w) / 2.0,
            y: f64::from(self.y) + f64::from(self.h) / 2.0,
        }
    }

    pub fn as_array(&self) -> [u32; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Dense boolean raster.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bitmap {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Bitmap {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize] }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, ModelError> {
        if bits.len() != width as usize * height as usize {
            return Err(ModelError::BitmapSize { width, height, got: bits.len() });
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let idx = y as usize * self.width as usize + x as usize;
        self.bits[idx] = value;
    }

    pub fn count_ones(&self) -> u32 {
        self.bits.iter().filter(|&&b| b).count() as u32
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Set-pixel coordinates in raster scan order.
    pub fn iter_set(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i % w) as u32, (i / w) as u32))
    }

    pub fn union_with(&mut self, other: &Bitmap) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    pub fn intersects(&self, other: &Bitmap) -> bool {
        self.bits.iter().zip(&other.bits).any(|(a, b)| *a && *b)
    }
}

/// Instance mask `M_k` for component `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentMask {
    pub id: u32,
    bitmap: Bitmap,
    area: u32,
}

impl ComponentMask {
    pub fn new(id: u32, bitmap: Bitmap) -> Self {
        let area = bitmap.count_ones();
        Self { id, bitmap, area }
    }

    pub fn bitmap(&self) -> &Bitmap {
        &self.bitmap
    }

    pub fn area(&self) -> u32 {
        self.area
    }

    pub(crate) fn into_bitmap(self) -> Bitmap {
        self.bitmap
    }
}

/// Minimal axis-aligned box covering every set pixel of the mask.
pub fn mask_to_bbox(mask: &ComponentMask) -> Result<BoundingBox, ModelError> {
    if mask.area == 0 {
        return Err(ModelError::EmptyMask);
    }
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for (x, y) in mask.bitmap.iter_set() {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    Ok(BoundingBox { x: x0, y: y0, w: x1 - x0 + 1, h: y1 - y0 + 1 })
}

/// Mean of the pixel centers of all set bits.
pub fn mask_centroid(mask: &ComponentMask) -> Result<Point, ModelError> {
    if mask.area == 0 {
        return Err(ModelError::EmptyMask);
    }
    let (mut sx, mut sy) = (0u64, 0u64);
    for (x, y) in mask.bitmap.iter_set() {
        sx += u64::from(x);
        sy += u64::from(y);
    }
    let n = f64::from(mask.area);
    Ok(Point { x: sx as f64 / n + 0.5, y: sy as f64 / n + 0.5 })
}

/// Intersection area divided by the smaller box area.
pub fn bbox_overlap_ratio(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let min_area = a.area().min(b.area());
    if min_area == 0 {
        return 0.0;
    }
    a.intersection_area(b) as f64 / min_area as f64
}

/// One segmented component: its mask and tight box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub mask: ComponentMask,
    pub bbox: BoundingBox,
}

impl Component {
    pub fn id(&self) -> u32 {
        self.mask.id
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SegmentationInvariant {
    #[error("component at position {index} has id {found}, expected {expected}")]
    IdGap { index: usize, found: u32, expected: u32 },
    #[error("component {0} has an empty mask")]
    EmptyMask(u32),
    #[error("component {0} box is not the tight box of its mask")]
    LooseBox(u32),
    #[error("components {0} and {1} overlap")]
    Overlap(u32, u32),
    #[error("component {0} mask has the wrong dimensions")]
    Dimensions(u32),
}

/// The component set `{M_k, B_k}` for `k = 1..K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationResult {
    dims: Dims,
    components: Vec<Component>,
}

impl SegmentationResult {
    /// Builds a result and checks every structural invariant.
    pub fn new(dims: Dims, components: Vec<Component>) -> Result<Self, SegmentationInvariant> {
        let result = Self { dims, components };
        result.check()?;
        Ok(result)
    }

    pub(crate) fn new_unchecked(dims: Dims, components: Vec<Component>) -> Self {
        Self { dims, components }
    }

    pub fn check(&self) -> Result<(), SegmentationInvariant> {
        for (index, c) in self.components.iter().enumerate() {
            let expected = index as u32 + 1;
            if c.id() != expected {
                return Err(SegmentationInvariant::IdGap { index, found: c.id(), expected });
            }
            if c.mask.bitmap().dims() != self.dims {
                return Err(SegmentationInvariant::Dimensions(c.id()));
            }
            match mask_to_bbox(&c.mask) {
                Err(_) => return Err(SegmentationInvariant::EmptyMask(c.id())),
                Ok(b) if b != c.bbox => return Err(SegmentationInvariant::LooseBox(c.id())),
                Ok(_) => {}
            }
        }
        for (i, a) in self.components.iter().enumerate() {
            for b in &self.components[i + 1..] {
                if a.bbox.intersection_area(&b.bbox) > 0
                    && a.mask.bitmap().intersects(b.mask.bitmap())
                {
                    return Err(SegmentationInvariant::Overlap(a.id(), b.id()));
                }
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn k_count(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component(&self, id: u32) -> Option<&Component> {
        id.checked_sub(1).and_then(|i| self.components.get(i as usize))
    }

    pub fn into_components(self) -> Vec<Component> {
        self.components
    }
}

/// Transparent appearance crop `A_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbaAsset {
    pub id: u32,
    pub pixels: RgbaImage,
    /// Placement of `pixels` in draft coordinates.
    pub origin_box: BoundingBox,
    pub trimmed: bool,
}
