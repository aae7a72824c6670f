//! Per-component transparent RGBA assets cut from the draft.

use std::collections::BTreeMap;

use image::{imageops, Rgba, RgbaImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, MattingBackend};
use crate::model::{mask_to_bbox, BoundingBox, ComponentMask, RasterDraft, RgbaAsset};

pub const MAX_FEATHER: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MattingMode {
    MaskAlpha,
    RemoteMatting,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MattingConfig {
    pub mode: MattingMode,
    pub feather_radius: u32,
    pub trim: bool,
}

impl Default for MattingConfig {
    fn default() -> Self {
        Self { mode: MattingMode::MaskAlpha, feather_radius: 0, trim: true }
    }
}

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("component {0} has an empty mask")]
    EmptyMask(u32),
    #[error("asset {0} is fully transparent")]
    FullyTransparent(u32),
    #[error("feather radius {0} exceeds {MAX_FEATHER}")]
    InvalidFeather(u32),
    #[error("box {got:?} is not the tight box {want:?} of mask {id}")]
    BoxMismatch { id: u32, got: BoundingBox, want: BoundingBox },
    #[error("remote matting needs a matting backend")]
    NoBackend,
    #[error("matting backend returned {got:?}, expected {want:?}")]
    MatteSize { got: (u32, u32), want: (u32, u32) },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

fn box_blur_alpha(img: &mut RgbaImage, radius: u32) {
    if radius == 0 {
        return;
    }
    let (w, h) = img.dimensions();
    let r = radius as i64;
    let window = ((2 * r + 1) * (2 * r + 1)) as f64;
    let alpha: Vec<u32> = img.pixels().map(|p| u32::from(p.0[3])).collect();
    let at = |x: i64, y: i64| -> u32 {
        if x < 0 || y < 0 || x >= i64::from(w) || y >= i64::from(h) {
            0
        } else {
            alpha[(y as usize) * w as usize + x as usize]
        }
    };
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0u32;
            for dy in -r..=r {
                for dx in -r..=r {
                    sum += at(i64::from(x) + dx, i64::from(y) + dy);
                }
            }
            img.get_pixel_mut(x, y).0[3] = (f64::from(sum) / window).round() as u8;
        }
    }
}

/// Cuts component `mask` out of the draft as a straight-alpha RGBA image.
pub fn extract_asset(
    draft: &RasterDraft,
    mask: &ComponentMask,
    bbox: &BoundingBox,
    cfg: &MattingConfig,
    matting: Option<&dyn MattingBackend>,
) -> Result<RgbaAsset, AssetError> {
    if cfg.feather_radius > MAX_FEATHER {
        return Err(AssetError::InvalidFeather(cfg.feather_radius));
    }
    let tight = mask_to_bbox(mask).map_err(|_| AssetError::EmptyMask(mask.id))?;
    if tight != *bbox {
        return Err(AssetError::BoxMismatch { id: mask.id, got: *bbox, want: tight });
    }
    let crop = imageops::crop_imm(draft.pixels(), bbox.x, bbox.y, bbox.w, bbox.h).to_image();

    let mut pixels = match cfg.mode {
        MattingMode::MaskAlpha => {
            let bm = mask.bitmap();
            RgbaImage::from_fn(bbox.w, bbox.h, |x, y| {
                let [r, g, b] = crop.get_pixel(x, y).0;
                let a = if bm.get(bbox.x + x, bbox.y + y) { 255 } else { 0 };
                Rgba([r, g, b, a])
            })
        }
        MattingMode::RemoteMatting => {
            let backend = matting.ok_or(AssetError::NoBackend)?;
            let matte = backend.matte(&crop)?;
            if matte.dimensions() != crop.dimensions() {
                return Err(AssetError::MatteSize { got: matte.dimensions(), want: crop.dimensions() });
            }
            matte
        }
    };
    box_blur_alpha(&mut pixels, cfg.feather_radius);

    let asset = RgbaAsset { id: mask.id, pixels, origin_box: *bbox, trimmed: false };
    if cfg.trim {
        trim_asset(asset)
    } else if asset.pixels.pixels().all(|p| p.0[3] == 0) {
        Err(AssetError::FullyTransparent(asset.id))
    } else {
        Ok(asset)
    }
}

/// Crops to the tight box of `alpha > 0`, keeping draft placement fixed.
pub fn trim_asset(asset: RgbaAsset) -> Result<RgbaAsset, AssetError> {
    let (w, h) = asset.pixels.dimensions();
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for (x, y, p) in asset.pixels.enumerate_pixels() {
        if p.0[3] > 0 {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
    }
    if x0 == u32::MAX {
        return Err(AssetError::FullyTransparent(asset.id));
    }
    let (tw, th) = (x1 - x0 + 1, y1 - y0 + 1);
    if (x0, y0, tw, th) == (0, 0, w, h) {
        return Ok(RgbaAsset { trimmed: true, ..asset });
    }
    let pixels = imageops::crop_imm(&asset.pixels, x0, y0, tw, th).to_image();
    let origin_box = BoundingBox { x: asset.origin_box.x + x0, y: asset.origin_box.y + y0, w: tw, h: th };
    Ok(RgbaAsset { id: asset.id, pixels, origin_box, trimmed: true })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetIndexEntry {
    pub origin: [u32; 2],
    pub size: [u32; 2],
    pub trimmed: bool,
}

/// `assets/index.json`: `{"<k>": {"origin": [x,y], "size": [w,h], "trimmed": bool}}`.
pub fn asset_index(assets: &[RgbaAsset]) -> BTreeMap<String, AssetIndexEntry> {
    assets
        .iter()
        .map(|a| {
            (
                a.id.to_string(),
                AssetIndexEntry {
                    origin: [a.origin_box.x, a.origin_box.y],
                    size: [a.origin_box.w, a.origin_box.h],
                    trimmed: a.trimmed,
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Bitmap, Provenance};
    use image::{Rgb, RgbImage};

    fn draft_with_square() -> (RasterDraft, ComponentMask) {
        let mut img = RgbImage::from_pixel(50, 50, Rgb([255, 255, 255]));
        let mut bm = Bitmap::new(50, 50);
        for y in 10..30 {
            for x in 15..35 {
                img.put_pixel(x, y, Rgb([255, 0, 0]));
                bm.set(x, y, true);
            }
        }
        let d = RasterDraft::new(img, Provenance { backend: "t".into(), seed: None }).unwrap();
        (d, ComponentMask::new(1, bm))
    }

    #[test]
    fn square_asset_is_opaque_red() {
        let (d, m) = draft_with_square();
        let b = mask_to_bbox(&m).unwrap();
        let a = extract_asset(&d, &m, &b, &MattingConfig::default(), None).unwrap();
        assert_eq!(a.pixels.dimensions(), (20, 20));
        assert!(a.pixels.pixels().all(|p| p.0 == [255, 0, 0, 255]));
        assert_eq!(a.origin_box, b);
        assert_eq!(a.id, 1);
    }

    #[test]
    fn l_shape_corner_is_transparent() {
        let img = RgbImage::from_pixel(20, 20, Rgb([0, 128, 0]));
        let d = RasterDraft::new(img, Provenance { backend: "t".into(), seed: None }).unwrap();
        let mut bm = Bitmap::new(20, 20);
        for y in 2..12 {
            bm.set(2, y, true);
            bm.set(3, y, true);
        }
        for x in 2..10 {
            bm.set(x, 11, true);
        }
        let m = ComponentMask::new(4, bm);
        let b = mask_to_bbox(&m).unwrap();
        let a = extract_asset(&d, &m, &b, &MattingConfig::default(), None).unwrap();
        assert_eq!(a.pixels.get_pixel(b.w - 1, 0).0[3], 0);
        assert_eq!(a.pixels.get_pixel(0, 0).0[3], 255);
        for (x, y, p) in a.pixels.enumerate_pixels() {
            assert_eq!(p.0[3] == 255, m.bitmap().get(b.x + x, b.y + y));
        }
    }

    #[test]
    fn feathered_square_has_soft_edges() {
        let (d, m) = draft_with_square();
        let b = mask_to_bbox(&m).unwrap();
        let cfg = MattingConfig { feather_radius: 1, trim: false, ..Default::default() };
        let a = extract_asset(&d, &m, &b, &cfg, None).unwrap();
        // oracle: 3×3 mean of the binary alpha, zero outside the crop
        let bin = |x: i64, y: i64| if (0..20).contains(&x) && (0..20).contains(&y) { 255.0 } else { 0.0 };
        for y in 0..20i64 {
            for x in 0..20i64 {
                let mut s = 0.0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        s += bin(x + dx, y + dy);
                    }
                }
                let want = (s / 9.0f64).round() as u8;
                let got = a.pixels.get_pixel(x as u32, y as u32).0[3];
                assert_eq!(got, want);
                let edge = x == 0 || y == 0 || x == 19 || y == 19;
                if edge {
                    assert!(got > 0 && got < 255);
                } else {
                    assert_eq!(got, 255);
                }
            }
        }
    }

    #[test]
    fn feather_radius_bounded() {
        let (d, m) = draft_with_square();
        let b = mask_to_bbox(&m).unwrap();
        let cfg = MattingConfig { feather_radius: 9, ..Default::default() };
        assert!(matches!(extract_asset(&d, &m, &b, &cfg, None), Err(AssetError::InvalidFeather(9))));
    }

    #[test]
    fn wrong_box_rejected() {
        let (d, m) = draft_with_square();
        let b = BoundingBox { x: 0, y: 0, w: 40, h: 40 };
        assert!(matches!(extract_asset(&d, &m, &b, &MattingConfig::default(), None), Err(AssetError::BoxMismatch { .. })));
        let empty = ComponentMask::new(2, Bitmap::new(50, 50));
        assert!(matches!(extract_asset(&d, &empty, &b, &MattingConfig::default(), None), Err(AssetError::EmptyMask(2))));
    }

    #[test]
    fn pixels_outside_box_are_never_read() {
        let (d, m) = draft_with_square();
        let b = mask_to_bbox(&m).unwrap();
        let mut noisy = d.pixels().clone();
        for (x, y, p) in noisy.enumerate_pixels_mut() {
            if !(15..35).contains(&x) || !(10..30).contains(&y) {
                *p = Rgb([(x * 7) as u8, (y * 13) as u8, 3]);
            }
        }
        let d2 = RasterDraft::new(noisy, d.provenance.clone()).unwrap();
        let cfg = MattingConfig::default();
        assert_eq!(extract_asset(&d, &m, &b, &cfg, None).unwrap(), extract_asset(&d2, &m, &b, &cfg, None).unwrap());
    }

    #[test]
    fn trim_tight_asset_is_identity() {
        let px = RgbaImage::from_pixel(5, 4, Rgba([1, 2, 3, 255]));
        let a = RgbaAsset { id: 1, pixels: px.clone(), origin_box: BoundingBox { x: 3, y: 3, w: 5, h: 4 }, trimmed: false };
        let t = trim_asset(a).unwrap();
        assert_eq!(t.pixels, px);
        assert_eq!(t.origin_box, BoundingBox { x: 3, y: 3, w: 5, h: 4 });
    }

    #[test]
    fn trim_removes_margin() {
        let mut px = RgbaImage::new(14, 10);
        for y in 2..8 {
            for x in 2..12 {
                px.put_pixel(x, y, Rgba([9, 9, 9, 200]));
            }
        }
        let a = RgbaAsset { id: 1, pixels: px, origin_box: BoundingBox { x: 5, y: 6, w: 14, h: 10 }, trimmed: false };
        let t = trim_asset(a).unwrap();
        assert_eq!(t.pixels.dimensions(), (10, 6));
        assert_eq!(t.origin_box, BoundingBox { x: 7, y: 8, w: 10, h: 6 });
        assert!(t.trimmed);
    }

    #[test]
    fn trim_fully_transparent_fails() {
        let a = RgbaAsset { id: 3, pixels: RgbaImage::new(4, 4), origin_box: BoundingBox { x: 0, y: 0, w: 4, h: 4 }, trimmed: false };
        assert!(matches!(trim_asset(a), Err(AssetError::FullyTransparent(3))));
    }

    #[test]
    fn composite_back_reproduces_masked_pixels() {
        let mut img = RgbImage::from_fn(40, 40, |x, y| Rgb([(x * 5) as u8, (y * 5) as u8, 77]));
        let mut bm = Bitmap::new(40, 40);
        for y in 0..40i32 {
            for x in 0..40i32 {
                if (x - 20).pow(2) + (y - 18).pow(2) <= 64 {
                    bm.set(x as u32, y as u32, true);
                }
            }
        }
        img.put_pixel(0, 0, Rgb([0, 0, 0]));
        let d = RasterDraft::new(img.clone(), Provenance { backend: "t".into(), seed: None }).unwrap();
        let m = ComponentMask::new(1, bm);
        let b = mask_to_bbox(&m).unwrap();
        let a = trim_asset(extract_asset(&d, &m, &b, &MattingConfig::default(), None).unwrap()).unwrap();
        let mut canvas = RgbImage::from_pixel(40, 40, Rgb([255, 255, 255]));
        for (x, y, p) in a.pixels.enumerate_pixels() {
            if p.0[3] == 255 {
                canvas.put_pixel(a.origin_box.x + x, a.origin_box.y + y, Rgb([p.0[0], p.0[1], p.0[2]]));
            }
        }
        for (x, y) in m.bitmap().iter_set() {
            assert_eq!(canvas.get_pixel(x, y), img.get_pixel(x, y));
        }
    }

    #[test]
    fn index_json_shape() {
        let (d, m) = draft_with_square();
        let b = mask_to_bbox(&m).unwrap();
        let a = extract_asset(&d, &m, &b, &MattingConfig::default(), None).unwrap();
        let v = serde_json::to_value(asset_index(&[a])).unwrap();
        assert_eq!(v, serde_json::json!({"1": {"origin": [15, 10], "size": [20, 20], "trimmed": true}}));
    }
}
