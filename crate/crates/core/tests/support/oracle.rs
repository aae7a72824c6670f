//! Brute-force flood-fill oracle for the builtin segmenter.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use figforge_core::image::{Rgb, RgbImage};
use figforge_core::model::{Provenance, RasterDraft};
use figforge_core::segment::{segment, BackgroundRule, Connectivity, SegmentError, SegmenterConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Compares builtin segmentation with the oracle on `cases` seeded rasters.
/// Returns the number of components compared and the time spent inside
/// the segmenter.
pub fn check_segmentation(cases: u64) -> Result<(usize, Duration), String> {
    let mut spent = Duration::ZERO;
    let mut compared = 0;
    for case in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let img = flat_raster(&mut rng);
        let mut cfg = SegmenterConfig::default();
        if case % 3 == 1 {
            cfg.connectivity = Connectivity::Eight;
        }
        if case % 5 == 2 {
            cfg.background_rule = BackgroundRule::ExplicitColor(img.get_pixel(0, 0).0);
        }
        let draft = RasterDraft::new(img.clone(), Provenance { backend: "test".into(), seed: None }).unwrap();
        let t = Instant::now();
        let got = segment(&draft, &cfg);
        spent += t.elapsed();
        match (oracle(&img, &cfg), got) {
            (None, Err(SegmentError::NoComponents)) => {}
            (Some(want), Ok(got)) => {
                if got.k_count() != want.len() {
                    return Err(format!("case {case}: {} components, oracle has {}", got.k_count(), want.len()));
                }
                compared += want.len();
                for (c, (px, bbox)) in got.components().iter().zip(&want) {
                    let got_px: Vec<(u32, u32)> = c.mask.bitmap().iter_set().collect();
                    if &got_px != px {
                        return Err(format!("case {case}: mask {} differs", c.mask.id));
                    }
                    if c.bbox.as_array() != *bbox {
                        return Err(format!("case {case}: box {} is {:?}, oracle {:?}", c.mask.id, c.bbox.as_array(), bbox));
                    }
                }
            }
            (want, got) => {
                return Err(format!("case {case}: oracle {:?} vs {:?}", want.map(|w| w.len()), got.map(|g| g.k_count())))
            }
        }
    }
    Ok((compared, spent))
}

pub fn flat_raster(rng: &mut ChaCha8Rng) -> RgbImage {
    let (w, h) = (rng.random_range(16..=128), rng.random_range(16..=128));
    let n_colors = rng.random_range(2..=8);
    let palette: Vec<[u8; 3]> = (0..n_colors).map(|_| rng.random()).collect();
    let mut img = RgbImage::from_pixel(w, h, Rgb(palette[0]));
    for _ in 0..rng.random_range(1..=12) {
        let c = palette[rng.random_range(0..n_colors)];
        let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
        let (rw, rh) = (rng.random_range(1..=w - x0), rng.random_range(1..=h - y0));
        let disc = rng.random_bool(0.3);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                let inside = !disc || {
                    let (dx, dy) = (f64::from(x - x0) / f64::from(rw) - 0.5, f64::from(y - y0) / f64::from(rh) - 0.5);
                    dx * dx + dy * dy <= 0.25
                };
                if inside {
                    img.put_pixel(x, y, Rgb(c));
                }
            }
        }
    }
    img
}

/// Pixel list of one region.
pub type Pixels = Vec<(u32, u32)>;

/// Connected regions by BFS from each unvisited pixel in scan order.
/// Returns (pixel lists, quantized color) per region in discovery order.
pub fn flood_regions(img: &RgbImage, levels: u32, eight: bool) -> Vec<(Pixels, [u32; 3])> {
    let q = |x: u32, y: u32| {
        let p = img.get_pixel(x, y).0;
        [0, 1, 2].map(|c| u32::from(p[c]) * levels / 256)
    };
    let (w, h) = img.dimensions();
    let mut seen = vec![vec![false; w as usize]; h as usize];
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if seen[y as usize][x as usize] {
                continue;
            }
            let color = q(x, y);
            let mut pixels = Vec::new();
            let mut queue = VecDeque::from([(x, y)]);
            seen[y as usize][x as usize] = true;
            while let Some((cx, cy)) = queue.pop_front() {
                pixels.push((cx, cy));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                            continue;
                        }
                        let (nx, ny) = (i64::from(cx) + dx, i64::from(cy) + dy);
                        if nx < 0 || ny < 0 || nx >= i64::from(w) || ny >= i64::from(h) {
                            continue;
                        }
                        let (nx, ny) = (nx as u32, ny as u32);
                        if !seen[ny as usize][nx as usize] && q(nx, ny) == color {
                            seen[ny as usize][nx as usize] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            out.push((pixels, color));
        }
    }
    out
}

/// Expected masks (as sorted pixel lists) and boxes, foreground only.
pub fn oracle(img: &RgbImage, cfg: &SegmenterConfig) -> Option<Vec<(Pixels, [u32; 4])>> {
    let levels = cfg.quantization_levels;
    let regions = flood_regions(img, levels, cfg.connectivity == Connectivity::Eight);
    let (w, h) = img.dimensions();
    let background: Vec<bool> = match cfg.background_rule {
        BackgroundRule::ExplicitColor(c) => {
            let qc = c.map(|v| u32::from(v) * levels / 256);
            regions.iter().map(|(_, color)| *color == qc).collect()
        }
        BackgroundRule::LargestBorderRegion => {
            let border = |px: &Vec<(u32, u32)>| px.iter().any(|&(x, y)| x == 0 || y == 0 || x == w - 1 || y == h - 1);
            let mut best: Option<usize> = None;
            for (i, (px, _)) in regions.iter().enumerate() {
                if border(px) && best.is_none_or(|b| px.len() > regions[b].0.len()) {
                    best = Some(i);
                }
            }
            (0..regions.len()).map(|i| Some(i) == best).collect()
        }
    };
    let fg: Vec<_> = regions
        .into_iter()
        .zip(background)
        .filter(|(_, bg)| !bg)
        .map(|((mut px, _), _)| {
            px.sort_by_key(|&(x, y)| (y, x));
            let x0 = px.iter().map(|p| p.0).min().unwrap();
            let y0 = px.iter().map(|p| p.1).min().unwrap();
            let x1 = px.iter().map(|p| p.0).max().unwrap();
            let y1 = px.iter().map(|p| p.1).max().unwrap();
            (px, [x0, y0, x1 - x0 + 1, y1 - y0 + 1])
        })
        .collect();
    (!fg.is_empty()).then_some(fg)
}
