use figforge_core::backend::mock::MockT2iBackend;
use figforge_core::backend::{component_hints, generate_raster_draft, ComponentHint, T2iRequest};
use figforge_core::index::{assign_tones, render_indexed_layout};
use figforge_core::model::{Dims, Provenance, RasterDraft, SegmentationResult, SourceText};
use figforge_core::segment::{filter_and_merge, segment, SegmenterConfig};
use figforge_core::IndexedLayout;
use figforge_core::image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub draft: RasterDraft,
    pub seg: SegmentationResult,
    pub indexed: IndexedLayout,
    pub hints: Vec<ComponentHint>,
}

fn finish(draft: RasterDraft, cfg: &SegmenterConfig) -> Option<Fixture> {
    let seg = filter_and_merge(segment(&draft, cfg).ok()?, cfg).ok()?;
    let indexed = render_indexed_layout(seg.dims(), &seg, &assign_tones(seg.k_count())).ok()?;
    let hints = component_hints(&seg, &indexed);
    Some(Fixture { draft, seg, indexed, hints })
}

/// A mock-generated draft with 1..=8 text blocks at a random size.
pub fn mock_fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = rng.random_range(1..=8);
    let text: Vec<String> = (0..blocks).map(|b| format!("block {b} of case {seed}")).collect();
    let dims = Dims::new(rng.random_range(160..=480), rng.random_range(120..=360));
    let req = T2iRequest { text: SourceText::new(text.join("\n\n")), style: None, target_dims: dims, seed: Some(seed) };
    let draft = generate_raster_draft(&req, &MockT2iBackend::new()).unwrap();
    finish(draft, &SegmenterConfig::default()).expect("mock drafts always have components")
}

/// Random overlapping flat shapes; components may touch each other.
pub fn flat_fixture(seed: u64) -> Option<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (w, h) = (rng.random_range(64..=200), rng.random_range(64..=200));
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    for _ in 0..rng.random_range(1..=6) {
        let c: [u8; 3] = [rng.random_range(0..200), rng.random(), rng.random()];
        let (x0, y0) = (rng.random_range(0..w - 8), rng.random_range(0..h - 8));
        let (rw, rh) = (rng.random_range(8..=w - x0), rng.random_range(8..=h - y0));
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                img.put_pixel(x, y, Rgb(c));
            }
        }
    }
    let draft = RasterDraft::new(img, Provenance { backend: "test".into(), seed: Some(seed) }).unwrap();
    let cfg = SegmenterConfig { min_area: 16, ..SegmenterConfig::default() };
    finish(draft, &cfg)
}
