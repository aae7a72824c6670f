//! Inputs shared by the benchmarks.

use figforge_core::backend::mock::MockT2iBackend;
use figforge_core::backend::{generate_raster_draft, T2iRequest};
use figforge_core::model::Dims;
use figforge_core::{RasterDraft, SourceText};

/// Text with `blocks` paragraphs of roughly `chars` characters each.
pub fn text(blocks: usize, chars: usize) -> String {
    (0..blocks)
        .map(|b| {
            let s = format!("Block {b} hands a checked artifact to the next stage. ");
            s.repeat(chars / s.len() + 1)
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// A mock draft at the given size.
pub fn draft(blocks: usize, dims: Dims) -> RasterDraft {
    let req = T2iRequest { text: SourceText::new(text(blocks, 200)), style: None, target_dims: dims, seed: Some(1) };
    generate_raster_draft(&req, &MockT2iBackend::new()).expect("mock drafts never fail")
}
