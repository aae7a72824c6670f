//! Text and a style reference in, an editable component-grouped SVG out.
//!
//! Stages run in order (draft, segmentation, indexed layout, assets,
//! template, refinement, injection) and each one persists its artifact so a
//! job can resume from disk. Model calls sit behind backend traits with
//! deterministic mocks for offline use.

pub mod assets;
pub mod backend;
pub mod codec;
pub mod feedback;
pub mod font;
pub mod index;
pub mod inject;
pub mod manifest;
pub mod model;
pub mod pipeline;
pub mod refine;
pub mod segment;
pub mod svg;

/// Raster types used throughout the public API.
pub use image;

pub use assets::{AssetError, MattingConfig, MattingMode};
pub use backend::{BackendDescriptor, BackendError, BackendKind};
pub use feedback::{aggregate_feedback, FeedbackAggregate, FeedbackError, FeedbackRecord};
pub use index::IndexedLayout;
pub use inject::{inject_assets, verify_editable_figure, EditableFigure, VerifyMode};
pub use manifest::{load_manifest, ManifestError, PipelineManifest, Stage};
pub use model::{
    BoundingBox, Dims, Provenance, RasterDraft, RgbaAsset, SegmentationResult, SourceText,
    StyleReference,
};
pub use pipeline::{
    resume_job, run_pipeline, vectorize_existing, verify_job, Backends, ErrorClass, PipelineConfig, PipelineError,
    RunReport, StageObserver,
};
pub use refine::{refine_template, RefinementLog};
pub use segment::{segment, SegmenterConfig, SegmenterMode};
pub use svg::{parse_svg, serialize_svg, validate_template, SvgDocument, SvgError, ValidationReport};
