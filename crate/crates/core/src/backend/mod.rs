//! Model backends: text-to-image, vision-language, segmentation and matting.
//!
//! Each backend kind is a trait with a remote client speaking the generic
//! JSON protocol and, for T2I and VLM, deterministic offline mocks.

pub mod mock;
pub mod prompt;
pub mod remote;
pub mod transport;

use std::time::Duration;

use image::{RgbImage, RgbaImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::IndexedLayout;
use crate::model::{
    mask_centroid, BoundingBox, Dims, Point, Provenance, RasterDraft, SegmentationResult, SourceText, StyleReference,
};
pub use transport::{invoke_backend, Attempt, AttemptLog, HttpResponse, Transport, TransportError, UreqTransport};

pub const DEFAULT_DRAFT_DIMS: Dims = Dims::new(640, 480);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("every attempt timed out ({} tries)", .0.attempts.len())]
    Timeout(AttemptLog),
    #[error("backend answered HTTP {0}")]
    Http(u16),
    #[error("backend failed after {} attempts: {}", .0.attempts.len(), .0.summary())]
    Exhausted(AttemptLog),
    #[error("input text is empty")]
    EmptyInput,
    #[error("invalid backend response: {0}")]
    Protocol(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    T2i,
    Vlm,
    Segmentation,
    Matting,
}

impl BackendKind {
    /// Environment variable holding the endpoint URL.
    pub fn url_env(self) -> &'static str {
        match self {
            BackendKind::T2i => "FIGFORGE_T2I_URL",
            BackendKind::Vlm => "FIGFORGE_VLM_URL",
            BackendKind::Segmentation => "FIGFORGE_SEGMENT_URL",
            BackendKind::Matting => "FIGFORGE_MATTING_URL",
        }
    }
}

pub const TOKEN_ENV: &str = "FIGFORGE_API_TOKEN";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub endpoint: String,
    /// Name of the env var carrying the bearer token.
    pub auth_env: Option<String>,
    pub timeout: Duration,
    pub retries: u32,
    pub backoff_ms: u64,
    pub max_concurrency: usize,
}

impl BackendDescriptor {
    pub fn new(kind: BackendKind, endpoint: impl Into<String>) -> Self {
        Self {
            kind,
            endpoint: endpoint.into(),
            auth_env: Some(TOKEN_ENV.into()),
            timeout: Duration::from_secs(120),
            retries: 2,
            backoff_ms: 500,
            max_concurrency: 4,
        }
    }

    /// Descriptor from `FIGFORGE_*_URL`, or `None` when unset.
    pub fn from_env(kind: BackendKind) -> Option<Self> {
        let url = std::env::var(kind.url_env()).ok().filter(|u| !u.trim().is_empty())?;
        Some(Self::new(kind, url.trim()))
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.timeout.is_zero() {
            return Err(BackendError::Config("timeout must be positive".into()));
        }
        if self.max_concurrency == 0 {
            return Err(BackendError::Config("max_concurrency must be at least 1".into()));
        }
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(BackendError::Config(format!("endpoint `{}` is not an http(s) URL", self.endpoint)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct T2iRequest {
    pub text: SourceText,
    pub style: Option<StyleReference>,
    pub target_dims: Dims,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VlmTask {
    Template,
    Refine,
}

/// Per-component geometry shared with the VLM alongside the images.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentHint {
    pub af_id: u32,
    pub bbox: BoundingBox,
    pub centroid: Point,
    pub tone: [u8; 3],
}

#[derive(Debug, Clone)]
pub struct VlmSvgRequest {
    pub task: VlmTask,
    /// Template: `[indexed]`. Refine: `[draft, indexed, preview]`.
    pub images: Vec<RgbImage>,
    pub svg_code: Option<String>,
    pub instructions: String,
    pub view_box: Dims,
    pub components: Vec<ComponentHint>,
}

impl VlmSvgRequest {
    pub fn template(indexed: &IndexedLayout, components: Vec<ComponentHint>, instructions: String) -> Self {
        Self {
            task: VlmTask::Template,
            images: vec![indexed.pixels.clone()],
            svg_code: None,
            instructions,
            view_box: indexed.dims(),
            components,
        }
    }

    pub fn refine(
        draft: &RasterDraft,
        indexed: &IndexedLayout,
        preview: RgbImage,
        svg_code: String,
        components: Vec<ComponentHint>,
        instructions: String,
    ) -> Self {
        Self {
            task: VlmTask::Refine,
            images: vec![draft.pixels().clone(), indexed.pixels.clone(), preview],
            svg_code: Some(svg_code),
            instructions,
            view_box: draft.dims(),
            components,
        }
    }
}

pub trait T2iBackend: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, req: &T2iRequest) -> Result<RgbImage, BackendError>;
}

pub trait VlmBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, req: &VlmSvgRequest) -> Result<String, BackendError>;
}

/// Returns an instance map at draft size: black background, one exact
/// color per instance.
pub trait SegmentationBackend: Send + Sync {
    fn instance_map(&self, draft: &RasterDraft) -> Result<RgbImage, BackendError>;
}

/// Mattes a crop, returning RGBA at the crop size.
pub trait MattingBackend: Send + Sync {
    fn matte(&self, crop: &RgbImage) -> Result<RgbaImage, BackendError>;
}

pub fn generate_raster_draft(req: &T2iRequest, backend: &dyn T2iBackend) -> Result<RasterDraft, BackendError> {
    req.text.for_generation().map_err(|_| BackendError::EmptyInput)?;
    let pixels = backend.generate(req)?;
    let provenance = Provenance { backend: backend.name().to_string(), seed: req.seed };
    RasterDraft::new(pixels, provenance).map_err(|e| BackendError::Protocol(e.to_string()))
}

/// Asks the VLM for a placeholder template over the indexed layout.
pub fn generate_svg_template(
    indexed: &IndexedLayout,
    k_count: usize,
    components: Vec<ComponentHint>,
    prompts: &prompt::PromptSet,
    backend: &dyn VlmBackend,
) -> Result<String, BackendError> {
    if indexed.legend.len() != k_count || components.len() != k_count {
        return Err(BackendError::Config(format!(
            "layout legend has {} entries and {} hints for K={k_count}",
            indexed.legend.len(),
            components.len()
        )));
    }
    let instructions = prompts.template_instructions(indexed.dims(), &components);
    backend.complete(&VlmSvgRequest::template(indexed, components, instructions))
}

/// Box, centroid and tone per component, in id order.
pub fn component_hints(seg: &SegmentationResult, indexed: &IndexedLayout) -> Vec<ComponentHint> {
    seg.components()
        .iter()
        .map(|c| ComponentHint {
            af_id: c.id(),
            bbox: c.bbox,
            centroid: mask_centroid(&c.mask).expect("segmented masks are non-empty"),
            tone: indexed.legend.get(&c.id()).copied().unwrap_or([0, 0, 0]),
        })
        .collect()
}
