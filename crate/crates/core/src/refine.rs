//! Template refinement: positional checks and the guarded re-prompt loop.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::backend::prompt::PromptSet;
use crate::backend::{component_hints, BackendError, VlmBackend, VlmSvgRequest};
use crate::index::IndexedLayout;
use crate::model::{mask_centroid, Dims, RasterDraft, SegmentationResult};
use crate::svg::{discover_slots, parse_svg, rasterize_preview, serialize_svg, validate_template, SvgDocument};

pub const DEFAULT_MAX_ITERATIONS: u32 = 2;
pub const DEFAULT_TOLERANCE: f64 = 0.05;
pub const SIZE_RATIO_MIN: f64 = 0.5;
pub const SIZE_RATIO_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum DiscrepancyKind {
    Offset,
    Missing,
    SizeMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discrepancy {
    pub af_id: u32,
    pub kind: DiscrepancyKind,
    /// Slot center minus mask centroid, view-box units (`Offset` only).
    pub vector: Option<(f64, f64)>,
    /// Offset: distance over the draft diagonal. SizeMismatch: `|ratio − 1|`.
    pub magnitude: f64,
}

impl Discrepancy {
    pub fn describe(&self) -> String {
        match self.kind {
            DiscrepancyKind::Missing => format!("- AF-{}: placeholder missing", self.af_id),
            DiscrepancyKind::Offset => {
                let (dx, dy) = self.vector.unwrap_or_default();
                format!(
                    "- AF-{}: slot center is off by ({dx:.1}, {dy:.1}), {:.1}% of the diagonal",
                    self.af_id,
                    self.magnitude * 100.0
                )
            }
            DiscrepancyKind::SizeMismatch => {
                format!("- AF-{}: slot area differs from the component by {:.0}%", self.af_id, self.magnitude * 100.0)
            }
        }
    }
}

/// Compares every slot with its segmented component.
///
/// The view box is mapped onto the draft by a per-axis scale, which the
/// pipeline keeps at 1.
pub fn positional_discrepancies(
    doc: &SvgDocument,
    seg: &SegmentationResult,
    draft_dims: Dims,
    tolerance: f64,
) -> Vec<Discrepancy> {
    let vb = doc.view_box;
    let sx = f64::from(draft_dims.width) / vb.width;
    let sy = f64::from(draft_dims.height) / vb.height;
    let diagonal = draft_dims.diagonal();
    let slots = discover_slots(doc);
    let mut out = Vec::new();
    for comp in seg.components() {
        let k = comp.id();
        let Some(slot) = slots.iter().filter(|s| s.af_id == k).min_by(|a, b| a.path.cmp(&b.path)) else {
            out.push(Discrepancy { af_id: k, kind: DiscrepancyKind::Missing, vector: None, magnitude: 0.0 });
            continue;
        };
        let c = slot.geometry.center();
        let (px, py) = ((c.x - vb.min_x) * sx, (c.y - vb.min_y) * sy);
        let centroid = mask_centroid(&comp.mask).expect("segmented masks are non-empty");
        let (dx, dy) = (px - centroid.x, py - centroid.y);
        let magnitude = dx.hypot(dy) / diagonal;
        if magnitude > tolerance {
            out.push(Discrepancy {
                af_id: k,
                kind: DiscrepancyKind::Offset,
                vector: Some((dx / sx, dy / sy)),
                magnitude,
            });
        }
        let ratio = slot.geometry.area() * sx * sy / comp.bbox.area() as f64;
        if !(SIZE_RATIO_MIN..=SIZE_RATIO_MAX).contains(&ratio) {
            out.push(Discrepancy {
                af_id: k,
                kind: DiscrepancyKind::SizeMismatch,
                vector: None,
                magnitude: (ratio - 1.0).abs(),
            });
        }
    }
    out
}

pub struct RefinementContext<'a> {
    pub draft: &'a RasterDraft,
    pub indexed: &'a IndexedLayout,
    pub segmentation: &'a SegmentationResult,
    pub current: SvgDocument,
    pub max_iterations: u32,
    pub tolerance: f64,
    pub prompts: &'a PromptSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum Rejection {
    ParseFailure(String),
    ValidationFailure(String),
    PreservationViolation(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected(Rejection),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub discrepancies: usize,
    pub summary: Vec<String>,
    #[serde(flatten)]
    pub verdict: Verdict,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RefinementLog {
    pub iterations: Vec<IterationRecord>,
    /// Discrepancies left on the returned document.
    pub remaining: usize,
}

impl RefinementLog {
    pub fn backend_calls(&self) -> u32 {
        self.iterations.len() as u32
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("log serializes")
    }
}

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("tolerance {0} outside (0, 0.5)")]
    Tolerance(f64),
    #[error("starting template does not validate: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

fn id_multiset(doc: &SvgDocument) -> Vec<String> {
    let mut ids = doc.ids();
    ids.sort();
    ids
}

/// Decides whether `candidate` may replace `current`.
pub fn judge_candidate(current: &SvgDocument, candidate: &str, k_count: usize) -> Result<SvgDocument, Rejection> {
    let doc = parse_svg(candidate).map_err(|e| Rejection::ParseFailure(e.to_string()))?;
    let report = validate_template(&doc, k_count);
    if !report.is_clean() {
        return Err(Rejection::ValidationFailure(report.to_string()));
    }
    let (before, after) = (id_multiset(current), id_multiset(&doc));
    if before != after {
        let b: BTreeSet<&String> = before.iter().collect();
        let a: BTreeSet<&String> = after.iter().collect();
        let lost: Vec<&str> = b.difference(&a).map(|s| s.as_str()).collect();
        let gained: Vec<&str> = a.difference(&b).map(|s| s.as_str()).collect();
        return Err(Rejection::PreservationViolation(format!("ids lost {lost:?}, gained {gained:?}")));
    }
    Ok(doc)
}

/// Re-prompts the VLM while positional discrepancies remain, at most
/// `max_iterations` times. Only candidates that parse, validate and keep
/// every element id are accepted.
pub fn refine_template(
    ctx: RefinementContext<'_>,
    backend: &dyn VlmBackend,
) -> Result<(SvgDocument, RefinementLog), RefineError> {
    if !(ctx.tolerance > 0.0 && ctx.tolerance < 0.5) {
        return Err(RefineError::Tolerance(ctx.tolerance));
    }
    let k = ctx.segmentation.k_count();
    let report = validate_template(&ctx.current, k);
    if !report.is_clean() {
        return Err(RefineError::InvalidInput(report.to_string()));
    }
    let dims = ctx.draft.dims();
    let hints = component_hints(ctx.segmentation, ctx.indexed);
    let mut current = ctx.current;
    let mut log = RefinementLog::default();
    for iteration in 1..=ctx.max_iterations {
        let found = positional_discrepancies(&current, ctx.segmentation, dims, ctx.tolerance);
        if found.is_empty() {
            break;
        }
        let summary: Vec<String> = found.iter().map(Discrepancy::describe).collect();
        let instructions = ctx.prompts.refine_instructions(dims, &hints, &summary.join("\n"));
        let preview = rasterize_preview(&current, dims.width);
        let req = VlmSvgRequest::refine(ctx.draft, ctx.indexed, preview, serialize_svg(&current), hints.clone(), instructions);
        let started = Instant::now();
        let answer = backend.complete(&req)?;
        let latency_ms = started.elapsed().as_millis() as u64;
        let verdict = match judge_candidate(&current, &answer, k) {
            Ok(doc) => {
                current = doc;
                Verdict::Accepted
            }
            Err(why) => Verdict::Rejected(why),
        };
        log.iterations.push(IterationRecord { iteration, discrepancies: found.len(), summary, verdict, latency_ms });
    }
    log.remaining = positional_discrepancies(&current, ctx.segmentation, dims, ctx.tolerance).len();
    Ok((current, log))
}
