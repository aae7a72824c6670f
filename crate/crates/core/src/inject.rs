//! Asset injection and editable-figure verification.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::codec::{encode_png_rgba, png_data_uri, png_dimensions, unb64, PNG_DATA_URI_PREFIX};
use crate::model::RgbaAsset;
use crate::svg::{
    discover_slots, duplicate_ids, fmt_num, node_at_mut, parse_af_id, slot_geometry_in_parent, tagged_elements,
    validate_template, Affine, Finding, NodeKind, SvgDocument, SvgError, SvgNode, TransformOp, ValidationReport,
    AF_COMPONENT_CLASS, AF_PLACEHOLDER_CLASS,
};

/// Largest accepted relative difference between image and asset aspect.
pub const ASPECT_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct EditableFigure {
    pub doc: SvgDocument,
    pub component_ids: BTreeSet<u32>,
    pub job_id: Option<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum InjectError {
    #[error("template does not validate: {0}")]
    InvalidTemplate(ValidationReport),
    #[error("no asset for AF-{0}")]
    MissingAsset(u32),
    #[error("more than one asset for AF-{0}")]
    DuplicateAsset(u32),
    #[error("asset AF-{0} has no placeholder")]
    UnexpectedAsset(u32),
    #[error(transparent)]
    Svg(#[from] SvgError),
}

fn swap_class(node: &mut SvgNode, from: &str, to: &str) {
    let classes: Vec<String> = node
        .attr("class")
        .unwrap_or_default()
        .split_whitespace()
        .map(|c| if c == from { to.to_string() } else { c.to_string() })
        .collect();
    let mut out = classes.join(" ");
    if !classes.iter().any(|c| c == to) {
        out = if out.is_empty() { to.to_string() } else { format!("{to} {out}") };
    }
    let _ = node.set_attr("class", &out);
}

/// Replaces every placeholder rect with its asset, letterboxed and centered
/// in the slot. The slot's placement moves into a single `translate` on the
/// group, the image sits at the group origin.
pub fn inject_assets(template: &SvgDocument, assets: &[RgbaAsset]) -> Result<EditableFigure, InjectError> {
    let k_count = discover_slots(template).len();
    let report = validate_template(template, k_count);
    if !report.is_clean() {
        return Err(InjectError::InvalidTemplate(report));
    }
    let mut by_id: BTreeMap<u32, &RgbaAsset> = BTreeMap::new();
    for a in assets {
        if by_id.insert(a.id, a).is_some() {
            return Err(InjectError::DuplicateAsset(a.id));
        }
    }
    for k in 1..=k_count as u32 {
        if !by_id.contains_key(&k) {
            return Err(InjectError::MissingAsset(k));
        }
    }
    if let Some(&extra) = by_id.keys().find(|&&k| k as usize > k_count) {
        return Err(InjectError::UnexpectedAsset(extra));
    }

    let mut doc = template.clone();
    for (&k, asset) in &by_id {
        let (path, slot) = slot_geometry_in_parent(template, k)?;
        let (aw, ah) = (f64::from(asset.pixels.width()), f64::from(asset.pixels.height()));
        let fit = (slot.w / aw).min(slot.h / ah);
        let (iw, ih) = (aw * fit, ah * fit);
        let (ox, oy) = ((slot.w - iw) / 2.0, (slot.h - ih) / 2.0);

        let mut image = SvgNode::new(NodeKind::Image);
        for (name, v) in [("x", 0.0), ("y", 0.0), ("width", iw), ("height", ih)] {
            image.set_attr(name, &fmt_num(v))?;
        }
        image.set_attr("href", &png_data_uri(&encode_png_rgba(&asset.pixels)))?;

        let group = node_at_mut(&mut doc, &path).ok_or(SvgError::NoSuchPlaceholder(k))?;
        group.set_attr("transform", &format!("translate({},{})", fmt_num(slot.x + ox), fmt_num(slot.y + oy)))?;
        swap_class(group, AF_PLACEHOLDER_CLASS, AF_COMPONENT_CLASS);
        group.children = vec![image];
    }
    Ok(EditableFigure { doc, component_ids: by_id.keys().copied().collect(), job_id: None })
}

/// Turns components back into placeholders: each image becomes a rect of the
/// same geometry and the class returns to `af-placeholder`.
pub fn strip_assets(fig: &SvgDocument) -> SvgDocument {
    let mut doc = fig.clone();
    let paths: Vec<Vec<usize>> = tagged_elements(fig).into_iter().map(|t| t.path).collect();
    for path in paths {
        let Some(group) = node_at_mut(&mut doc, &path) else { continue };
        let Some(image) = group.children.iter().find(|c| c.kind() == NodeKind::Image).cloned() else { continue };
        let mut rect = SvgNode::new(NodeKind::Rect);
        for name in ["x", "y", "width", "height", "transform"] {
            if let Some(v) = image.attr(name) {
                let _ = rect.set_attr(name, v);
            }
        }
        swap_class(group, AF_COMPONENT_CLASS, AF_PLACEHOLDER_CLASS);
        group.children = vec![rect];
    }
    doc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyMode {
    /// Ids must be exactly `AF-1..AF-K`.
    Strict,
    /// After editing: ids may have gaps or exceed the original K, and a
    /// component transform may be `translate(..) scale(..)` from a resize.
    Edited,
}

fn transform_ok(raw: Option<&str>, mode: VerifyMode) -> bool {
    let Some(ops) = raw.and_then(|t| Affine::parse_list(t).ok()) else { return false };
    matches!(
        (mode, ops.as_slice()),
        (_, [TransformOp::Translate(..)]) | (VerifyMode::Edited, [TransformOp::Translate(..), TransformOp::Scale(..)])
    )
}

fn check_component(k: u32, node: &SvgNode, mode: VerifyMode, findings: &mut Vec<Finding>) {
    let malformed = |clause: &str| Finding::MalformedComponent { af_id: k, clause: clause.into() };
    if node.kind() != NodeKind::Group {
        findings.push(malformed("not a group"));
        return;
    }
    if !node.has_class(AF_COMPONENT_CLASS) {
        findings.push(malformed("class is not af-component"));
    }
    if !transform_ok(node.attr("transform"), mode) {
        findings.push(malformed("transform is not a single translate"));
    }
    let images: Vec<&SvgNode> = node.children.iter().filter(|c| c.kind() == NodeKind::Image).collect();
    if node.children.iter().any(|c| !matches!(c.kind(), NodeKind::Image | NodeKind::Text)) {
        findings.push(malformed("only image and text children are allowed"));
    }
    match images.as_slice() {
        [] => findings.push(Finding::MissingAsset { af_id: k }),
        [image] => match embedded_png_dims(image) {
            None => findings.push(malformed("image is not an embedded PNG")),
            Some((pw, ph)) => {
                let (w, h) = (image.num("width").unwrap_or(0.0), image.num("height").unwrap_or(0.0));
                let want = f64::from(pw) / f64::from(ph);
                if w <= 0.0 || h <= 0.0 || ((w / h) - want).abs() / want > ASPECT_TOLERANCE {
                    findings.push(Finding::AspectMismatch { af_id: k });
                }
            }
        },
        _ => findings.push(Finding::MultipleAssets { af_id: k }),
    }
}

fn embedded_png_dims(image: &SvgNode) -> Option<(u32, u32)> {
    let b64 = image.attr("href")?.strip_prefix(PNG_DATA_URI_PREFIX)?;
    // The IHDR chunk sits in the first 33 bytes, i.e. the first 44 base64 chars.
    let head = b64.get(..b64.len().min(44))?;
    let bytes = unb64(head).ok()?;
    png_dimensions(&bytes).filter(|(w, h)| *w > 0 && *h > 0)
}

/// Checks the editable-figure invariants for every component.
pub fn verify_editable_figure(doc: &SvgDocument, k_count: usize, mode: VerifyMode) -> ValidationReport {
    let mut findings = Vec::new();
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for t in tagged_elements(doc) {
        *counts.entry(t.af_id).or_default() += 1;
        check_component(t.af_id, t.node, mode, &mut findings);
    }
    for (&k, &n) in &counts {
        if n > 1 {
            findings.push(Finding::DuplicateIdentifier { af_id: k });
        }
        if mode == VerifyMode::Strict && k as usize > k_count {
            findings.push(Finding::UnknownIdentifier { af_id: k });
        }
    }
    if mode == VerifyMode::Strict {
        for k in 1..=k_count as u32 {
            if !counts.contains_key(&k) {
                findings.push(Finding::MissingComponent { af_id: k });
            }
        }
    }
    for id in duplicate_ids(doc) {
        if parse_af_id(&id).is_none() {
            findings.push(Finding::DuplicateId { id });
        }
    }
    ValidationReport::new(findings)
}
