//! Placeholder grammar and template validation.
//!
//! A slot for component `k` is exactly
//! `<g id="AF-k" class="af-placeholder" data-af="k"><rect .../></g>`; the
//! group may also carry a transform and presentation attributes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::{Affine, NodeKind, SvgDocument, SvgError, SvgNode, ViewRect};

pub const AF_PLACEHOLDER_CLASS: &str = "af-placeholder";
pub const AF_COMPONENT_CLASS: &str = "af-component";

/// Parses `AF-<k>` with `k ≥ 1` written without leading zeros.
pub fn parse_af_id(id: &str) -> Option<u32> {
    let digits = id.strip_prefix("AF-")?;
    if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaceholderSlot {
    pub af_id: u32,
    /// Rect geometry after all transforms, in view-box units.
    pub geometry: ViewRect,
    pub path: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    MissingPlaceholder { af_id: u32 },
    DuplicateIdentifier { af_id: u32 },
    UnknownIdentifier { af_id: u32 },
    MalformedPlaceholder { af_id: u32, clause: String },
    OutsideViewBox { af_id: u32 },
    DuplicateId { id: String },
    MissingComponent { af_id: u32 },
    MalformedComponent { af_id: u32, clause: String },
    MultipleAssets { af_id: u32 },
    MissingAsset { af_id: u32 },
    AspectMismatch { af_id: u32 },
}

impl Finding {
    pub fn af_id(&self) -> Option<u32> {
        match self {
            Finding::DuplicateId { .. } => None,
            Finding::MissingPlaceholder { af_id }
            | Finding::DuplicateIdentifier { af_id }
            | Finding::UnknownIdentifier { af_id }
            | Finding::MalformedPlaceholder { af_id, .. }
            | Finding::OutsideViewBox { af_id }
            | Finding::MissingComponent { af_id }
            | Finding::MalformedComponent { af_id, .. }
            | Finding::MultipleAssets { af_id }
            | Finding::MissingAsset { af_id }
            | Finding::AspectMismatch { af_id } => Some(*af_id),
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::MissingPlaceholder { af_id } => write!(f, "AF-{af_id}: no placeholder"),
            Finding::DuplicateIdentifier { af_id } => write!(f, "AF-{af_id}: identifier used more than once"),
            Finding::UnknownIdentifier { af_id } => write!(f, "AF-{af_id}: not a component of this figure"),
            Finding::MalformedPlaceholder { af_id, clause } => write!(f, "AF-{af_id}: malformed placeholder ({clause})"),
            Finding::OutsideViewBox { af_id } => write!(f, "AF-{af_id}: slot lies outside the view box"),
            Finding::DuplicateId { id } => write!(f, "id `{id}` is not unique"),
            Finding::MissingComponent { af_id } => write!(f, "AF-{af_id}: no component group"),
            Finding::MalformedComponent { af_id, clause } => write!(f, "AF-{af_id}: malformed component ({clause})"),
            Finding::MultipleAssets { af_id } => write!(f, "AF-{af_id}: more than one image"),
            Finding::MissingAsset { af_id } => write!(f, "AF-{af_id}: no image"),
            Finding::AspectMismatch { af_id } => write!(f, "AF-{af_id}: image aspect differs from its asset"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn new(mut findings: Vec<Finding>) -> Self {
        findings.sort();
        findings.dedup();
        Self { findings }
    }

    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.findings.is_empty() {
            return f.write_str("no findings");
        }
        for (i, finding) in self.findings.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{finding}")?;
        }
        Ok(())
    }
}

/// An element carrying an `AF-<k>` id, with the transform of its parent space.
pub(crate) struct Tagged<'a> {
    pub af_id: u32,
    pub node: &'a SvgNode,
    pub path: Vec<usize>,
    pub parent: Affine,
}

pub(crate) fn tagged_elements(doc: &SvgDocument) -> Vec<Tagged<'_>> {
    fn visit<'a>(nodes: &'a [SvgNode], parent: Affine, path: &mut Vec<usize>, out: &mut Vec<Tagged<'a>>) {
        for (i, node) in nodes.iter().enumerate() {
            path.push(i);
            if let Some(k) = node.id().and_then(parse_af_id) {
                out.push(Tagged { af_id: k, node, path: path.clone(), parent });
            }
            visit(&node.children, parent.then_inner(&node.transform()), path, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    visit(&doc.children, Affine::IDENTITY, &mut Vec::new(), &mut out);
    out
}

pub(crate) fn duplicate_ids(doc: &SvgDocument) -> Vec<String> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for id in doc.ids() {
        *seen.entry(id).or_default() += 1;
    }
    seen.into_iter().filter(|(_, n)| *n > 1).map(|(id, _)| id).collect()
}

/// Slot rect in the coordinate space of the group's parent.
fn slot_rect_local(node: &SvgNode, k: u32) -> Result<ViewRect, &'static str> {
    if node.kind() != NodeKind::Group {
        return Err("not a group");
    }
    if !node.has_class(AF_PLACEHOLDER_CLASS) {
        return Err("class is not af-placeholder");
    }
    if node.attr("data-af") != Some(k.to_string().as_str()) {
        return Err("data-af does not match the id");
    }
    let [rect] = node.children.as_slice() else {
        return Err("must hold exactly one rect");
    };
    if rect.kind() != NodeKind::Rect {
        return Err("must hold exactly one rect");
    }
    let w = rect.num("width").unwrap_or(0.0);
    let h = rect.num("height").unwrap_or(0.0);
    if w <= 0.0 || h <= 0.0 {
        return Err("rect has no area");
    }
    let local = ViewRect { x: rect.num("x").unwrap_or(0.0), y: rect.num("y").unwrap_or(0.0), w, h };
    Ok(node.transform().then_inner(&rect.transform()).apply_rect(&local))
}

/// Well-formed placeholder slots in document order.
pub fn discover_slots(doc: &SvgDocument) -> Vec<PlaceholderSlot> {
    tagged_elements(doc)
        .into_iter()
        .filter_map(|t| {
            let local = slot_rect_local(t.node, t.af_id).ok()?;
            Some(PlaceholderSlot { af_id: t.af_id, geometry: t.parent.apply_rect(&local), path: t.path })
        })
        .collect()
}

pub fn validate_template(doc: &SvgDocument, k_count: usize) -> ValidationReport {
    let mut findings = Vec::new();
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    let view = doc.view_box.rect();
    for t in tagged_elements(doc) {
        *counts.entry(t.af_id).or_default() += 1;
        match slot_rect_local(t.node, t.af_id) {
            Ok(local) => {
                if !t.parent.apply_rect(&local).intersects(&view) {
                    findings.push(Finding::OutsideViewBox { af_id: t.af_id });
                }
            }
            Err(clause) => findings.push(Finding::MalformedPlaceholder { af_id: t.af_id, clause: clause.into() }),
        }
    }
    let expected: BTreeSet<u32> = (1..=k_count as u64).filter_map(|k| u32::try_from(k).ok()).collect();
    for k in &expected {
        if !counts.contains_key(k) {
            findings.push(Finding::MissingPlaceholder { af_id: *k });
        }
    }
    for (k, n) in &counts {
        if !expected.contains(k) {
            findings.push(Finding::UnknownIdentifier { af_id: *k });
        } else if *n > 1 {
            findings.push(Finding::DuplicateIdentifier { af_id: *k });
        }
    }
    for id in duplicate_ids(doc) {
        if parse_af_id(&id).is_none() {
            findings.push(Finding::DuplicateId { id });
        }
    }
    ValidationReport::new(findings)
}

/// Slot rect for `k` after all ancestor transforms, in view-box units.
pub fn placeholder_geometry(doc: &SvgDocument, af_id: u32) -> Result<ViewRect, SvgError> {
    discover_slots(doc)
        .into_iter()
        .find(|s| s.af_id == af_id)
        .map(|s| s.geometry)
        .ok_or(SvgError::NoSuchPlaceholder(af_id))
}

/// Slot rect for `k` in the coordinate space of the slot group's parent,
/// i.e. where a replacement `translate` on the group would place it.
pub fn slot_geometry_in_parent(doc: &SvgDocument, af_id: u32) -> Result<(Vec<usize>, ViewRect), SvgError> {
    tagged_elements(doc)
        .into_iter()
        .filter(|t| t.af_id == af_id)
        .find_map(|t| slot_rect_local(t.node, af_id).ok().map(|r| (t.path, r)))
        .ok_or(SvgError::NoSuchPlaceholder(af_id))
}
