//! The SVG subset used for templates and final figures.
//!
//! Supported elements: `svg` (root), `g`, `rect`, `circle`, `line`, `path`
//! (absolute `M`/`L`/`C`/`Z` after normalization), `text` and `image`.
//! Transforms are limited to compositions of `translate` and `scale`.
//! Attribute values are normalized when set, so a parsed document
//! serializes canonically and re-parses to the same tree.

mod geometry;
mod parse;
mod raster;
mod template;
mod write;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use geometry::{node_at, node_at_mut, transform_along, Affine, PathCommand, TransformOp, ViewRect};
pub use parse::parse_svg;
pub use raster::{rasterize_preview, rgb_from_hex};
pub use template::{
    discover_slots, parse_af_id, placeholder_geometry, slot_geometry_in_parent, validate_template,
    Finding, PlaceholderSlot, ValidationReport, AF_COMPONENT_CLASS, AF_PLACEHOLDER_CLASS,
};
pub(crate) use template::{duplicate_ids, tagged_elements};
pub use write::serialize_svg;

pub const SVG_NS: &str = "http://www.w3.org/2000/svg";
/// Coordinates beyond this magnitude are rejected so canonical 3-decimal
/// formatting stays exact.
pub const MAX_COORD: f64 = 1.0e9;
pub const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SvgError {
    #[error("parse error at {line}:{col}: {reason}")]
    Parse { line: usize, col: usize, reason: String },
    #[error("unsupported feature `{name}` at {line}:{col}")]
    Unsupported { name: String, line: usize, col: usize },
    #[error("invalid value for `{attr}`: {reason}")]
    Value { attr: String, reason: String },
    #[error("no placeholder for component {0}")]
    NoSuchPlaceholder(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Group,
    Rect,
    Circle,
    Line,
    Path,
    Text,
    Image,
}

impl NodeKind {
    pub fn tag(self) -> &'static str {
        match self {
            NodeKind::Group => "g",
            NodeKind::Rect => "rect",
            NodeKind::Circle => "circle",
            NodeKind::Line => "line",
            NodeKind::Path => "path",
            NodeKind::Text => "text",
            NodeKind::Image => "image",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "g" => NodeKind::Group,
            "rect" => NodeKind::Rect,
            "circle" => NodeKind::Circle,
            "line" => NodeKind::Line,
            "path" => NodeKind::Path,
            "text" => NodeKind::Text,
            "image" => NodeKind::Image,
            _ => return None,
        })
    }

    fn allows(self, attr: &str) -> bool {
        const COMMON: &[&str] = &["id", "class", "transform", "fill", "stroke", "stroke-width", "opacity", "data-af"];
        if COMMON.contains(&attr) {
            return true;
        }
        let specific: &[&str] = match self {
            NodeKind::Group => &["font-size", "font-family"],
            NodeKind::Rect => &["x", "y", "width", "height", "rx", "ry"],
            NodeKind::Circle => &["cx", "cy", "r"],
            NodeKind::Line => &["x1", "y1", "x2", "y2"],
            NodeKind::Path => &["d"],
            NodeKind::Text => &["x", "y", "font-size", "font-family", "text-anchor"],
            NodeKind::Image => &["x", "y", "width", "height", "href"],
        };
        specific.contains(&attr)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Canonical number formatting: at most three decimals, no trailing zeros.
pub fn fmt_num(v: f64) -> String {
    let mut s = format!("{v:.3}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

pub(crate) fn parse_number(raw: &str) -> Option<f64> {
    let t = raw.trim();
    let t = t.strip_suffix("px").unwrap_or(t).trim_end();
    if t.is_empty() || t.chars().any(|c| c.is_ascii_alphabetic() && c != 'e' && c != 'E') {
        return None;
    }
    let v: f64 = t.parse().ok()?;
    (v.is_finite() && v.abs() <= MAX_COORD).then_some(v)
}

/// Rounds a number to its canonical three-decimal value.
pub fn canonical(v: f64) -> f64 {
    fmt_num(v).parse().unwrap_or(0.0)
}

fn named_color(name: &str) -> Option<&'static str> {
    Some(match name {
        "black" => "#000000",
        "white" => "#ffffff",
        "red" => "#ff0000",
        "green" => "#008000",
        "lime" => "#00ff00",
        "blue" => "#0000ff",
        "yellow" => "#ffff00",
        "orange" => "#ffa500",
        "purple" => "#800080",
        "gray" | "grey" => "#808080",
        "navy" => "#000080",
        "teal" => "#008080",
        _ => return None,
    })
}

pub(crate) fn normalize_color(raw: &str) -> Option<String> {
    let v = raw.trim().to_ascii_lowercase();
    if v == "none" {
        return Some(v);
    }
    if let Some(hex) = v.strip_prefix('#') {
        if !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return None;
        }
        return match hex.len() {
            6 => Some(format!("#{hex}")),
            3 => {
                let mut out = String::from("#");
                for c in hex.chars() {
                    out.push(c);
                    out.push(c);
                }
                Some(out)
            }
            _ => None,
        };
    }
    if let Some(inner) = v.strip_prefix("rgb(").and_then(|r| r.strip_suffix(')')) {
        let parts: Vec<u8> = inner.split(',').filter_map(|p| p.trim().parse().ok()).collect();
        return (parts.len() == 3 && inner.split(',').count() == 3)
            .then(|| format!("#{:02x}{:02x}{:02x}", parts[0], parts[1], parts[2]));
    }
    named_color(&v).map(str::to_string)
}

const NON_NEGATIVE: &[&str] = &["width", "height", "r", "rx", "ry", "stroke-width", "font-size"];
const NUMERIC: &[&str] = &[
    "x", "y", "width", "height", "rx", "ry", "cx", "cy", "r", "x1", "y1", "x2", "y2", "stroke-width", "font-size",
    "opacity",
];

/// Checks and canonicalizes one attribute value.
pub fn normalize_attr(name: &str, raw: &str) -> Result<String, SvgError> {
    let bad = |reason: String| SvgError::Value { attr: name.to_string(), reason };
    if NUMERIC.contains(&name) {
        let v = parse_number(raw).ok_or_else(|| bad(format!("`{raw}` is not a finite number")))?;
        if NON_NEGATIVE.contains(&name) && v < 0.0 {
            return Err(bad(format!("{v} is negative")));
        }
        if name == "opacity" && !(0.0..=1.0).contains(&v) {
            return Err(bad(format!("{v} outside [0, 1]")));
        }
        return Ok(fmt_num(v));
    }
    match name {
        "fill" | "stroke" => normalize_color(raw).ok_or_else(|| bad(format!("unsupported color `{raw}`"))),
        "transform" => Affine::parse_list(raw).map(|list| geometry::format_transform(&list)),
        "d" => PathCommand::parse_path(raw).map(|cmds| geometry::format_path(&cmds)),
        "data-af" => match raw.trim().parse::<u32>() {
            Ok(k) if k >= 1 => Ok(k.to_string()),
            _ => Err(bad(format!("`{raw}` is not a positive integer"))),
        },
        "text-anchor" => match raw.trim() {
            v @ ("start" | "middle" | "end") => Ok(v.to_string()),
            other => Err(bad(format!("unsupported anchor `{other}`"))),
        },
        "id" => {
            let v = raw.trim();
            if v.is_empty() || v.chars().any(char::is_whitespace) {
                Err(bad("ids must be non-empty without whitespace".into()))
            } else {
                Ok(v.to_string())
            }
        }
        _ => Ok(raw.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SvgNode {
    kind: NodeKind,
    attrs: BTreeMap<String, String>,
    pub children: Vec<SvgNode>,
    text: String,
}

impl SvgNode {
    pub fn new(kind: NodeKind) -> Self {
        Self { kind, attrs: BTreeMap::new(), children: Vec::new(), text: String::new() }
    }

    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn attrs(&self) -> &BTreeMap<String, String> {
        &self.attrs
    }

    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs.get(name).map(String::as_str)
    }

    pub fn num(&self, name: &str) -> Option<f64> {
        self.attr(name).and_then(parse_number)
    }

    pub fn id(&self) -> Option<&str> {
        self.attr("id")
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.attr("class").is_some_and(|c| c.split_whitespace().any(|t| t == class))
    }

    /// Sets a whitelisted attribute, normalizing its value.
    pub fn set_attr(&mut self, name: &str, value: &str) -> Result<(), SvgError> {
        if !self.kind.allows(name) {
            return Err(SvgError::Value {
                attr: name.to_string(),
                reason: format!("not allowed on <{}>", self.kind),
            });
        }
        let v = normalize_attr(name, value)?;
        self.attrs.insert(name.to_string(), v);
        Ok(())
    }

    pub fn with_attr(mut self, name: &str, value: impl fmt::Display) -> Result<Self, SvgError> {
        self.set_attr(name, &value.to_string())?;
        Ok(self)
    }

    pub fn remove_attr(&mut self, name: &str) -> Option<String> {
        self.attrs.remove(name)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn set_text(&mut self, text: impl Into<String>) -> Result<(), SvgError> {
        if self.kind != NodeKind::Text {
            return Err(SvgError::Value { attr: "#text".into(), reason: format!("<{}> cannot hold text", self.kind) });
        }
        self.text = text.into();
        Ok(())
    }

    pub fn push(&mut self, child: SvgNode) -> Result<(), SvgError> {
        if self.kind != NodeKind::Group {
            return Err(SvgError::Value { attr: "#children".into(), reason: format!("<{}> cannot hold children", self.kind) });
        }
        self.children.push(child);
        Ok(())
    }

    pub fn transform(&self) -> Affine {
        self.attr("transform").and_then(|t| Affine::parse_list(t).ok()).map(|l| Affine::compose_all(&l)).unwrap_or_default()
    }

    /// Depth-first pre-order walk.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a SvgNode)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewBox {
    pub min_x: f64,
    pub min_y: f64,
    pub width: f64,
    pub height: f64,
}

impl ViewBox {
    pub fn new(min_x: f64, min_y: f64, width: f64, height: f64) -> Result<Self, SvgError> {
        let bad = |reason: &str| SvgError::Value { attr: "viewBox".into(), reason: reason.into() };
        let vals = [min_x, min_y, width, height];
        if vals.iter().any(|v| !v.is_finite() || v.abs() > MAX_COORD) {
            return Err(bad("non-finite or out-of-range value"));
        }
        let [min_x, min_y, width, height] = vals.map(canonical);
        if width <= 0.0 || height <= 0.0 {
            return Err(bad("width and height must be positive"));
        }
        Ok(Self { min_x, min_y, width, height })
    }

    pub fn parse(raw: &str) -> Result<Self, SvgError> {
        let parts: Vec<&str> = raw.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        let nums: Option<Vec<f64>> = parts.iter().map(|p| parse_number(p)).collect();
        match nums.as_deref() {
            Some([a, b, c, d]) => Self::new(*a, *b, *c, *d),
            _ => Err(SvgError::Value { attr: "viewBox".into(), reason: format!("expected four numbers, got `{raw}`") }),
        }
    }

    pub fn rect(&self) -> ViewRect {
        ViewRect { x: self.min_x, y: self.min_y, w: self.width, h: self.height }
    }
}

impl fmt::Display for ViewBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", fmt_num(self.min_x), fmt_num(self.min_y), fmt_num(self.width), fmt_num(self.height))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvgDocument {
    pub view_box: ViewBox,
    pub children: Vec<SvgNode>,
}

impl SvgDocument {
    pub fn new(view_box: ViewBox) -> Self {
        Self { view_box, children: Vec::new() }
    }

    pub fn walk<'a>(&'a self, mut f: impl FnMut(&'a SvgNode)) {
        for c in &self.children {
            c.walk(&mut f);
        }
    }

    /// Top-down search for the first element with `id`.
    pub fn find_by_id(&self, id: &str) -> Option<&SvgNode> {
        let mut found = None;
        self.walk(|n| {
            if found.is_none() && n.id() == Some(id) {
                found = Some(n);
            }
        });
        found
    }

    /// Index path of the first element with `id`.
    pub fn path_of_id(&self, id: &str) -> Option<Vec<usize>> {
        fn search(nodes: &[SvgNode], id: &str, path: &mut Vec<usize>) -> bool {
            for (i, n) in nodes.iter().enumerate() {
                path.push(i);
                if n.id() == Some(id) || search(&n.children, id, path) {
                    return true;
                }
                path.pop();
            }
            false
        }
        let mut path = Vec::new();
        search(&self.children, id, &mut path).then_some(path)
    }

    pub fn ids(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk(|n| {
            if let Some(id) = n.id() {
                out.push(id.to_string());
            }
        });
        out
    }
}
