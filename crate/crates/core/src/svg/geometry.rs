//! Transforms, paths and view-box rectangles.

use super::{fmt_num, parse_number, SvgDocument, SvgError, SvgNode, MAX_COORD};
use crate::model::Point;

/// Axis-aligned affine map `p ↦ (sx·x + tx, sy·y + ty)`: all that
/// compositions of `translate` and `scale` can produce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub sx: f64,
    pub sy: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for Affine {
    fn default() -> Self {
        Self::IDENTITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformOp {
    Translate(f64, f64),
    Scale(f64, f64),
}

impl Affine {
    pub const IDENTITY: Affine = Affine { sx: 1.0, sy: 1.0, tx: 0.0, ty: 0.0 };

    pub fn translate(tx: f64, ty: f64) -> Self {
        Self { tx, ty, ..Self::IDENTITY }
    }

    pub fn scale(sx: f64, sy: f64) -> Self {
        Self { sx, sy, ..Self::IDENTITY }
    }

    /// `self ∘ inner`: apply `inner` first.
    pub fn then_inner(&self, inner: &Affine) -> Affine {
        Affine {
            sx: self.sx * inner.sx,
            sy: self.sy * inner.sy,
            tx: self.sx * inner.tx + self.tx,
            ty: self.sy * inner.ty + self.ty,
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        Point::new(self.sx * p.x + self.tx, self.sy * p.y + self.ty)
    }

    pub fn apply_rect(&self, r: &ViewRect) -> ViewRect {
        let a = self.apply(Point::new(r.x, r.y));
        let b = self.apply(Point::new(r.x + r.w, r.y + r.h));
        ViewRect { x: a.x.min(b.x), y: a.y.min(b.y), w: (b.x - a.x).abs(), h: (b.y - a.y).abs() }
    }

    pub fn inverse(&self) -> Affine {
        Affine { sx: 1.0 / self.sx, sy: 1.0 / self.sy, tx: -self.tx / self.sx, ty: -self.ty / self.sy }
    }

    pub fn is_translation(&self) -> bool {
        self.sx == 1.0 && self.sy == 1.0
    }

    pub fn compose_all(ops: &[TransformOp]) -> Affine {
        ops.iter().fold(Affine::IDENTITY, |acc, op| {
            let m = match *op {
                TransformOp::Translate(x, y) => Affine::translate(x, y),
                TransformOp::Scale(x, y) => Affine::scale(x, y),
            };
            acc.then_inner(&m)
        })
    }

    pub fn parse_list(raw: &str) -> Result<Vec<TransformOp>, SvgError> {
        let bad = |reason: String| SvgError::Value { attr: "transform".into(), reason };
        let mut ops = Vec::new();
        let mut rest = raw.trim();
        while !rest.is_empty() {
            let open = rest.find('(').ok_or_else(|| bad(format!("expected `name(...)` in `{raw}`")))?;
            let name = rest[..open].trim();
            let close = rest.find(')').ok_or_else(|| bad("unclosed `(`".into()))?;
            if close < open {
                return Err(bad("unbalanced parentheses".into()));
            }
            let args: Option<Vec<f64>> = rest[open + 1..close]
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(parse_number)
                .collect();
            let args = args.ok_or_else(|| bad(format!("bad arguments to {name}")))?;
            let op = match (name, args.as_slice()) {
                ("translate", [x]) => TransformOp::Translate(*x, 0.0),
                ("translate", [x, y]) => TransformOp::Translate(*x, *y),
                ("scale", [s]) => TransformOp::Scale(*s, *s),
                ("scale", [x, y]) => TransformOp::Scale(*x, *y),
                ("translate" | "scale", _) => return Err(bad(format!("wrong argument count for {name}"))),
                (other, _) => {
                    return Err(SvgError::Unsupported { name: format!("transform {other}"), line: 0, col: 0 })
                }
            };
            if let TransformOp::Scale(x, y) = op {
                if x <= 0.0 || y <= 0.0 {
                    return Err(bad("scale factors must be positive".into()));
                }
            }
            ops.push(op);
            rest = rest[close + 1..].trim_start_matches(|c: char| c == ',' || c.is_whitespace());
        }
        Ok(ops)
    }
}

pub(crate) fn format_transform(ops: &[TransformOp]) -> String {
    ops.iter()
        .map(|op| match *op {
            TransformOp::Translate(x, y) => format!("translate({},{})", fmt_num(x), fmt_num(y)),
            TransformOp::Scale(x, y) if fmt_num(x) == fmt_num(y) => format!("scale({})", fmt_num(x)),
            TransformOp::Scale(x, y) => format!("scale({},{})", fmt_num(x), fmt_num(y)),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Rectangle in view-box (user) units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewRect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl ViewRect {
    pub fn center(&self) -> Point {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn intersects(&self, other: &ViewRect) -> bool {
        self.x < other.x + other.w && other.x < self.x + self.w && self.y < other.y + other.h && other.y < self.y + self.h
    }

    pub fn union(&self, other: &ViewRect) -> ViewRect {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        ViewRect { x, y, w: (self.x + self.w).max(other.x + other.w) - x, h: (self.y + self.h).max(other.y + other.h) - y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathCommand {
    MoveTo(Point),
    LineTo(Point),
    CubicTo(Point, Point, Point),
    Close,
}

struct PathLexer<'a> {
    s: &'a [u8],
    pos: usize,
}

impl PathLexer<'_> {
    fn skip_sep(&mut self) {
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_whitespace() || self.s[self.pos] == b',') {
            self.pos += 1;
        }
    }

    fn peek_command(&mut self) -> Option<u8> {
        self.skip_sep();
        self.s.get(self.pos).copied().filter(|c| c.is_ascii_alphabetic() && *c != b'e' && *c != b'E')
    }

    fn at_number(&mut self) -> bool {
        self.skip_sep();
        matches!(self.s.get(self.pos), Some(c) if c.is_ascii_digit() || matches!(c, b'-' | b'+' | b'.'))
    }

    fn number(&mut self) -> Option<f64> {
        self.skip_sep();
        let start = self.pos;
        let s = self.s;
        let mut i = self.pos;
        if i < s.len() && (s[i] == b'-' || s[i] == b'+') {
            i += 1;
        }
        let mut seen_dot = false;
        let mut digits = 0;
        while i < s.len() && (s[i].is_ascii_digit() || (s[i] == b'.' && !seen_dot)) {
            if s[i] == b'.' {
                seen_dot = true;
            } else {
                digits += 1;
            }
            i += 1;
        }
        if digits == 0 {
            return None;
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'-' || s[j] == b'+') {
                j += 1;
            }
            let exp_start = j;
            while j < s.len() && s[j].is_ascii_digit() {
                j += 1;
            }
            if j > exp_start {
                i = j;
            }
        }
        self.pos = i;
        let v: f64 = std::str::from_utf8(&s[start..i]).ok()?.parse().ok()?;
        (v.is_finite() && v.abs() <= MAX_COORD).then_some(v)
    }

    fn point(&mut self) -> Option<Point> {
        Some(Point::new(self.number()?, self.number()?))
    }
}

impl PathCommand {
    /// Parses path data, converting relative and `H`/`V` commands to the
    /// absolute `M`/`L`/`C`/`Z` subset.
    pub fn parse_path(raw: &str) -> Result<Vec<PathCommand>, SvgError> {
        let bad = |reason: String| SvgError::Value { attr: "d".into(), reason };
        let mut lx = PathLexer { s: raw.as_bytes(), pos: 0 };
        let mut out = Vec::new();
        let mut cur = Point::new(0.0, 0.0);
        let mut start = cur;
        let mut cmd: Option<u8> = None;
        loop {
            if let Some(c) = lx.peek_command() {
                lx.pos += 1;
                cmd = Some(c);
            } else if lx.pos >= lx.s.len() {
                break;
            } else if !lx.at_number() {
                return Err(bad(format!("unexpected character at offset {}", lx.pos)));
            } else if cmd.is_none() {
                return Err(bad("path must start with a command".into()));
            }
            let c = cmd.expect("set above");
            if out.is_empty() && !matches!(c, b'M' | b'm') {
                return Err(bad("path must start with M".into()));
            }
            let rel = c.is_ascii_lowercase();
            let off = |p: Point, cur: Point| if rel { Point::new(p.x + cur.x, p.y + cur.y) } else { p };
            let need = |v: Option<Point>| v.ok_or_else(|| bad(format!("missing coordinates for `{}`", c as char)));
            match c.to_ascii_uppercase() {
                b'M' => {
                    let p = off(need(lx.point())?, cur);
                    out.push(PathCommand::MoveTo(p));
                    cur = p;
                    start = p;
                    // Further pairs after a moveto are implicit linetos.
                    cmd = Some(if rel { b'l' } else { b'L' });
                }
                b'L' => {
                    let p = off(need(lx.point())?, cur);
                    out.push(PathCommand::LineTo(p));
                    cur = p;
                }
                b'H' => {
                    let x = lx.number().ok_or_else(|| bad("missing coordinate for H".into()))?;
                    let p = Point::new(if rel { cur.x + x } else { x }, cur.y);
                    out.push(PathCommand::LineTo(p));
                    cur = p;
                }
                b'V' => {
                    let y = lx.number().ok_or_else(|| bad("missing coordinate for V".into()))?;
                    let p = Point::new(cur.x, if rel { cur.y + y } else { y });
                    out.push(PathCommand::LineTo(p));
                    cur = p;
                }
                b'C' => {
                    let c1 = off(need(lx.point())?, cur);
                    let c2 = off(need(lx.point())?, cur);
                    let p = off(need(lx.point())?, cur);
                    out.push(PathCommand::CubicTo(c1, c2, p));
                    cur = p;
                }
                b'Z' => {
                    out.push(PathCommand::Close);
                    cur = start;
                    cmd = None;
                    if lx.at_number() {
                        return Err(bad("coordinates after Z".into()));
                    }
                }
                other => {
                    return Err(SvgError::Unsupported { name: format!("path command {}", other as char), line: 0, col: 0 })
                }
            }
            if cmd.is_some() && !lx.at_number() && lx.peek_command().is_none() && lx.pos < lx.s.len() {
                return Err(bad(format!("unexpected character at offset {}", lx.pos)));
            }
        }
        if out.is_empty() {
            return Err(bad("empty path".into()));
        }
        Ok(out)
    }

    pub fn points(&self) -> Vec<Point> {
        match *self {
            PathCommand::MoveTo(p) | PathCommand::LineTo(p) => vec![p],
            PathCommand::CubicTo(a, b, c) => vec![a, b, c],
            PathCommand::Close => vec![],
        }
    }
}

pub(crate) fn format_path(cmds: &[PathCommand]) -> String {
    let pt = |p: &Point| format!("{} {}", fmt_num(p.x), fmt_num(p.y));
    cmds.iter()
        .map(|c| match c {
            PathCommand::MoveTo(p) => format!("M {}", pt(p)),
            PathCommand::LineTo(p) => format!("L {}", pt(p)),
            PathCommand::CubicTo(a, b, p) => format!("C {} {} {}", pt(a), pt(b), pt(p)),
            PathCommand::Close => "Z".to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn node_at<'a>(doc: &'a SvgDocument, path: &[usize]) -> Option<&'a SvgNode> {
    let (first, rest) = path.split_first()?;
    let mut node = doc.children.get(*first)?;
    for i in rest {
        node = node.children.get(*i)?;
    }
    Some(node)
}

pub fn node_at_mut<'a>(doc: &'a mut SvgDocument, path: &[usize]) -> Option<&'a mut SvgNode> {
    let (first, rest) = path.split_first()?;
    let mut node = doc.children.get_mut(*first)?;
    for i in rest {
        node = node.children.get_mut(*i)?;
    }
    Some(node)
}

/// Composition of the transforms of every node along `path`, the last
/// node's own transform included.
pub fn transform_along(doc: &SvgDocument, path: &[usize]) -> Option<Affine> {
    let mut tf = Affine::IDENTITY;
    for i in 1..=path.len() {
        tf = tf.then_inner(&node_at(doc, &path[..i])?.transform());
    }
    Some(tf)
}
