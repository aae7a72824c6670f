//! Hand-rolled XML reader for the SVG subset with line/column diagnostics.

use super::{normalize_attr, parse_number, NodeKind, SvgDocument, SvgError, SvgNode, ViewBox, MAX_DEPTH};

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0, line: 1, col: 1 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn starts_with(&self, s: &str) -> bool {
        self.rest().starts_with(s)
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.starts_with(s) {
            for _ in s.chars() {
                self.bump();
            }
            true
        } else {
            false
        }
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn here(&self) -> (usize, usize) {
        (self.line, self.col)
    }

    fn err(&self, reason: impl Into<String>) -> SvgError {
        SvgError::Parse { line: self.line, col: self.col, reason: reason.into() }
    }

    /// Consumes through `end`, erroring with `what` at EOF.
    fn skip_past(&mut self, end: &str, what: &str) -> Result<(), SvgError> {
        let (line, col) = self.here();
        while !self.starts_with(end) {
            if self.bump().is_none() {
                return Err(SvgError::Parse { line, col, reason: format!("unterminated {what}") });
            }
        }
        self.eat(end);
        Ok(())
    }

    fn name(&mut self) -> Result<&'a str, SvgError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_alphanumeric() || matches!(c, '-' | '_' | ':' | '.')) {
            self.bump();
        }
        if self.pos == start {
            return Err(self.err("expected a name"));
        }
        Ok(&self.src[start..self.pos])
    }

    fn entity(&mut self) -> Result<char, SvgError> {
        let (line, col) = self.here();
        self.bump(); // '&'
        let start = self.pos;
        while self.peek().is_some_and(|c| c != ';') && self.pos - start < 12 {
            self.bump();
        }
        let body = &self.src[start..self.pos];
        if !self.eat(";") {
            return Err(SvgError::Parse { line, col, reason: "unterminated entity".into() });
        }
        let decoded = match body {
            "lt" => Some('<'),
            "gt" => Some('>'),
            "amp" => Some('&'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            _ => {
                let code = if let Some(hex) = body.strip_prefix("#x").or_else(|| body.strip_prefix("#X")) {
                    u32::from_str_radix(hex, 16).ok()
                } else if let Some(dec) = body.strip_prefix('#') {
                    dec.parse().ok()
                } else {
                    None
                };
                code.and_then(char::from_u32)
            }
        };
        decoded.ok_or(SvgError::Parse { line, col, reason: format!("unknown entity `&{body};`") })
    }

    fn attr_value(&mut self) -> Result<String, SvgError> {
        let quote = match self.peek() {
            Some(q @ ('"' | '\'')) => q,
            _ => return Err(self.err("expected quoted attribute value")),
        };
        let (line, col) = self.here();
        self.bump();
        let mut out = String::new();
        loop {
            match self.peek() {
                None => return Err(SvgError::Parse { line, col, reason: "unterminated attribute value".into() }),
                Some(c) if c == quote => {
                    self.bump();
                    return Ok(out);
                }
                Some('<') => return Err(self.err("`<` in attribute value")),
                Some('&') => out.push(self.entity()?),
                Some(c) => {
                    out.push(c);
                    self.bump();
                }
            }
        }
    }
}

struct RawTag {
    name: String,
    attrs: Vec<(String, String, usize, usize)>,
    self_closing: bool,
    line: usize,
    col: usize,
}

fn read_tag(cur: &mut Cursor) -> Result<RawTag, SvgError> {
    let (line, col) = cur.here();
    cur.bump(); // '<'
    let name = cur.name()?.to_string();
    let mut attrs: Vec<(String, String, usize, usize)> = Vec::new();
    loop {
        let had_ws = cur.peek().is_some_and(char::is_whitespace);
        cur.skip_ws();
        if cur.eat("/>") {
            return Ok(RawTag { name, attrs, self_closing: true, line, col });
        }
        if cur.eat(">") {
            return Ok(RawTag { name, attrs, self_closing: false, line, col });
        }
        if cur.peek().is_none() {
            return Err(SvgError::Parse { line, col, reason: format!("unterminated <{name}> tag") });
        }
        if !had_ws {
            return Err(cur.err("expected whitespace before attribute"));
        }
        let (aline, acol) = cur.here();
        let aname = cur.name()?.to_string();
        cur.skip_ws();
        if !cur.eat("=") {
            return Err(cur.err(format!("expected `=` after `{aname}`")));
        }
        cur.skip_ws();
        let value = cur.attr_value()?;
        if attrs.iter().any(|(n, ..)| *n == aname) {
            return Err(SvgError::Parse { line: aline, col: acol, reason: format!("duplicate attribute `{aname}`") });
        }
        attrs.push((aname, value, aline, acol));
    }
}

fn locate(err: SvgError, line: usize, col: usize) -> SvgError {
    match err {
        SvgError::Value { attr, reason } => SvgError::Parse { line, col, reason: format!("`{attr}`: {reason}") },
        SvgError::Unsupported { name, .. } => SvgError::Unsupported { name, line, col },
        other => other,
    }
}

fn build_node(tag: &RawTag) -> Result<SvgNode, SvgError> {
    let kind = NodeKind::from_tag(&tag.name)
        .ok_or_else(|| SvgError::Unsupported { name: format!("<{}>", tag.name), line: tag.line, col: tag.col })?;
    let mut node = SvgNode::new(kind);
    for (name, value, line, col) in &tag.attrs {
        let canonical = if name == "xlink:href" { "href" } else { name.as_str() };
        if !kind.allows(canonical) {
            return Err(SvgError::Unsupported {
                name: format!("attribute `{name}` on <{kind}>"),
                line: *line,
                col: *col,
            });
        }
        if node.attrs.contains_key(canonical) {
            return Err(SvgError::Parse { line: *line, col: *col, reason: format!("duplicate attribute `{canonical}`") });
        }
        let v = normalize_attr(canonical, value).map_err(|e| locate(e, *line, *col))?;
        node.attrs.insert(canonical.to_string(), v);
    }
    Ok(node)
}

fn root_view_box(tag: &RawTag) -> Result<ViewBox, SvgError> {
    let mut view_box = None;
    let mut width = None;
    let mut height = None;
    for (name, value, line, col) in &tag.attrs {
        match name.as_str() {
            "viewBox" => view_box = Some(ViewBox::parse(value).map_err(|e| locate(e, *line, *col))?),
            "width" => width = parse_number(value),
            "height" => height = parse_number(value),
            "xmlns" | "xmlns:xlink" | "version" => {}
            other => {
                return Err(SvgError::Unsupported { name: format!("attribute `{other}` on <svg>"), line: *line, col: *col })
            }
        }
    }
    match (view_box, width, height) {
        (Some(vb), ..) => Ok(vb),
        (None, Some(w), Some(h)) => ViewBox::new(0.0, 0.0, w, h).map_err(|e| locate(e, tag.line, tag.col)),
        _ => Err(SvgError::Parse { line: tag.line, col: tag.col, reason: "<svg> needs a viewBox".into() }),
    }
}

/// Skips whitespace, comments, declarations and processing instructions.
fn skip_misc(cur: &mut Cursor) -> Result<(), SvgError> {
    loop {
        cur.skip_ws();
        if cur.starts_with("<!--") {
            cur.skip_past("-->", "comment")?;
        } else if cur.starts_with("<?") {
            cur.skip_past("?>", "processing instruction")?;
        } else if cur.starts_with("<!DOCTYPE") {
            let (line, col) = cur.here();
            while let Some(c) = cur.peek() {
                if c == '[' {
                    return Err(SvgError::Unsupported { name: "DOCTYPE internal subset".into(), line, col });
                }
                cur.bump();
                if c == '>' {
                    break;
                }
            }
        } else {
            return Ok(());
        }
    }
}

struct Open {
    node: SvgNode,
    tag: String,
    line: usize,
    col: usize,
}

/// Parses SVG text in the supported subset.
pub fn parse_svg(text: &str) -> Result<SvgDocument, SvgError> {
    let mut cur = Cursor::new(text.strip_prefix('\u{feff}').unwrap_or(text));
    skip_misc(&mut cur)?;
    if cur.peek() != Some('<') {
        return Err(cur.err("expected <svg> root element"));
    }
    let root = read_tag(&mut cur)?;
    if root.name != "svg" {
        return Err(SvgError::Parse { line: root.line, col: root.col, reason: format!("root element is <{}>, expected <svg>", root.name) });
    }
    let mut doc = SvgDocument::new(root_view_box(&root)?);
    if !root.self_closing {
        parse_content(&mut cur, &mut doc, &root)?;
    }
    skip_misc(&mut cur)?;
    if cur.peek().is_some() {
        return Err(cur.err("content after the root element"));
    }
    Ok(doc)
}

fn parse_content(cur: &mut Cursor, doc: &mut SvgDocument, root: &RawTag) -> Result<(), SvgError> {
    let mut stack: Vec<Open> = Vec::new();
    loop {
        let Some(c) = cur.peek() else {
            let (tag, line, col) = match stack.last() {
                Some(open) => (open.tag.as_str(), open.line, open.col),
                None => ("svg", root.line, root.col),
            };
            return Err(SvgError::Parse { line, col, reason: format!("unclosed <{tag}>") });
        };
        if c != '<' {
            if c == '&' {
                let ch = cur.entity()?;
                match stack.last_mut() {
                    Some(open) if open.node.kind == NodeKind::Text => open.node.text.push(ch),
                    _ => return Err(cur.err("character data outside <text>")),
                }
                continue;
            }
            if let Some(open) = stack.last_mut().filter(|o| o.node.kind == NodeKind::Text) {
                open.node.text.push(c);
                cur.bump();
            } else if c.is_whitespace() {
                cur.bump();
            } else {
                return Err(cur.err("character data outside <text>"));
            }
            continue;
        }
        if cur.starts_with("<!--") {
            cur.skip_past("-->", "comment")?;
            continue;
        }
        if cur.starts_with("<![CDATA[") {
            let (line, col) = cur.here();
            return Err(SvgError::Unsupported { name: "CDATA section".into(), line, col });
        }
        if cur.starts_with("<?") || cur.starts_with("<!") {
            let (line, col) = cur.here();
            return Err(SvgError::Unsupported { name: "markup declaration".into(), line, col });
        }
        if cur.starts_with("</") {
            let (line, col) = cur.here();
            cur.eat("</");
            let name = cur.name()?;
            cur.skip_ws();
            if !cur.eat(">") {
                return Err(cur.err(format!("expected `>` to close </{name}>")));
            }
            match stack.pop() {
                Some(open) if open.tag == name => {
                    let node = open.node;
                    match stack.last_mut() {
                        Some(parent) => parent.node.children.push(node),
                        None => doc.children.push(node),
                    }
                }
                Some(open) if name == "svg" || stack.iter().any(|o| o.tag == name) => {
                    return Err(SvgError::Parse {
                        line: open.line,
                        col: open.col,
                        reason: format!("unclosed <{}> (reached </{name}> at {line}:{col})", open.tag),
                    })
                }
                Some(open) => {
                    return Err(SvgError::Parse {
                        line,
                        col,
                        reason: format!("</{name}> does not close <{}> opened at {}:{}", open.tag, open.line, open.col),
                    })
                }
                None if name == "svg" => return Ok(()),
                None => return Err(SvgError::Parse { line, col, reason: format!("unexpected </{name}>") }),
            }
            continue;
        }

        let tag = read_tag(cur)?;
        let node = build_node(&tag)?;
        if let Some(parent) = stack.last() {
            if parent.node.kind != NodeKind::Group {
                return Err(SvgError::Parse {
                    line: tag.line,
                    col: tag.col,
                    reason: format!("<{}> cannot contain <{}>", parent.tag, tag.name),
                });
            }
        }
        if stack.len() >= MAX_DEPTH {
            return Err(SvgError::Parse { line: tag.line, col: tag.col, reason: "elements nested too deeply".into() });
        }
        if tag.self_closing {
            match stack.last_mut() {
                Some(parent) => parent.node.children.push(node),
                None => doc.children.push(node),
            }
        } else {
            stack.push(Open { node, tag: tag.name, line: tag.line, col: tag.col });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let doc = parse_svg(r#"<svg viewBox="0 0 100 100"/>"#).unwrap();
        assert!(doc.children.is_empty());
        assert_eq!(doc.view_box.width, 100.0);
    }

    #[test]
    fn declaration_comments_and_namespaces() {
        let src = "\u{feff}<?xml version=\"1.0\"?>\n<!-- hi -->\n<svg xmlns=\"http://www.w3.org/2000/svg\" xmlns:xlink=\"http://www.w3.org/1999/xlink\" width=\"40\" height=\"30\">\n<!-- c --><image xlink:href=\"a.png\" x=\"0\" y=\"0\" width=\"1\" height=\"1\"/></svg>\n";
        let doc = parse_svg(src).unwrap();
        assert_eq!(doc.view_box.width, 40.0);
        assert_eq!(doc.children[0].attr("href"), Some("a.png"));
    }

    #[test]
    fn unclosed_group_reports_its_line() {
        let src = "<svg viewBox=\"0 0 10 10\">\n  <rect x=\"1\" y=\"1\" width=\"2\" height=\"2\"/>\n  <g id=\"a\">\n    <rect x=\"1\" y=\"1\" width=\"2\" height=\"2\"/>\n</svg>";
        match parse_svg(src) {
            Err(SvgError::Parse { line, reason, .. }) => {
                assert_eq!(line, 3, "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let src = "<svg viewBox=\"0 0 10 10\">\n<g>\n";
        match parse_svg(src) {
            Err(SvgError::Parse { line, reason, .. }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("unclosed <g>"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_elements_and_attributes() {
        let e = parse_svg("<svg viewBox=\"0 0 1 1\">\n  <ellipse/>\n</svg>").unwrap_err();
        assert_eq!(e, SvgError::Unsupported { name: "<ellipse>".into(), line: 2, col: 3 });
        let e = parse_svg("<svg viewBox=\"0 0 1 1\"><rect style=\"fill:red\"/></svg>").unwrap_err();
        assert!(matches!(e, SvgError::Unsupported { name, .. } if name.contains("style")));
        let e = parse_svg("<svg viewBox=\"0 0 1 1\"><g transform=\"rotate(4)\"/></svg>").unwrap_err();
        assert!(matches!(e, SvgError::Unsupported { name, col: 27, .. } if name.contains("rotate")));
    }

    #[test]
    fn malformed_inputs() {
        for src in [
            "",
            "hello",
            "<svg>",
            "<svg viewBox=\"0 0 1 1\">",
            "<svg viewBox=\"0 0 1 1\"></g></svg>",
            "<svg viewBox=\"0 0 1 1\"><g></rect></svg>",
            "<svg viewBox=\"0 0 1 1\">text</svg>",
            "<svg viewBox=\"0 0 1 1\"><rect x=1/></svg>",
            "<svg viewBox=\"0 0 1 1\"><rect x=\"1\" x=\"2\"/></svg>",
            "<svg viewBox=\"0 0 1 1\"><text>&bogus;</text></svg>",
            "<svg viewBox=\"0 0 1 1\"/><extra/>",
            "<svg viewBox=\"0 0 1 1\"><rect/><![CDATA[x]]></svg>",
            "<svg viewBox=\"0 0 -1 1\"/>",
            "<rect/>",
            "<svg viewBox=\"0 0 1 1\"><text><rect/></text></svg>",
        ] {
            assert!(parse_svg(src).is_err(), "{src}");
        }
    }

    #[test]
    fn text_content_and_entities() {
        let doc = parse_svg("<svg viewBox=\"0 0 9 9\"><text x=\"1\" y=\"2\"> a &lt;b&gt; &#65;&#x42; </text></svg>").unwrap();
        assert_eq!(doc.children[0].text(), " a <b> AB ");
    }

    #[test]
    fn nesting_depth_limited() {
        let mut src = String::from("<svg viewBox=\"0 0 1 1\">");
        for _ in 0..200 {
            src.push_str("<g>");
        }
        for _ in 0..200 {
            src.push_str("</g>");
        }
        src.push_str("</svg>");
        assert!(matches!(parse_svg(&src), Err(SvgError::Parse { .. })));
    }
}
