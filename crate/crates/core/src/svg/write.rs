use std::fmt::Write as _;

use super::{SvgDocument, SvgNode, SVG_NS};

fn escape(raw: &str, attr: bool, out: &mut String) {
    for c in raw.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' if attr => out.push_str("&quot;"),
            '\n' if attr => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' if attr => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
}

fn write_node(node: &SvgNode, depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
    out.push('<');
    out.push_str(node.kind.tag());
    for (name, value) in &node.attrs {
        let _ = write!(out, " {name}=\"");
        escape(value, true, out);
        out.push('"');
    }
    if !node.text.is_empty() {
        out.push('>');
        escape(&node.text, false, out);
        let _ = writeln!(out, "</{}>", node.kind.tag());
    } else if node.children.is_empty() {
        out.push_str("/>\n");
    } else {
        out.push_str(">\n");
        for child in &node.children {
            write_node(child, depth + 1, out);
        }
        for _ in 0..depth {
            out.push_str("  ");
        }
        let _ = writeln!(out, "</{}>", node.kind.tag());
    }
}

/// Canonical serialization: sorted attributes, 2-space indent, trailing newline.
pub fn serialize_svg(doc: &SvgDocument) -> String {
    let mut out = String::new();
    let _ = write!(out, "<svg viewBox=\"{}\" xmlns=\"{SVG_NS}\"", doc.view_box);
    if doc.children.is_empty() {
        out.push_str("/>\n");
        return out;
    }
    out.push_str(">\n");
    for child in &doc.children {
        write_node(child, 1, &mut out);
    }
    out.push_str("</svg>\n");
    out
}
