//! Generators for documents in the SVG subset, and the engine laws.

use figforge_core::svg::{parse_svg, serialize_svg, NodeKind, SvgDocument, SvgNode, ViewBox};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

/// parse(serialize(d)) == d, re-serializing is byte-stable, and two
/// serializations of equal trees agree.
pub fn check_round_trip(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&document(), |doc| {
            let text = serialize_svg(&doc);
            let back = parse_svg(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
            prop_assert_eq!(&back, &doc);
            prop_assert_eq!(serialize_svg(&back), text.clone());
            prop_assert_eq!(serialize_svg(&doc.clone()), text);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Mutated serializations and arbitrary strings give errors, never panics;
/// whatever still parses must round-trip.
pub fn check_fuzz(cases: u32) -> Result<(), String> {
    let edits = prop::collection::vec((any::<usize>(), any::<u8>(), noise_char()), 1..8);
    runner(cases)
        .run(&(document(), edits), |(doc, edits)| {
            let text = mutate(&serialize_svg(&doc), &edits);
            if let Ok(parsed) = parse_svg(&text) {
                let again = serialize_svg(&parsed);
                prop_assert_eq!(parse_svg(&again).unwrap(), parsed);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    runner(cases)
        .run(&".{0,200}", |text| {
            let _ = parse_svg(&text);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let soup = prop::collection::vec(
        prop::sample::select(vec![
            "<svg viewBox=\"0 0 10 10\">", "</svg>", "<g>", "</g>", "<g id=\"a\"/>", "<rect width=\"1\" height=\"1\"/>",
            "<text>", "</text>", "hi", "&amp;", "&#0;", "&#x110000;", "<!-- c -->", "<![CDATA[x]]>", "<?pi?>",
            "<path d=\"M0 0 Q1 1 2 2\"/>", "<image href=\"data:\"/>", " ", "<", ">", "\"", "transform=\"rotate(9)\"",
        ]),
        0..30,
    );
    runner(cases)
        .run(&soup, |parts| {
            let _ = parse_svg(&parts.concat());
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn num() -> impl Strategy<Value = f64> {
    prop_oneof![(-5000i32..5000).prop_map(f64::from), -5000.0f64..5000.0, 0.0f64..1.0]
}

fn pos() -> impl Strategy<Value = f64> {
    prop_oneof![(0u32..2000).prop_map(f64::from), 0.0f64..2000.0]
}

fn color() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("none".to_string()),
        any::<[u8; 3]>().prop_map(|c| format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])),
        any::<[u8; 3]>().prop_map(|c| format!("rgb({}, {}, {})", c[0], c[1], c[2])),
        prop::sample::select(vec!["red", "Navy", "white", "#AbC"]).prop_map(str::to_string),
    ]
}

fn transform() -> impl Strategy<Value = String> {
    let op = prop_oneof![
        (num(), num()).prop_map(|(x, y)| format!("translate({x} {y})")),
        num().prop_map(|x| format!("translate({x})")),
        (0.1f64..4.0, 0.1f64..4.0).prop_map(|(x, y)| format!("scale({x},{y})")),
        (0.1f64..4.0).prop_map(|s| format!("scale({s})")),
    ];
    prop::collection::vec(op, 1..4).prop_map(|ops| ops.join(" "))
}

fn path_data() -> impl Strategy<Value = String> {
    let seg = prop_oneof![
        (num(), num()).prop_map(|(x, y)| format!("L{x} {y}")),
        (num(), num()).prop_map(|(x, y)| format!("l{x},{y}")),
        (num(), num()).prop_map(|(x, y)| format!("H{x} V{y}")),
        (num(), num(), num(), num(), num(), num()).prop_map(|(a, b, c, d, e, f)| format!("C{a} {b} {c} {d} {e} {f}")),
        Just("Z".to_string()),
    ];
    ((num(), num()), prop::collection::vec(seg, 0..6))
        .prop_map(|((x, y), segs)| format!("M{x} {y} {}", segs.join(" ")))
}

/// Free text, including characters that need escaping.
fn free_text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 <>&\"'=/\\n\\té-]{0,24}"
}

fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9_-]{0,8}"
}

type Attr = (&'static str, String);

fn common() -> impl Strategy<Value = Vec<Attr>> {
    (
        prop::option::of(ident()),
        prop::option::of("[a-z]{1,6}( [a-z-]{1,6})?"),
        prop::option::of(transform()),
        prop::option::of(color()),
        prop::option::of(color()),
        prop::option::of(pos()),
        prop::option::of(0.0f64..=1.0),
        prop::option::of(1u32..40),
    )
        .prop_map(|(id, class, tf, fill, stroke, sw, op, af)| {
            let mut v: Vec<Attr> = Vec::new();
            v.extend(id.map(|x| ("id", x)));
            v.extend(class.map(|x| ("class", x)));
            v.extend(tf.map(|x| ("transform", x)));
            v.extend(fill.map(|x| ("fill", x)));
            v.extend(stroke.map(|x| ("stroke", x)));
            v.extend(sw.map(|x| ("stroke-width", x.to_string())));
            v.extend(op.map(|x| ("opacity", x.to_string())));
            v.extend(af.map(|x| ("data-af", x.to_string())));
            v
        })
}

fn build(kind: NodeKind, attrs: Vec<Attr>) -> SvgNode {
    attrs.into_iter().fold(SvgNode::new(kind), |n, (k, v)| n.with_attr(k, &v).expect("generated value is valid"))
}

fn leaf() -> impl Strategy<Value = SvgNode> {
    let rect = (common(), num(), num(), pos(), pos(), prop::option::of(pos())).prop_map(|(mut a, x, y, w, h, rx)| {
        a.extend([("x", x.to_string()), ("y", y.to_string()), ("width", w.to_string()), ("height", h.to_string())]);
        a.extend(rx.map(|r| ("rx", r.to_string())));
        build(NodeKind::Rect, a)
    });
    let circle = (common(), num(), num(), pos()).prop_map(|(mut a, x, y, r)| {
        a.extend([("cx", x.to_string()), ("cy", y.to_string()), ("r", r.to_string())]);
        build(NodeKind::Circle, a)
    });
    let line = (common(), num(), num(), num(), num()).prop_map(|(mut a, x1, y1, x2, y2)| {
        a.extend([("x1", x1.to_string()), ("y1", y1.to_string()), ("x2", x2.to_string()), ("y2", y2.to_string())]);
        build(NodeKind::Line, a)
    });
    let path = (common(), path_data()).prop_map(|(mut a, d)| {
        a.push(("d", d));
        build(NodeKind::Path, a)
    });
    let text = (common(), num(), num(), free_text(), prop::option::of(free_text()), 0usize..3).prop_map(
        |(mut a, x, y, body, family, anchor)| {
            a.extend([("x", x.to_string()), ("y", y.to_string())]);
            a.extend(family.map(|f| ("font-family", f)));
            a.push(("text-anchor", ["start", "middle", "end"][anchor].to_string()));
            let mut n = build(NodeKind::Text, a);
            n.set_text(body).unwrap();
            n
        },
    );
    let image = (common(), num(), num(), pos(), pos(), "[A-Za-z0-9+/=:;,.]{0,40}").prop_map(|(mut a, x, y, w, h, href)| {
        a.extend([("x", x.to_string()), ("y", y.to_string()), ("width", w.to_string()), ("height", h.to_string())]);
        a.push(("href", format!("data:image/png;base64,{href}")));
        build(NodeKind::Image, a)
    });
    prop_oneof![rect, circle, line, path, text, image]
}

fn node() -> impl Strategy<Value = SvgNode> {
    leaf().prop_recursive(4, 48, 6, |inner| {
        (common(), prop::option::of(pos()), prop::collection::vec(inner, 0..6)).prop_map(|(a, fs, children)| {
            let mut a = a;
            a.extend(fs.map(|f| ("font-size", f.to_string())));
            let mut g = build(NodeKind::Group, a);
            g.children = children;
            g
        })
    })
}

pub fn document() -> impl Strategy<Value = SvgDocument> {
    (num(), num(), 1.0f64..4000.0, 1.0f64..4000.0, prop::collection::vec(node(), 0..6)).prop_map(
        |(x, y, w, h, children)| {
            let mut doc = SvgDocument::new(ViewBox::new(x, y, w, h).unwrap());
            doc.children = children;
            doc
        },
    )
}

pub fn mutate(text: &str, edits: &[(usize, u8, char)]) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    for &(at, op, c) in edits {
        if chars.is_empty() {
            chars.push(c);
            continue;
        }
        let i = at % chars.len();
        match op % 4 {
            0 => {
                chars.remove(i);
            }
            1 => chars.insert(i, c),
            2 => chars[i] = c,
            _ => chars.truncate(i),
        }
    }
    chars.into_iter().collect()
}

pub fn noise_char() -> impl Strategy<Value = char> {
    prop_oneof![prop::sample::select(vec!['<', '>', '/', '&', '"', '\'', '=', '!', '?', '[', ']', ';', '#', '-', ' ', '\n']), any::<char>()]
}
