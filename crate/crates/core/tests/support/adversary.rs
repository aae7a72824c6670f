//! Hostile refinement answers and the snap-to-centroid convergence check.

use std::sync::Mutex;

use figforge_core::backend::mock::{faithful_template, reposition_slots, SnapToCentroidVlm};
use figforge_core::backend::prompt::PromptSet;
use figforge_core::backend::{BackendError, VlmBackend, VlmSvgRequest};
use figforge_core::refine::{positional_discrepancies, refine_template, RefinementContext, Verdict};
use figforge_core::svg::{parse_svg, serialize_svg, validate_template, NodeKind, SvgDocument, SvgNode, ViewRect};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use super::fixtures::{mock_fixture, Fixture};

/// Refinement under scripted attacks always returns a valid template with
/// the starting id multiset.
pub fn check_identity(cases: u32) -> Result<(), String> {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let strategy = (0u64..40, (0.2f64..0.8, 0.2f64..0.8), any::<bool>(), prop::collection::vec(attack(), 1..4));
    runner
        .run(&strategy, |(case, shift, decorate, script)| {
            let fx = mock_fixture(case);
            let k = fx.seg.k_count();
            let start = displaced_template(&fx, shift, decorate);
            prop_assert!(validate_template(&start, k).is_clean());
            let prompts = PromptSet::builtin();
            let ctx = RefinementContext {
                draft: &fx.draft,
                indexed: &fx.indexed,
                segmentation: &fx.seg,
                current: start.clone(),
                max_iterations: script.len() as u32,
                tolerance: 0.05,
                prompts: &prompts,
            };
            let vlm = Adversary { script: Mutex::new(script.iter().rev().cloned().collect()) };
            let (out, log) = refine_template(ctx, &vlm).unwrap();
            prop_assert!(validate_template(&out, k).is_clean(), "{}", validate_template(&out, k));
            prop_assert_eq!(ids(&out), ids(&start));
            let reparsed = parse_svg(&serialize_svg(&out)).unwrap();
            prop_assert_eq!(reparsed, out.clone());
            if log.iterations.iter().all(|it| it.verdict != Verdict::Accepted) {
                prop_assert_eq!(out, start);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Snap-to-centroid refinement clears every positional discrepancy.
/// Returns how many cases started out displaced.
pub fn check_convergence(figures: u64) -> Result<usize, String> {
    let prompts = PromptSet::builtin();
    let mut displaced = 0;
    for case in 0..figures {
        let fx = mock_fixture(case);
        for (i, shift) in [(0.3, 0.0), (0.0, 0.4), (0.25, 0.35), (0.6, 0.7)].into_iter().enumerate() {
            let start = displaced_template(&fx, shift, i % 2 == 0);
            let before = positional_discrepancies(&start, &fx.seg, fx.draft.dims(), 0.05);
            let ctx = RefinementContext {
                draft: &fx.draft,
                indexed: &fx.indexed,
                segmentation: &fx.seg,
                current: start,
                max_iterations: 2,
                tolerance: 0.05,
                prompts: &prompts,
            };
            let (out, log) = refine_template(ctx, &SnapToCentroidVlm).map_err(|e| e.to_string())?;
            let after = positional_discrepancies(&out, &fx.seg, fx.draft.dims(), 0.05);
            if !after.is_empty() || log.remaining != 0 {
                return Err(format!("case {case}/{i}: {after:?}"));
            }
            if log.backend_calls() > 2 {
                return Err(format!("case {case}/{i}: {} calls", log.backend_calls()));
            }
            if !before.is_empty() {
                displaced += 1;
            }
        }
    }
    Ok(displaced)
}

/// Faithful template with every slot pushed off its component, plus some
/// decorations carrying their own ids.
pub fn displaced_template(fx: &Fixture, shift: (f64, f64), decorate: bool) -> SvgDocument {
    let dims = fx.draft.dims();
    let (w, h) = (f64::from(dims.width), f64::from(dims.height));
    let base = serialize_svg(&faithful_template(dims, &fx.hints));
    let moved = reposition_slots(&base, &fx.hints, |_, r| {
        let cx = (r.x + r.w / 2.0 + shift.0 * w).rem_euclid(w);
        let cy = (r.y + r.h / 2.0 + shift.1 * h).rem_euclid(h);
        ViewRect { x: cx - r.w / 2.0, y: cy - r.h / 2.0, ..r }
    });
    let mut doc = parse_svg(&moved).unwrap();
    if decorate {
        let title = SvgNode::new(NodeKind::Text).with_attr("id", "title").unwrap().with_attr("x", 4).unwrap();
        let mut title = title.with_attr("y", 12).unwrap();
        title.set_text("Overview").unwrap();
        let mut frame = SvgNode::new(NodeKind::Group).with_attr("id", "frame").unwrap();
        frame.push(SvgNode::new(NodeKind::Line).with_attr("id", "rule").unwrap().with_attr("x2", w).unwrap()).unwrap();
        doc.children.insert(0, title);
        doc.children.push(frame);
    }
    doc
}

#[derive(Debug, Clone)]
pub enum Attack {
    Garbage(String),
    Truncate(usize),
    DropSlot(usize),
    DuplicateSlot(usize),
    RenameSlot(usize, u32),
    ClassSwap(usize),
    DataAfMismatch(usize),
    ExtraId,
    DropDecoration,
    RenameDecoration,
    OffCanvas(usize),
    RectToCircle(usize),
    UnsupportedElement,
    Rotate(usize),
    Honest(f64, f64),
    Empty,
}

pub fn attack() -> impl Strategy<Value = Attack> {
    prop_oneof![
        ".{0,80}".prop_map(Attack::Garbage),
        any::<usize>().prop_map(Attack::Truncate),
        any::<usize>().prop_map(Attack::DropSlot),
        any::<usize>().prop_map(Attack::DuplicateSlot),
        (any::<usize>(), 0u32..20).prop_map(|(i, k)| Attack::RenameSlot(i, k)),
        any::<usize>().prop_map(Attack::ClassSwap),
        any::<usize>().prop_map(Attack::DataAfMismatch),
        Just(Attack::ExtraId),
        Just(Attack::DropDecoration),
        Just(Attack::RenameDecoration),
        any::<usize>().prop_map(Attack::OffCanvas),
        any::<usize>().prop_map(Attack::RectToCircle),
        Just(Attack::UnsupportedElement),
        any::<usize>().prop_map(Attack::Rotate),
        (-0.3f64..0.3, -0.3f64..0.3).prop_map(|(x, y)| Attack::Honest(x, y)),
        Just(Attack::Empty),
    ]
}

pub fn slot_index(doc: &SvgDocument, i: usize) -> Option<usize> {
    let slots: Vec<usize> = doc
        .children
        .iter()
        .enumerate()
        .filter(|(_, n)| n.id().is_some_and(|id| id.starts_with("AF-")))
        .map(|(i, _)| i)
        .collect();
    (!slots.is_empty()).then(|| slots[i % slots.len()])
}

pub fn apply(attack: &Attack, svg: &str) -> String {
    let Ok(mut doc) = parse_svg(svg) else { return svg.to_string() };
    let vb = doc.view_box;
    let slot = |doc: &SvgDocument, i| slot_index(doc, i);
    match attack {
        Attack::Garbage(s) => return s.clone(),
        Attack::Truncate(n) => return svg.chars().take(n % svg.len().max(1)).collect(),
        Attack::Empty => return String::new(),
        Attack::UnsupportedElement => return svg.replace("</svg>", "<foreignObject/></svg>"),
        Attack::Rotate(i) => {
            let Some(s) = slot(&doc, *i) else { return svg.into() };
            let id = doc.children[s].id().unwrap().to_string();
            return svg.replacen(&format!("id=\"{id}\""), &format!("id=\"{id}\" transform=\"rotate(30)\""), 1);
        }
        Attack::DropSlot(i) => {
            if let Some(s) = slot(&doc, *i) {
                doc.children.remove(s);
            }
        }
        Attack::DuplicateSlot(i) => {
            if let Some(s) = slot(&doc, *i) {
                let copy = doc.children[s].clone();
                doc.children.push(copy);
            }
        }
        Attack::RenameSlot(i, k) => {
            if let Some(s) = slot(&doc, *i) {
                let n = &mut doc.children[s];
                n.set_attr("id", &format!("AF-{k}")).unwrap();
                if *k >= 1 {
                    n.set_attr("data-af", &k.to_string()).unwrap();
                }
            }
        }
        Attack::ClassSwap(i) => {
            if let Some(s) = slot(&doc, *i) {
                doc.children[s].set_attr("class", "decoration").unwrap();
            }
        }
        Attack::DataAfMismatch(i) => {
            if let Some(s) = slot(&doc, *i) {
                let k: u32 = doc.children[s].attr("data-af").unwrap().parse().unwrap();
                doc.children[s].set_attr("data-af", &(k + 100).to_string()).unwrap();
            }
        }
        Attack::ExtraId => doc.children.push(SvgNode::new(NodeKind::Circle).with_attr("id", "injected").unwrap()),
        Attack::DropDecoration => doc.children.retain(|n| n.id() != Some("frame")),
        Attack::RenameDecoration => {
            for n in &mut doc.children {
                if n.id() == Some("title") {
                    n.set_attr("id", "heading").unwrap();
                }
            }
        }
        Attack::OffCanvas(i) => {
            if let Some(s) = slot(&doc, *i) {
                let far = format!("translate({} 0)", vb.width * 10.0);
                doc.children[s].set_attr("transform", &far).unwrap();
            }
        }
        Attack::RectToCircle(i) => {
            if let Some(s) = slot(&doc, *i) {
                doc.children[s].children = vec![SvgNode::new(NodeKind::Circle).with_attr("r", 3).unwrap()];
            }
        }
        Attack::Honest(dx, dy) => {
            for n in &mut doc.children {
                if n.id().is_some_and(|id| id.starts_with("AF-")) {
                    let t = format!("translate({} {})", dx * vb.width * 0.1, dy * vb.height * 0.1);
                    n.set_attr("transform", &t).unwrap();
                }
            }
        }
    }
    serialize_svg(&doc)
}

/// Plays back one attack per refinement call.
pub struct Adversary {
    pub script: Mutex<Vec<Attack>>,
}

impl VlmBackend for Adversary {
    fn name(&self) -> &str {
        "adversary"
    }

    fn complete(&self, req: &VlmSvgRequest) -> Result<String, BackendError> {
        let next = self.script.lock().unwrap().pop().unwrap_or(Attack::Empty);
        Ok(apply(&next, req.svg_code.as_deref().unwrap_or_default()))
    }
}

pub fn ids(doc: &SvgDocument) -> Vec<String> {
    let mut v = doc.ids();
    v.sort();
    v
}
