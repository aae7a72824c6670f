//! Guarded refinement: adversarial VLM answers and centroid convergence.

mod support;

use figforge_core::refine::judge_candidate;
use figforge_core::svg::parse_svg;
use figforge_core::svg::serialize_svg;
use support::adversary::{apply, displaced_template, Attack};
use support::fixtures::mock_fixture;

#[test]
fn refinement_never_breaks_identity_over_500_attacks() {
    support::adversary::check_identity(500).unwrap();
}

#[test]
fn snapping_to_centroids_converges() {
    let displaced = support::adversary::check_convergence(60).unwrap();
    assert!(displaced > 100, "only {displaced} cases started displaced");
}

#[test]
fn adversary_is_not_toothless() {
    // Most attacks must actually be rejected, otherwise the property above
    // proves nothing.
    let fx = mock_fixture(3);
    let k = fx.seg.k_count();
    let start = serialize_svg(&displaced_template(&fx, (0.5, 0.5), true));
    let hostile = [
        Attack::Garbage("<svg".into()),
        Attack::DropSlot(0),
        Attack::DuplicateSlot(0),
        Attack::RenameSlot(0, 99),
        Attack::ClassSwap(0),
        Attack::DataAfMismatch(0),
        Attack::ExtraId,
        Attack::DropDecoration,
        Attack::RenameDecoration,
        Attack::OffCanvas(0),
        Attack::RectToCircle(0),
        Attack::UnsupportedElement,
        Attack::Rotate(0),
        Attack::Empty,
    ];
    let start_doc = parse_svg(&start).unwrap();
    for a in hostile {
        let answer = apply(&a, &start);
        assert!(
            judge_candidate(&start_doc, &answer, k).is_err(),
            "{a:?} slipped through"
        );
    }
    let honest = apply(&Attack::Honest(0.1, 0.1), &start);
    assert!(judge_candidate(&start_doc, &honest, k).is_ok());
}
