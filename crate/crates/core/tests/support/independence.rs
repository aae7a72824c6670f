//! Moving one component of a finished figure disturbs nothing else.

use figforge_core::assets::{extract_asset, MattingConfig};
use figforge_core::backend::mock::faithful_template;
use figforge_core::inject::{inject_assets, verify_editable_figure, VerifyMode};
use figforge_core::svg::{parse_svg, rasterize_preview, serialize_svg, Affine, SvgDocument};

use super::fixtures::{flat_fixture, mock_fixture, Fixture};

const MOVE: (f64, f64) = (17.0, 23.0);
const HALO: f64 = 2.0;

fn figure(fx: &Fixture) -> Result<SvgDocument, String> {
    let assets: Vec<_> = fx
        .seg
        .components()
        .iter()
        .map(|c| extract_asset(&fx.draft, &c.mask, &c.bbox, &MattingConfig::default(), None).unwrap())
        .collect();
    let template = faithful_template(fx.draft.dims(), &fx.hints);
    let fig = inject_assets(&template, &assets).unwrap();
    let report = verify_editable_figure(&fig.doc, assets.len(), VerifyMode::Strict);
    report.is_clean().then_some(fig.doc).ok_or_else(|| report.to_string())
}

/// Footprint of component `k`'s image in view-box units.
fn footprint(doc: &SvgDocument, k: usize) -> [f64; 4] {
    let g = doc.find_by_id(&format!("AF-{k}")).unwrap();
    let t = g.transform();
    let img = &g.children[0];
    let (w, h) = (img.num("width").unwrap(), img.num("height").unwrap());
    [t.tx, t.ty, t.tx + w * t.sx, t.ty + h * t.sy]
}

fn translate(doc: &mut SvgDocument, k: usize) {
    let path = doc.path_of_id(&format!("AF-{k}")).unwrap();
    let node = figforge_core::svg::node_at_mut(doc, &path).unwrap();
    let t = node.transform();
    let moved = Affine { tx: t.tx + MOVE.0, ty: t.ty + MOVE.1, ..t };
    node.set_attr("transform", &format!("translate({} {})", moved.tx, moved.ty)).unwrap();
}

fn check(fx: &Fixture, label: &str) -> Result<usize, String> {
    let doc = figure(fx)?;
    let width = fx.draft.width();
    let base = rasterize_preview(&doc, width);
    let k_count = fx.seg.k_count();
    let mut changed_components = 0;
    for k in 1..=k_count {
        let mut edited = doc.clone();
        translate(&mut edited, k);
        // The edit survives a save and reload.
        let edited = parse_svg(&serialize_svg(&edited)).unwrap();
        let report = verify_editable_figure(&edited, k_count, VerifyMode::Strict);
        if !report.is_clean() {
            return Err(format!("{label}: AF-{k} moved: {report}"));
        }
        let after = rasterize_preview(&edited, width);
        let (a, b) = (footprint(&doc, k), footprint(&edited, k));
        let region = [a[0].min(b[0]) - HALO, a[1].min(b[1]) - HALO, a[2].max(b[2]) + HALO, a[3].max(b[3]) + HALO];
        let mut changed = false;
        for (x, y, p) in base.enumerate_pixels() {
            if after.get_pixel(x, y) == p {
                continue;
            }
            changed = true;
            let (cx, cy) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
            if !(cx >= region[0] && cx <= region[2] && cy >= region[1] && cy <= region[3]) {
                return Err(format!("{label}: moving AF-{k} changed pixel ({x}, {y}) outside {region:?}"));
            }
        }
        for other in (1..=k_count).filter(|&o| o != k) {
            let id = format!("AF-{other}");
            if doc.find_by_id(&id) != edited.find_by_id(&id) {
                return Err(format!("{label}: moving AF-{k} changed AF-{other}"));
            }
        }
        changed_components += usize::from(changed);
    }
    Ok(changed_components)
}

/// Translates every component of `figures` figures in turn. Returns
/// (components whose move changed pixels, components moved).
pub fn check_locality(figures: usize) -> Result<(usize, usize), String> {
    let mut moved = 0;
    let mut total = 0;
    let mut done = 0;
    let mut seed = 0;
    while done < figures {
        let fx = if done % 2 == 0 { Some(mock_fixture(seed)) } else { flat_fixture(seed) };
        seed += 1;
        let Some(fx) = fx else { continue };
        moved += check(&fx, &format!("seed {}", seed - 1))?;
        total += fx.seg.k_count();
        done += 1;
    }
    Ok((moved, total))
}
