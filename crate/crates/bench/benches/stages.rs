use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use figforge_bench::{draft, text};
use figforge_core::backend::component_hints;
use figforge_core::backend::mock::faithful_template;
use figforge_core::index::{assign_tones, render_indexed_layout};
use figforge_core::model::Dims;
use figforge_core::segment::{filter_and_merge, segment, SegmenterConfig};
use figforge_core::svg::rasterize_preview;
use figforge_core::{parse_svg, run_pipeline, serialize_svg, PipelineConfig, SourceText};

fn segmentation(c: &mut Criterion) {
    let cfg = SegmenterConfig::default();
    let mut g = c.benchmark_group("segment");
    for side in [256u32, 512, 1024] {
        let d = draft(6, Dims::new(side, side * 3 / 4));
        g.bench_with_input(BenchmarkId::from_parameter(side), &d, |b, d| {
            b.iter(|| filter_and_merge(segment(black_box(d), &cfg).unwrap(), &cfg).unwrap())
        });
    }
    g.finish();
}

fn svg(c: &mut Criterion) {
    let cfg = SegmenterConfig::default();
    let d = draft(12, Dims::new(1024, 768));
    let seg = filter_and_merge(segment(&d, &cfg).unwrap(), &cfg).unwrap();
    let indexed = render_indexed_layout(seg.dims(), &seg, &assign_tones(seg.k_count())).unwrap();
    let doc = faithful_template(d.dims(), &component_hints(&seg, &indexed));
    let text = serialize_svg(&doc);
    c.bench_function("svg/parse", |b| b.iter(|| parse_svg(black_box(&text)).unwrap()));
    c.bench_function("svg/serialize", |b| b.iter(|| serialize_svg(black_box(&doc))));
    c.bench_function("svg/rasterize_preview", |b| b.iter(|| rasterize_preview(black_box(&doc), 512)));
}

fn pipeline(c: &mut Criterion) {
    let body = SourceText::new(text(3, 3400));
    let tmp = tempfile::tempdir().unwrap();
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    g.bench_function("mock_generate", |b| {
        b.iter(|| {
            let mut cfg = PipelineConfig::mock(tmp.path().join("job"));
            cfg.seed = Some(42);
            run_pipeline(&body, None, &cfg).unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, segmentation, svg, pipeline);
criterion_main!(benches);
