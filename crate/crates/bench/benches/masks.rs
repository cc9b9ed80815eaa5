use criterion::{black_box, criterion_group, criterion_main, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segeval_core::augment::{apply_blur, apply_chain};
use segeval_core::mask::{polygon_to_mask, Bitmap, Polygon};
use segeval_core::synth::{generate_dataset, SceneConfig};
use segeval_core::TransformSpec;

fn blobs(n: usize) -> Vec<Bitmap> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..n)
        .map(|_| {
            let (cx, cy, r) = (rng.gen_range(60.0..480.0), rng.gen_range(60.0..300.0), rng.gen_range(10.0..60.0));
            Bitmap::from_fn(540, 360, |x, y| {
                let (dx, dy) = (f64::from(x) - cx, f64::from(y) - cy);
                dx * dx + dy * dy <= r * r
            })
        })
        .collect()
}

fn bench_rle(c: &mut Criterion) {
    let masks = blobs(32);
    let encoded: Vec<_> = masks.iter().map(Bitmap::to_rle).collect();

    let mut group = c.benchmark_group("rle");
    group.throughput(Throughput::Elements(masks.len() as u64));
    group.bench_function("encode_540x360", |b| {
        b.iter(|| masks.iter().map(|m| black_box(m).to_rle()).count())
    });
    group.bench_function("decode_540x360", |b| {
        b.iter(|| encoded.iter().map(|m| black_box(m).decode()).count())
    });
    group.bench_function("iou_all_pairs", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for a in &encoded {
                for o in &encoded {
                    acc += a.iou(o).unwrap();
                }
            }
            acc
        })
    });
    group.finish();
}

fn bench_raster(c: &mut Criterion) {
    let star = Polygon::new(
        (0..10)
            .map(|i| {
                let a = i as f64 * std::f64::consts::PI / 5.0;
                let r = if i % 2 == 0 { 150.0 } else { 60.0 };
                (270.0 + r * a.cos(), 180.0 + r * a.sin())
            })
            .collect(),
    )
    .unwrap();
    c.bench_function("polygon_to_mask_star", |b| b.iter(|| polygon_to_mask(black_box(&star), 540, 360)));
}

fn bench_transforms(c: &mut Criterion) {
    let (ds, images) = generate_dataset(&SceneConfig { seed: 3, instruments: (3, 3), ..Default::default() }, 1).unwrap();
    let frame = &ds.frames[0];
    let image = &images[&frame.frame_id];
    let fill = image::Rgb([0, 0, 0]);

    let mut group = c.benchmark_group("transform_frame");
    for t in [
        TransformSpec::Rotation { degrees: 45 },
        TransformSpec::Scale { factor: 1.5 },
        TransformSpec::Translation { u: 0.1, v: -0.1 },
    ] {
        group.bench_function(t.label(), |b| b.iter(|| apply_chain(frame, image, &[t], fill).unwrap()));
    }
    group.bench_function("blur_sigma2", |b| b.iter(|| apply_blur(black_box(image), 2.0).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_rle, bench_raster, bench_transforms);
criterion_main!(benches);
