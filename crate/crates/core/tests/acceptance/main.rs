//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any of them fails.

mod reference;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segeval_core::augment::{
    apply_blur, apply_chain, offline_augment, preservation_ratio, transform_masks, GridSpec,
};
use segeval_core::eval::{evaluate, EvalConfig, EvalMode, IouKind, Predictions};
use segeval_core::io::{
    annotation_bytes, load_annotation_file, load_dataset, load_images, save_dataset, save_images,
    split_csv, DatasetManifest,
};
use segeval_core::mask::{mask_iou, Bitmap, RleMask};
use segeval_core::model::{instance_histogram, AnnotatedFrame, CategoryId, Dataset, InstanceMask, Split, Taxonomy};
use segeval_core::report::class_table;
use segeval_core::split::{split_report, stratified_split};
use segeval_core::synth::{
    expected_iou_under_shift, generate_dataset, paper_scale_dataset, perturb_dataset, shift_mask,
    PerturbationConfig, SceneConfig, ScoreNoise,
};
use segeval_core::{AugmentationConfig, MirrorAxis, SplitConfig, TransformSpec};

use reference::{RefFrame, RefInstance, RefIou};

type Check = fn() -> String;

fn main() {
    let criteria: [(&str, Check); 12] = [
        ("IoU oracle equivalence", iou_oracle_equivalence),
        ("analytic IoU of shifted rectangles", analytic_iou),
        ("AP matches exhaustive reference evaluator", ap_reference_equivalence),
        ("self-evaluation identity", self_evaluation_identity),
        ("hand-computed AP50 = 51/101", hand_computed_ap),
        ("augmentation identities and label preservation", augmentation_identities),
        ("preservation filtering at the frame edge", preservation_filtering),
        ("class-balanced split at paper scale", split_correctness),
        ("metric monotonicity under jitter and class flips", metric_monotonicity),
        ("format round-trips", format_round_trips),
        ("determinism across thread counts", determinism_under_parallelism),
        ("desk-scale evaluation performance", desk_scale_performance),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {:>2}. {name} ({detail}) [{secs:.2}s]", i + 1),
            Err(err) => {
                failed += 1;
                let msg = err
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| err.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("FAIL  {:>2}. {name}: {msg} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn random_bitmap(rng: &mut impl Rng, w: u32, h: u32) -> Bitmap {
    let density: f64 = rng.gen_range(0.0..1.0);
    Bitmap::from_fn(w, h, |_, _| rng.gen::<f64>() < density)
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}

fn iou_oracle_equivalence() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs: Vec<(Bitmap, Bitmap)> = (0..1000)
        .map(|_| (random_bitmap(&mut rng, 64, 64), random_bitmap(&mut rng, 64, 64)))
        .collect();
    let encoded: Vec<(RleMask, RleMask)> = pairs.iter().map(|(a, b)| (a.to_rle(), b.to_rle())).collect();
    let started = Instant::now();
    let got: Vec<f64> = encoded.iter().map(|(a, b)| mask_iou(a, b).unwrap()).collect();
    let elapsed = started.elapsed();
    for ((a, b), iou) in pairs.iter().zip(&got) {
        assert_eq!(*iou, reference::pixel_iou(a.bits(), b.bits()));
    }
    assert!(elapsed < Duration::from_secs(2), "took {elapsed:?}");
    format!("1000 pairs, exact, {:.1} ms", elapsed.as_secs_f64() * 1e3)
}

fn analytic_iou() -> String {
    let mut worst = 0.0f64;
    for w in [20u32, 50, 100] {
        // Shifts are whole pixels; w/4 rounds down for w = 50.
        for d in [0, w / 4, w / 2] {
            let rect = Bitmap::from_fn(300, 200, |x, y| (30..30 + w).contains(&x) && (40..40 + w).contains(&y)).to_rle();
            for (dx, dy) in [(i64::from(d), 0), (0, i64::from(d))] {
                let got = mask_iou(&rect, &shift_mask(&rect, dx, dy)).unwrap();
                let expect = expected_iou_under_shift(f64::from(w), f64::from(w), f64::from(d)).unwrap();
                worst = worst.max((got - expect).abs());
                assert!((got - expect).abs() <= 0.01, "w={w} d={d}: {got} vs {expect}");
                if d == w / 2 {
                    assert_eq!(got, 1.0 / 3.0, "w={w} half shift");
                }
            }
        }
    }
    format!("max deviation {worst:.2e}")
}

const REF_W: u32 = 16;
const REF_H: u32 = 12;

fn random_rect(rng: &mut impl Rng) -> (u32, u32, u32, u32) {
    let x0 = rng.gen_range(0..REF_W - 1);
    let y0 = rng.gen_range(0..REF_H - 1);
    (x0, y0, rng.gen_range(x0 + 1..=REF_W), rng.gen_range(y0 + 1..=REF_H))
}

fn rect_bitmap(r: (u32, u32, u32, u32)) -> Bitmap {
    Bitmap::from_fn(REF_W, REF_H, |x, y| (r.0..r.2).contains(&x) && (r.1..r.3).contains(&y))
}

fn blob_bitmap(rng: &mut impl Rng) -> Bitmap {
    let r = random_rect(rng);
    let mut bm = rect_bitmap(r);
    // Knock holes into some masks so mask and box IoU differ.
    for _ in 0..rng.gen_range(0..4) {
        let (x, y) = (rng.gen_range(r.0..r.2), rng.gen_range(r.1..r.3));
        bm.set(x, y, false);
    }
    if bm.area() == 0 {
        bm.set(r.0, r.1, true);
    }
    bm
}

fn ref_instance(bm: &Bitmap, category: u32, score: f64) -> RefInstance {
    RefInstance { category, width: REF_W as usize, bits: bm.bits().to_vec(), score }
}

struct Case {
    gt: Dataset,
    preds: Predictions,
    frames: Vec<RefFrame>,
}

fn random_case(rng: &mut impl Rng) -> Case {
    let scores = [0.25, 0.5, 0.5, 0.75, 0.9];
    let n_frames = rng.gen_range(1..=5);
    let mut frames = Vec::new();
    let mut ref_frames = Vec::new();
    let mut preds = Predictions::default();
    for f in 0..n_frames {
        let id = format!("f{f}");
        let mut gt = Vec::new();
        let mut ref_gt = Vec::new();
        for _ in 0..rng.gen_range(0..=4) {
            let bm = blob_bitmap(rng);
            let cat = rng.gen_range(1..=3);
            gt.push(InstanceMask::ground_truth(CategoryId(cat), bm.to_rle()).unwrap());
            ref_gt.push(ref_instance(&bm, cat, 0.0));
        }
        let mut pr = Vec::new();
        let mut ref_pr = Vec::new();
        for _ in 0..rng.gen_range(0..=4) {
            let (bm, cat) = if !ref_gt.is_empty() && rng.gen_bool(0.7) {
                // A perturbed copy of some ground-truth instance.
                let src = &ref_gt[rng.gen_range(0..ref_gt.len())];
                let (dx, dy) = (rng.gen_range(-2i64..=2), rng.gen_range(-2i64..=2));
                let src_bm = Bitmap::from_bits(REF_W, REF_H, src.bits.clone()).unwrap();
                let moved = shift_mask(&src_bm.to_rle(), dx, dy).decode();
                let cat = if rng.gen_bool(0.8) { src.category } else { rng.gen_range(1..=3) };
                (moved, cat)
            } else {
                (blob_bitmap(rng), rng.gen_range(1..=3))
            };
            if bm.area() == 0 {
                continue;
            }
            let score = if rng.gen_bool(0.8) { scores[rng.gen_range(0..scores.len())] } else { rng.gen() };
            pr.push(InstanceMask::prediction(CategoryId(cat), bm.to_rle(), score).unwrap());
            ref_pr.push(ref_instance(&bm, cat, score));
        }
        frames.push(AnnotatedFrame::new(id.clone(), REF_W, REF_H).with_instances(gt));
        preds.insert(id, pr);
        ref_frames.push(RefFrame { gt: ref_gt, preds: ref_pr });
    }
    Case {
        gt: Dataset::new(Taxonomy::instruments(), frames),
        preds,
        frames: ref_frames,
    }
}

fn ap_reference_equivalence() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let caps = [1, 10, 100];
    let (mut cases, mut comparisons) = (0, 0);
    while cases < 250 {
        let case = random_case(&mut rng);
        if case.gt.instance_count() == 0 {
            continue;
        }
        cases += 1;
        for (mode, binary) in [(EvalMode::Binary, true), (EvalMode::Multiclass, false)] {
            for (kind, ref_kind) in [(IouKind::Mask, RefIou::Mask), (IouKind::Bbox, RefIou::Bbox)] {
                let got = evaluate(&case.gt, &case.preds, &EvalConfig::new(mode, kind)).unwrap();
                let want = reference::evaluate(&case.frames, binary, ref_kind, &caps);
                let ctx = format!("case {cases} {mode:?} {kind:?}");
                assert_eq!(got.classes.len(), want.class_ap.len(), "{ctx}");
                for c in &got.classes {
                    let w = &want.class_ap[&c.category.0];
                    for (t, (a, b)) in c.ap_per_threshold.iter().zip(w).enumerate() {
                        assert!((a - b).abs() <= 1e-9, "{ctx} class {} t{t}: {a} vs {b}", c.category.0);
                        comparisons += 1;
                    }
                }
                for (a, b) in got.summary.ap_per_threshold.iter().zip(&want.ap_per_threshold) {
                    assert!((a - b).abs() <= 1e-9, "{ctx}: mean AP {a} vs {b}");
                }
                for (cap, b) in &want.ar {
                    let a = got.summary.ar_at(*cap).unwrap();
                    assert!((a - b).abs() <= 1e-9, "{ctx}: AR@{cap} {a} vs {b}");
                }
            }
        }
    }
    format!("{cases} cases, {comparisons} per-class AP values")
}

fn fixture_dataset() -> Dataset {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/coco_tiny.json");
    load_annotation_file(&path).expect("fixture loads")
}

fn self_evaluation_identity() -> String {
    let (synthetic, _) = generate_dataset(&SceneConfig { seed: 21, ..Default::default() }, 30).unwrap();
    let datasets = [("synthetic", synthetic), ("fixture", fixture_dataset())];
    let mut runs = 0;
    for (name, ds) in &datasets {
        let preds = Predictions::from_ground_truth(ds, 1.0);
        for mode in [EvalMode::Binary, EvalMode::Multiclass] {
            for kind in [IouKind::Mask, IouKind::Bbox] {
                let r = evaluate(ds, &preds, &EvalConfig::new(mode, kind)).unwrap();
                let s = &r.summary;
                let ctx = format!("{name} {mode:?} {kind:?}");
                assert_eq!(s.ap50, Some(1.0), "{ctx}");
                assert_eq!(s.ap, 1.0, "{ctx}");
                assert_eq!(s.ar_at(100), Some(1.0), "{ctx}");
                runs += 1;
            }
        }
    }
    format!("{runs} runs on synthetic and fixture data")
}

fn hand_computed_ap() -> String {
    let square = |x0: u32| Bitmap::from_fn(40, 20, |x, y| (x0..x0 + 8).contains(&x) && (4..12).contains(&y)).to_rle();
    let gt = vec![
        InstanceMask::ground_truth(CategoryId(2), square(2)).unwrap(),
        InstanceMask::ground_truth(CategoryId(2), square(14)).unwrap(),
    ];
    let preds = vec![
        InstanceMask::prediction(CategoryId(2), square(2), 0.9).unwrap(),
        InstanceMask::prediction(CategoryId(2), square(28), 0.8).unwrap(),
    ];
    let ds = Dataset::new(Taxonomy::instruments(), vec![AnnotatedFrame::new("a", 40, 20).with_instances(gt)]);
    let mut p = Predictions::default();
    p.insert("a", preds);
    let expect = 51.0 / 101.0;
    for mode in [EvalMode::Binary, EvalMode::Multiclass] {
        let r = evaluate(&ds, &p, &EvalConfig::new(mode, IouKind::Mask)).unwrap();
        let ap50 = r.summary.ap50.unwrap();
        assert!((ap50 - expect).abs() <= 1e-12, "{mode:?}: {ap50}");
        let curve: Vec<(f64, f64)> = r.classes[0].cells[2].curve.iter().map(|p| (p.recall, p.precision)).collect();
        assert_eq!(curve, [(0.5, 1.0), (0.5, 0.5)]);
    }
    format!("AP50 = {expect:.5}")
}

fn augmentation_identities() -> String {
    let fill = image::Rgb([0, 0, 0]);
    let square = SceneConfig {
        width: 128,
        height: 128,
        radius: (3.0, 6.0),
        length: (20.0, 60.0),
        seed: 31,
        ..Default::default()
    };
    let (small, small_images) = generate_dataset(&square, 10).unwrap();
    let (wide, wide_images) = generate_dataset(&SceneConfig { seed: 32, ..Default::default() }, 20).unwrap();

    let repeat = |frame: &AnnotatedFrame, image: &RgbImage, t: TransformSpec, n: usize| {
        let mut cur = (frame.clone(), image.clone());
        for _ in 0..n {
            cur = apply_chain(&cur.0, &cur.1, &[t], fill).unwrap();
        }
        cur
    };
    let masks = |f: &AnnotatedFrame| f.instances.iter().map(|i| i.mask().clone()).collect::<Vec<_>>();

    for (ds, images) in [(&small, &small_images), (&wide, &wide_images)] {
        for frame in &ds.frames {
            let img = &images[&frame.frame_id];
            for axis in [MirrorAxis::Horizontal, MirrorAxis::Vertical] {
                let (f, i) = repeat(frame, img, TransformSpec::Mirror { axis }, 2);
                assert_eq!(masks(&f), masks(frame), "{} mirror {axis:?}", frame.frame_id);
                assert_eq!(&i, img, "{} mirror {axis:?} image", frame.frame_id);
            }
            assert_eq!(&apply_blur(img, 0.0).unwrap(), img);
        }
    }
    for frame in &small.frames {
        let img = &small_images[&frame.frame_id];
        let (f, i) = repeat(frame, img, TransformSpec::Rotation { degrees: 90 }, 4);
        assert_eq!(masks(&f), masks(frame), "{} rotation", frame.frame_id);
        assert_eq!(&i, img, "{} rotation image", frame.frame_id);
    }

    let cfg = AugmentationConfig::default();
    let (out, out_images) = offline_augment(&wide, &wide_images, &cfg).unwrap();
    let multiset = |f: &AnnotatedFrame| {
        let mut cats: Vec<CategoryId> = f.instances.iter().map(InstanceMask::category).collect();
        cats.sort();
        cats
    };
    let mut derived = 0;
    for f in &out.frames {
        let source_id = f.frame_id.split('/').next().unwrap();
        let source = wide.frame(source_id).expect("source frame");
        assert_eq!(multiset(f), multiset(source), "{}", f.frame_id);
        assert!(out_images.contains_key(&f.frame_id));
        derived += usize::from(!f.provenance.is_empty());
    }
    assert!(wide.frames.iter().all(|f| out.frame(&f.frame_id) == Some(f)));
    format!("{} frames from 20 sources, {derived} derived", out.frames.len())
}

fn preservation_filtering() -> String {
    let (w, h) = (540, 360);
    let edge_frame = |width: u32| {
        let m = Bitmap::from_fn(w, h, |x, y| x < width && (150..210).contains(&y)).to_rle();
        AnnotatedFrame::new("edge", w, h)
            .with_instances(vec![InstanceMask::ground_truth(CategoryId(3), m).unwrap()])
    };
    let toward_edge = TransformSpec::Translation { u: -0.1, v: -0.1 };
    let grid = GridSpec {
        translations: vec![[-0.1, -0.1]],
        ..GridSpec::empty()
    };
    let image = RgbImage::from_pixel(w, h, image::Rgb([90, 40, 40]));

    let frame = edge_frame(120);
    let moved = transform_masks(&frame, &[toward_edge]).unwrap();
    let ratio = preservation_ratio(&frame.instances[0], &moved[0], &[toward_edge]);
    assert_eq!(ratio, 66.0 / 120.0);

    let ds = Dataset::new(Taxonomy::instruments(), vec![frame.clone()]);
    let images = BTreeMap::from([("edge".to_string(), image)]);
    let kept = |tau: f64| {
        let cfg = AugmentationConfig {
            offline_grid: grid.clone(),
            preservation_threshold: tau,
            ..Default::default()
        };
        offline_augment(&ds, &images, &cfg).unwrap().0.frames.len()
    };
    assert_eq!(kept(0.9), 1, "dropped at 0.9");
    assert_eq!(kept(0.1), 2, "kept at 0.1");

    let gone = edge_frame(40);
    let moved = transform_masks(&gone, &[toward_edge]).unwrap();
    let exit = preservation_ratio(&gone.instances[0], &moved[0], &[toward_edge]);
    assert_eq!(exit, 0.0);
    format!("edge ratio {ratio:.3}, full exit ratio {exit}")
}

fn split_correctness() -> String {
    let (ds, _) = paper_scale_dataset(5).unwrap();
    let cfg = SplitConfig { seed: 17, ..Default::default() };
    let out = stratified_split(&ds, &cfg).unwrap();

    let ids = |d: &Dataset| d.frames.iter().map(|f| f.frame_id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(&out.dataset), ids(&ds), "same frames");
    assert!(out.dataset.frames.iter().all(|f| f.split.is_some()), "every frame tagged");

    let report = split_report(&out.dataset).unwrap();
    let frames: Vec<usize> = Split::ALL.iter().map(|&s| report.row(s).frames).collect();
    assert_eq!(frames.iter().sum::<usize>(), 333);
    for (got, want) in frames.iter().zip([200usize, 67, 66]) {
        assert!(got.abs_diff(want) <= 1, "frame counts {frames:?}");
    }
    let hist = instance_histogram(&ds);
    for (cat, &total) in &hist {
        assert!(total >= 14, "every class is feasible");
        for s in [Split::Val, Split::Test] {
            let n = report.row(s).per_class[cat];
            assert!(n.abs_diff(7) <= 1, "{s} class {} has {n}", cat.0);
        }
    }
    let replay = stratified_split(&ds, &cfg).unwrap();
    assert_eq!(replay.dataset, out.dataset);
    format!("frames {frames:?}, score {}, best attempt {}", out.score, out.best_attempt)
}

struct Sweep {
    binary: Vec<f64>,
    multiclass: Vec<f64>,
}

fn sweep(ds: &Dataset, jitter: f64, flip: f64, reps: u64) -> Sweep {
    let mut out = Sweep { binary: Vec::new(), multiclass: Vec::new() };
    for rep in 0..reps {
        let pcfg = PerturbationConfig {
            jitter,
            drop_prob: 0.1,
            spurious_rate: 0.3,
            class_flip_prob: flip,
            score: ScoreNoise::Uniform { low: 0.05, high: 1.0 },
        };
        let preds = perturb_dataset(ds, &pcfg, 1000 + rep).unwrap();
        for (mode, dst) in [(EvalMode::Binary, &mut out.binary), (EvalMode::Multiclass, &mut out.multiclass)] {
            let r = evaluate(ds, &preds, &EvalConfig::new(mode, IouKind::Mask)).unwrap();
            dst.push(r.summary.ap50.unwrap());
        }
    }
    out
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn metric_monotonicity() -> String {
    let (ds, _) = generate_dataset(&SceneConfig { seed: 41, ..Default::default() }, 100).unwrap();
    let jitters = [0.0, 2.0, 4.0, 8.0];
    let reps = 8;

    let clean: Vec<(f64, f64)> = jitters.iter().map(|&e| mean_se(&sweep(&ds, e, 0.0, reps).binary)).collect();
    for pair in clean.windows(2) {
        let ((m0, s0), (m1, s1)) = (pair[0], pair[1]);
        assert!(m1 <= m0 + 3.0 * (s0 * s0 + s1 * s1).sqrt(), "AP50 rose: {clean:?}");
    }

    let mut runs = 0;
    for &e in &jitters {
        let s = sweep(&ds, e, 0.3, reps);
        for (b, m) in s.binary.iter().zip(&s.multiclass) {
            assert!(b >= m, "jitter {e}: binary {b} < multiclass {m}");
            runs += 1;
        }
    }
    let means: Vec<String> = clean.iter().map(|(m, _)| format!("{:.3}", m)).collect();
    format!("AP50 by jitter [{}], {runs} flip runs", means.join(", "))
}

fn format_round_trips() -> String {
    let dir = tempfile::tempdir().unwrap();
    let (ds, images) = generate_dataset(&SceneConfig { seed: 51, ..Default::default() }, 3).unwrap();
    let manifest = DatasetManifest::at(dir.path());
    save_dataset(&ds, &manifest).unwrap();
    save_images(&manifest, &ds, &images).unwrap();
    let loaded_manifest = DatasetManifest::load(&manifest.manifest_path()).unwrap();
    let loaded = load_dataset(&loaded_manifest).unwrap();
    assert_eq!(loaded, ds.clone().canonicalized());
    assert_eq!(load_images(&loaded_manifest, &loaded).unwrap(), images);
    let first = std::fs::read(manifest.annotations_path()).unwrap();
    assert_eq!(annotation_bytes(&loaded).unwrap(), first, "re-save is byte-identical");

    let mut rng = ChaCha8Rng::seed_from_u64(52);
    for _ in 0..1000 {
        let (w, h) = (rng.gen_range(1..48), rng.gen_range(1..48));
        let bm = random_bitmap(&mut rng, w, h);
        assert_eq!(bm.to_rle().decode(), bm);
    }

    let preds = perturb_dataset(
        &ds,
        &PerturbationConfig { jitter: 3.0, score: ScoreNoise::Uniform { low: 0.1, high: 1.0 }, ..PerturbationConfig::zero() },
        53,
    )
    .unwrap();
    let mask = evaluate(&ds, &preds, &EvalConfig::new(EvalMode::Multiclass, IouKind::Mask)).unwrap();
    let bbox = evaluate(&ds, &preds, &EvalConfig::new(EvalMode::Multiclass, IouKind::Bbox)).unwrap();
    let csv_text = class_table(&mask, Some(&bbox)).to_csv();
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>().unwrap();
    assert_eq!(rows.len(), mask.classes.len() + 1);
    let close = |field: &str, value: f64| {
        let parsed: f64 = field.parse().unwrap();
        assert!((parsed - value * 100.0).abs() <= 0.005 + 1e-9, "{field} vs {value}");
    };
    for (row, class) in rows.iter().zip(&mask.classes) {
        assert_eq!(&row[0], class.name);
        close(&row[1], class.ap);
        close(&row[2], class.ap50.unwrap());
        close(&row[3], class.ar_at(1).unwrap());
        let b = bbox.classes.iter().find(|c| c.category == class.category).unwrap();
        close(&row[4], b.ap);
        close(&row[5], b.ap50.unwrap());
        close(&row[6], b.ar_at(1).unwrap());
    }
    let last = rows.last().unwrap();
    close(&last[1], mask.summary.ap);
    close(&last[2], mask.summary.ap50.unwrap());
    format!("dataset, 1000 RLE masks, {}-row report CSV", rows.len())
}

fn determinism_under_parallelism() -> String {
    let (ds, images) = generate_dataset(&SceneConfig { seed: 61, ..Default::default() }, 12).unwrap();
    let preds = perturb_dataset(
        &ds,
        &PerturbationConfig { jitter: 2.0, spurious_rate: 0.5, score: ScoreNoise::Uniform { low: 0.0, high: 1.0 }, ..PerturbationConfig::zero() },
        62,
    )
    .unwrap();
    let (big, _) = paper_scale_dataset(63).unwrap();

    let run = |threads: usize| {
        in_pool(threads, || {
            let (aug, aug_images) = offline_augment(&ds, &images, &AugmentationConfig::default()).unwrap();
            let mut bytes = annotation_bytes(&aug).unwrap();
            for img in aug_images.values() {
                bytes.extend_from_slice(img.as_raw());
            }
            let report = evaluate(&ds, &preds, &EvalConfig::new(EvalMode::Multiclass, IouKind::Mask)).unwrap();
            let split = stratified_split(&big, &SplitConfig { seed: 64, ..Default::default() }).unwrap();
            (bytes, serde_json::to_vec(&report).unwrap(), split_csv(&split.dataset))
        })
    };
    let one = run(1);
    for threads in [4, 8] {
        let other = run(threads);
        assert!(other.0 == one.0, "augment output differs at {threads} threads");
        assert!(other.1 == one.1, "evaluation differs at {threads} threads");
        assert!(other.2 == one.2, "split differs at {threads} threads");
    }
    format!("augment {} bytes, identical at 1/4/8 threads", one.0.len())
}

fn desk_scale_performance() -> String {
    let (ds, _) = paper_scale_dataset(71).unwrap();
    assert_eq!((ds.frames.len(), ds.instance_count()), (333, 561));
    let preds = perturb_dataset(
        &ds,
        &PerturbationConfig {
            jitter: 2.0,
            drop_prob: 0.05,
            spurious_rate: 1.0,
            class_flip_prob: 0.2,
            score: ScoreNoise::Uniform { low: 0.0, high: 1.0 },
        },
        72,
    )
    .unwrap();
    let cfg = EvalConfig::new(EvalMode::Multiclass, IouKind::Mask);
    assert_eq!(cfg.thresholds.len(), 10);
    let elapsed = in_pool(1, || {
        let started = Instant::now();
        evaluate(&ds, &preds, &cfg).unwrap();
        evaluate(&ds, &preds, &EvalConfig::new(EvalMode::Binary, IouKind::Mask)).unwrap();
        started.elapsed()
    });
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    format!("binary + multi-class on {} predictions in {:.0} ms", preds.instance_count(), elapsed.as_secs_f64() * 1e3)
}
