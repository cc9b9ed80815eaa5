//! Synthetic scenes with exactly known ground truth, and controlled
//! perturbations of that ground truth posing as model predictions.
//!
//! Instruments are drawn as capsules (a segment swept by a disk) or rotated
//! rectangles. Both have closed-form areas, and a rigid shift of an
//! axis-aligned rectangle has a closed-form IoU, which gives the evaluator
//! an analytic reference.

use std::collections::BTreeMap;

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::FrameImages;
use crate::error::{Error, Result};
use crate::eval::Predictions;
use crate::mask::{Bitmap, RleMask};
use crate::model::{AnnotatedFrame, CategoryId, Dataset, InstanceMask, Taxonomy};
use crate::rng::keyed_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeFamily {
    Capsule,
    RotatedRect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    /// Inclusive range of instruments per frame.
    pub instruments: (usize, usize),
    pub shape: ShapeFamily,
    /// Capsule radius, or half the rectangle's width, in pixels.
    pub radius: (f64, f64),
    /// Length of the capsule's core segment or of the rectangle.
    pub length: (f64, f64),
    /// Relative class frequencies, one per taxonomy entry. Empty means uniform.
    pub class_weights: Vec<f64>,
    pub taxonomy: Taxonomy,
    /// Allow shapes to leave the frame and to cover each other.
    pub occlusion: bool,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 540,
            height: 360,
            instruments: (1, 3),
            shape: ShapeFamily::Capsule,
            radius: (8.0, 14.0),
            length: (80.0, 200.0),
            class_weights: Vec::new(),
            taxonomy: Taxonomy::instruments(),
            occlusion: false,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let (lo, hi) = self.instruments;
        if lo == 0 || lo > hi {
            return bad(format!("instrument range {lo}..={hi} must start at 1 or more"));
        }
        for (name, (a, b)) in [("radius", self.radius), ("length", self.length)] {
            if !(a.is_finite() && b.is_finite() && a > 0.0 && a <= b) {
                return bad(format!("{name} range ({a}, {b}) is not a positive interval"));
            }
        }
        if self.width == 0 || self.height == 0 {
            return bad("frame size must be non-zero".into());
        }
        let extent = self.length.1 + 2.0 * self.radius.1;
        if !self.occlusion && extent > f64::from(self.width.min(self.height)) {
            return bad(format!(
                "shapes up to {extent} px long cannot be placed inside a {}x{} frame",
                self.width, self.height
            ));
        }
        if !self.class_weights.is_empty() {
            if self.class_weights.len() != self.taxonomy.len() {
                return bad(format!(
                    "{} class weights for {} categories",
                    self.class_weights.len(),
                    self.taxonomy.len()
                ));
            }
            if self.class_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
                || self.class_weights.iter().sum::<f64>() <= 0.0
            {
                return bad("class weights must be non-negative with a positive sum".into());
            }
        }
        Ok(())
    }

    fn sample_category(&self, rng: &mut impl Rng) -> CategoryId {
        let ids: Vec<CategoryId> = self.taxonomy.ids().collect();
        if self.class_weights.is_empty() {
            return ids[rng.gen_range(0..ids.len())];
        }
        let total: f64 = self.class_weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (id, w) in ids.iter().zip(&self.class_weights) {
            if u < *w {
                return *id;
            }
            u -= w;
        }
        *ids.last().expect("taxonomy is non-empty")
    }
}

/// A tool silhouette in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub family: ShapeFamily,
    pub cx: f64,
    pub cy: f64,
    pub angle: f64,
    pub length: f64,
    pub radius: f64,
}

impl Shape {
    pub fn analytic_area(&self) -> f64 {
        match self.family {
            ShapeFamily::Capsule => {
                2.0 * self.radius * self.length + std::f64::consts::PI * self.radius * self.radius
            }
            ShapeFamily::RotatedRect => 2.0 * self.radius * self.length,
        }
    }

    /// Half extents of the axis-aligned box enclosing the shape.
    fn half_extent(&self) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let h = self.length / 2.0;
        match self.family {
            ShapeFamily::Capsule => (h * c.abs() + self.radius, h * s.abs() + self.radius),
            ShapeFamily::RotatedRect => (
                h * c.abs() + self.radius * s.abs(),
                h * s.abs() + self.radius * c.abs(),
            ),
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let along = dx * c + dy * s;
        let across = -dx * s + dy * c;
        let h = self.length / 2.0;
        match self.family {
            ShapeFamily::Capsule => {
                let t = along.clamp(-h, h);
                (along - t).powi(2) + across * across <= self.radius * self.radius
            }
            ShapeFamily::RotatedRect => along.abs() <= h && across.abs() <= self.radius,
        }
    }

    /// Pixels whose centers fall inside the shape.
    pub fn rasterize(&self, width: u32, height: u32) -> Bitmap {
        let mut bm = Bitmap::zeros(width, height);
        let (ex, ey) = self.half_extent();
        let x0 = (self.cx - ex - 1.0).floor().max(0.0) as u32;
        let y0 = (self.cy - ey - 1.0).floor().max(0.0) as u32;
        let x1 = ((self.cx + ex + 1.0).ceil().max(0.0) as u32).min(width);
        let y1 = ((self.cy + ey + 1.0).ceil().max(0.0) as u32).min(height);
        for y in y0..y1 {
            for x in x0..x1 {
                if self.contains(f64::from(x) + 0.5, f64::from(y) + 0.5) {
                    bm.set(x, y, true);
                }
            }
        }
        bm
    }
}

fn sample_shape(cfg: &SceneConfig, rng: &mut impl Rng) -> Shape {
    let mut shape = Shape {
        family: cfg.shape,
        cx: 0.0,
        cy: 0.0,
        angle: rng.gen_range(0.0..std::f64::consts::PI),
        length: rng.gen_range(cfg.length.0..=cfg.length.1),
        radius: rng.gen_range(cfg.radius.0..=cfg.radius.1),
    };
    let (w, h) = (f64::from(cfg.width), f64::from(cfg.height));
    let (ex, ey) = if cfg.occlusion { (0.0, 0.0) } else { shape.half_extent() };
    shape.cx = rng.gen_range(ex..=(w - ex).max(ex));
    shape.cy = rng.gen_range(ey..=(h - ey).max(ey));
    shape
}

const PLACEMENT_TRIES: usize = 64;

fn render(cfg: &SceneConfig, frame_id: String, categories: &[CategoryId], rng: &mut impl Rng) -> (AnnotatedFrame, RgbImage) {
    let (w, h) = (cfg.width, cfg.height);
    let mut placed: Vec<(CategoryId, Shape, Bitmap)> = Vec::with_capacity(categories.len());
    for &cat in categories {
        // Look for a spot that leaves earlier instruments fully visible.
        let mut candidate = None;
        for _ in 0..PLACEMENT_TRIES {
            let shape = sample_shape(cfg, rng);
            let bm = shape.rasterize(w, h);
            if bm.area() == 0 {
                continue;
            }
            let disjoint = placed.iter().all(|(_, _, other)| {
                bm.bits().iter().zip(other.bits()).all(|(a, b)| !(a & b))
            });
            let done = disjoint || cfg.occlusion;
            candidate = Some((shape, bm));
            if done {
                break;
            }
        }
        let (shape, bm) = candidate.expect("a shape with visible pixels");
        // Later instruments lie on top of earlier ones.
        for (_, _, under) in placed.iter_mut() {
            for (u, &o) in under.bits_mut().iter_mut().zip(bm.bits()) {
                *u &= !o;
            }
        }
        placed.push((cat, shape, bm));
    }
    placed.retain(|(_, _, bm)| bm.area() > 0);

    let mut image = RgbImage::from_fn(w, h, |x, y| {
        let v: u8 = rng.gen_range(0..24);
        let shade = ((x + y) % 32) as u8;
        Rgb([150 + v + shade / 2, 60 + v / 2, 55 + v / 2])
    });
    let instances = placed
        .iter()
        .map(|(cat, _, bm)| {
            let tone = 140 + (cat.0 * 7 % 90) as u8;
            for y in 0..h {
                for x in 0..w {
                    if bm.get(x, y) {
                        image.put_pixel(x, y, Rgb([tone, tone, tone.saturating_add(10)]));
                    }
                }
            }
            InstanceMask::ground_truth(*cat, bm.to_rle()).expect("non-empty mask")
        })
        .collect();
    let frame = AnnotatedFrame::new(frame_id, w, h).with_instances(instances);
    (frame, image)
}

/// One scene with a random number of instruments of random classes.
pub fn generate_scene(cfg: &SceneConfig, frame_id: impl Into<String>, rng: &mut impl Rng) -> Result<(AnnotatedFrame, RgbImage)> {
    cfg.validate()?;
    let n = rng.gen_range(cfg.instruments.0..=cfg.instruments.1);
    let cats: Vec<CategoryId> = (0..n).map(|_| cfg.sample_category(rng)).collect();
    Ok(render(cfg, frame_id.into(), &cats, rng))
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:04}")
}

/// `n` scenes, each drawn from its own stream keyed by `(cfg.seed, index)`.
pub fn generate_dataset(cfg: &SceneConfig, n: usize) -> Result<(Dataset, FrameImages)> {
    cfg.validate()?;
    let scenes: Vec<(AnnotatedFrame, RgbImage)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = keyed_rng(cfg.seed, &[i as u64]);
            generate_scene(cfg, scene_id(i), &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(collect(cfg, scenes))
}

fn collect(cfg: &SceneConfig, scenes: Vec<(AnnotatedFrame, RgbImage)>) -> (Dataset, FrameImages) {
    let mut images = BTreeMap::new();
    let frames = scenes
        .into_iter()
        .map(|(f, img)| {
            images.insert(f.frame_id.clone(), img);
            f
        })
        .collect();
    (Dataset::new(cfg.taxonomy.clone(), frames).canonicalized(), images)
}

pub const PAPER_FRAMES: usize = 333;
pub const PAPER_INSTANCES: usize = 561;

/// A dataset with the size and composition of the paper's collection:
/// 333 frames holding 561 instruments (153 frames with one, 132 with two,
/// 48 with three), spread almost evenly over the twelve classes.
pub fn paper_scale_dataset(seed: u64) -> Result<(Dataset, FrameImages)> {
    let cfg = SceneConfig { seed, ..SceneConfig::default() };
    let mut rng = keyed_rng(seed, &[u64::MAX]);
    let mut per_frame: Vec<usize> = [(1, 153), (2, 132), (3, 48)]
        .iter()
        .flat_map(|&(k, n)| std::iter::repeat(k).take(n))
        .collect();
    per_frame.shuffle(&mut rng);
    let ids: Vec<CategoryId> = cfg.taxonomy.ids().collect();
    let mut classes: Vec<CategoryId> = ids
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat(c).take(if i < 9 { 47 } else { 46 }))
        .collect();
    classes.shuffle(&mut rng);
    debug_assert_eq!(classes.len(), PAPER_INSTANCES);

    let mut offsets = Vec::with_capacity(per_frame.len());
    let mut at = 0;
    for &k in &per_frame {
        offsets.push(at);
        at += k;
    }
    let scenes = (0..PAPER_FRAMES)
        .into_par_iter()
        .map(|i| {
            let mut rng = keyed_rng(seed, &[i as u64]);
            let cats = &classes[offsets[i]..offsets[i] + per_frame[i]];
            render(&cfg, scene_id(i), cats, &mut rng)
        })
        .collect();
    Ok(collect(&cfg, scenes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreNoise {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
}

impl ScoreNoise {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            ScoreNoise::Constant { value } => value,
            ScoreNoise::Uniform { low, high } if low == high => low,
            ScoreNoise::Uniform { low, high } => rng.gen_range(low..=high),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    /// Every kept instance is shifted rigidly by this many pixels in a
    /// random direction.
    pub jitter: f64,
    pub drop_prob: f64,
    /// Expected number of spurious instances per frame.
    pub spurious_rate: f64,
    pub class_flip_prob: f64,
    pub score: ScoreNoise,
}

impl PerturbationConfig {
    /// Predictions identical to the ground truth, all scored 1.
    pub fn zero() -> Self {
        Self {
            jitter: 0.0,
            drop_prob: 0.0,
            spurious_rate: 0.0,
            class_flip_prob: 0.0,
            score: ScoreNoise::Constant { value: 1.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(Error::InvalidConfig(format!("jitter {} must be >= 0", self.jitter)));
        }
        if !prob(self.drop_prob) || !prob(self.class_flip_prob) {
            return Err(Error::InvalidConfig("probabilities must lie in [0, 1]".into()));
        }
        if !(self.spurious_rate.is_finite() && self.spurious_rate >= 0.0) {
            return Err(Error::InvalidConfig("spurious rate must be >= 0".into()));
        }
        let ok = match self.score {
            ScoreNoise::Constant { value } => prob(value),
            ScoreNoise::Uniform { low, high } => prob(low) && prob(high) && low <= high,
        };
        if !ok {
            return Err(Error::InvalidConfig(format!("invalid score model {:?}", self.score)));
        }
        Ok(())
    }
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self::zero()
    }
}

/// Moves a mask by whole pixels, dropping what leaves the frame.
pub fn shift_mask(mask: &RleMask, dx: i64, dy: i64) -> RleMask {
    let (w, h) = (i64::from(mask.width()), i64::from(mask.height()));
    let mut counts = Vec::new();
    let mut emitted = 0i64;
    let mut push = |lo: i64, hi: i64| {
        counts.push((lo - emitted) as u32);
        counts.push((hi - lo) as u32);
        emitted = hi;
    };
    for (start, end) in mask.runs() {
        let (start, end) = (start as i64, end as i64);
        let mut row = start / w;
        while row * w < end {
            let x0 = (start - row * w).max(0) + dx;
            let x1 = (end - row * w).min(w) + dx;
            let y = row + dy;
            let (x0, x1) = (x0.max(0), x1.min(w));
            if (0..h).contains(&y) && x0 < x1 {
                push(y * w + x0, y * w + x1);
            }
            row += 1;
        }
    }
    counts.push((w * h - emitted) as u32);
    RleMask::from_counts(mask.width(), mask.height(), counts).expect("counts cover the frame")
}

/// Scored predictions derived from a frame's ground truth.
pub fn perturb_predictions(
    frame: &AnnotatedFrame,
    taxonomy: &Taxonomy,
    pcfg: &PerturbationConfig,
    rng: &mut impl Rng,
) -> Result<Vec<InstanceMask>> {
    pcfg.validate()?;
    let ids: Vec<CategoryId> = taxonomy.ids().collect();
    let mut out = Vec::with_capacity(frame.instances.len());
    for inst in &frame.instances {
        // Draw every variate up front so each instance consumes the same
        // amount of randomness whatever the configuration.
        let drop = rng.gen::<f64>() < pcfg.drop_prob;
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let flip = rng.gen::<f64>() < pcfg.class_flip_prob;
        let other = rng.gen_range(0..ids.len().max(2) - 1);
        let score = pcfg.score.sample(rng);
        if drop {
            continue;
        }
        let mask = if pcfg.jitter > 0.0 {
            let dx = (pcfg.jitter * theta.cos()).round() as i64;
            let dy = (pcfg.jitter * theta.sin()).round() as i64;
            shift_mask(inst.mask(), dx, dy)
        } else {
            inst.mask().clone()
        };
        if mask.area() == 0 {
            continue;
        }
        let mut category = inst.category();
        if flip && ids.len() > 1 {
            let rest: Vec<CategoryId> = ids.iter().copied().filter(|&c| c != category).collect();
            category = rest[other % rest.len()];
        }
        out.push(InstanceMask::prediction(category, mask, score)?);
    }

    let whole = pcfg.spurious_rate.floor() as usize;
    let extra = usize::from(rng.gen::<f64>() < pcfg.spurious_rate.fract());
    if whole + extra > 0 {
        let scene = SceneConfig {
            width: frame.width,
            height: frame.height,
            occlusion: true,
            taxonomy: taxonomy.clone(),
            ..SceneConfig::default()
        };
        for _ in 0..whole + extra {
            let shape = sample_shape(&scene, rng);
            let category = scene.sample_category(rng);
            let score = pcfg.score.sample(rng);
            let mask = shape.rasterize(frame.width, frame.height).to_rle();
            if mask.area() > 0 {
                out.push(InstanceMask::prediction(category, mask, score)?);
            }
        }
    }
    Ok(out)
}

/// Perturbed predictions for every frame, keyed by `(seed, frame index)`.
pub fn perturb_dataset(ds: &Dataset, pcfg: &PerturbationConfig, seed: u64) -> Result<Predictions> {
    pcfg.validate()?;
    let frames: Vec<(String, Vec<InstanceMask>)> = ds
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let mut rng = keyed_rng(seed, &[i as u64, 1]);
            Ok((f.frame_id.clone(), perturb_predictions(f, &ds.taxonomy, pcfg, &mut rng)?))
        })
        .collect::<Result<_>>()?;
    Ok(Predictions::from_map(frames.into_iter().collect()))
}

/// IoU of a `w`×`h` axis-aligned rectangle with a copy of itself shifted
/// by `d` along the `w` axis.
pub fn expected_iou_under_shift(w: f64, h: f64, d: f64) -> Result<f64> {
    if !(w > 0.0 && h > 0.0 && d >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "rectangle {w}x{h} with shift {d} is not valid"
        )));
    }
    if d >= w {
        return Err(Error::InvalidConfig(format!("shift {d} must be smaller than width {w}")));
    }
    Ok((w - d) * h / ((w + d) * h))
}
