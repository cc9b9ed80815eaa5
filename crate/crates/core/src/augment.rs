//! Label-preserving data augmentation.
//!
//! Two stages:
//!
//! * **Offline**: a deterministic grid of rotations, scales and translations
//!   is applied to every training frame. A transformed frame is kept only if
//!   every instance keeps at least `preservation_threshold` of its expected
//!   area after clipping to the frame.
//! * **Online**: per-sample random flips and Gaussian blur, driven by a
//!   counter-based generator keyed by `(seed, frame_id, epoch)`.
//!
//! Images are resampled bilinearly, masks with nearest neighbour, both by
//! inverse mapping from output pixel centres. Rotation and scaling act about
//! the frame centre and the output keeps the input dimensions; uncovered
//! pixels take the fill colour.

use std::collections::BTreeMap;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{Bitmap, BoundingBox, RleMask};
use crate::model::{file_stem_for, AnnotatedFrame, Dataset, InstanceMask, Split};
use crate::rng::{derive_seed, hash_str};

/// Pixel data keyed by frame id.
pub type FrameImages = BTreeMap<String, RgbImage>;

pub const ROTATIONS: [u32; 8] = [0, 45, 90, 135, 180, 225, 270, 315];
pub const SCALES: [f64; 3] = [1.25, 1.50, 1.75];
pub const TRANSLATIONS: [[f64; 2]; 4] = [[-0.1, -0.1], [-0.1, 0.1], [0.1, -0.1], [0.1, 0.1]];
pub const MAX_BLUR_SIGMA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MirrorAxis {
    /// Left-right flip.
    Horizontal,
    /// Top-bottom flip.
    Vertical,
}

/// One geometric or photometric transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TransformSpec {
    Identity,
    /// Counter-clockwise rotation as displayed.
    Rotation { degrees: u32 },
    Scale { factor: f64 },
    /// Shift by `u * width` and `v * height` pixels.
    Translation { u: f64, v: f64 },
    Mirror { axis: MirrorAxis },
    Blur { sigma: f64 },
}

impl TransformSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TransformSpec::Identity | TransformSpec::Mirror { .. } => Ok(()),
            TransformSpec::Rotation { degrees } if ROTATIONS.contains(&degrees) => Ok(()),
            TransformSpec::Rotation { degrees } => Err(Error::InvalidTransform(format!(
                "rotation {degrees} not in {ROTATIONS:?}"
            ))),
            TransformSpec::Scale { factor } if SCALES.contains(&factor) => Ok(()),
            TransformSpec::Scale { factor } => Err(Error::InvalidTransform(format!(
                "scale {factor} not in {SCALES:?}"
            ))),
            TransformSpec::Translation { u, v } if is_shift(u) && is_shift(v) => Ok(()),
            TransformSpec::Translation { u, v } => Err(Error::InvalidTransform(format!(
                "translation ({u}, {v}) must use fractions in {{-0.1, 0.1}}"
            ))),
            TransformSpec::Blur { sigma } if (0.0..=MAX_BLUR_SIGMA).contains(&sigma) => Ok(()),
            TransformSpec::Blur { sigma } => Err(Error::InvalidTransform(format!(
                "blur sigma {sigma} outside [0, {MAX_BLUR_SIGMA}]"
            ))),
        }
    }

    /// Short label used to build derived frame ids.
    pub fn label(&self) -> String {
        match *self {
            TransformSpec::Identity => "identity".into(),
            TransformSpec::Rotation { degrees } => format!("rot{degrees:03}"),
            TransformSpec::Scale { factor } => format!("scale{factor:.2}"),
            TransformSpec::Translation { u, v } => format!("tx{u:+.2}ty{v:+.2}"),
            TransformSpec::Mirror { axis: MirrorAxis::Horizontal } => "mirror-h".into(),
            TransformSpec::Mirror { axis: MirrorAxis::Vertical } => "mirror-v".into(),
            TransformSpec::Blur { sigma } => format!("blur{sigma:.2}"),
        }
    }

    fn is_geometric(&self) -> bool {
        !matches!(self, TransformSpec::Blur { .. })
    }

    /// Expected multiplicative change of an unclipped mask's area.
    pub fn area_factor(&self) -> f64 {
        match *self {
            TransformSpec::Scale { factor } => factor * factor,
            _ => 1.0,
        }
    }
}

fn is_shift(x: f64) -> bool {
    x == -0.1 || x == 0.1
}

pub fn chain_label(chain: &[TransformSpec]) -> String {
    if chain.is_empty() {
        return TransformSpec::Identity.label();
    }
    chain.iter().map(TransformSpec::label).collect::<Vec<_>>().join("+")
}

/// Parameters of the offline transform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Rotation angles; 0 is the identity and is never emitted separately.
    pub rotations: Vec<u32>,
    pub scales: Vec<f64>,
    pub translations: Vec<[f64; 2]>,
    /// Replace single rotations and scales by their cartesian product.
    pub rotation_scale_product: bool,
    /// Additional explicit chains appended after the generated ones.
    pub extra_chains: Vec<Vec<TransformSpec>>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rotations: ROTATIONS.to_vec(),
            scales: SCALES.to_vec(),
            translations: TRANSLATIONS.to_vec(),
            rotation_scale_product: false,
            extra_chains: Vec::new(),
        }
    }
}

impl GridSpec {
    pub fn empty() -> Self {
        Self {
            rotations: Vec::new(),
            scales: Vec::new(),
            translations: Vec::new(),
            rotation_scale_product: false,
            extra_chains: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum FillPolicy {
    MeanRgb,
    Constant { rgb: [u8; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub offline_grid: GridSpec,
    pub preservation_threshold: f64,
    pub fill_policy: FillPolicy,
    pub online_flip_prob: f64,
    pub online_blur_prob: f64,
    pub online_sigma_range: [f64; 2],
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            offline_grid: GridSpec::default(),
            preservation_threshold: 0.9,
            fill_policy: FillPolicy::MeanRgb,
            online_flip_prob: 0.5,
            online_blur_prob: 0.5,
            online_sigma_range: [0.0, MAX_BLUR_SIGMA],
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let tau = self.preservation_threshold;
        if !(tau > 0.0 && tau <= 1.0) {
            return bad(format!("preservation threshold {tau} outside (0, 1]"));
        }
        for (name, p) in [
            ("flip", self.online_flip_prob),
            ("blur", self.online_blur_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} probability {p} outside [0, 1]"));
            }
        }
        let [lo, hi] = self.online_sigma_range;
        if !(0.0 <= lo && lo <= hi && hi <= MAX_BLUR_SIGMA) {
            return bad(format!("sigma range [{lo}, {hi}] not within [0, {MAX_BLUR_SIGMA}]"));
        }
        let grid = &self.offline_grid;
        for &degrees in &grid.rotations {
            TransformSpec::Rotation { degrees }.validate()?;
        }
        for &factor in &grid.scales {
            TransformSpec::Scale { factor }.validate()?;
        }
        for &[u, v] in &grid.translations {
            TransformSpec::Translation { u, v }.validate()?;
        }
        for chain in &grid.extra_chains {
            for t in chain {
                t.validate()?;
                if !t.is_geometric() {
                    return bad("blur belongs to the online stage, not the offline grid".into());
                }
            }
        }
        Ok(())
    }
}

/// Lists the offline chains: identity first, then rotations, scales (or
/// their product), translations and finally any extra chains.
pub fn enumerate_offline_grid(cfg: &AugmentationConfig) -> Vec<Vec<TransformSpec>> {
    let grid = &cfg.offline_grid;
    let mut chains = vec![vec![TransformSpec::Identity]];
    if grid.rotation_scale_product && !grid.rotations.is_empty() && !grid.scales.is_empty() {
        for &degrees in &grid.rotations {
            for &factor in &grid.scales {
                let mut chain = Vec::with_capacity(2);
                if degrees != 0 {
                    chain.push(TransformSpec::Rotation { degrees });
                }
                chain.push(TransformSpec::Scale { factor });
                chains.push(chain);
            }
        }
    } else {
        chains.extend(
            grid.rotations
                .iter()
                .filter(|&&d| d != 0)
                .map(|&degrees| vec![TransformSpec::Rotation { degrees }]),
        );
        chains.extend(
            grid.scales
                .iter()
                .map(|&factor| vec![TransformSpec::Scale { factor }]),
        );
    }
    chains.extend(
        grid.translations
            .iter()
            .map(|&[u, v]| vec![TransformSpec::Translation { u, v }]),
    );
    chains.extend(grid.extra_chains.iter().cloned());
    chains
}

/// Per-channel mean, rounded half up.
pub fn mean_rgb(image: &RgbImage) -> Rgb<u8> {
    let n = u64::from(image.width()) * u64::from(image.height());
    if n == 0 {
        return Rgb([0, 0, 0]);
    }
    let mut sums = [0u64; 3];
    for px in image.pixels() {
        for c in 0..3 {
            sums[c] += u64::from(px[c]);
        }
    }
    Rgb(sums.map(|s| ((2 * s + n) / (2 * n)) as u8))
}

/// 2-D affine map `p -> m * p + t` on continuous pixel coordinates, where
/// pixel `(i, j)` has its centre at `(i + 0.5, j + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Affine {
    m: [[f64; 2]; 2],
    t: [f64; 2],
}

impl Affine {
    const IDENTITY: Affine = Affine {
        m: [[1.0, 0.0], [0.0, 1.0]],
        t: [0.0, 0.0],
    };

    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.m[0][0] * x + self.m[0][1] * y + self.t[0],
            self.m[1][0] * x + self.m[1][1] * y + self.t[1],
        )
    }

    /// `self ∘ other`: apply `other` first.
    fn after(&self, other: &Affine) -> Affine {
        let a = &self.m;
        let b = &other.m;
        let m = [
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ];
        let (tx, ty) = self.apply(other.t[0], other.t[1]);
        Affine { m, t: [tx, ty] }
    }

    /// Linear map `m` acting about the centre `(cx, cy)`.
    fn about(m: [[f64; 2]; 2], cx: f64, cy: f64) -> Affine {
        Affine {
            m,
            t: [
                cx - m[0][0] * cx - m[0][1] * cy,
                cy - m[1][0] * cx - m[1][1] * cy,
            ],
        }
    }
}

/// Cosine and sine with exact values at multiples of 90 degrees.
fn cos_sin(degrees: i64) -> (f64, f64) {
    match degrees.rem_euclid(360) {
        0 => (1.0, 0.0),
        90 => (0.0, 1.0),
        180 => (-1.0, 0.0),
        270 => (0.0, -1.0),
        d => {
            let r = (d as f64).to_radians();
            (r.cos(), r.sin())
        }
    }
}

/// Forward and inverse maps of one geometric transform.
fn transform_maps(t: &TransformSpec, width: u32, height: u32) -> Result<(Affine, Affine)> {
    let (w, h) = (f64::from(width), f64::from(height));
    let (cx, cy) = (w / 2.0, h / 2.0);
    Ok(match *t {
        TransformSpec::Identity => (Affine::IDENTITY, Affine::IDENTITY),
        TransformSpec::Rotation { degrees } => {
            // y points down, so a visually counter-clockwise turn is [c s; -s c]
            let rot = |d: i64| {
                let (c, s) = cos_sin(d);
                [[c, s], [-s, c]]
            };
            let d = i64::from(degrees);
            (Affine::about(rot(d), cx, cy), Affine::about(rot(-d), cx, cy))
        }
        TransformSpec::Scale { factor } => {
            if !(factor > 0.0 && factor.is_finite()) {
                return Err(Error::InvalidTransform(format!("scale factor {factor}")));
            }
            let inv = 1.0 / factor;
            (
                Affine::about([[factor, 0.0], [0.0, factor]], cx, cy),
                Affine::about([[inv, 0.0], [0.0, inv]], cx, cy),
            )
        }
        TransformSpec::Translation { u, v } => {
            let (dx, dy) = (u * w, v * h);
            (
                Affine { m: Affine::IDENTITY.m, t: [dx, dy] },
                Affine { m: Affine::IDENTITY.m, t: [-dx, -dy] },
            )
        }
        TransformSpec::Mirror { axis } => {
            let m = match axis {
                MirrorAxis::Horizontal => [[-1.0, 0.0], [0.0, 1.0]],
                MirrorAxis::Vertical => [[1.0, 0.0], [0.0, -1.0]],
            };
            let a = Affine::about(m, cx, cy);
            (a, a)
        }
        TransformSpec::Blur { .. } => {
            return Err(Error::InvalidTransform(
                "blur is not an affine transform; use apply_blur".into(),
            ))
        }
    })
}

fn chain_maps(chain: &[TransformSpec], width: u32, height: u32) -> Result<(Affine, Affine)> {
    let mut forward = Affine::IDENTITY;
    let mut inverse = Affine::IDENTITY;
    for t in chain {
        let (f, i) = transform_maps(t, width, height)?;
        forward = f.after(&forward);
        inverse = inverse.after(&i);
    }
    Ok((forward, inverse))
}

fn is_identity_chain(chain: &[TransformSpec]) -> bool {
    chain.iter().all(|t| matches!(t, TransformSpec::Identity))
}

/// Nearest-neighbour resampling of a mask through `inverse`, visiting only
/// the forward image of the source bounding box.
fn resample_mask(mask: &RleMask, bbox: BoundingBox, forward: &Affine, inverse: &Affine) -> RleMask {
    let (w, h) = (mask.width(), mask.height());
    let src = mask.decode();
    let corners = [
        (f64::from(bbox.x), f64::from(bbox.y)),
        (f64::from(bbox.right()), f64::from(bbox.y)),
        (f64::from(bbox.x), f64::from(bbox.bottom())),
        (f64::from(bbox.right()), f64::from(bbox.bottom())),
    ];
    let mapped: Vec<(f64, f64)> = corners.iter().map(|&(x, y)| forward.apply(x, y)).collect();
    let clamp = |v: f64, hi: u32| v.max(0.0).min(f64::from(hi)) as u32;
    let x0 = clamp(mapped.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor() - 1.0, w);
    let x1 = clamp(mapped.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil() + 1.0, w);
    let y0 = clamp(mapped.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor() - 1.0, h);
    let y1 = clamp(mapped.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil() + 1.0, h);

    let mut out = Bitmap::zeros(w, h);
    let (fw, fh) = (f64::from(w), f64::from(h));
    for y in y0..y1 {
        for x in x0..x1 {
            let (sx, sy) = inverse.apply(f64::from(x) + 0.5, f64::from(y) + 0.5);
            if sx >= 0.0 && sx < fw && sy >= 0.0 && sy < fh && src.get(sx as u32, sy as u32) {
                out.set(x, y, true);
            }
        }
    }
    out.to_rle()
}

/// Bilinear resampling of an image through `inverse`.
fn resample_image(image: &RgbImage, inverse: &Affine, fill: Rgb<u8>) -> RgbImage {
    let (w, h) = image.dimensions();
    let (fw, fh) = (f64::from(w), f64::from(h));
    let mut out = RgbImage::new(w, h);
    for (x, y, px) in out.enumerate_pixels_mut() {
        let (sx, sy) = inverse.apply(f64::from(x) + 0.5, f64::from(y) + 0.5);
        if !(sx >= 0.0 && sx < fw && sy >= 0.0 && sy < fh) {
            *px = fill;
            continue;
        }
        let (fx, fy) = (sx - 0.5, sy - 0.5);
        let (x0, y0) = (fx.floor(), fy.floor());
        let (ax, ay) = (fx - x0, fy - y0);
        let xi = |v: f64| v.max(0.0).min(fw - 1.0) as u32;
        let yi = |v: f64| v.max(0.0).min(fh - 1.0) as u32;
        let (xa, xb, ya, yb) = (xi(x0), xi(x0 + 1.0), yi(y0), yi(y0 + 1.0));
        let p00 = image.get_pixel(xa, ya);
        let p10 = image.get_pixel(xb, ya);
        let p01 = image.get_pixel(xa, yb);
        let p11 = image.get_pixel(xb, yb);
        for c in 0..3 {
            let top = f64::from(p00[c]) * (1.0 - ax) + f64::from(p10[c]) * ax;
            let bottom = f64::from(p01[c]) * (1.0 - ax) + f64::from(p11[c]) * ax;
            let v = top * (1.0 - ay) + bottom * ay;
            px[c] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Transformed masks of every instance in `frame`, in instance order. Masks
/// may come back empty when the transform pushes them out of the frame.
pub fn transform_masks(frame: &AnnotatedFrame, chain: &[TransformSpec]) -> Result<Vec<RleMask>> {
    if is_identity_chain(chain) {
        return Ok(frame.instances.iter().map(|i| i.mask().clone()).collect());
    }
    let (forward, inverse) = chain_maps(chain, frame.width, frame.height)?;
    Ok(frame
        .instances
        .iter()
        .map(|i| resample_mask(i.mask(), i.bbox(), &forward, &inverse))
        .collect())
}

/// Applies a chain of geometric transforms to a frame and its image.
///
/// Instances whose mask leaves the frame entirely are dropped; callers that
/// need every label to survive check [`preservation_ratio`] first.
pub fn apply_chain(
    frame: &AnnotatedFrame,
    image: &RgbImage,
    chain: &[TransformSpec],
    fill: Rgb<u8>,
) -> Result<(AnnotatedFrame, RgbImage)> {
    check_image_dims(frame, image)?;
    let masks = transform_masks(frame, chain)?;
    let out_image = if is_identity_chain(chain) {
        image.clone()
    } else {
        let (_, inverse) = chain_maps(chain, frame.width, frame.height)?;
        resample_image(image, &inverse, fill)
    };
    Ok((rebuild_frame(frame, chain, masks)?, out_image))
}

pub fn apply_affine(
    frame: &AnnotatedFrame,
    image: &RgbImage,
    t: &TransformSpec,
    fill: Rgb<u8>,
) -> Result<(AnnotatedFrame, RgbImage)> {
    if !t.is_geometric() {
        return Err(Error::InvalidTransform(
            "blur is not an affine transform; use apply_blur".into(),
        ));
    }
    apply_chain(frame, image, std::slice::from_ref(t), fill)
}

fn rebuild_frame(
    frame: &AnnotatedFrame,
    chain: &[TransformSpec],
    masks: Vec<RleMask>,
) -> Result<AnnotatedFrame> {
    if is_identity_chain(chain) {
        return Ok(frame.clone());
    }
    let mut instances = Vec::with_capacity(masks.len());
    for (inst, mask) in frame.instances.iter().zip(masks) {
        if mask.area() > 0 {
            instances.push(InstanceMask::new(inst.category(), mask, inst.score())?);
        }
    }
    let mut provenance = frame.provenance.clone();
    provenance.extend_from_slice(chain);
    Ok(AnnotatedFrame {
        instances,
        provenance,
        ..frame.clone()
    })
}

fn check_image_dims(frame: &AnnotatedFrame, image: &RgbImage) -> Result<()> {
    if image.dimensions() != (frame.width, frame.height) {
        return Err(Error::DimensionMismatch {
            left_w: frame.width,
            left_h: frame.height,
            right_w: image.width(),
            right_h: image.height(),
        });
    }
    Ok(())
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Separable Gaussian blur, radius `ceil(3 sigma)`, clamp-to-edge borders.
pub fn apply_blur(image: &RgbImage, sigma: f64) -> Result<RgbImage> {
    if !(0.0..=MAX_BLUR_SIGMA).contains(&sigma) {
        return Err(Error::InvalidTransform(format!(
            "blur sigma {sigma} outside [0, {MAX_BLUR_SIGMA}]"
        )));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (w, h) = (image.width() as i64, image.height() as i64);
    let idx = |x: i64, y: i64| (y * w + x) as usize * 3;
    let src = image.as_raw();

    let mut horizontal = vec![0.0f64; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for (k, wt) in kernel.iter().enumerate() {
                let sx = (x + k as i64 - radius).clamp(0, w - 1);
                let p = idx(sx, y);
                for c in 0..3 {
                    acc[c] += wt * f64::from(src[p + c]);
                }
            }
            horizontal[idx(x, y)..idx(x, y) + 3].copy_from_slice(&acc);
        }
    }

    let mut out = vec![0u8; src.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for (k, wt) in kernel.iter().enumerate() {
                let sy = (y + k as i64 - radius).clamp(0, h - 1);
                let p = idx(x, sy);
                for c in 0..3 {
                    acc[c] += wt * horizontal[p + c];
                }
            }
            let p = idx(x, y);
            for c in 0..3 {
                out[p + c] = (acc[c] + 0.5).floor().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(RgbImage::from_raw(image.width(), image.height(), out).expect("same buffer size"))
}

/// Area of the transformed (clipped) mask relative to the area the
/// original would have after an unclipped transform.
pub fn preservation_ratio(
    original: &InstanceMask,
    transformed: &RleMask,
    chain: &[TransformSpec],
) -> f64 {
    let factor: f64 = chain.iter().map(TransformSpec::area_factor).product();
    transformed.area() as f64 / (original.area() as f64 * factor)
}

fn fill_color(policy: FillPolicy, image: &RgbImage) -> Rgb<u8> {
    match policy {
        FillPolicy::MeanRgb => mean_rgb(image),
        FillPolicy::Constant { rgb } => Rgb(rgb),
    }
}

/// Expands every train (or untagged) frame by the offline grid.
///
/// Each source frame is followed by its kept variants in chain order; a
/// variant is kept only if every instance's preservation ratio reaches the
/// threshold. Val and test frames pass through untouched. Output frames are
/// ordered by source frame id, then chain index, independent of the number
/// of worker threads.
pub fn offline_augment(
    ds: &Dataset,
    images: &FrameImages,
    cfg: &AugmentationConfig,
) -> Result<(Dataset, FrameImages)> {
    cfg.validate()?;
    let chains = enumerate_offline_grid(cfg);
    let mut sources: Vec<&AnnotatedFrame> = ds.frames.iter().collect();
    sources.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));

    let per_frame: Vec<Vec<(AnnotatedFrame, Option<RgbImage>)>> = sources
        .par_iter()
        .map(|frame| augment_frame(frame, images.get(&frame.frame_id), &chains, cfg))
        .collect::<Result<_>>()?;

    let mut frames = Vec::new();
    let mut out_images = FrameImages::new();
    for (frame, image) in per_frame.into_iter().flatten() {
        if let Some(image) = image {
            out_images.insert(frame.frame_id.clone(), image);
        }
        frames.push(frame);
    }
    Ok((Dataset::new(ds.taxonomy.clone(), frames), out_images))
}

fn augment_frame(
    frame: &AnnotatedFrame,
    image: Option<&RgbImage>,
    chains: &[Vec<TransformSpec>],
    cfg: &AugmentationConfig,
) -> Result<Vec<(AnnotatedFrame, Option<RgbImage>)>> {
    let mut out = vec![(frame.clone(), image.cloned())];
    if matches!(frame.split, Some(Split::Val) | Some(Split::Test)) {
        return Ok(out);
    }
    let image = image.ok_or_else(|| Error::MissingImage(frame.frame_id.clone()))?;
    check_image_dims(frame, image)?;
    let fill = fill_color(cfg.fill_policy, image);

    for chain in chains.iter().filter(|c| !is_identity_chain(c)) {
        let masks = transform_masks(frame, chain)?;
        let keep = frame
            .instances
            .iter()
            .zip(&masks)
            .all(|(orig, m)| preservation_ratio(orig, m, chain) >= cfg.preservation_threshold);
        if !keep {
            continue;
        }
        let mut derived = rebuild_frame(frame, chain, masks)?;
        derived.frame_id = format!("{}/{}", frame.frame_id, chain_label(chain));
        derived.image_ref = format!("{}.png", file_stem_for(&derived.frame_id));
        let (_, inverse) = chain_maps(chain, frame.width, frame.height)?;
        let derived_image = resample_image(image, &inverse, fill);
        out.push((derived, Some(derived_image)));
    }
    Ok(out)
}

/// Replayable position of an online sampling stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnlineRngState {
    key: u64,
    word_pos: u128,
}

impl OnlineRngState {
    pub fn new(seed: u64, frame_id: &str, epoch: u64) -> Self {
        Self {
            key: derive_seed(seed, &[hash_str(frame_id), epoch]),
            word_pos: 0,
        }
    }

    fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Random flip and blur for one training sample.
///
/// Flips with probability `online_flip_prob` (axis uniform), and
/// independently blurs with probability `online_blur_prob` using a sigma
/// drawn uniformly from `online_sigma_range`. Masks follow the flip but are
/// never blurred. Exactly four values are consumed from the stream per call.
pub fn online_sample(
    frame: &AnnotatedFrame,
    image: &RgbImage,
    cfg: &AugmentationConfig,
    state: OnlineRngState,
) -> Result<(AnnotatedFrame, RgbImage, OnlineRngState)> {
    let mut rng = state.generator();
    let flip_draw: f64 = rng.gen();
    let axis_draw: f64 = rng.gen();
    let blur_draw: f64 = rng.gen();
    let sigma_draw: f64 = rng.gen();
    let next = OnlineRngState {
        key: state.key,
        word_pos: rng.get_word_pos(),
    };

    let (mut frame, mut image) = (frame.clone(), image.clone());
    if flip_draw < cfg.online_flip_prob {
        let axis = if axis_draw < 0.5 {
            MirrorAxis::Horizontal
        } else {
            MirrorAxis::Vertical
        };
        (frame, image) = apply_affine(&frame, &image, &TransformSpec::Mirror { axis }, Rgb([0, 0, 0]))?;
    }
    if blur_draw < cfg.online_blur_prob {
        let [lo, hi] = cfg.online_sigma_range;
        let sigma = lo + (hi - lo) * sigma_draw;
        image = apply_blur(&image, sigma)?;
        frame.provenance.push(TransformSpec::Blur { sigma });
    }
    Ok((frame, image, next))
}
