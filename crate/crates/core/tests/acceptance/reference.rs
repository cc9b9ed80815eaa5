//! A deliberately naive COCO-style evaluator used as an oracle.
//!
//! Masks are dense boolean grids, IoU is counted pixel by pixel, every
//! detection cap is matched from scratch, and interpolated precision is
//! found by scanning the whole curve for each recall level. Nothing here
//! calls into the evaluator under test.

use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct RefInstance {
    pub category: u32,
    pub width: usize,
    pub bits: Vec<bool>,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefIou {
    Mask,
    Bbox,
}

#[derive(Debug, Clone)]
pub struct RefFrame {
    pub gt: Vec<RefInstance>,
    pub preds: Vec<RefInstance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefResult {
    /// Per class with ground truth: AP at each threshold.
    pub class_ap: BTreeMap<u32, Vec<f64>>,
    /// Mean over classes at each threshold.
    pub ap_per_threshold: Vec<f64>,
    /// Mean over classes of the recall averaged over thresholds, per cap.
    pub ar: Vec<(usize, f64)>,
}

pub fn pixel_iou(a: &[bool], b: &[bool]) -> f64 {
    let mut inter = 0u64;
    let mut union = 0u64;
    for (&x, &y) in a.iter().zip(b) {
        inter += u64::from(x && y);
        union += u64::from(x || y);
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Inclusive pixel extents `(x0, y0, x1, y1)` by scanning every pixel.
fn extents(bits: &[bool], width: usize) -> Option<(usize, usize, usize, usize)> {
    let mut ext: Option<(usize, usize, usize, usize)> = None;
    for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
        let (x, y) = (i % width, i / width);
        ext = Some(match ext {
            None => (x, y, x, y),
            Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
        });
    }
    ext
}

fn box_iou(a: &RefInstance, b: &RefInstance) -> f64 {
    let (Some(p), Some(q)) = (extents(&a.bits, a.width), extents(&b.bits, b.width)) else {
        return 0.0;
    };
    let area = |e: (usize, usize, usize, usize)| ((e.2 - e.0 + 1) * (e.3 - e.1 + 1)) as u64;
    let iw = (p.2.min(q.2) + 1).saturating_sub(p.0.max(q.0)) as u64;
    let ih = (p.3.min(q.3) + 1).saturating_sub(p.1.max(q.1)) as u64;
    let inter = iw * ih;
    inter as f64 / (area(p) + area(q) - inter) as f64
}

fn iou(a: &RefInstance, b: &RefInstance, kind: RefIou) -> f64 {
    match kind {
        RefIou::Mask => pixel_iou(&a.bits, &b.bits),
        RefIou::Bbox => box_iou(a, b),
    }
}

/// `(score, is_tp)` for one frame and class with at most `cap` detections.
fn match_frame(gt: &[&RefInstance], preds: &[&RefInstance], cap: usize, t: f64, kind: RefIou) -> Vec<(f64, bool)> {
    let mut order: Vec<&RefInstance> = preds.to_vec();
    // Vec::sort_by is stable, so equal scores keep their input order.
    order.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    order.truncate(cap);
    let mut used = vec![false; gt.len()];
    let mut out = Vec::new();
    for p in order {
        let mut best: Option<usize> = None;
        for (g, inst) in gt.iter().enumerate() {
            let v = iou(inst, p, kind);
            if used[g] || v < t {
                continue;
            }
            match best {
                Some(b) if iou(gt[b], p, kind) >= v => {}
                _ => best = Some(g),
            }
        }
        if let Some(g) = best {
            used[g] = true;
        }
        out.push((p.score, best.is_some()));
    }
    out
}

fn interpolated_ap(dets: &[(f64, bool)], num_gt: usize) -> f64 {
    let mut pooled = dets.to_vec();
    pooled.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut points = Vec::new();
    let mut tp = 0;
    for (i, &(_, hit)) in pooled.iter().enumerate() {
        tp += usize::from(hit);
        points.push((tp as f64 / num_gt as f64, tp as f64 / (i + 1) as f64));
    }
    let mut sum = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let best = points
            .iter()
            .filter(|p| p.0 >= r)
            .map(|p| p.1)
            .fold(0.0f64, f64::max);
        sum += best;
    }
    sum / 101.0
}

pub fn thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

pub fn evaluate(frames: &[RefFrame], binary: bool, kind: RefIou, caps: &[usize]) -> RefResult {
    let cat = |i: &RefInstance| if binary { 1 } else { i.category };
    let mut classes: Vec<u32> = frames.iter().flat_map(|f| f.gt.iter().map(cat)).collect();
    classes.sort();
    classes.dedup();
    let ts = thresholds();
    let largest = *caps.iter().max().unwrap();

    let mut class_ap = BTreeMap::new();
    let mut class_ar: Vec<Vec<f64>> = vec![Vec::new(); caps.len()];
    for &c in &classes {
        let num_gt: usize = frames.iter().map(|f| f.gt.iter().filter(|i| cat(i) == c).count()).sum();
        let mut aps = Vec::new();
        let mut recall_sums = vec![0.0; caps.len()];
        for &t in &ts {
            let mut pooled_largest = Vec::new();
            for f in frames {
                let gt: Vec<&RefInstance> = f.gt.iter().filter(|i| cat(i) == c).collect();
                let preds: Vec<&RefInstance> = f.preds.iter().filter(|i| cat(i) == c).collect();
                pooled_largest.extend(match_frame(&gt, &preds, largest, t, kind));
            }
            aps.push(interpolated_ap(&pooled_largest, num_gt));
            for (ci, &cap) in caps.iter().enumerate() {
                let mut tp = 0;
                for f in frames {
                    let gt: Vec<&RefInstance> = f.gt.iter().filter(|i| cat(i) == c).collect();
                    let preds: Vec<&RefInstance> = f.preds.iter().filter(|i| cat(i) == c).collect();
                    tp += match_frame(&gt, &preds, cap, t, kind).iter().filter(|d| d.1).count();
                }
                recall_sums[ci] += tp as f64 / num_gt as f64;
            }
        }
        for (ci, s) in recall_sums.iter().enumerate() {
            class_ar[ci].push(s / ts.len() as f64);
        }
        class_ap.insert(c, aps);
    }

    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let ap_per_threshold = (0..ts.len())
        .map(|t| mean(&class_ap.values().map(|v: &Vec<f64>| v[t]).collect::<Vec<_>>()))
        .collect();
    let ar = caps.iter().zip(&class_ar).map(|(&c, v)| (c, mean(v))).collect();
    RefResult { class_ap, ap_per_threshold, ar }
}
