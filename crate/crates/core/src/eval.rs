//! COCO-style instance-segmentation evaluation.
//!
//! Per frame and class, predictions are visited in descending score order
//! (ties by input position) and each takes the still-unmatched ground-truth
//! instance with the highest IoU, provided it reaches the threshold (IoU
//! ties go to the lower ground-truth index). Detections are then pooled
//! across frames in frame-id order, with at most `max_det` per frame and
//! class, and turned into a precision/recall curve. AP uses 101-point
//! interpolation over the monotone precision envelope; AR is the recall at
//! the end of the curve averaged over thresholds.
//!
//! In binary mode every category is collapsed to one before matching. In
//! multi-class mode the aggregate is the mean over classes that have at
//! least one ground-truth instance.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    CategoryId, Dataset, InstanceMask, Taxonomy, BINARY_CATEGORY, OTHER_CATEGORY_NAME,
};

pub use crate::model::collapse_to_binary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouKind {
    Mask,
    Bbox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Binary,
    Multiclass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_kind: IouKind,
    pub thresholds: Vec<f64>,
    pub mode: EvalMode,
    pub max_detections: Vec<usize>,
    pub interpolation_points: usize,
    /// Drop the "Other" category from multi-class evaluation.
    #[serde(default)]
    pub exclude_other: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_kind: IouKind::Mask,
            thresholds: Self::coco_thresholds(),
            mode: EvalMode::Multiclass,
            max_detections: vec![1, 10, 100],
            interpolation_points: 101,
            exclude_other: false,
        }
    }
}

impl EvalConfig {
    pub fn new(mode: EvalMode, iou_kind: IouKind) -> Self {
        Self {
            mode,
            iou_kind,
            ..Self::default()
        }
    }

    /// 0.50, 0.55, ..., 0.95.
    pub fn coco_thresholds() -> Vec<f64> {
        (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
    }

    /// 0.50, 0.55, ..., 0.90.
    pub fn thresholds_50_to_90() -> Vec<f64> {
        (0..9).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.thresholds.is_empty() {
            return bad("no IoU thresholds".into());
        }
        if self.thresholds.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return bad(format!("thresholds {:?} must lie in (0, 1]", self.thresholds));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return bad("thresholds must be strictly increasing".into());
        }
        if self.max_detections.is_empty() || self.max_detections[0] == 0 {
            return bad("max detections must be positive".into());
        }
        if self.max_detections.windows(2).any(|w| w[0] >= w[1]) {
            return bad("max detections must be strictly increasing".into());
        }
        if self.interpolation_points < 2 {
            return bad("need at least 2 interpolation points".into());
        }
        Ok(())
    }

    fn largest_max_det(&self) -> usize {
        *self.max_detections.last().expect("validated")
    }
}

/// Scored detections keyed by frame id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Predictions {
    frames: BTreeMap<String, Vec<InstanceMask>>,
}

impl Predictions {
    pub fn from_map(frames: BTreeMap<String, Vec<InstanceMask>>) -> Self {
        Self { frames }
    }

    /// Every ground-truth instance as a prediction with a fixed score.
    pub fn from_ground_truth(ds: &Dataset, score: f64) -> Self {
        Self {
            frames: ds
                .frames
                .iter()
                .map(|f| {
                    let insts = f
                        .instances
                        .iter()
                        .map(|i| i.clone().with_score(Some(score)).expect("valid score"))
                        .collect();
                    (f.frame_id.clone(), insts)
                })
                .collect(),
        }
    }

    pub fn insert(&mut self, frame_id: impl Into<String>, instances: Vec<InstanceMask>) {
        self.frames.insert(frame_id.into(), instances);
    }

    pub fn get(&self, frame_id: &str) -> &[InstanceMask] {
        self.frames.get(frame_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[InstanceMask])> {
        self.frames.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn instance_count(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn to_binary(&self) -> Self {
        Self {
            frames: self
                .frames
                .iter()
                .map(|(k, v)| (k.clone(), collapse_to_binary(v)))
                .collect(),
        }
    }

    fn without_category(&self, category: CategoryId) -> Self {
        Self {
            frames: self
                .frames
                .iter()
                .map(|(k, v)| {
                    (k.clone(), v.iter().filter(|i| i.category() != category).cloned().collect())
                })
                .collect(),
        }
    }
}

fn pair_iou(a: &InstanceMask, b: &InstanceMask, kind: IouKind) -> Result<f64> {
    match kind {
        IouKind::Mask => a.mask().iou(b.mask()),
        IouKind::Bbox => Ok(a.bbox().iou(&b.bbox())),
    }
}

/// Indices of `preds` by descending score, ties by position.
fn score_order(preds: &[InstanceMask]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (preds[a].score().unwrap_or(0.0), preds[b].score().unwrap_or(0.0));
        sb.total_cmp(&sa)
    });
    order
}

/// Greedy assignment over an IoU matrix whose rows are already in score
/// order. Returns the matched ground-truth column for each row.
fn greedy_assign(ious: &[Vec<f64>], num_gt: usize, threshold: f64) -> Vec<Option<usize>> {
    let mut taken = vec![false; num_gt];
    ious.iter()
        .map(|row| {
            let mut best: Option<(usize, f64)> = None;
            for (g, &iou) in row.iter().enumerate() {
                if taken[g] || iou < threshold {
                    continue;
                }
                if best.map_or(true, |(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            best.map(|(g, _)| {
                taken[g] = true;
                g
            })
        })
        .collect()
}

/// Outcome of one detection in [`match_instances`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMatch {
    /// Index into the prediction list.
    pub pred: usize,
    pub score: f64,
    /// Index of the matched ground-truth instance, `None` for a false positive.
    pub gt: Option<usize>,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Detections in processing (score) order.
    pub detections: Vec<DetectionMatch>,
    /// For each ground-truth instance, the prediction that matched it.
    pub gt_matches: Vec<Option<usize>>,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.detections.iter().filter(|d| d.gt.is_some()).count()
    }

    pub fn false_positives(&self) -> usize {
        self.detections.len() - self.true_positives()
    }

    pub fn false_negatives(&self) -> usize {
        self.gt_matches.iter().filter(|m| m.is_none()).count()
    }
}

/// Greedy score-ordered matching of one frame's predictions to its ground
/// truth. Callers handle class gating.
pub fn match_instances(
    gt: &[InstanceMask],
    preds: &[InstanceMask],
    iou_threshold: f64,
    iou_kind: IouKind,
) -> Result<MatchResult> {
    let order = score_order(preds);
    let ious = order
        .iter()
        .map(|&p| gt.iter().map(|g| pair_iou(g, &preds[p], iou_kind)).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let assigned = greedy_assign(&ious, gt.len(), iou_threshold);
    let mut gt_matches = vec![None; gt.len()];
    let detections = order
        .iter()
        .zip(&assigned)
        .zip(&ious)
        .map(|((&p, &g), row)| {
            if let Some(g) = g {
                gt_matches[g] = Some(p);
            }
            DetectionMatch {
                pred: p,
                score: preds[p].score().unwrap_or(0.0),
                gt: g,
                iou: g.map_or(0.0, |g| row[g]),
            }
        })
        .collect();
    Ok(MatchResult {
        detections,
        gt_matches,
    })
}

/// Detections of one class in one frame at one IoU threshold, score order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatches {
    pub num_gt: usize,
    pub scores: Vec<f64>,
    pub is_tp: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Pools detections over frames (at most `max_det` per frame) and returns
/// the cumulative precision/recall points in descending score order.
/// `None` when there is no ground truth to recall.
pub fn pr_curve(frames: &[FrameMatches], max_det: usize) -> Option<Vec<PrPoint>> {
    let num_gt: usize = frames.iter().map(|f| f.num_gt).sum();
    if num_gt == 0 {
        return None;
    }
    let mut pooled: Vec<(f64, bool)> = frames
        .iter()
        .flat_map(|f| {
            f.scores
                .iter()
                .zip(&f.is_tp)
                .take(max_det)
                .map(|(&s, &tp)| (s, tp))
        })
        .collect();
    // stable: ties keep frame order, then per-frame score order
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    let curve = pooled
        .iter()
        .enumerate()
        .map(|(i, &(_, hit))| {
            tp += usize::from(hit);
            PrPoint {
                recall: tp as f64 / num_gt as f64,
                precision: tp as f64 / (i + 1) as f64,
            }
        })
        .collect();
    Some(curve)
}

/// Interpolated AP: mean over `points` evenly spaced recall levels of the
/// best precision reached at that recall or beyond (0 where unreached).
pub fn average_precision(curve: &[PrPoint], points: usize) -> f64 {
    if curve.is_empty() || points < 2 {
        return 0.0;
    }
    let mut envelope: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len() - 1).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let steps = (points - 1) as f64;
    let total: f64 = (0..points)
        .map(|k| {
            let r = k as f64 / steps;
            let idx = curve.partition_point(|p| p.recall < r);
            envelope.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    total / points as f64
}

pub fn average_precision_101(curve: &[PrPoint]) -> f64 {
    average_precision(curve, 101)
}

/// Recall with at most `max_det` detections per frame, averaged over the
/// thresholds in `per_threshold`. `None` without ground truth.
pub fn average_recall(per_threshold: &[Vec<FrameMatches>], max_det: usize) -> Option<f64> {
    if per_threshold.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for frames in per_threshold {
        let num_gt: usize = frames.iter().map(|f| f.num_gt).sum();
        if num_gt == 0 {
            return None;
        }
        let tp: usize = frames
            .iter()
            .map(|f| f.is_tp.iter().take(max_det).filter(|&&t| t).count())
            .sum();
        total += tp as f64 / num_gt as f64;
    }
    Some(total / per_threshold.len() as f64)
}

/// Metrics for one class at one IoU threshold and detection cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub threshold: f64,
    pub max_det: usize,
    pub ap: f64,
    pub recall: f64,
    pub curve: Vec<PrPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallAt {
    pub max_det: usize,
    pub ar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub category: CategoryId,
    pub name: String,
    pub num_gt: usize,
    /// AP at each threshold with the largest detection cap.
    pub ap_per_threshold: Vec<f64>,
    /// AP at IoU 0.50, when 0.50 is among the thresholds.
    pub ap50: Option<f64>,
    /// Mean of `ap_per_threshold` (AP50:95 with the default thresholds).
    pub ap: f64,
    pub ar: Vec<RecallAt>,
    pub cells: Vec<EvalCell>,
}

impl ClassReport {
    pub fn ar_at(&self, max_det: usize) -> Option<f64> {
        self.ar.iter().find(|r| r.max_det == max_det).map(|r| r.ar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub ap50: Option<f64>,
    pub ap: f64,
    pub ap_per_threshold: Vec<f64>,
    pub ar: Vec<RecallAt>,
}

impl EvalSummary {
    pub fn ar_at(&self, max_det: usize) -> Option<f64> {
        self.ar.iter().find(|r| r.max_det == max_det).map(|r| r.ar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub iou_kind: IouKind,
    pub config: EvalConfig,
    pub num_frames: usize,
    pub num_gt: usize,
    pub num_predictions: usize,
    pub summary: EvalSummary,
    /// Classes with at least one ground-truth instance, in id order.
    pub classes: Vec<ClassReport>,
}

/// Per (frame, class) detections with one TP vector per threshold.
struct FrameClassMatches {
    category: CategoryId,
    num_gt: usize,
    scores: Vec<f64>,
    is_tp: Vec<Vec<bool>>,
}

fn match_frame(
    gt: &[InstanceMask],
    preds: &[InstanceMask],
    cfg: &EvalConfig,
) -> Result<Vec<FrameClassMatches>> {
    let mut categories: Vec<CategoryId> = gt
        .iter()
        .chain(preds)
        .map(InstanceMask::category)
        .collect();
    categories.sort();
    categories.dedup();
    let max_det = cfg.largest_max_det();

    categories
        .into_iter()
        .map(|category| {
            let class_gt: Vec<&InstanceMask> =
                gt.iter().filter(|i| i.category() == category).collect();
            let class_preds: Vec<InstanceMask> = preds
                .iter()
                .filter(|i| i.category() == category)
                .cloned()
                .collect();
            let mut order = score_order(&class_preds);
            order.truncate(max_det);
            let ious = order
                .iter()
                .map(|&p| {
                    class_gt
                        .iter()
                        .map(|g| pair_iou(g, &class_preds[p], cfg.iou_kind))
                        .collect()
                })
                .collect::<Result<Vec<Vec<f64>>>>()?;
            let is_tp = cfg
                .thresholds
                .iter()
                .map(|&t| {
                    greedy_assign(&ious, class_gt.len(), t)
                        .into_iter()
                        .map(|m| m.is_some())
                        .collect()
                })
                .collect();
            Ok(FrameClassMatches {
                category,
                num_gt: class_gt.len(),
                scores: order
                    .iter()
                    .map(|&p| class_preds[p].score().unwrap_or(0.0))
                    .collect(),
                is_tp,
            })
        })
        .collect()
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Full evaluation of `preds` against `gt`.
pub fn evaluate(gt: &Dataset, preds: &Predictions, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    if gt.instance_count() == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    for (frame_id, _) in preds.iter() {
        if gt.frame(frame_id).is_none() {
            return Err(Error::UnknownFrame(frame_id.to_string()));
        }
    }

    let (gt, preds): (Dataset, Predictions) = match cfg.mode {
        EvalMode::Binary => (gt.to_binary(), preds.to_binary()),
        EvalMode::Multiclass => match gt.taxonomy.id_of(OTHER_CATEGORY_NAME) {
            Some(other) if cfg.exclude_other => {
                let mut g = gt.clone();
                for f in &mut g.frames {
                    f.instances.retain(|i| i.category() != other);
                }
                (g, preds.without_category(other))
            }
            _ => (gt.clone(), preds.clone()),
        },
    };
    if gt.instance_count() == 0 {
        return Err(Error::EmptyGroundTruth);
    }

    let mut frames: Vec<_> = gt.frames.iter().collect();
    frames.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
    let per_frame: Vec<Vec<FrameClassMatches>> = frames
        .par_iter()
        .map(|f| match_frame(&f.instances, preds.get(&f.frame_id), cfg))
        .collect::<Result<_>>()?;

    // regroup by class, keeping frame order
    let mut by_class: BTreeMap<CategoryId, Vec<&FrameClassMatches>> = BTreeMap::new();
    for m in per_frame.iter().flatten() {
        by_class.entry(m.category).or_default().push(m);
    }

    let taxonomy: &Taxonomy = &gt.taxonomy;
    let mut classes = Vec::new();
    for (category, matches) in by_class {
        let num_gt: usize = matches.iter().map(|m| m.num_gt).sum();
        if num_gt == 0 {
            continue;
        }
        classes.push(class_report(category, taxonomy, num_gt, &matches, cfg));
    }

    let n_thresh = cfg.thresholds.len();
    let ap_per_threshold: Vec<f64> = (0..n_thresh)
        .map(|t| mean(classes.iter().map(|c| c.ap_per_threshold[t])))
        .collect();
    let summary = EvalSummary {
        ap50: threshold_index(cfg, 0.5).map(|t| ap_per_threshold[t]),
        ap: mean(ap_per_threshold.iter().copied()),
        ar: cfg
            .max_detections
            .iter()
            .map(|&m| RecallAt {
                max_det: m,
                ar: mean(classes.iter().filter_map(|c| c.ar_at(m))),
            })
            .collect(),
        ap_per_threshold,
    };

    Ok(EvalReport {
        mode: cfg.mode,
        iou_kind: cfg.iou_kind,
        config: cfg.clone(),
        num_frames: gt.frames.len(),
        num_gt: gt.instance_count(),
        num_predictions: gt
            .frames
            .iter()
            .map(|f| preds.get(&f.frame_id).len())
            .sum(),
        summary,
        classes,
    })
}

fn threshold_index(cfg: &EvalConfig, value: f64) -> Option<usize> {
    cfg.thresholds.iter().position(|&t| (t - value).abs() < 1e-12)
}

fn class_report(
    category: CategoryId,
    taxonomy: &Taxonomy,
    num_gt: usize,
    matches: &[&FrameClassMatches],
    cfg: &EvalConfig,
) -> ClassReport {
    let largest = cfg.largest_max_det();
    let per_threshold: Vec<Vec<FrameMatches>> = (0..cfg.thresholds.len())
        .map(|t| {
            matches
                .iter()
                .map(|m| FrameMatches {
                    num_gt: m.num_gt,
                    scores: m.scores.clone(),
                    is_tp: m.is_tp[t].clone(),
                })
                .collect()
        })
        .collect();

    let mut cells = Vec::new();
    let mut ap_per_threshold = Vec::with_capacity(cfg.thresholds.len());
    for (t, frames) in per_threshold.iter().enumerate() {
        for &max_det in &cfg.max_detections {
            let curve = pr_curve(frames, max_det).expect("class has ground truth");
            let ap = average_precision(&curve, cfg.interpolation_points);
            if max_det == largest {
                ap_per_threshold.push(ap);
            }
            cells.push(EvalCell {
                threshold: cfg.thresholds[t],
                max_det,
                ap,
                recall: curve.last().map_or(0.0, |p| p.recall),
                curve,
            });
        }
    }
    let ar = cfg
        .max_detections
        .iter()
        .map(|&m| RecallAt {
            max_det: m,
            ar: average_recall(&per_threshold, m).expect("class has ground truth"),
        })
        .collect();
    let name = if category == BINARY_CATEGORY && cfg.mode == EvalMode::Binary {
        "instrument".to_string()
    } else {
        taxonomy
            .name(category)
            .map(str::to_string)
            .unwrap_or_else(|| format!("category {}", category.0))
    };
    ClassReport {
        category,
        name,
        num_gt,
        ap50: threshold_index(cfg, 0.5).map(|t| ap_per_threshold[t]),
        ap: mean(ap_per_threshold.iter().copied()),
        ap_per_threshold,
        ar,
        cells,
    }
}
