//! Domain types: taxonomy, instances, frames and datasets.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::augment::TransformSpec;
use crate::error::{Error, Result};
use crate::mask::{BoundingBox, RleMask};

/// Index into the taxonomy; dense from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub u32);

/// The single category every instance maps to in binary mode.
pub const BINARY_CATEGORY: CategoryId = CategoryId(1);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    pub name: String,
}

/// Names of the default instrument taxonomy, in id order.
pub const INSTRUMENT_NAMES: [&str; 12] = [
    "Bipolar Grasper",
    "Hook",
    "Sealer-Divider",
    "Grasper",
    "Irrigator",
    "Knot-Pusher",
    "Needle-Holder",
    "Scissors",
    "Morcellator",
    "Needle",
    "Trocar",
    "Other",
];

pub const OTHER_CATEGORY_NAME: &str = "Other";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Taxonomy {
    categories: Vec<Category>,
}

impl Default for Taxonomy {
    fn default() -> Self {
        Self::instruments()
    }
}

impl Taxonomy {
    /// Builds a taxonomy, requiring ids to be dense from 1 in order.
    pub fn new(categories: Vec<Category>) -> Result<Self> {
        for (i, c) in categories.iter().enumerate() {
            if c.id.0 as usize != i + 1 {
                return Err(Error::Format(format!(
                    "taxonomy ids must be dense from 1: position {} has id {}",
                    i + 1,
                    c.id.0
                )));
            }
            if c.name.trim().is_empty() {
                return Err(Error::Format(format!("category {} has an empty name", c.id.0)));
            }
        }
        Ok(Self { categories })
    }

    /// The eleven instrument types plus "Other".
    pub fn instruments() -> Self {
        Self::from_names(&INSTRUMENT_NAMES)
    }

    pub fn binary() -> Self {
        Self::from_names(&["instrument"])
    }

    pub fn from_names(names: &[&str]) -> Self {
        Self {
            categories: names
                .iter()
                .enumerate()
                .map(|(i, n)| Category {
                    id: CategoryId(i as u32 + 1),
                    name: (*n).to_string(),
                })
                .collect(),
        }
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn contains(&self, id: CategoryId) -> bool {
        id.0 >= 1 && id.0 as usize <= self.categories.len()
    }

    pub fn name(&self, id: CategoryId) -> Option<&str> {
        self.contains(id)
            .then(|| self.categories[id.0 as usize - 1].name.as_str())
    }

    pub fn id_of(&self, name: &str) -> Option<CategoryId> {
        self.categories.iter().find(|c| c.name == name).map(|c| c.id)
    }

    pub fn ids(&self) -> impl Iterator<Item = CategoryId> + '_ {
        self.categories.iter().map(|c| c.id)
    }
}

/// One instrument instance: a non-empty mask with its category.
///
/// Ground-truth instances carry no score, predictions always do. Area and
/// bounding box are derived from the mask at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    category: CategoryId,
    mask: RleMask,
    bbox: BoundingBox,
    area: u64,
    score: Option<f64>,
}

impl InstanceMask {
    pub fn new(category: CategoryId, mask: RleMask, score: Option<f64>) -> Result<Self> {
        if let Some(s) = score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidScore { score: s });
            }
        }
        let bbox = mask.bbox().ok_or(Error::EmptyMask)?;
        Ok(Self {
            category,
            area: mask.area(),
            mask,
            bbox,
            score,
        })
    }

    pub fn ground_truth(category: CategoryId, mask: RleMask) -> Result<Self> {
        Self::new(category, mask, None)
    }

    pub fn prediction(category: CategoryId, mask: RleMask, score: f64) -> Result<Self> {
        Self::new(category, mask, Some(score))
    }

    pub fn category(&self) -> CategoryId {
        self.category
    }

    pub fn mask(&self) -> &RleMask {
        &self.mask
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn area(&self) -> u64 {
        self.area
    }

    pub fn score(&self) -> Option<f64> {
        self.score
    }

    pub fn with_category(mut self, category: CategoryId) -> Self {
        self.category = category;
        self
    }

    pub fn with_score(self, score: Option<f64>) -> Result<Self> {
        Self::new(self.category, self.mask, score)
    }

    pub(crate) fn sort_key(&self) -> (CategoryId, u32, u32, u32, u32) {
        (self.category, self.bbox.x, self.bbox.y, self.bbox.w, self.bbox.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Format(format!("unknown split {other:?}"))),
        }
    }
}

/// One still frame and its ground-truth instances.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedFrame {
    pub frame_id: String,
    pub width: u32,
    pub height: u32,
    /// Image path relative to the dataset's image directory.
    pub image_ref: String,
    pub instances: Vec<InstanceMask>,
    pub split: Option<Split>,
    /// Transforms that produced this frame from its source, oldest first.
    pub provenance: Vec<TransformSpec>,
}

impl AnnotatedFrame {
    pub fn new(frame_id: impl Into<String>, width: u32, height: u32) -> Self {
        let frame_id = frame_id.into();
        Self {
            image_ref: format!("{}.png", file_stem_for(&frame_id)),
            frame_id,
            width,
            height,
            instances: Vec::new(),
            split: None,
            provenance: Vec::new(),
        }
    }

    pub fn with_instances(mut self, instances: Vec<InstanceMask>) -> Self {
        self.instances = instances;
        self
    }
}

/// Maps a frame id to a flat file name; `/` in derived ids becomes `__`.
pub fn file_stem_for(frame_id: &str) -> String {
    let mut out = String::with_capacity(frame_id.len() + 4);
    for c in frame_id.chars() {
        match c {
            '/' | '\\' => out.push_str("__"),
            ':' | '*' | '?' | '"' | '<' | '>' | '|' => out.push('_'),
            c => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub taxonomy: Taxonomy,
    pub frames: Vec<AnnotatedFrame>,
}

impl Dataset {
    pub fn new(taxonomy: Taxonomy, frames: Vec<AnnotatedFrame>) -> Self {
        Self { taxonomy, frames }
    }

    pub fn instance_count(&self) -> usize {
        self.frames.iter().map(|f| f.instances.len()).sum()
    }

    pub fn frame(&self, frame_id: &str) -> Option<&AnnotatedFrame> {
        self.frames.iter().find(|f| f.frame_id == frame_id)
    }

    pub fn is_split(&self) -> bool {
        self.frames.iter().any(|f| f.split.is_some())
    }

    /// Frames sorted by id, instances by (category, bbox).
    pub fn canonicalize(&mut self) {
        self.frames.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
        for f in &mut self.frames {
            f.instances.sort_by(|a, b| {
                a.sort_key()
                    .cmp(&b.sort_key())
                    .then_with(|| a.mask().counts().cmp(b.mask().counts()))
            });
        }
    }

    pub fn canonicalized(mut self) -> Self {
        self.canonicalize();
        self
    }

    /// Subset of frames carrying the given split tag.
    pub fn subset(&self, split: Split) -> Dataset {
        Dataset {
            taxonomy: self.taxonomy.clone(),
            frames: self
                .frames
                .iter()
                .filter(|f| f.split == Some(split))
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    EmptyFrame,
    DuplicateFrameId,
    UnknownCategory,
    DimensionMismatch,
    ScoredGroundTruth,
    PartialSplit,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::EmptyFrame => "empty frame",
            Rule::DuplicateFrameId => "duplicate frame id",
            Rule::UnknownCategory => "unknown category",
            Rule::DimensionMismatch => "dimension mismatch",
            Rule::ScoredGroundTruth => "scored ground truth",
            Rule::PartialSplit => "partial split",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub frame_id: String,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.frame_id, self.rule.as_str(), self.detail)
    }
}

/// Checks every dataset invariant and reports each breach as data.
pub fn validate_dataset(ds: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut push = |frame_id: &str, rule, detail: String| {
        out.push(Violation {
            frame_id: frame_id.to_string(),
            rule,
            detail,
        })
    };

    for frame in &ds.frames {
        let id = frame.frame_id.as_str();
        if !seen.insert(id) {
            push(id, Rule::DuplicateFrameId, "frame id appears more than once".into());
        }
        if frame.width == 0 || frame.height == 0 {
            push(id, Rule::EmptyFrame, format!("{}x{}", frame.width, frame.height));
        }
        for (k, inst) in frame.instances.iter().enumerate() {
            if !ds.taxonomy.contains(inst.category()) {
                push(
                    id,
                    Rule::UnknownCategory,
                    format!(
                        "instance {k} has category {} outside 1..={}",
                        inst.category().0,
                        ds.taxonomy.len()
                    ),
                );
            }
            let m = inst.mask();
            if m.width() != frame.width || m.height() != frame.height {
                push(
                    id,
                    Rule::DimensionMismatch,
                    format!(
                        "instance {k} mask is {}x{}, frame is {}x{}",
                        m.width(),
                        m.height(),
                        frame.width,
                        frame.height
                    ),
                );
            }
            if inst.score().is_some() {
                push(id, Rule::ScoredGroundTruth, format!("instance {k} carries a score"));
            }
        }
    }

    let tagged = ds.frames.iter().filter(|f| f.split.is_some()).count();
    if tagged > 0 && tagged < ds.frames.len() {
        for f in ds.frames.iter().filter(|f| f.split.is_none()) {
            push(
                &f.frame_id,
                Rule::PartialSplit,
                "untagged frame in a split dataset".into(),
            );
        }
    }
    out
}

/// Per-category instance counts; every taxonomy category is present.
pub fn instance_histogram(ds: &Dataset) -> BTreeMap<CategoryId, usize> {
    let mut hist: BTreeMap<CategoryId, usize> = ds.taxonomy.ids().map(|id| (id, 0)).collect();
    for inst in ds.frames.iter().flat_map(|f| &f.instances) {
        *hist.entry(inst.category()).or_default() += 1;
    }
    hist
}

/// Maps every instance to the single binary category.
pub fn collapse_to_binary(instances: &[InstanceMask]) -> Vec<InstanceMask> {
    instances
        .iter()
        .cloned()
        .map(|i| i.with_category(BINARY_CATEGORY))
        .collect()
}

impl Dataset {
    /// Class-agnostic copy of the dataset under the one-category taxonomy.
    pub fn to_binary(&self) -> Dataset {
        Dataset {
            taxonomy: Taxonomy::binary(),
            frames: self
                .frames
                .iter()
                .map(|f| AnnotatedFrame {
                    instances: collapse_to_binary(&f.instances),
                    ..f.clone()
                })
                .collect(),
        }
    }
}
