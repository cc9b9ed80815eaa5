use std::path::PathBuf;

use crate::model::{CategoryId, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: u32,
        left_h: u32,
        right_w: u32,
        right_h: u32,
    },

    #[error("mask has no set pixels")]
    EmptyMask,

    #[error("invalid run-length encoding: {0}")]
    InvalidRle(String),

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid score {score} (must lie in [0, 1])")]
    InvalidScore { score: f64 },

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("image error on {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("malformed annotation: {0}")]
    Format(String),

    #[error("dataset failed validation with {} violation(s): {}", .0.len(), summarize(.0))]
    Validation(Vec<Violation>),

    #[error("unknown frame id {0:?}")]
    UnknownFrame(String),

    #[error("prediction for frame {frame_id:?} has no score")]
    MissingScore { frame_id: String },

    #[error("no image data for frame {0:?}")]
    MissingImage(String),

    #[error("quota infeasible for {} class(es): {}", .0.len(), summarize_deficits(.0))]
    InfeasibleQuota(Vec<QuotaDeficit>),

    #[error("dataset is already split (use force to re-split)")]
    AlreadySplit,

    #[error("dataset has no split tags")]
    Untagged,

    #[error("ground truth contains no instances")]
    EmptyGroundTruth,
}

/// Shortfall of one class against the val+test quota.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuotaDeficit {
    pub category: CategoryId,
    pub available: usize,
    pub required: usize,
}

impl QuotaDeficit {
    pub fn deficit(&self) -> usize {
        self.required.saturating_sub(self.available)
    }
}

fn summarize(violations: &[Violation]) -> String {
    let mut parts: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
    if violations.len() > 5 {
        parts.push(format!("... and {} more", violations.len() - 5));
    }
    parts.join("; ")
}

fn summarize_deficits(deficits: &[QuotaDeficit]) -> String {
    deficits
        .iter()
        .map(|d| {
            format!(
                "category {} has {} of {} (deficit {})",
                d.category.0,
                d.available,
                d.required,
                d.deficit()
            )
        })
        .collect::<Vec<_>>()
        .join(", ")
}
