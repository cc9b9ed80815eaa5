//! Dataset tooling and evaluation for instance-segmentation of surgical
//! instruments.
//!
//! The crate covers the non-neural part of a segmentation pipeline:
//!
//! * [`model`]: frames, instances, the instrument taxonomy and dataset validation
//! * [`mask`]: bitmaps, run-length encoding, polygon rasterization and IoU
//! * [`augment`]: the offline transform grid with label-preservation filtering
//!   and the online flip/blur sampler
//! * [`io`]: COCO-layout annotation files, prediction files and PNG masks
//! * [`split`]: class-balanced train/val/test splitting
//! * [`eval`]: greedy matching, 101-point AP and AR in binary and multi-class mode
//! * [`report`]: text and CSV tables for evaluation reports
//! * [`synth`]: synthetic scenes and perturbed predictions with known ground truth

pub mod augment;
pub mod error;
pub mod eval;
pub mod io;
pub mod mask;
pub mod model;
pub mod report;
pub mod rng;
pub mod split;
pub mod synth;

pub use augment::{AugmentationConfig, FillPolicy, FrameImages, MirrorAxis, TransformSpec};
pub use error::{Error, Result};
pub use eval::{EvalConfig, EvalMode, EvalReport, IouKind, Predictions};
pub use mask::{Bitmap, BoundingBox, Polygon, RleMask};
pub use model::{
    AnnotatedFrame, Category, CategoryId, Dataset, InstanceMask, Split, Taxonomy, Violation,
};
pub use split::SplitConfig;
