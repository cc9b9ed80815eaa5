//! Reading and writing datasets, predictions and images.
//!
//! Annotations use the COCO layout (`images`, `annotations`, `categories`)
//! so third-party tools can read them. Frame ids, split tags and
//! augmentation provenance live under the `segeval` vendor key. Masks are
//! written as row-major RLE (`{"size": [h, w], "counts": [...]}`) and read
//! as RLE, COCO polygons, or a reference to an 8-bit PNG in `masks/`.
//!
//! Writes are atomic: data goes to a temporary sibling first and is renamed
//! into place.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{FrameImages, TransformSpec};
use crate::error::{Error, Result};
use crate::eval::Predictions;
use crate::mask::{polygons_to_mask, Bitmap, Polygon, RleMask};
use crate::model::{
    validate_dataset, AnnotatedFrame, Category, CategoryId, Dataset, InstanceMask, Split, Taxonomy,
};

pub const FORMAT_VERSION: &str = "segeval-1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MASK_DIR: &str = "masks";

/// Locations of the files that make up a dataset. Paths are relative to
/// `root`, the directory holding the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(skip)]
    pub root: PathBuf,
    pub format_version: String,
    pub annotations: PathBuf,
    pub images: PathBuf,
    pub taxonomy: PathBuf,
}

impl DatasetManifest {
    /// Default layout under `root`.
    pub fn at(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            format_version: FORMAT_VERSION.to_string(),
            annotations: "annotations.json".into(),
            images: "images".into(),
            taxonomy: "taxonomy.json".into(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut manifest: DatasetManifest = read_json(path)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {:?} (expected {FORMAT_VERSION:?})",
                manifest.format_version
            )));
        }
        manifest.root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(manifest)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn annotations_path(&self) -> PathBuf {
        self.root.join(&self.annotations)
    }

    pub fn images_dir(&self) -> PathBuf {
        self.root.join(&self.images)
    }

    pub fn taxonomy_path(&self) -> PathBuf {
        self.root.join(&self.taxonomy)
    }

    pub fn masks_dir(&self) -> PathBuf {
        self.root.join(MASK_DIR)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    categories: Vec<Category>,
    #[serde(default, rename = "segeval", skip_serializing_if = "Option::is_none")]
    vendor: Option<Vendor>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: CategoryId,
    segmentation: Segmentation,
    #[serde(default)]
    area: Option<f64>,
    #[serde(default)]
    bbox: Option<[f64; 4]>,
    #[serde(default)]
    iscrowd: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Segmentation {
    /// `size` is `[height, width]`; counts are row-major, zero-run first.
    Rle { size: [u32; 2], counts: Vec<u32> },
    /// COCO polygons: flat `[x0, y0, x1, y1, ...]` rings.
    Polygons(Vec<Vec<f64>>),
    /// 8-bit PNG under the masks directory; nonzero pixels are set.
    Png { png: String },
}

impl Segmentation {
    pub fn from_mask(mask: &RleMask) -> Self {
        Segmentation::Rle {
            size: [mask.height(), mask.width()],
            counts: mask.counts().to_vec(),
        }
    }

    /// Decodes to a mask of the given frame size.
    pub fn to_mask(&self, width: u32, height: u32, masks_dir: &Path) -> Result<RleMask> {
        match self {
            Segmentation::Rle { size, counts } => {
                if *size != [height, width] {
                    return Err(Error::DimensionMismatch {
                        left_w: width,
                        left_h: height,
                        right_w: size[1],
                        right_h: size[0],
                    });
                }
                RleMask::from_counts(width, height, counts.clone())
            }
            Segmentation::Polygons(rings) => {
                let polys = rings
                    .iter()
                    .map(|r| Polygon::from_flat(r))
                    .collect::<Result<Vec<_>>>()?;
                Ok(polygons_to_mask(&polys, width, height).to_rle())
            }
            Segmentation::Png { png } => {
                let path = masks_dir.join(png);
                let bitmap = read_png_mask(&path)?;
                if (bitmap.width(), bitmap.height()) != (width, height) {
                    return Err(Error::DimensionMismatch {
                        left_w: width,
                        left_h: height,
                        right_w: bitmap.width(),
                        right_h: bitmap.height(),
                    });
                }
                Ok(bitmap.to_rle())
            }
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Vendor {
    format_version: String,
    frames: Vec<VendorFrame>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VendorFrame {
    image_id: u64,
    frame_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    provenance: Vec<TransformSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionRecord {
    frame_id: String,
    category_id: CategoryId,
    #[serde(default)]
    score: Option<f64>,
    segmentation: Segmentation,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn to_json_bytes<T: Serialize>(value: &T, path: &Path) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut tmp_name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(|source| {
        let _ = fs::remove_file(&tmp);
        io_err(source)
    })
}

pub fn read_png_mask(path: &Path) -> Result<Bitmap> {
    let img = image::open(path)
        .map_err(|source| match source {
            image::ImageError::IoError(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Error::MissingFile(path.to_path_buf())
            }
            source => Error::Image {
                path: path.to_path_buf(),
                source,
            },
        })?
        .to_luma8();
    let (w, h) = img.dimensions();
    Bitmap::from_bits(w, h, img.pixels().map(|p| p[0] != 0).collect())
}

pub fn write_png_mask(path: &Path, mask: &Bitmap) -> Result<()> {
    let img = image::GrayImage::from_fn(mask.width(), mask.height(), |x, y| {
        image::Luma([if mask.get(x, y) { 255 } else { 0 }])
    });
    write_atomic(path, &encode_png(&image::DynamicImage::ImageLuma8(img), path)?)
}

fn encode_png(img: &image::DynamicImage, path: &Path) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(buf.into_inner())
}

pub fn load_taxonomy(path: &Path) -> Result<Taxonomy> {
    let categories: Vec<Category> = read_json(path)?;
    Taxonomy::new(categories)
}

pub fn save_taxonomy(path: &Path, taxonomy: &Taxonomy) -> Result<()> {
    write_atomic(path, &to_json_bytes(&taxonomy.categories(), path)?)
}

fn parse_coco(coco: CocoFile, taxonomy: Taxonomy, masks_dir: &Path) -> Result<Dataset> {
    let vendor: HashMap<u64, VendorFrame> = coco
        .vendor
        .map(|v| v.frames.into_iter().map(|f| (f.image_id, f)).collect())
        .unwrap_or_default();

    let mut frames: Vec<AnnotatedFrame> = Vec::with_capacity(coco.images.len());
    let mut index_of: HashMap<u64, usize> = HashMap::new();
    for img in &coco.images {
        let extra = vendor.get(&img.id);
        let frame_id = match extra {
            Some(v) => v.frame_id.clone(),
            None => Path::new(&img.file_name)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| img.file_name.clone()),
        };
        if index_of.insert(img.id, frames.len()).is_some() {
            return Err(Error::Format(format!("duplicate image id {}", img.id)));
        }
        frames.push(AnnotatedFrame {
            frame_id,
            width: img.width,
            height: img.height,
            image_ref: img.file_name.clone(),
            instances: Vec::new(),
            split: extra.and_then(|v| v.split),
            provenance: extra.map(|v| v.provenance.clone()).unwrap_or_default(),
        });
    }

    let decoded: Vec<(usize, InstanceMask)> = coco
        .annotations
        .par_iter()
        .map(|ann| {
            let &idx = index_of.get(&ann.image_id).ok_or_else(|| {
                Error::Format(format!(
                    "annotation {} references unknown image {}",
                    ann.id, ann.image_id
                ))
            })?;
            let frame = &frames[idx];
            let mask = ann
                .segmentation
                .to_mask(frame.width, frame.height, masks_dir)?;
            let inst = InstanceMask::new(ann.category_id, mask, ann.score).map_err(|e| {
                Error::Format(format!("annotation {} in {:?}: {e}", ann.id, frame.frame_id))
            })?;
            Ok((idx, inst))
        })
        .collect::<Result<_>>()?;
    for (idx, inst) in decoded {
        frames[idx].instances.push(inst);
    }
    Ok(Dataset::new(taxonomy, frames))
}

/// Reads a standalone COCO-layout annotation file, taking the taxonomy from
/// its `categories` array. Image files are not checked.
pub fn load_annotation_file(path: &Path) -> Result<Dataset> {
    let coco: CocoFile = read_json(path)?;
    let taxonomy = Taxonomy::new(coco.categories.clone())?;
    let masks_dir = path.parent().unwrap_or(Path::new(".")).join(MASK_DIR);
    let ds = parse_coco(coco, taxonomy, &masks_dir)?;
    let violations = validate_dataset(&ds);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(ds)
}

/// Loads and validates the dataset described by `manifest`. Every frame's
/// image file must exist; pixel data is not read (see [`load_images`]).
pub fn load_dataset(manifest: &DatasetManifest) -> Result<Dataset> {
    let taxonomy = load_taxonomy(&manifest.taxonomy_path())?;
    let coco: CocoFile = read_json(&manifest.annotations_path())?;
    if !coco.categories.is_empty() && coco.categories != taxonomy.categories() {
        return Err(Error::Format(format!(
            "categories in {} disagree with taxonomy {}",
            manifest.annotations_path().display(),
            manifest.taxonomy_path().display()
        )));
    }
    let ds = parse_coco(coco, taxonomy, &manifest.masks_dir())?;
    let images_dir = manifest.images_dir();
    for frame in &ds.frames {
        let path = images_dir.join(&frame.image_ref);
        if !path.is_file() {
            return Err(Error::MissingFile(path));
        }
    }
    let violations = validate_dataset(&ds);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(ds)
}

/// Canonical bytes of the annotation file for `ds`: frames sorted by id,
/// instances by (category, bbox), masks as RLE, ids assigned in order.
pub fn annotation_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    let ds = ds.clone().canonicalized();
    let mut images = Vec::with_capacity(ds.frames.len());
    let mut annotations = Vec::with_capacity(ds.instance_count());
    let mut vendor = Vendor {
        format_version: FORMAT_VERSION.to_string(),
        frames: Vec::with_capacity(ds.frames.len()),
    };
    for (i, frame) in ds.frames.iter().enumerate() {
        let image_id = i as u64 + 1;
        images.push(CocoImage {
            id: image_id,
            file_name: frame.image_ref.clone(),
            width: frame.width,
            height: frame.height,
        });
        vendor.frames.push(VendorFrame {
            image_id,
            frame_id: frame.frame_id.clone(),
            split: frame.split,
            provenance: frame.provenance.clone(),
        });
        for inst in &frame.instances {
            let b = inst.bbox();
            annotations.push(CocoAnnotation {
                id: annotations.len() as u64 + 1,
                image_id,
                category_id: inst.category(),
                segmentation: Segmentation::from_mask(inst.mask()),
                area: Some(inst.area() as f64),
                bbox: Some([b.x, b.y, b.w, b.h].map(f64::from)),
                iscrowd: 0,
                score: inst.score(),
            });
        }
    }
    let coco = CocoFile {
        images,
        annotations,
        categories: ds.taxonomy.categories().to_vec(),
        vendor: Some(vendor),
    };
    to_json_bytes(&coco, Path::new("annotations.json"))
}

/// Writes manifest, taxonomy and annotations. Image files are written
/// separately with [`save_images`].
pub fn save_dataset(ds: &Dataset, manifest: &DatasetManifest) -> Result<()> {
    write_atomic(&manifest.annotations_path(), &annotation_bytes(ds)?)?;
    save_taxonomy(&manifest.taxonomy_path(), &ds.taxonomy)?;
    let path = manifest.manifest_path();
    write_atomic(&path, &to_json_bytes(manifest, &path)?)
}

pub fn load_images(manifest: &DatasetManifest, ds: &Dataset) -> Result<FrameImages> {
    let dir = manifest.images_dir();
    let loaded: Vec<(String, RgbImage)> = ds
        .frames
        .par_iter()
        .map(|f| {
            let path = dir.join(&f.image_ref);
            let img = image::open(&path).map_err(|source| Error::Image {
                path: path.clone(),
                source,
            })?;
            Ok((f.frame_id.clone(), img.to_rgb8()))
        })
        .collect::<Result<_>>()?;
    Ok(loaded.into_iter().collect())
}

/// Writes each frame's image as PNG at its `image_ref`.
pub fn save_images(manifest: &DatasetManifest, ds: &Dataset, images: &FrameImages) -> Result<()> {
    let dir = manifest.images_dir();
    ds.frames.par_iter().try_for_each(|f| {
        let img = images
            .get(&f.frame_id)
            .ok_or_else(|| Error::MissingImage(f.frame_id.clone()))?;
        let path = dir.join(&f.image_ref);
        let bytes = encode_png(&image::DynamicImage::ImageRgb8(img.clone()), &path)?;
        write_atomic(&path, &bytes)
    })
}

/// Reads `predictions.json` against the frames of `ds`.
pub fn load_predictions(path: &Path, ds: &Dataset) -> Result<Predictions> {
    let records: Vec<PredictionRecord> = read_json(path)?;
    let dims: HashMap<&str, (u32, u32)> = ds
        .frames
        .iter()
        .map(|f| (f.frame_id.as_str(), (f.width, f.height)))
        .collect();
    let masks_dir = path.parent().unwrap_or(Path::new(".")).join(MASK_DIR);
    let mut by_frame: BTreeMap<String, Vec<InstanceMask>> = BTreeMap::new();
    for rec in records {
        let &(w, h) = dims
            .get(rec.frame_id.as_str())
            .ok_or_else(|| Error::UnknownFrame(rec.frame_id.clone()))?;
        let score = rec.score.ok_or_else(|| Error::MissingScore {
            frame_id: rec.frame_id.clone(),
        })?;
        let mask = rec.segmentation.to_mask(w, h, &masks_dir)?;
        let inst = InstanceMask::prediction(rec.category_id, mask, score)?;
        by_frame.entry(rec.frame_id).or_default().push(inst);
    }
    Ok(Predictions::from_map(by_frame))
}

pub fn prediction_bytes(preds: &Predictions) -> Result<Vec<u8>> {
    let records: Vec<PredictionRecord> = preds
        .iter()
        .flat_map(|(frame_id, insts)| {
            insts.iter().map(move |inst| PredictionRecord {
                frame_id: frame_id.to_string(),
                category_id: inst.category(),
                score: inst.score(),
                segmentation: Segmentation::from_mask(inst.mask()),
            })
        })
        .collect();
    to_json_bytes(&records, Path::new("predictions.json"))
}

pub fn save_predictions(path: &Path, preds: &Predictions) -> Result<()> {
    write_atomic(path, &prediction_bytes(preds)?)
}

/// `frame_id,split` rows for every tagged frame, sorted by frame id.
pub fn split_csv(ds: &Dataset) -> String {
    let mut rows: Vec<(&str, Split)> = ds
        .frames
        .iter()
        .filter_map(|f| f.split.map(|s| (f.frame_id.as_str(), s)))
        .collect();
    rows.sort();
    let mut out = String::from("frame_id,split\n");
    for (id, split) in rows {
        out.push_str(&csv_field(id));
        out.push(',');
        out.push_str(split.as_str());
        out.push('\n');
    }
    out
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn rect(w: u32, h: u32, x0: u32, y0: u32, rw: u32, rh: u32) -> RleMask {
        Bitmap::from_fn(w, h, |x, y| x >= x0 && x < x0 + rw && y >= y0 && y < y0 + rh).to_rle()
    }

    fn sample_dataset() -> Dataset {
        let mut frames = Vec::new();
        for (i, id) in ["c", "a", "b"].iter().enumerate() {
            let mut f = AnnotatedFrame::new(*id, 32, 24).with_instances(vec![
                InstanceMask::ground_truth(CategoryId(3), rect(32, 24, 10, 4, 5, 6)).unwrap(),
                InstanceMask::ground_truth(CategoryId(1), rect(32, 24, 1 + i as u32, 2, 4, 4)).unwrap(),
            ]);
            if i == 1 {
                f.provenance.push(TransformSpec::Scale { factor: 1.5 });
            }
            frames.push(f);
        }
        Dataset::new(Taxonomy::instruments(), frames)
    }

    fn write_fixture(dir: &Path, ds: &Dataset) -> DatasetManifest {
        let manifest = DatasetManifest::at(dir);
        save_dataset(ds, &manifest).unwrap();
        let images: FrameImages = ds
            .frames
            .iter()
            .map(|f| (f.frame_id.clone(), RgbImage::from_pixel(f.width, f.height, Rgb([10, 20, 30]))))
            .collect();
        save_images(&manifest, ds, &images).unwrap();
        manifest
    }

    #[test]
    fn save_load_round_trip_is_canonical() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_dataset();
        let manifest = write_fixture(dir.path(), &ds);
        let loaded = load_dataset(&DatasetManifest::load(&manifest.manifest_path()).unwrap()).unwrap();
        assert_eq!(loaded, ds.clone().canonicalized());
        assert_eq!(loaded.frames[0].frame_id, "a");
        assert_eq!(loaded.frames[0].instances[0].category(), CategoryId(1));
        let first = fs::read(manifest.annotations_path()).unwrap();
        save_dataset(&loaded, &manifest).unwrap();
        assert_eq!(fs::read(manifest.annotations_path()).unwrap(), first);
    }

    #[test]
    fn missing_image_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_fixture(dir.path(), &sample_dataset());
        let victim = manifest.images_dir().join("b.png");
        fs::remove_file(&victim).unwrap();
        match load_dataset(&manifest) {
            Err(Error::MissingFile(p)) => assert_eq!(p, victim),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_and_bad_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_fixture(dir.path(), &sample_dataset());
        fs::write(manifest.annotations_path(), b"{not json").unwrap();
        assert!(matches!(load_dataset(&manifest), Err(Error::Json { .. })));
        let path = dir.path().join("m2.json");
        fs::write(&path, br#"{"format_version":"v0","annotations":"a","images":"i","taxonomy":"t"}"#).unwrap();
        assert!(matches!(DatasetManifest::load(&path), Err(Error::Format(_))));
    }

    #[test]
    fn validation_failures_surface_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = sample_dataset();
        ds.frames[0].instances[0] = ds.frames[0].instances[0].clone().with_category(CategoryId(13));
        let manifest = write_fixture(dir.path(), &ds);
        match load_dataset(&manifest) {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn all_mask_encodings_agree() {
        let dir = tempfile::tempdir().unwrap();
        let masks = dir.path().join(MASK_DIR);
        let dense = rect(32, 24, 3, 5, 10, 7).decode();
        write_png_mask(&masks.join("f_0.png"), &dense).unwrap();
        let rle = Segmentation::from_mask(&dense.to_rle());
        let poly = Segmentation::Polygons(vec![vec![3.0, 5.0, 13.0, 5.0, 13.0, 12.0, 3.0, 12.0]]);
        let png = Segmentation::Png { png: "f_0.png".into() };
        let a = rle.to_mask(32, 24, &masks).unwrap();
        assert_eq!(poly.to_mask(32, 24, &masks).unwrap(), a);
        assert_eq!(png.to_mask(32, 24, &masks).unwrap(), a);
        assert!(rle.to_mask(24, 32, &masks).is_err());
    }

    #[test]
    fn untagged_segmentation_parses_each_shape() {
        let s: Segmentation = serde_json::from_str(r#"{"size":[2,2],"counts":[0,1,3]}"#).unwrap();
        assert!(matches!(s, Segmentation::Rle { .. }));
        let s: Segmentation = serde_json::from_str(r#"[[0,0,1,0,1,1]]"#).unwrap();
        assert!(matches!(s, Segmentation::Polygons(_)));
        let s: Segmentation = serde_json::from_str(r#"{"png":"x.png"}"#).unwrap();
        assert!(matches!(s, Segmentation::Png { .. }));
    }

    #[test]
    fn predictions_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_dataset();
        let path = dir.path().join("pred.json");
        let rle = r#"{"size":[24,32],"counts":[5,3,760]}"#;

        fs::write(&path, format!(r#"[{{"frame_id":"a","category_id":1,"score":1.5,"segmentation":{rle}}}]"#)).unwrap();
        assert!(matches!(load_predictions(&path, &ds), Err(Error::InvalidScore { .. })));

        fs::write(&path, format!(r#"[{{"frame_id":"zz","category_id":1,"score":0.5,"segmentation":{rle}}}]"#)).unwrap();
        match load_predictions(&path, &ds) {
            Err(Error::UnknownFrame(id)) => assert_eq!(id, "zz"),
            other => panic!("unexpected {other:?}"),
        }

        fs::write(&path, format!(r#"[{{"frame_id":"a","category_id":1,"segmentation":{rle}}}]"#)).unwrap();
        assert!(matches!(load_predictions(&path, &ds), Err(Error::MissingScore { .. })));
    }

    #[test]
    fn gt_as_predictions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_dataset();
        let preds = Predictions::from_ground_truth(&ds, 1.0);
        let path = dir.path().join("pred.json");
        save_predictions(&path, &preds).unwrap();
        let loaded = load_predictions(&path, &ds).unwrap();
        assert_eq!(loaded.instance_count(), ds.instance_count());
        assert_eq!(loaded, preds);
    }

    #[test]
    fn split_csv_lists_tagged_frames() {
        let mut ds = sample_dataset();
        ds.frames[0].split = Some(Split::Train);
        ds.frames[1].split = Some(Split::Test);
        ds.frames[2].split = Some(Split::Val);
        assert_eq!(split_csv(&ds), "frame_id,split\na,test\nb,val\nc,train\n");
    }
}
