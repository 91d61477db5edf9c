//! YOLO-format labels, the class taxonomy and the in-memory dataset model.
//!
//! Label files hold one object per line as `class cx cy w h`, with box
//! coordinates normalized to the image dimensions. Prediction files use the
//! same layout with a trailing confidence column.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::datasetops::scene_group_key;

/// Slack allowed on box extents before a label is rejected.
pub const BOX_EPSILON: f64 = 1e-6;

/// Image extensions picked up by [`load_dataset`].
pub const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("malformed {field} token {token:?}")]
    MalformedToken { field: &'static str, token: String },
    #[error("class id {class_id} out of range for {class_count} classes")]
    ClassOutOfRange { class_id: usize, class_count: usize },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("degenerate pixel box after clamping")]
    DegenerateBox,
    #[error("invalid class taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error("{path}:{line}: {source}")]
    AtLine {
        path: PathBuf,
        line: usize,
        #[source]
        source: Box<AnnotationError>,
    },
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AnnotationError {
    pub(crate) fn at_line(self, path: &Path, line: usize) -> Self {
        AnnotationError::AtLine {
            path: path.to_path_buf(),
            line,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        AnnotationError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Source location attached to this error, if any.
    pub fn location(&self) -> Option<(&Path, usize)> {
        match self {
            AnnotationError::AtLine { path, line, .. } => Some((path.as_path(), *line)),
            _ => None,
        }
    }
}

/// Ordered class names; the index of a name is its class id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTaxonomy {
    names: Vec<String>,
}

impl ClassTaxonomy {
    pub fn new(names: Vec<String>) -> Result<Self, AnnotationError> {
        if names.is_empty() {
            return Err(AnnotationError::InvalidTaxonomy("no classes".into()));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(AnnotationError::InvalidTaxonomy("empty class name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(AnnotationError::InvalidTaxonomy(format!(
                    "duplicate class name {name:?}"
                )));
            }
        }
        Ok(ClassTaxonomy { names })
    }

    /// Read a classes file: one name per line, blank trailing lines ignored.
    pub fn from_file(path: &Path) -> Result<Self, AnnotationError> {
        let text = fs::read_to_string(path).map_err(|e| AnnotationError::io(path, e))?;
        let mut names: Vec<String> = text.lines().map(|l| l.trim().to_string()).collect();
        while names.last().is_some_and(|n| n.is_empty()) {
            names.pop();
        }
        ClassTaxonomy::new(names).map_err(|e| AnnotationError::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, class_id: usize) -> Option<&str> {
        self.names.get(class_id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Box in YOLO convention: center and size as fractions of the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl NormBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, AnnotationError> {
        let b = NormBox { cx, cy, w, h };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<(), AnnotationError> {
        let NormBox { cx, cy, w, h } = *self;
        if ![cx, cy, w, h].iter().all(|v| v.is_finite()) {
            return Err(AnnotationError::InvalidBox("non-finite coordinate".into()));
        }
        for (name, c) in [("cx", cx), ("cy", cy)] {
            if !(0.0..=1.0).contains(&c) {
                return Err(AnnotationError::InvalidBox(format!("{name}={c} outside [0, 1]")));
            }
        }
        for (name, s) in [("w", w), ("h", h)] {
            if !(s > 0.0 && s <= 1.0) {
                return Err(AnnotationError::InvalidBox(format!("{name}={s} outside (0, 1]")));
            }
        }
        for (axis, c, s) in [("x", cx, w), ("y", cy, h)] {
            let lo = c - s / 2.0;
            let hi = c + s / 2.0;
            if lo < -BOX_EPSILON || hi > 1.0 + BOX_EPSILON {
                return Err(AnnotationError::InvalidBox(format!(
                    "{axis} extent [{lo}, {hi}] leaves the image"
                )));
            }
        }
        Ok(())
    }

    /// Corner form in unit-square coordinates, without clamping.
    pub fn corners(&self) -> PixelBox {
        PixelBox {
            x1: self.cx - self.w / 2.0,
            y1: self.cy - self.h / 2.0,
            x2: self.cx + self.w / 2.0,
            y2: self.cy + self.h / 2.0,
        }
    }
}

/// Axis-aligned box in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl PixelBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, AnnotationError> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(AnnotationError::InvalidBox("non-finite coordinate".into()));
        }
        if !(x1 < x2 && y1 < y2) {
            return Err(AnnotationError::DegenerateBox);
        }
        Ok(PixelBox { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }
}

/// Convert a normalized box to pixels, clamped to the image.
pub fn to_pixel_box(b: &NormBox, width: u32, height: u32) -> Result<PixelBox, AnnotationError> {
    if width == 0 || height == 0 {
        return Err(AnnotationError::InvalidBox("zero image dimension".into()));
    }
    let (wf, hf) = (f64::from(width), f64::from(height));
    let c = b.corners();
    PixelBox::new(
        (c.x1 * wf).clamp(0.0, wf),
        (c.y1 * hf).clamp(0.0, hf),
        (c.x2 * wf).clamp(0.0, wf),
        (c.y2 * hf).clamp(0.0, hf),
    )
}

/// Inverse of [`to_pixel_box`] for boxes that were not clamped.
pub fn from_pixel_box(b: &PixelBox, width: u32, height: u32) -> Result<NormBox, AnnotationError> {
    if width == 0 || height == 0 {
        return Err(AnnotationError::InvalidBox("zero image dimension".into()));
    }
    let (wf, hf) = (f64::from(width), f64::from(height));
    NormBox::new(
        (b.x1 + b.x2) / 2.0 / wf,
        (b.y1 + b.y2) / 2.0 / hf,
        b.width() / wf,
        b.height() / hf,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annotation {
    pub class_id: usize,
    pub bbox: NormBox,
}

/// A predicted box with its class and confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub class_id: usize,
    pub confidence: f64,
    pub bbox: NormBox,
}

impl Detection {
    pub fn new(class_id: usize, confidence: f64, bbox: NormBox) -> Result<Self, AnnotationError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(AnnotationError::InvalidConfidence(confidence));
        }
        Ok(Detection {
            class_id,
            confidence,
            bbox,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub annotations: Vec<Annotation>,
    pub group_key: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub taxonomy: ClassTaxonomy,
    pub records: Vec<ImageRecord>,
}

impl Dataset {
    /// Build a dataset, checking class ids and image id uniqueness.
    /// Records are sorted by image id.
    pub fn new(taxonomy: ClassTaxonomy, mut records: Vec<ImageRecord>) -> Result<Self, AnnotationError> {
        records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        for pair in records.windows(2) {
            if pair[0].image_id == pair[1].image_id {
                return Err(AnnotationError::InvalidTaxonomy(format!(
                    "duplicate image id {:?}",
                    pair[0].image_id
                )));
            }
        }
        let k = taxonomy.len();
        for rec in &records {
            if rec.width == 0 || rec.height == 0 {
                return Err(AnnotationError::InvalidBox(format!(
                    "image {:?} has zero dimension",
                    rec.image_id
                )));
            }
            if let Some(a) = rec.annotations.iter().find(|a| a.class_id >= k) {
                return Err(AnnotationError::ClassOutOfRange {
                    class_id: a.class_id,
                    class_count: k,
                });
            }
        }
        Ok(Dataset { taxonomy, records })
    }

    pub fn record(&self, image_id: &str) -> Option<&ImageRecord> {
        self.records
            .binary_search_by(|r| r.image_id.as_str().cmp(image_id))
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn index_of(&self, image_id: &str) -> Option<usize> {
        self.records
            .binary_search_by(|r| r.image_id.as_str().cmp(image_id))
            .ok()
    }

    pub fn annotation_count(&self) -> usize {
        self.records.iter().map(|r| r.annotations.len()).sum()
    }
}

fn parse_field<T: std::str::FromStr>(token: &str, field: &'static str) -> Result<T, AnnotationError> {
    token.parse().map_err(|_| AnnotationError::MalformedToken {
        field,
        token: token.to_string(),
    })
}

fn parse_box(tokens: &[&str]) -> Result<NormBox, AnnotationError> {
    let cx: f64 = parse_field(tokens[0], "cx")?;
    let cy: f64 = parse_field(tokens[1], "cy")?;
    let w: f64 = parse_field(tokens[2], "w")?;
    let h: f64 = parse_field(tokens[3], "h")?;
    NormBox::new(cx, cy, w, h)
}

fn parse_class(token: &str, class_count: usize) -> Result<usize, AnnotationError> {
    let class_id: usize = parse_field(token, "class_id")?;
    if class_id >= class_count {
        return Err(AnnotationError::ClassOutOfRange {
            class_id,
            class_count,
        });
    }
    Ok(class_id)
}

/// Parse one `class cx cy w h` label line.
pub fn parse_label_line(line: &str, class_count: usize) -> Result<Annotation, AnnotationError> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 5 {
        return Err(AnnotationError::FieldCount {
            expected: 5,
            found: tokens.len(),
        });
    }
    let class_id = parse_class(tokens[0], class_count)?;
    let bbox = parse_box(&tokens[1..5])?;
    Ok(Annotation { class_id, bbox })
}

/// Parse one `class cx cy w h conf` prediction line.
pub fn parse_prediction_line(line: &str, class_count: usize) -> Result<Detection, AnnotationError> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 6 {
        return Err(AnnotationError::FieldCount {
            expected: 6,
            found: tokens.len(),
        });
    }
    let class_id = parse_class(tokens[0], class_count)?;
    let bbox = parse_box(&tokens[1..5])?;
    let confidence: f64 = parse_field(tokens[5], "confidence")?;
    Detection::new(class_id, confidence, bbox)
}

/// Canonical label line with six decimals per coordinate.
pub fn serialize_annotation(a: &Annotation) -> String {
    let b = &a.bbox;
    format!("{} {:.6} {:.6} {:.6} {:.6}", a.class_id, b.cx, b.cy, b.w, b.h)
}

pub fn serialize_detection(d: &Detection) -> String {
    let b = &d.bbox;
    format!(
        "{} {:.6} {:.6} {:.6} {:.6} {:.6}",
        d.class_id, b.cx, b.cy, b.w, b.h, d.confidence
    )
}

impl fmt::Display for Annotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_annotation(self))
    }
}

/// Parse a whole label file. Blank lines are skipped; every other line must parse.
pub fn read_label_file(path: &Path, class_count: usize) -> Result<Vec<Annotation>, AnnotationError> {
    let text = fs::read_to_string(path).map_err(|e| AnnotationError::io(path, e))?;
    parse_lines(&text, path, |l| parse_label_line(l, class_count))
}

/// Parse a per-image prediction file.
pub fn read_prediction_file(path: &Path, class_count: usize) -> Result<Vec<Detection>, AnnotationError> {
    let text = fs::read_to_string(path).map_err(|e| AnnotationError::io(path, e))?;
    parse_lines(&text, path, |l| parse_prediction_line(l, class_count))
}

pub(crate) fn parse_lines<T>(
    text: &str,
    path: &Path,
    mut parse: impl FnMut(&str) -> Result<T, AnnotationError>,
) -> Result<Vec<T>, AnnotationError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse(line).map_err(|e| e.at_line(path, idx + 1))?);
    }
    Ok(out)
}

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

/// Image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, AnnotationError> {
    let entries = fs::read_dir(dir).map_err(|e| AnnotationError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| AnnotationError::io(dir, e))?;
        let path = entry.path();
        if path.is_file() && has_image_extension(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

fn file_stem(path: &Path) -> Result<String, AnnotationError> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| AnnotationError::File {
            path: path.to_path_buf(),
            message: "file name is not valid UTF-8".into(),
        })
}

fn load_record(image: &Path, labels_dir: &Path, class_count: usize) -> Result<ImageRecord, AnnotationError> {
    let image_id = file_stem(image)?;
    let (width, height) = image::image_dimensions(image).map_err(|e| AnnotationError::File {
        path: image.to_path_buf(),
        message: format!("cannot read image header: {e}"),
    })?;
    let label_path = labels_dir.join(format!("{image_id}.txt"));
    let annotations = if label_path.is_file() {
        read_label_file(&label_path, class_count)?
    } else {
        Vec::new()
    };
    let group_key = scene_group_key(&image_id);
    Ok(ImageRecord {
        image_id,
        width,
        height,
        annotations,
        group_key,
    })
}

/// Load a YOLO directory pair into a [`Dataset`].
///
/// Every image in `images_dir` becomes one record; its labels come from the
/// `.txt` file with the same stem in `labels_dir`, and a missing label file
/// means the image has no objects. Records are ordered by image id.
pub fn load_dataset(images_dir: &Path, labels_dir: &Path, classes_file: &Path) -> Result<Dataset, AnnotationError> {
    let taxonomy = ClassTaxonomy::from_file(classes_file)?;
    let images = list_images(images_dir)?;
    let k = taxonomy.len();
    let records = images
        .par_iter()
        .map(|p| load_record(p, labels_dir, k))
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new(taxonomy, records)
}

/// Load a dataset rooted at `root` with `images/` and `labels/` subdirectories.
/// `classes_file` defaults to `root/classes.txt`.
pub fn load_dataset_root(root: &Path, classes_file: Option<&Path>) -> Result<Dataset, AnnotationError> {
    let default_classes = root.join("classes.txt");
    load_dataset(
        &root.join("images"),
        &root.join("labels"),
        classes_file.unwrap_or(&default_classes),
    )
}
