//! C ABI over detkit.
//!
//! Every fallible call returns a [`DetkitStatus`]; on failure the message is
//! available from [`detkit_last_error_message`] on the same thread. Objects
//! are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use detkit::annotations::{Annotation, AnnotationError, ClassTaxonomy, Dataset, Detection, ImageRecord, NormBox};
use detkit::assignment::{hungarian, AssignmentError, CostMatrix};
use detkit::datasetops::{class_distribution, scene_group_key, StatsReport};
use detkit::evaluation::{coco_iou_thresholds, evaluate, EvalConfig, EvalError, Predictions};
use detkit::geometry::{norm_giou, norm_iou};
use detkit::imageops::{clahe, equalize_hist, gamma_correct, ClaheParams, GammaValue, ImageOpsError, Raster};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetkitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Panic = 5,
}

struct Failure(DetkitStatus, String);

impl From<ImageOpsError> for Failure {
    fn from(e: ImageOpsError) -> Self {
        Failure(DetkitStatus::InvalidArgument, e.to_string())
    }
}

impl From<AssignmentError> for Failure {
    fn from(e: AssignmentError) -> Self {
        Failure(DetkitStatus::InvalidArgument, e.to_string())
    }
}

impl From<AnnotationError> for Failure {
    fn from(e: AnnotationError) -> Self {
        let code = match e {
            AnnotationError::Io { .. } | AnnotationError::File { .. } => DetkitStatus::Io,
            AnnotationError::AtLine { .. } => DetkitStatus::Parse,
            _ => DetkitStatus::InvalidArgument,
        };
        Failure(code, e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Annotation(a) => a.into(),
            other => Failure(DetkitStatus::InvalidArgument, other.to_string()),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DetkitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DetkitStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_last_error(msg);
            code
        }
        Err(_) => {
            set_last_error("internal panic".into());
            DetkitStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(DetkitStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(DetkitStatus::InvalidArgument, msg.into())
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn detkit_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn detkit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Box in normalized center format.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetkitBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl DetkitBox {
    fn to_norm(self) -> Result<NormBox, Failure> {
        Ok(NormBox::new(self.cx, self.cy, self.w, self.h)?)
    }
}

// ---- raster ----

pub struct DetkitRaster(Raster);

/// Copy an interleaved 8-bit raster (1 or 3 channels) into a new handle.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn detkit_raster_new(
    width: u32,
    height: u32,
    channels: u8,
    data: *const u8,
    len: usize,
    out: *mut *mut DetkitRaster,
) -> DetkitStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if data.is_null() && len > 0 {
            return Err(null("data"));
        }
        let samples = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(data, len).to_vec() };
        let r = Raster::new(width, height, channels, samples)?;
        *out = Box::into_raw(Box::new(DetkitRaster(r)));
        Ok(())
    })
}

/// # Safety
/// `raster` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn detkit_raster_free(raster: *mut DetkitRaster) {
    if !raster.is_null() {
        drop(Box::from_raw(raster));
    }
}

/// # Safety
/// `raster` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn detkit_raster_width(raster: *const DetkitRaster) -> u32 {
    raster.as_ref().map_or(0, |r| r.0.width())
}

/// # Safety
/// `raster` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn detkit_raster_height(raster: *const DetkitRaster) -> u32 {
    raster.as_ref().map_or(0, |r| r.0.height())
}

/// # Safety
/// `raster` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn detkit_raster_channels(raster: *const DetkitRaster) -> u8 {
    raster.as_ref().map_or(0, |r| r.0.channels())
}

/// Borrow the samples; valid while the handle lives.
///
/// # Safety
/// `raster` must be a live handle or null; `len` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn detkit_raster_data(raster: *const DetkitRaster, len: *mut usize) -> *const u8 {
    let Some(r) = raster.as_ref() else {
        return ptr::null();
    };
    if let Some(len) = len.as_mut() {
        *len = r.0.samples().len();
    }
    r.0.samples().as_ptr()
}

unsafe fn enhance(
    raster: *const DetkitRaster,
    out: *mut *mut DetkitRaster,
    op: impl FnOnce(&Raster) -> Result<Raster, Failure>,
) -> DetkitStatus {
    guard(|| {
        let r = raster.as_ref().ok_or_else(|| null("raster"))?;
        let out = out_ref(out, "out")?;
        let result = if r.0.channels() == 1 {
            op(&r.0)?
        } else {
            let mut err = None;
            let res = detkit::imageops::apply_on_luma(&r.0, |y| {
                op(y).map_err(|e| {
                    let msg = e.1.clone();
                    err = Some(e);
                    ImageOpsError::InvalidParameter(msg)
                })
            });
            match res {
                Ok(v) => v,
                Err(e) => return Err(err.unwrap_or_else(|| e.into())),
            }
        };
        *out = Box::into_raw(Box::new(DetkitRaster(result)));
        Ok(())
    })
}

/// Global histogram equalization. Color rasters are processed on luma.
///
/// # Safety
/// `raster` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn detkit_raster_equalize(raster: *const DetkitRaster, out: *mut *mut DetkitRaster) -> DetkitStatus {
    enhance(raster, out, |r| Ok(equalize_hist(r)?))
}

/// CLAHE over a `tiles_x` by `tiles_y` grid. A `clip_limit` that is not
/// positive (or NaN) disables clipping.
///
/// # Safety
/// `raster` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn detkit_raster_clahe(
    raster: *const DetkitRaster,
    tiles_x: u32,
    tiles_y: u32,
    clip_limit: f64,
    out: *mut *mut DetkitRaster,
) -> DetkitStatus {
    let clip = (clip_limit > 0.0).then_some(clip_limit);
    enhance(raster, out, |r| {
        let p = ClaheParams::new(tiles_x, tiles_y, clip)?;
        Ok(clahe(r, &p)?)
    })
}

/// Gamma correction `255 * (v / 255) ^ gamma`.
///
/// # Safety
/// `raster` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn detkit_raster_gamma(raster: *const DetkitRaster, gamma: f64, out: *mut *mut DetkitRaster) -> DetkitStatus {
    enhance(raster, out, |r| Ok(gamma_correct(r, GammaValue::new(gamma)?)))
}

// ---- geometry and assignment ----

/// IoU of two normalized boxes.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn detkit_iou(a: DetkitBox, b: DetkitBox, out: *mut f64) -> DetkitStatus {
    guard(|| {
        *out_ref(out, "out")? = norm_iou(&a.to_norm()?, &b.to_norm()?);
        Ok(())
    })
}

/// Generalized IoU of two normalized boxes.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn detkit_giou(a: DetkitBox, b: DetkitBox, out: *mut f64) -> DetkitStatus {
    guard(|| {
        *out_ref(out, "out")? = norm_giou(&a.to_norm()?, &b.to_norm()?);
        Ok(())
    })
}

/// Minimum-cost one-to-one assignment on a row-major `rows` by `cols`
/// matrix. Writes `min(rows, cols)` pairs sorted by row into `out_rows` and
/// `out_cols`, which must hold at least that many entries.
///
/// # Safety
/// `cost` must point to `rows * cols` doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn detkit_hungarian(
    cost: *const f64,
    rows: usize,
    cols: usize,
    out_rows: *mut usize,
    out_cols: *mut usize,
    out_len: *mut usize,
    out_total: *mut f64,
) -> DetkitStatus {
    guard(|| {
        let n = rows.checked_mul(cols).ok_or_else(|| invalid("matrix size overflows"))?;
        if cost.is_null() && n > 0 {
            return Err(null("cost"));
        }
        let k = rows.min(cols);
        if k > 0 && (out_rows.is_null() || out_cols.is_null()) {
            return Err(null("output arrays"));
        }
        let len = out_ref(out_len, "out_len")?;
        let total = out_ref(out_total, "out_total")?;
        let data = if n == 0 { Vec::new() } else { std::slice::from_raw_parts(cost, n).to_vec() };
        let r = hungarian(&CostMatrix::new(rows, cols, data)?)?;
        for (i, &(p, t)) in r.pairs.iter().enumerate() {
            *out_rows.add(i) = p;
            *out_cols.add(i) = t;
        }
        *len = r.pairs.len();
        *total = r.total_cost;
        Ok(())
    })
}

// ---- evaluation ----

pub struct DetkitEvaluator {
    taxonomy: ClassTaxonomy,
    images: BTreeMap<String, Vec<Annotation>>,
    preds: Predictions,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetkitEvalSummary {
    /// NaN when no class has ground truth.
    pub map50: f64,
    /// NaN when no class has ground truth.
    pub map50_95: f64,
    pub ground_truth: u64,
    pub detections: u64,
}

/// New evaluator over `num_classes` classes.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn detkit_evaluator_new(num_classes: usize, out: *mut *mut DetkitEvaluator) -> DetkitStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let names = (0..num_classes).map(|i| format!("class_{i}")).collect();
        let ev = DetkitEvaluator { taxonomy: ClassTaxonomy::new(names)?, images: BTreeMap::new(), preds: Predictions::new() };
        *out = Box::into_raw(Box::new(ev));
        Ok(())
    })
}

/// # Safety
/// `ev` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn detkit_evaluator_free(ev: *mut DetkitEvaluator) {
    if !ev.is_null() {
        drop(Box::from_raw(ev));
    }
}

/// Register an image with no objects. Adding ground truth registers the
/// image too.
///
/// # Safety
/// `ev` must be a live handle; `image_id` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn detkit_evaluator_add_image(ev: *mut DetkitEvaluator, image_id: *const c_char) -> DetkitStatus {
    guard(|| {
        let ev = out_ref(ev, "evaluator")?;
        ev.images.entry(cstr(image_id, "image_id")?.to_string()).or_default();
        Ok(())
    })
}

/// # Safety
/// `ev` must be a live handle; `image_id` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn detkit_evaluator_add_ground_truth(
    ev: *mut DetkitEvaluator,
    image_id: *const c_char,
    class_id: usize,
    bbox: DetkitBox,
) -> DetkitStatus {
    guard(|| {
        let ev = out_ref(ev, "evaluator")?;
        let id = cstr(image_id, "image_id")?;
        if class_id >= ev.taxonomy.len() {
            return Err(AnnotationError::ClassOutOfRange { class_id, class_count: ev.taxonomy.len() }.into());
        }
        let a = Annotation { class_id, bbox: bbox.to_norm()? };
        ev.images.entry(id.to_string()).or_default().push(a);
        Ok(())
    })
}

/// # Safety
/// `ev` must be a live handle; `image_id` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn detkit_evaluator_add_detection(
    ev: *mut DetkitEvaluator,
    image_id: *const c_char,
    class_id: usize,
    confidence: f64,
    bbox: DetkitBox,
) -> DetkitStatus {
    guard(|| {
        let ev = out_ref(ev, "evaluator")?;
        let id = cstr(image_id, "image_id")?;
        let d = Detection::new(class_id, confidence, bbox.to_norm()?)?;
        ev.preds.entry(id.to_string()).or_default().push(d);
        Ok(())
    })
}

/// Score the accumulated detections. `nms_iou` below zero (or NaN) skips
/// suppression.
///
/// # Safety
/// `ev` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn detkit_evaluator_run(
    ev: *const DetkitEvaluator,
    conf_threshold: f64,
    nms_iou: f64,
    out: *mut DetkitEvalSummary,
) -> DetkitStatus {
    guard(|| {
        let ev = ev.as_ref().ok_or_else(|| null("evaluator"))?;
        let out = out_ref(out, "out")?;
        let records = ev
            .images
            .iter()
            .map(|(id, anns)| ImageRecord {
                image_id: id.clone(),
                width: 1,
                height: 1,
                annotations: anns.clone(),
                group_key: scene_group_key(id),
            })
            .collect();
        let d = Dataset::new(ev.taxonomy.clone(), records)?;
        let cfg = EvalConfig {
            conf_threshold,
            iou_thresholds: coco_iou_thresholds(),
            nms_iou: (nms_iou >= 0.0).then_some(nms_iou),
        };
        let r = evaluate(&ev.preds, &d, &cfg)?;
        *out = DetkitEvalSummary {
            map50: r.map50.unwrap_or(f64::NAN),
            map50_95: r.map50_95.unwrap_or(f64::NAN),
            ground_truth: r.gt_counts.iter().sum(),
            detections: r.det_counts.iter().sum(),
        };
        Ok(())
    })
}

// ---- dataset statistics ----

pub struct DetkitDataset {
    stats: StatsReport,
}

/// Load `root/images` and `root/labels`. `classes_file` may be null, in
/// which case `root/classes.txt` is used.
///
/// # Safety
/// Strings must be NUL-terminated (or null for `classes_file`); `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn detkit_dataset_load(
    root: *const c_char,
    classes_file: *const c_char,
    out: *mut *mut DetkitDataset,
) -> DetkitStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let root = cstr(root, "root")?;
        let classes = if classes_file.is_null() { None } else { Some(Path::new(cstr(classes_file, "classes_file")?)) };
        let d = detkit::annotations::load_dataset_root(Path::new(root), classes)?;
        *out = Box::into_raw(Box::new(DetkitDataset { stats: class_distribution(&d) }));
        Ok(())
    })
}

/// # Safety
/// `d` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn detkit_dataset_free(d: *mut DetkitDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// # Safety
/// `d` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn detkit_dataset_image_count(d: *const DetkitDataset) -> u64 {
    d.as_ref().map_or(0, |d| d.stats.total_images)
}

/// # Safety
/// `d` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn detkit_dataset_object_count(d: *const DetkitDataset) -> u64 {
    d.as_ref().map_or(0, |d| d.stats.total_objects)
}

/// # Safety
/// `d` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn detkit_dataset_class_count(d: *const DetkitDataset) -> usize {
    d.as_ref().map_or(0, |d| d.stats.class_names.len())
}

/// Objects of class `class_id`.
///
/// # Safety
/// `d` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn detkit_dataset_class_objects(d: *const DetkitDataset, class_id: usize, out: *mut u64) -> DetkitStatus {
    guard(|| {
        let d = d.as_ref().ok_or_else(|| null("dataset"))?;
        let out = out_ref(out, "out")?;
        *out = *d.stats.per_class.get(class_id).ok_or_else(|| invalid(format!("class id {class_id} out of range")))?;
        Ok(())
    })
}
