//! Detection scoring: confidence filtering, NMS, greedy matching against
//! ground truth and COCO-style 101-point average precision.
//!
//! Scores are pooled per class across the whole dataset. Classes without
//! ground truth are reported but left out of the mAP means.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::annotations::{
    parse_lines, parse_prediction_line, read_prediction_file, serialize_detection, Annotation,
    AnnotationError, Dataset, Detection,
};
use crate::datasetops::csv_field;
use crate::geometry::norm_iou;

/// Confidence threshold applied before matching unless configured otherwise.
pub const DEFAULT_CONFIDENCE: f64 = 0.4;

/// Detections keyed by image id.
pub type Predictions = BTreeMap<String, Vec<Detection>>;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("predictions reference unknown image id {0:?}")]
    UnknownImage(String),
    #[error("detection class {class_id} out of range for {class_count} classes")]
    ClassOutOfRange { class_id: usize, class_count: usize },
    #[error("invalid threshold: {0}")]
    Threshold(String),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

/// The ten COCO IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub conf_threshold: f64,
    pub iou_thresholds: Vec<f64>,
    /// NMS IoU threshold; `None` skips suppression (set-prediction outputs
    /// need none).
    pub nms_iou: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            conf_threshold: DEFAULT_CONFIDENCE,
            iou_thresholds: coco_iou_thresholds(),
            nms_iou: None,
        }
    }
}

impl EvalConfig {
    fn validate(&self) -> Result<(), EvalError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.conf_threshold) {
            return Err(EvalError::Threshold(format!("confidence {}", self.conf_threshold)));
        }
        if self.iou_thresholds.is_empty() {
            return Err(EvalError::Threshold("no IoU thresholds".into()));
        }
        if let Some(t) = self.iou_thresholds.iter().find(|t| !unit(**t)) {
            return Err(EvalError::Threshold(format!("IoU {t}")));
        }
        if let Some(t) = self.nms_iou.filter(|t| !unit(*t)) {
            return Err(EvalError::Threshold(format!("NMS IoU {t}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PRPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Keep detections with `confidence >= thr`, preserving order.
pub fn filter_by_confidence(dets: &[Detection], thr: f64) -> Vec<Detection> {
    dets.iter().copied().filter(|d| d.confidence >= thr).collect()
}

/// Indices sorted by descending confidence, input order on ties.
fn confidence_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    order
}

/// Greedy per-class non-maximum suppression. A detection is dropped when
/// its IoU with an already kept detection of the same class exceeds
/// `iou_thr`. Survivors keep their input order.
pub fn nms(dets: &[Detection], iou_thr: f64) -> Vec<Detection> {
    let order = confidence_order(dets);
    let mut kept = vec![false; dets.len()];
    let mut kept_by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in order {
        let d = &dets[i];
        let same = kept_by_class.entry(d.class_id).or_default();
        if same.iter().all(|&k| norm_iou(&dets[k].bbox, &d.bbox) <= iou_thr) {
            same.push(i);
            kept[i] = true;
        }
    }
    dets.iter()
        .zip(kept)
        .filter(|(_, k)| *k)
        .map(|(d, _)| *d)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchOutcome {
    /// TP flag per input detection, indexed like the input.
    pub is_tp: Vec<bool>,
    pub unmatched_gt: usize,
}

/// Match one image's detections of one class against its ground truth.
///
/// Detections are visited by descending confidence (input order on ties);
/// each takes the unmatched ground truth box it overlaps most (lowest index
/// on ties) and is a true positive when that IoU reaches `iou_thr`.
pub fn match_detections(dets: &[Detection], gts: &[Annotation], iou_thr: f64) -> MatchOutcome {
    let mut matched = vec![false; gts.len()];
    let mut is_tp = vec![false; dets.len()];
    for i in confidence_order(dets) {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if matched[g] {
                continue;
            }
            let x = norm_iou(&dets[i].bbox, &gt.bbox);
            if best.is_none_or(|(_, b)| x > b) {
                best = Some((g, x));
            }
        }
        if let Some((g, x)) = best {
            if x >= iou_thr {
                matched[g] = true;
                is_tp[i] = true;
            }
        }
    }
    MatchOutcome {
        is_tp,
        unmatched_gt: matched.iter().filter(|m| !**m).count(),
    }
}

/// Cumulative precision/recall after each detection of a confidence-sorted
/// TP/FP list. Empty when `num_gt` is zero.
pub fn precision_recall_curve(flags: &[bool], num_gt: usize) -> Vec<PRPoint> {
    if num_gt == 0 {
        return Vec::new();
    }
    let mut tp = 0usize;
    flags
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            tp += usize::from(f);
            PRPoint {
                recall: tp as f64 / num_gt as f64,
                precision: tp as f64 / (i + 1) as f64,
            }
        })
        .collect()
}

/// 101-point interpolated average precision.
///
/// Returns `None` when there is neither ground truth nor a detection, and
/// 0 when there are detections but no ground truth.
pub fn average_precision(flags: &[bool], num_gt: usize) -> Option<f64> {
    if num_gt == 0 {
        return if flags.is_empty() { None } else { Some(0.0) };
    }
    let mut curve = precision_recall_curve(flags, num_gt);
    // precision envelope: running max from the right
    for i in (0..curve.len().saturating_sub(1)).rev() {
        curve[i].precision = curve[i].precision.max(curve[i + 1].precision);
    }
    let mut sum = 0.0;
    let mut idx = 0;
    for step in 0..=100u32 {
        let r = f64::from(step) / 100.0;
        while idx < curve.len() && curve[idx].recall < r {
            idx += 1;
        }
        if idx < curve.len() {
            sum += curve[idx].precision;
        }
    }
    Some(sum / 101.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub iou_thresholds: Vec<f64>,
    /// `ap[class][threshold]`; `None` for classes with no ground truth and
    /// no detections.
    pub ap: Vec<Vec<Option<f64>>>,
    pub gt_counts: Vec<u64>,
    /// Detections per class that entered matching.
    pub det_counts: Vec<u64>,
    pub conf_threshold: f64,
    pub nms_iou: Option<f64>,
    pub map50: Option<f64>,
    pub map50_95: Option<f64>,
    /// Precision/recall curve per class at the first IoU threshold.
    pub pr_curves: Vec<Vec<PRPoint>>,
}

impl EvalReport {
    /// Mean AP over classes with ground truth at threshold index `t`.
    pub fn map_at(&self, t: usize) -> Option<f64> {
        let vals: Vec<f64> = (0..self.class_names.len())
            .filter(|&c| self.gt_counts[c] > 0)
            .filter_map(|c| self.ap[c][t])
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }

    /// CSV of `class_id,class_name,iou_thr,ap` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class_id,class_name,iou_thr,ap\n");
        for (c, name) in self.class_names.iter().enumerate() {
            for (t, thr) in self.iou_thresholds.iter().enumerate() {
                let _ = writeln!(out, "{c},{},{thr:.2},{}", csv_field(name), fmt_opt(self.ap[c][t]));
            }
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "conf_threshold {:.6}", self.conf_threshold);
        match self.nms_iou {
            Some(t) => {
                let _ = writeln!(out, "nms_iou {t:.6}");
            }
            None => out.push_str("nms_iou off\n"),
        }
        let _ = writeln!(out, "classes_scored {}", self.gt_counts.iter().filter(|&&g| g > 0).count());
        let _ = writeln!(out, "ground_truth {}", self.gt_counts.iter().sum::<u64>());
        let _ = writeln!(out, "detections {}", self.det_counts.iter().sum::<u64>());
        let _ = writeln!(out, "mAP50 {}", fmt_opt(self.map50));
        let _ = writeln!(out, "mAP50_95 {}", fmt_opt(self.map50_95));
        out
    }

    pub fn pr_curves_csv(&self) -> String {
        let mut out = String::from("class_id,class_name,recall,precision\n");
        for (c, points) in self.pr_curves.iter().enumerate() {
            for p in points {
                let _ = writeln!(
                    out,
                    "{c},{},{:.6},{:.6}",
                    csv_field(&self.class_names[c]),
                    p.recall,
                    p.precision
                );
            }
        }
        out
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

/// Total order used to canonicalise an image's detections: confidence
/// descending, then class and box coordinates.
fn canonical_cmp(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.class_id.cmp(&b.class_id))
        .then(a.bbox.cx.total_cmp(&b.bbox.cx))
        .then(a.bbox.cy.total_cmp(&b.bbox.cy))
        .then(a.bbox.w.total_cmp(&b.bbox.w))
        .then(a.bbox.h.total_cmp(&b.bbox.h))
}

struct ImageScores {
    det_counts: Vec<u64>,
    /// `[threshold][class]` -> `(confidence, rank within image, tp)`
    flags: Vec<Vec<Vec<(f64, usize, bool)>>>,
}

fn score_image(
    dets: &[Detection],
    gts: &[Annotation],
    class_count: usize,
    cfg: &EvalConfig,
) -> ImageScores {
    let mut dets = dets.to_vec();
    dets.sort_by(canonical_cmp);
    let mut dets = filter_by_confidence(&dets, cfg.conf_threshold);
    if let Some(t) = cfg.nms_iou {
        dets = nms(&dets, t);
    }
    let mut det_counts = vec![0u64; class_count];
    for d in &dets {
        det_counts[d.class_id] += 1;
    }
    let mut by_class_dets: Vec<Vec<(usize, Detection)>> = vec![Vec::new(); class_count];
    for (rank, d) in dets.iter().enumerate() {
        by_class_dets[d.class_id].push((rank, *d));
    }
    let mut by_class_gts: Vec<Vec<Annotation>> = vec![Vec::new(); class_count];
    for g in gts {
        by_class_gts[g.class_id].push(*g);
    }
    let flags = cfg
        .iou_thresholds
        .iter()
        .map(|&thr| {
            (0..class_count)
                .map(|c| {
                    let class_dets: Vec<Detection> = by_class_dets[c].iter().map(|(_, d)| *d).collect();
                    let m = match_detections(&class_dets, &by_class_gts[c], thr);
                    by_class_dets[c]
                        .iter()
                        .zip(m.is_tp)
                        .map(|((rank, d), tp)| (d.confidence, *rank, tp))
                        .collect()
                })
                .collect()
        })
        .collect();
    ImageScores { det_counts, flags }
}

/// Score predictions against a dataset.
///
/// Per image: confidence filter, optional NMS, then per-class greedy
/// matching at every IoU threshold. Flags are pooled per class across
/// images in a canonical order (confidence, image order, rank within the
/// image), so the report does not depend on input order or parallelism.
pub fn evaluate(preds: &Predictions, gts: &Dataset, cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let k = gts.taxonomy.len();
    for (id, dets) in preds {
        if gts.index_of(id).is_none() {
            return Err(EvalError::UnknownImage(id.clone()));
        }
        if let Some(d) = dets.iter().find(|d| d.class_id >= k) {
            return Err(EvalError::ClassOutOfRange {
                class_id: d.class_id,
                class_count: k,
            });
        }
    }
    let empty = Vec::new();
    let per_image: Vec<ImageScores> = gts
        .records
        .par_iter()
        .map(|r| score_image(preds.get(&r.image_id).unwrap_or(&empty), &r.annotations, k, cfg))
        .collect();

    let mut gt_counts = vec![0u64; k];
    for r in &gts.records {
        for a in &r.annotations {
            gt_counts[a.class_id] += 1;
        }
    }
    let mut det_counts = vec![0u64; k];
    for s in &per_image {
        for (total, n) in det_counts.iter_mut().zip(&s.det_counts) {
            *total += n;
        }
    }

    let n_thr = cfg.iou_thresholds.len();
    let mut ap = vec![vec![None; n_thr]; k];
    let mut pr_curves = vec![Vec::new(); k];
#[allow(clippy::needless_range_loop)]
    for t in 0..n_thr {
        for c in 0..k {
            let mut pooled: Vec<(f64, usize, usize, bool)> = Vec::new();
            for (img, s) in per_image.iter().enumerate() {
                pooled.extend(s.flags[t][c].iter().map(|&(conf, rank, tp)| (conf, img, rank, tp)));
            }
            pooled.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let flags: Vec<bool> = pooled.iter().map(|p| p.3).collect();
            ap[c][t] = average_precision(&flags, gt_counts[c] as usize);
            if t == 0 {
                pr_curves[c] = precision_recall_curve(&flags, gt_counts[c] as usize);
            }
        }
    }

    let mut report = EvalReport {
        class_names: gts.taxonomy.names().to_vec(),
        iou_thresholds: cfg.iou_thresholds.clone(),
        ap,
        gt_counts,
        det_counts,
        conf_threshold: cfg.conf_threshold,
        nms_iou: cfg.nms_iou,
        map50: None,
        map50_95: None,
        pr_curves,
    };
    let find = |x: f64| cfg.iou_thresholds.iter().position(|t| (t - x).abs() < 1e-9);
    report.map50 = find(0.5).and_then(|t| report.map_at(t));
    let coco: Option<Vec<usize>> = coco_iou_thresholds().into_iter().map(find).collect();
    report.map50_95 = coco.and_then(|idx| {
        let per_thr: Option<Vec<f64>> = idx.iter().map(|&t| report.map_at(t)).collect();
        per_thr.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    });
    Ok(report)
}

/// Load predictions from a directory of per-image `<image_id>.txt` files,
/// or from a single aggregate file whose lines are
/// `image_id class cx cy w h conf`.
pub fn load_predictions(path: &Path, class_count: usize) -> Result<Predictions, AnnotationError> {
    let mut preds = Predictions::new();
    if path.is_dir() {
        let entries = fs::read_dir(path).map_err(|e| AnnotationError::io(path, e))?;
        let mut files = Vec::new();
        for entry in entries {
            let p = entry.map_err(|e| AnnotationError::io(path, e))?.path();
            if p.is_file() && p.extension().is_some_and(|e| e == "txt") {
                files.push(p);
            }
        }
        files.sort();
        for f in files {
            let stem = f
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| AnnotationError::File {
                    path: f.clone(),
                    message: "file name is not valid UTF-8".into(),
                })?
                .to_string();
            preds.insert(stem, read_prediction_file(&f, class_count)?);
        }
    } else {
        let text = fs::read_to_string(path).map_err(|e| AnnotationError::io(path, e))?;
        let rows = parse_lines(&text, path, |line| {
            let line = line.trim_start();
            let (id, rest) = line.split_once(char::is_whitespace).ok_or(AnnotationError::FieldCount {
                expected: 7,
                found: 1,
            })?;
            Ok((id.to_string(), parse_prediction_line(rest, class_count)?))
        })?;
        for (id, d) in rows {
            preds.entry(id).or_default().push(d);
        }
    }
    Ok(preds)
}

/// Write predictions as one `<image_id>.txt` file per image.
pub fn write_predictions_dir(dir: &Path, preds: &Predictions) -> Result<(), AnnotationError> {
    fs::create_dir_all(dir).map_err(|e| AnnotationError::io(dir, e))?;
    for (id, dets) in preds {
        let path = dir.join(format!("{id}.txt"));
        fs::write(&path, detections_text(dets)).map_err(|e| AnnotationError::io(&path, e))?;
    }
    Ok(())
}

/// Lines in aggregate form, `image_id class cx cy w h conf`.
pub fn aggregate_predictions_text(preds: &Predictions) -> String {
    let mut out = String::new();
    for (id, dets) in preds {
        for d in dets {
            let _ = writeln!(out, "{id} {}", serialize_detection(d));
        }
    }
    out
}

pub fn detections_text(dets: &[Detection]) -> String {
    let mut out = String::new();
    for d in dets {
        out.push_str(&serialize_detection(d));
        out.push('\n');
    }
    out
}

/// Precision/recall curve as a standalone SVG document on the unit square.
pub fn pr_curve_svg(title: &str, points: &[PRPoint]) -> String {
    const SIZE: f64 = 400.0;
    const MARGIN: f64 = 50.0;
    let x = |r: f64| MARGIN + r * SIZE;
    let y = |p: f64| MARGIN + (1.0 - p) * SIZE;
    let mut s = String::new();
    let total = SIZE + 2.0 * MARGIN;
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    );
    let _ = writeln!(s, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let v = f64::from(i) / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{v:.2}</text>"#, x(v), MARGIN + SIZE + 16.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{v:.2}</text>"#, MARGIN - 6.0, y(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">recall</text>"#, MARGIN + SIZE / 2.0, total - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" font-size="13" text-anchor="middle" transform="rotate(-90 14 {:.1})">precision</text>"#,
        MARGIN + SIZE / 2.0,
        MARGIN + SIZE / 2.0
    );
    let _ = writeln!(s, r#"<text x="{:.1}" y="30" font-size="14" text-anchor="middle">{}</text>"#, total / 2.0, xml_escape(title));
    if !points.is_empty() {
        let coords: Vec<String> = points.iter().map(|p| format!("{:.2},{:.2}", x(p.recall), y(p.precision))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#, coords.join(" "));
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
