//! Test-only reference implementations and generators. Nothing here calls
//! into the library code paths it is used to check.

#![allow(dead_code)]

pub mod clahe_ref;
pub mod naive_eval;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub struct TestRng(ChaCha8Rng);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }

    pub fn int(&mut self, lo: i64, hi: i64) -> i64 {
        lo + self.below((hi - lo + 1) as usize) as i64
    }

    pub fn byte(&mut self) -> u8 {
        self.0.next_u64() as u8
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }
}

use detkit::annotations::{Annotation, ClassTaxonomy, Dataset, Detection, ImageRecord, NormBox};
use detkit::evaluation::Predictions;

pub fn random_box(rng: &mut TestRng) -> NormBox {
    let w = rng.range(0.05, 0.5);
    let h = rng.range(0.05, 0.5);
    let cx = rng.range(w / 2.0, 1.0 - w / 2.0);
    let cy = rng.range(h / 2.0, 1.0 - h / 2.0);
    NormBox::new(cx, cy, w, h).unwrap()
}

fn jitter(rng: &mut TestRng, b: &NormBox) -> NormBox {
    if rng.chance(0.3) {
        return *b;
    }
    let s = rng.range(0.0, 0.08);
    let cx = (b.cx + rng.range(-s, s)).clamp(b.w / 2.0, 1.0 - b.w / 2.0);
    let cy = (b.cy + rng.range(-s, s)).clamp(b.h / 2.0, 1.0 - b.h / 2.0);
    NormBox::new(cx, cy, b.w, b.h).unwrap()
}

/// A micro dataset (up to 4 images, 3 classes, 10 detections) with
/// predictions, plus the same data in the naive scorer's types.
pub struct MicroCase {
    pub dataset: Dataset,
    pub preds: Predictions,
    pub naive: Vec<naive_eval::Image>,
    pub classes: usize,
}

pub fn micro_case(rng: &mut TestRng) -> MicroCase {
    let classes = 1 + rng.below(3);
    let names = (0..classes).map(|c| format!("c{c}")).collect();
    let taxonomy = ClassTaxonomy::new(names).unwrap();
    let n_images = 1 + rng.below(4);
    let mut records = Vec::new();
    for i in 0..n_images {
        let n_gt = rng.below(4);
        let annotations = (0..n_gt)
            .map(|_| Annotation { class_id: rng.below(classes), bbox: random_box(rng) })
            .collect();
        records.push(ImageRecord {
            image_id: format!("img{i}"),
            width: 640,
            height: 480,
            annotations,
            group_key: format!("img{i}"),
        });
    }
    let confs = [0.2, 0.4, 0.5, 0.7, 0.9, 1.0];
    let n_dets = rng.below(11);
    let mut preds = Predictions::new();
    for _ in 0..n_dets {
        let i = rng.below(n_images);
        let rec = &records[i];
        let conf = if rng.chance(0.5) { confs[rng.below(confs.len())] } else { rng.unit() };
        let det = if !rec.annotations.is_empty() && rng.chance(0.6) {
            let a = rec.annotations[rng.below(rec.annotations.len())];
            let class_id = if rng.chance(0.85) { a.class_id } else { rng.below(classes) };
            Detection::new(class_id, conf, jitter(rng, &a.bbox)).unwrap()
        } else {
            Detection::new(rng.below(classes), conf, random_box(rng)).unwrap()
        };
        preds.entry(rec.image_id.clone()).or_default().push(det);
    }
    let dataset = Dataset::new(taxonomy, records).unwrap();
    let to_b = |b: &NormBox| naive_eval::B { cx: b.cx, cy: b.cy, w: b.w, h: b.h };
    let naive = dataset
        .records
        .iter()
        .map(|r| naive_eval::Image {
            gts: r.annotations.iter().map(|a| naive_eval::Gt { class: a.class_id, b: to_b(&a.bbox) }).collect(),
            dets: preds
                .get(&r.image_id)
                .map(|v| v.iter().map(|d| naive_eval::Det { class: d.class_id, conf: d.confidence, b: to_b(&d.bbox) }).collect())
                .unwrap_or_default(),
        })
        .collect();
    MicroCase { dataset, preds, naive, classes }
}

/// Two images, two classes, five detections with hand-assigned outcomes.
///
/// class 0: 0.9 TP, 0.8 FP, 0.6 FP over 2 objects -> AP = 51/101
/// class 1: 0.7 TP, 0.5 FP over 1 object -> AP = 1
pub fn hand_fixture() -> (Dataset, Predictions) {
    let taxonomy = ClassTaxonomy::new(vec!["car".into(), "bus".into()]).unwrap();
    let b = |cx, cy| NormBox::new(cx, cy, 0.2, 0.2).unwrap();
    let rec = |id: &str, anns: Vec<Annotation>| ImageRecord {
        image_id: id.into(),
        width: 100,
        height: 100,
        annotations: anns,
        group_key: id.into(),
    };
    let a1 = Annotation { class_id: 0, bbox: b(0.2, 0.2) };
    let b1 = Annotation { class_id: 1, bbox: b(0.7, 0.7) };
    let a2 = Annotation { class_id: 0, bbox: b(0.5, 0.5) };
    let dataset = Dataset::new(taxonomy, vec![rec("one", vec![a1, b1]), rec("two", vec![a2])]).unwrap();
    let mut preds = Predictions::new();
    preds.insert(
        "one".into(),
        vec![
            Detection::new(0, 0.9, a1.bbox).unwrap(),
            Detection::new(0, 0.6, b(0.8, 0.2)).unwrap(),
            Detection::new(1, 0.7, b1.bbox).unwrap(),
        ],
    );
    preds.insert(
        "two".into(),
        vec![
            Detection::new(0, 0.8, b(0.15, 0.85)).unwrap(),
            Detection::new(1, 0.5, b(0.5, 0.5)).unwrap(),
        ],
    );
    (dataset, preds)
}

/// The single-image AP 0.5 case: a confident false positive ahead of the
/// only true positive.
pub fn half_ap_fixture() -> (Dataset, Predictions) {
    let taxonomy = ClassTaxonomy::new(vec!["car".into()]).unwrap();
    let gt = NormBox::new(0.3, 0.3, 0.2, 0.2).unwrap();
    let dataset = Dataset::new(
        taxonomy,
        vec![ImageRecord {
            image_id: "only".into(),
            width: 50,
            height: 50,
            annotations: vec![Annotation { class_id: 0, bbox: gt }],
            group_key: "only".into(),
        }],
    )
    .unwrap();
    let mut preds = Predictions::new();
    preds.insert(
        "only".into(),
        vec![
            Detection::new(0, 0.9, NormBox::new(0.8, 0.8, 0.2, 0.2).unwrap()).unwrap(),
            Detection::new(0, 0.8, gt).unwrap(),
        ],
    );
    (dataset, preds)
}

/// A random cost matrix of one of several entry kinds.
pub fn random_matrix(rng: &mut TestRng, max_dim: usize) -> detkit::CostMatrix {
    let rows = rng.below(max_dim + 1);
    let cols = rng.below(max_dim + 1);
    let kind = rng.below(4);
    let data = (0..rows * cols)
        .map(|_| match kind {
            0 => rng.int(0, 9) as f64,
            1 => rng.int(-5, 5) as f64,
            2 => rng.range(-10.0, 10.0),
            _ => rng.int(-8, 8) as f64 * 0.25,
        })
        .collect();
    detkit::CostMatrix::new(rows, cols, data).unwrap()
}

pub fn gradient(width: u32, height: u32) -> detkit::Raster {
    let samples = (0..height)
        .flat_map(|y| (0..width).map(move |x| ((x + y) * 2).min(255) as u8))
        .collect();
    detkit::Raster::gray(width, height, samples).unwrap()
}

pub fn random_gray(rng: &mut TestRng, max_side: u32) -> detkit::Raster {
    let w = 1 + rng.below(max_side as usize) as u32;
    let h = 1 + rng.below(max_side as usize) as u32;
    // narrow or full intensity range
    let (lo, hi) = if rng.chance(0.5) { (0u8, 255u8) } else { let l = rng.byte() / 2; (l, l + rng.byte() / 2) };
    let span = (hi - lo) as usize + 1;
    let samples = (0..w * h).map(|_| lo + rng.below(span) as u8).collect();
    detkit::Raster::gray(w, h, samples).unwrap()
}
