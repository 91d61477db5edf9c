//! Direct transcription of the scoring definitions: confidence filter,
//! optional per-class NMS, greedy matching, 101-point AP, class means.

use std::cmp::Ordering;

#[derive(Clone, Copy, Debug)]
pub struct B {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct Det {
    pub class: usize,
    pub conf: f64,
    pub b: B,
}

#[derive(Clone, Copy, Debug)]
pub struct Gt {
    pub class: usize,
    pub b: B,
}

pub struct Image {
    pub gts: Vec<Gt>,
    pub dets: Vec<Det>,
}

pub struct Scores {
    /// `[class][threshold]`
    pub ap: Vec<Vec<Option<f64>>>,
    pub map50: Option<f64>,
    pub map50_95: Option<f64>,
}

pub fn iou(a: &B, b: &B) -> f64 {
    let (ax1, ax2, ay1, ay2) = (a.cx - a.w / 2.0, a.cx + a.w / 2.0, a.cy - a.h / 2.0, a.cy + a.h / 2.0);
    let (bx1, bx2, by1, by2) = (b.cx - b.w / 2.0, b.cx + b.w / 2.0, b.cy - b.h / 2.0, b.cy + b.h / 2.0);
    let iw = ax2.min(bx2) - ax1.max(bx1);
    let ih = ay2.min(by2) - ay1.max(by1);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    inter / ((ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter)
}

fn canonical(a: &Det, b: &Det) -> Ordering {
    let key = |d: &Det| [d.b.cx, d.b.cy, d.b.w, d.b.h];
    match b.conf.partial_cmp(&a.conf).unwrap() {
        Ordering::Equal => {}
        o => return o,
    }
    match a.class.cmp(&b.class) {
        Ordering::Equal => {}
        o => return o,
    }
    let (ka, kb) = (key(a), key(b));
    for i in 0..4 {
        match ka[i].partial_cmp(&kb[i]).unwrap() {
            Ordering::Equal => {}
            o => return o,
        }
    }
    Ordering::Equal
}

fn suppress(dets: Vec<Det>, thr: f64) -> Vec<Det> {
    // dets already in canonical (confidence-descending) order
    let mut keep: Vec<Det> = Vec::new();
    for d in dets {
        let hit = keep.iter().any(|k| k.class == d.class && iou(&k.b, &d.b) > thr);
        if !hit {
            keep.push(d);
        }
    }
    keep
}

fn ap101(flags: &[bool], num_gt: usize) -> Option<f64> {
    if num_gt == 0 {
        return if flags.is_empty() { None } else { Some(0.0) };
    }
    let mut rec = Vec::new();
    let mut prec = Vec::new();
    let mut tp = 0;
    for (i, f) in flags.iter().enumerate() {
        if *f {
            tp += 1;
        }
        rec.push(tp as f64 / num_gt as f64);
        prec.push(tp as f64 / (i + 1) as f64);
    }
    let mut total = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let mut best: f64 = 0.0;
        for i in 0..rec.len() {
            if rec[i] >= r && prec[i] > best {
                best = prec[i];
            }
        }
        total += best;
    }
    Some(total / 101.0)
}

pub fn score(images: &[Image], classes: usize, conf: f64, thresholds: &[f64], nms: Option<f64>) -> Scores {
    let prepared: Vec<Vec<Det>> = images
        .iter()
        .map(|im| {
            let mut d: Vec<Det> = im.dets.iter().copied().filter(|d| d.conf >= conf).collect();
            d.sort_by(canonical);
            match nms {
                Some(t) => suppress(d, t),
                None => d,
            }
        })
        .collect();

    let mut ap = vec![vec![None; thresholds.len()]; classes];
#[allow(clippy::needless_range_loop)]
    for c in 0..classes {
        let num_gt: usize = images.iter().map(|im| im.gts.iter().filter(|g| g.class == c).count()).sum();
        for (t, &thr) in thresholds.iter().enumerate() {
            // (conf, image, rank, tp)
            let mut all: Vec<(f64, usize, usize, bool)> = Vec::new();
            for (ii, im) in images.iter().enumerate() {
                let gts: Vec<&Gt> = im.gts.iter().filter(|g| g.class == c).collect();
                let mut used = vec![false; gts.len()];
                for (rank, d) in prepared[ii].iter().enumerate() {
                    if d.class != c {
                        continue;
                    }
                    let mut pick: Option<usize> = None;
                    let mut pick_iou = -1.0;
                    for (g, gt) in gts.iter().enumerate() {
                        if used[g] {
                            continue;
                        }
                        let x = iou(&d.b, &gt.b);
                        if x >= thr && x > pick_iou {
                            pick = Some(g);
                            pick_iou = x;
                        }
                    }
                    if let Some(g) = pick {
                        used[g] = true;
                    }
                    all.push((d.conf, ii, rank, pick.is_some()));
                }
            }
            all.sort_by(|a, b| {
                b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
            });
            let flags: Vec<bool> = all.iter().map(|x| x.3).collect();
            ap[c][t] = ap101(&flags, num_gt);
        }
    }

    let has_gt: Vec<bool> = (0..classes)
        .map(|c| images.iter().any(|im| im.gts.iter().any(|g| g.class == c)))
        .collect();
    let mean_at = |t: usize| -> Option<f64> {
        let v: Vec<f64> = (0..classes).filter(|&c| has_gt[c]).map(|c| ap[c][t].unwrap()).collect();
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    let idx50 = thresholds.iter().position(|&t| (t - 0.5).abs() < 1e-12);
    let map50 = idx50.and_then(mean_at);
    let map50_95 = if thresholds.len() == 10 {
        let per: Option<Vec<f64>> = (0..10).map(mean_at).collect();
        per.map(|v| v.iter().sum::<f64>() / 10.0)
    } else {
        None
    };
    Scores { ap, map50, map50_95 }
}
