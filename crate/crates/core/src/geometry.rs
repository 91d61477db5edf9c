//! Box overlap metrics: IoU, generalized IoU and L1 distance.
//!
//! Boxes are continuous; there is no `+1` pixel convention.

use crate::annotations::{NormBox, PixelBox};

fn intersection(a: &PixelBox, b: &PixelBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    w * h
}

fn enclosing_area(a: &PixelBox, b: &PixelBox) -> f64 {
    let w = a.x2.max(b.x2) - a.x1.min(b.x1);
    let h = a.y2.max(b.y2) - a.y1.min(b.y1);
    w.max(0.0) * h.max(0.0)
}

/// Intersection over union. Zero-area boxes score 0 unless both are
/// degenerate and identical, which scores 1.
pub fn iou(a: &PixelBox, b: &PixelBox) -> f64 {
    let inter = intersection(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Generalized IoU: `iou - (area(C) - area(union)) / area(C)`, with `C` the
/// smallest box enclosing both.
pub fn giou(a: &PixelBox, b: &PixelBox) -> f64 {
    let inter = intersection(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return iou(a, b);
    }
    let enclose = enclosing_area(a, b);
    let overlap = (inter / union).clamp(0.0, 1.0);
    if enclose <= 0.0 {
        return overlap;
    }
    overlap - (enclose - union) / enclose
}

/// IoU of two normalized boxes on the unit square.
pub fn norm_iou(a: &NormBox, b: &NormBox) -> f64 {
    iou(&a.corners(), &b.corners())
}

pub fn norm_giou(a: &NormBox, b: &NormBox) -> f64 {
    giou(&a.corners(), &b.corners())
}

/// Sum of absolute differences over `(cx, cy, w, h)`.
pub fn l1_box_distance(a: &NormBox, b: &NormBox) -> f64 {
    (a.cx - b.cx).abs() + (a.cy - b.cy).abs() + (a.w - b.w).abs() + (a.h - b.h).abs()
}
