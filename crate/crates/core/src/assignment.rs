//! Label assignment between predictions and ground truth.
//!
//! One-to-one: the set-prediction matching cost (class probability, L1 box
//! distance, GIoU) solved exactly with the Hungarian method. Among optimal
//! assignments the lexicographically smallest pair list is returned, which
//! makes the result reproducible and comparable with [`brute_force_assign`].
//!
//! One-to-many: auxiliary assigners ([`max_iou_assign`], [`topk_iou_assign`])
//! that may label several candidates positive for the same target. These
//! only provide training-time supervision; the one-to-one result is what
//! inference uses.

use std::fmt;

use crate::annotations::{Annotation, NormBox};
use crate::geometry::{l1_box_distance, norm_giou, norm_iou};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AssignmentError {
    #[error("invalid cost weights: {0}")]
    InvalidWeights(String),
    #[error("invalid class probabilities: {0}")]
    InvalidProbabilities(String),
    #[error("probability vector has {got} entries, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite cost at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("cost data has {got} entries for a {rows}x{cols} matrix")]
    Shape { rows: usize, cols: usize, got: usize },
    #[error("matrix {rows}x{cols} exceeds brute-force bound {bound}")]
    OracleBound { rows: usize, cols: usize, bound: usize },
    #[error("thresholds must satisfy 0 <= neg ({neg}) <= pos ({pos}) <= 1")]
    Thresholds { pos: f64, neg: f64 },
    #[error("k must be >= 1")]
    ZeroK,
}

/// Weights of the class, L1 and GIoU terms of the matching cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub class: f64,
    pub l1: f64,
    pub giou: f64,
}

impl CostWeights {
    pub fn new(class: f64, l1: f64, giou: f64) -> Result<Self, AssignmentError> {
        let all = [class, l1, giou];
        if !all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(AssignmentError::InvalidWeights(
                "weights must be finite and non-negative".into(),
            ));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(AssignmentError::InvalidWeights("all weights are zero".into()));
        }
        Ok(CostWeights { class, l1, giou })
    }
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            class: 1.0,
            l1: 5.0,
            giou: 2.0,
        }
    }
}

/// A decoder output: a class distribution and a box.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePrediction {
    class_probs: Vec<f64>,
    pub bbox: NormBox,
}

impl CandidatePrediction {
    pub fn new(class_probs: Vec<f64>, bbox: NormBox) -> Result<Self, AssignmentError> {
        if class_probs.is_empty() {
            return Err(AssignmentError::InvalidProbabilities("empty vector".into()));
        }
        if !class_probs.iter().all(|p| p.is_finite() && *p >= 0.0) {
            return Err(AssignmentError::InvalidProbabilities(
                "entries must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = class_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(AssignmentError::InvalidProbabilities(format!(
                "entries sum to {sum}"
            )));
        }
        Ok(CandidatePrediction { class_probs, bbox })
    }

    /// Distribution with `confidence` on `class_id` and the rest spread
    /// evenly over the other classes.
    pub fn from_confidence(
        class_id: usize,
        confidence: f64,
        class_count: usize,
        bbox: NormBox,
    ) -> Result<Self, AssignmentError> {
        if class_id >= class_count {
            return Err(AssignmentError::DimensionMismatch {
                expected: class_count,
                got: class_id + 1,
            });
        }
        let mut probs = vec![0.0; class_count];
        if class_count == 1 {
            probs[0] = 1.0;
        } else {
            let rest = (1.0 - confidence) / (class_count - 1) as f64;
            probs.iter_mut().for_each(|p| *p = rest);
            probs[class_id] = confidence;
        }
        CandidatePrediction::new(probs, bbox)
    }

    pub fn class_probs(&self) -> &[f64] {
        &self.class_probs
    }
}

/// Dense row-major matrix; rows are predictions, columns are targets.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, AssignmentError> {
        if data.len() != rows * cols {
            return Err(AssignmentError::Shape {
                rows,
                cols,
                got: data.len(),
            });
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AssignmentError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(AssignmentError::Shape {
                    rows: rows.len(),
                    cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        CostMatrix::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> CostMatrix {
        CostMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn check_finite(&self) -> Result<(), AssignmentError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(AssignmentError::NonFinite {
                row: i / self.cols,
                col: i % self.cols,
            }),
            None => Ok(()),
        }
    }
}

/// Pairwise matching cost between predictions and targets.
///
/// `cost[i][j] = -w_cls * p_i(c_j) + w_l1 * L1(b_i, b_j) - w_giou * GIoU(b_i, b_j)`,
/// with boxes compared in normalized coordinates.
pub fn match_cost_matrix(
    preds: &[CandidatePrediction],
    targets: &[Annotation],
    w: &CostWeights,
) -> Result<CostMatrix, AssignmentError> {
    let k = preds.first().map_or(0, |p| p.class_probs.len());
    if let Some(p) = preds.iter().find(|p| p.class_probs.len() != k) {
        return Err(AssignmentError::DimensionMismatch {
            expected: k,
            got: p.class_probs.len(),
        });
    }
    if !preds.is_empty() {
        if let Some(t) = targets.iter().find(|t| t.class_id >= k) {
            return Err(AssignmentError::DimensionMismatch {
                expected: k,
                got: t.class_id + 1,
            });
        }
    }
    let mut data = Vec::with_capacity(preds.len() * targets.len());
    for p in preds {
        for t in targets {
            let class_term = -p.class_probs[t.class_id];
            let l1 = l1_box_distance(&p.bbox, &t.bbox);
            let g = -norm_giou(&p.bbox, &t.bbox);
            data.push(w.class * class_term + w.l1 * l1 + w.giou * g);
        }
    }
    CostMatrix::new(preds.len(), targets.len(), data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    /// `(prediction, target)` pairs sorted by prediction index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_predictions: Vec<usize>,
    pub unmatched_targets: Vec<usize>,
    /// Sum of the matched entries, accumulated in pair order.
    pub total_cost: f64,
}

impl AssignmentResult {
    fn from_pairs(cost: &CostMatrix, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        let mut row_used = vec![false; cost.rows];
        let mut col_used = vec![false; cost.cols];
        let mut total_cost = 0.0;
        for &(r, c) in &pairs {
            row_used[r] = true;
            col_used[c] = true;
            total_cost += cost.get(r, c);
        }
        AssignmentResult {
            pairs,
            unmatched_predictions: (0..cost.rows).filter(|&r| !row_used[r]).collect(),
            unmatched_targets: (0..cost.cols).filter(|&c| !col_used[c]).collect(),
            total_cost,
        }
    }
}

impl fmt::Display for AssignmentResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, t) in &self.pairs {
            writeln!(f, "pair {p} {t}")?;
        }
        write!(f, "total_cost {:.6}", self.total_cost)
    }
}

/// Shortest augmenting path Hungarian method on a square matrix.
/// Returns dual potentials `(u, v)` and the row assignment.
fn solve_square(n: usize, a: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    // 1-based arrays; index 0 is the virtual source column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[owner[j] - 1] = j - 1;
    }
    (u[1..].to_vec(), v[1..].to_vec(), row_to_col)
}

/// Try to move `row` onto column `target` in the tight graph while keeping
/// rows `< fixed_upto` in place. On success the matching is updated.
fn reroute(
    tight: &[Vec<usize>],
    row_to_col: &mut [usize],
    col_to_row: &mut [usize],
    row: usize,
    target: usize,
    fixed_upto: usize,
) -> bool {
    let n = row_to_col.len();
    let freed = row_to_col[row];
    let displaced = col_to_row[target];
    if displaced < fixed_upto {
        return false;
    }
    // Search an alternating path from `displaced` to `freed` avoiding fixed rows.
    let mut visited = vec![false; n];
    let mut path: Vec<(usize, usize)> = Vec::new();
    #[allow(clippy::too_many_arguments)]
    fn dfs(
        r: usize,
        freed: usize,
        tight: &[Vec<usize>],
        col_to_row: &[usize],
        blocked_col: usize,
        fixed_upto: usize,
        visited: &mut [bool],
        path: &mut Vec<(usize, usize)>,
    ) -> bool {
        for &c in &tight[r] {
            if c == blocked_col || visited[c] {
                continue;
            }
            visited[c] = true;
            if c == freed {
                path.push((r, c));
                return true;
            }
            let next = col_to_row[c];
            if next < fixed_upto {
                continue;
            }
            if dfs(next, freed, tight, col_to_row, blocked_col, fixed_upto, visited, path) {
                path.push((r, c));
                return true;
            }
        }
        false
    }
    if !dfs(displaced, freed, tight, col_to_row, target, fixed_upto, &mut visited, &mut path) {
        return false;
    }
    for (r, c) in path {
        row_to_col[r] = c;
        col_to_row[c] = r;
    }
    row_to_col[row] = target;
    col_to_row[target] = row;
    true
}

/// Minimum-cost assignment of `min(rows, cols)` pairs.
///
/// Rectangular inputs are padded to a square with a constant filler, which
/// every perfect matching pays the same number of times, so padding never
/// changes which real pairs are optimal. After solving, the matching is
/// walked row by row and moved to the smallest optimal column available,
/// giving the lexicographically smallest optimal pair list.
pub fn hungarian(cost: &CostMatrix) -> Result<AssignmentResult, AssignmentError> {
    cost.check_finite()?;
    if cost.rows == 0 || cost.cols == 0 {
        return Ok(AssignmentResult::from_pairs(cost, Vec::new()));
    }
    let n = cost.rows.max(cost.cols);
    let scale = cost.data.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let pad = 0.0;
    let mut a = vec![pad; n * n];
    for r in 0..cost.rows {
        a[r * n..r * n + cost.cols].copy_from_slice(&cost.data[r * cost.cols..(r + 1) * cost.cols]);
    }
    let (u, v, mut row_to_col) = solve_square(n, &a);

    // Edges with zero reduced cost are exactly those used by optimal matchings.
    let tol = 1e-9 * scale * n as f64;
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| a[i * n + j] - u[i] - v[j] <= tol).collect())
        .collect();
    let mut col_to_row = vec![0usize; n];
    for (r, &c) in row_to_col.iter().enumerate() {
        col_to_row[c] = r;
    }
    for row in 0..cost.rows {
        for &c in &tight[row] {
            if c == row_to_col[row] {
                break;
            }
            if reroute(&tight, &mut row_to_col, &mut col_to_row, row, c, row) {
                break;
            }
        }
    }
    let pairs = (0..cost.rows)
        .filter(|&r| row_to_col[r] < cost.cols)
        .map(|r| (r, row_to_col[r]))
        .collect();
    Ok(AssignmentResult::from_pairs(cost, pairs))
}

/// Largest dimension [`brute_force_assign`] accepts.
pub const BRUTE_FORCE_MAX_DIM: usize = 8;

/// Exhaustive search over all injections; same objective and tie-break as
/// [`hungarian`]. Used as a reference.
pub fn brute_force_assign(cost: &CostMatrix) -> Result<AssignmentResult, AssignmentError> {
    if cost.rows.max(cost.cols) > BRUTE_FORCE_MAX_DIM {
        return Err(AssignmentError::OracleBound {
            rows: cost.rows,
            cols: cost.cols,
            bound: BRUTE_FORCE_MAX_DIM,
        });
    }
    cost.check_finite()?;
    let transpose = cost.rows > cost.cols;
    let (short, long) = if transpose {
        (cost.cols, cost.rows)
    } else {
        (cost.rows, cost.cols)
    };
    let mut best: Option<(f64, Vec<(usize, usize)>)> = None;
    let mut choice = vec![0usize; short];
    let mut used = vec![false; long];

    #[allow(clippy::too_many_arguments)]
    fn visit(
        depth: usize,
        short: usize,
        long: usize,
        transpose: bool,
        cost: &CostMatrix,
        choice: &mut Vec<usize>,
        used: &mut Vec<bool>,
        best: &mut Option<(f64, Vec<(usize, usize)>)>,
    ) {
        if depth == short {
            let mut pairs: Vec<(usize, usize)> = (0..short)
                .map(|s| if transpose { (choice[s], s) } else { (s, choice[s]) })
                .collect();
            pairs.sort_unstable();
            let total: f64 = pairs.iter().fold(0.0, |acc, &(r, c)| acc + cost.get(r, c));
            let better = match best {
                None => true,
                Some((b, bp)) => total < *b || (total == *b && pairs < *bp),
            };
            if better {
                *best = Some((total, pairs));
            }
            return;
        }
        for l in 0..long {
            if used[l] {
                continue;
            }
            used[l] = true;
            choice[depth] = l;
            visit(depth + 1, short, long, transpose, cost, choice, used, best);
            used[l] = false;
        }
    }

    visit(0, short, long, transpose, cost, &mut choice, &mut used, &mut best);
    let pairs = best.map(|(_, p)| p).unwrap_or_default();
    Ok(AssignmentResult::from_pairs(cost, pairs))
}

/// Per-candidate label from a one-to-many assigner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateLabel {
    Positive(usize),
    Negative,
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneToManyLabels {
    pub labels: Vec<CandidateLabel>,
}

impl OneToManyLabels {
    pub fn positives_for(&self, target: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == CandidateLabel::Positive(target))
            .map(|(i, _)| i)
            .collect()
    }
}

fn iou_table(candidates: &[NormBox], targets: &[Annotation]) -> Vec<Vec<f64>> {
    candidates
        .iter()
        .map(|c| targets.iter().map(|t| norm_iou(c, &t.bbox)).collect())
        .collect()
}

/// Max-IoU assigner with positive/negative thresholds.
///
/// With `force_match`, every target additionally claims its best candidate
/// (lowest index on ties). When two targets claim the same candidate the
/// one with the higher IoU wins, lower target index on ties.
pub fn max_iou_assign(
    candidates: &[NormBox],
    targets: &[Annotation],
    pos_thr: f64,
    neg_thr: f64,
    force_match: bool,
) -> Result<OneToManyLabels, AssignmentError> {
    if !(0.0 <= neg_thr && neg_thr <= pos_thr && pos_thr <= 1.0) {
        return Err(AssignmentError::Thresholds {
            pos: pos_thr,
            neg: neg_thr,
        });
    }
    let ious = iou_table(candidates, targets);
    let mut labels: Vec<CandidateLabel> = ious
        .iter()
        .map(|row| {
            let best = row
                .iter()
                .enumerate()
                .fold(None::<(usize, f64)>, |acc, (j, &x)| match acc {
                    Some((_, b)) if x <= b => acc,
                    _ => Some((j, x)),
                });
            match best {
                Some((j, x)) if x >= pos_thr => CandidateLabel::Positive(j),
                Some((_, x)) if x >= neg_thr => CandidateLabel::Ignore,
                _ => CandidateLabel::Negative,
            }
        })
        .collect();

    if force_match && !candidates.is_empty() {
        let mut forced: Vec<Option<(usize, f64)>> = vec![None; candidates.len()];
#[allow(clippy::needless_range_loop)]
        for t in 0..targets.len() {
            let mut best = 0;
            for c in 1..candidates.len() {
                if ious[c][t] > ious[best][t] {
                    best = c;
                }
            }
            let x = ious[best][t];
            match forced[best] {
                Some((_, prev)) if prev >= x => {}
                _ => forced[best] = Some((t, x)),
            }
        }
        for (c, f) in forced.into_iter().enumerate() {
            if let Some((t, _)) = f {
                labels[c] = CandidateLabel::Positive(t);
            }
        }
    }
    Ok(OneToManyLabels { labels })
}

/// Top-k assigner: each target takes its `k` best overlapping candidates.
/// A candidate claimed by several targets keeps the one it overlaps most
/// (lowest target index on ties). Everything else is negative.
pub fn topk_iou_assign(
    candidates: &[NormBox],
    targets: &[Annotation],
    k: usize,
) -> Result<OneToManyLabels, AssignmentError> {
    if k == 0 {
        return Err(AssignmentError::ZeroK);
    }
    let ious = iou_table(candidates, targets);
    let mut claim: Vec<Option<(usize, f64)>> = vec![None; candidates.len()];
#[allow(clippy::needless_range_loop)]
    for t in 0..targets.len() {
        let mut order: Vec<usize> = (0..candidates.len()).filter(|&c| ious[c][t] > 0.0).collect();
        order.sort_by(|&a, &b| ious[b][t].total_cmp(&ious[a][t]).then(a.cmp(&b)));
        for &c in order.iter().take(k) {
            let x = ious[c][t];
            match claim[c] {
                Some((_, prev)) if prev >= x => {}
                _ => claim[c] = Some((t, x)),
            }
        }
    }
    Ok(OneToManyLabels {
        labels: claim
            .into_iter()
            .map(|c| c.map_or(CandidateLabel::Negative, |(t, _)| CandidateLabel::Positive(t)))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn nb(cx: f64, cy: f64, w: f64, h: f64) -> NormBox {
        NormBox::new(cx, cy, w, h).unwrap()
    }

    fn ann(class_id: usize, b: NormBox) -> Annotation {
        Annotation { class_id, bbox: b }
    }

    #[test]
    fn hungarian_examples() {
        let r = hungarian(&m(&[&[0.0, 9.0], &[9.0, 0.0]])).unwrap();
        assert_eq!((r.pairs.clone(), r.total_cost), (vec![(0, 0), (1, 1)], 0.0));
        let r = hungarian(&m(&[&[1.0, 2.0], &[2.0, 4.0]])).unwrap();
        assert_eq!((r.pairs.clone(), r.total_cost), (vec![(0, 1), (1, 0)], 4.0));
        let r = hungarian(&m(&[&[4.0, 2.0, 3.0], &[2.0, 0.0, 6.0]])).unwrap();
        assert_eq!((r.pairs.clone(), r.total_cost), (vec![(0, 2), (1, 1)], 3.0));
        assert_eq!(r.unmatched_targets, vec![0]);
    }

    #[test]
    fn hungarian_ties_pick_smallest_pairs() {
        let r = hungarian(&m(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap();
        assert_eq!(r.pairs, vec![(0, 0), (1, 1)]);
        let r = hungarian(&m(&[&[5.0], &[5.0], &[5.0]])).unwrap();
        assert_eq!(r.pairs, vec![(0, 0)]);
        assert_eq!(r.unmatched_predictions, vec![1, 2]);
    }

    #[test]
    fn hungarian_rejects_non_finite() {
        let err = hungarian(&m(&[&[1.0, f64::NAN]])).unwrap_err();
        assert_eq!(err, AssignmentError::NonFinite { row: 0, col: 1 });
    }

    #[test]
    fn empty_matrices() {
        let empty = CostMatrix::new(3, 0, vec![]).unwrap();
        for r in [hungarian(&empty).unwrap(), brute_force_assign(&empty).unwrap()] {
            assert!(r.pairs.is_empty());
            assert_eq!(r.unmatched_predictions, vec![0, 1, 2]);
            assert_eq!(r.total_cost, 0.0);
        }
    }

    #[test]
    fn brute_force_basics() {
        let r = brute_force_assign(&m(&[&[-2.5]])).unwrap();
        assert_eq!(r.pairs, vec![(0, 0)]);
        let big = CostMatrix::new(9, 1, vec![0.0; 9]).unwrap();
        assert!(matches!(brute_force_assign(&big), Err(AssignmentError::OracleBound { .. })));
    }

    #[test]
    fn perfect_prediction_cost() {
        let b = nb(0.4, 0.6, 0.2, 0.3);
        let p = CandidatePrediction::new(vec![0.0, 1.0, 0.0], b).unwrap();
        let c = match_cost_matrix(&[p], &[ann(1, b)], &CostWeights::default()).unwrap();
        assert!((c.get(0, 0) + 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_term_cost_and_weight_validation() {
        assert!(CostWeights::new(0.0, 0.0, 0.0).is_err());
        assert!(CostWeights::new(-1.0, 1.0, 0.0).is_err());
        let b = nb(0.5, 0.5, 0.2, 0.2);
        let p = CandidatePrediction::new(vec![1.0, 0.0], b).unwrap();
        let w = CostWeights::new(1.0, 0.0, 0.0).unwrap();
        let c = match_cost_matrix(&[p], &[ann(1, nb(0.1, 0.1, 0.1, 0.1))], &w).unwrap();
        assert_eq!(c.get(0, 0), 0.0);
    }

    #[test]
    fn cost_scales_linearly() {
        let p = CandidatePrediction::new(vec![0.3, 0.7], nb(0.5, 0.5, 0.3, 0.2)).unwrap();
        let t = [ann(0, nb(0.45, 0.5, 0.25, 0.3)), ann(1, nb(0.2, 0.2, 0.1, 0.1))];
        let w = CostWeights::default();
        let w3 = CostWeights::new(3.0, 15.0, 6.0).unwrap();
        let a = match_cost_matrix(std::slice::from_ref(&p), &t, &w).unwrap();
        let b = match_cost_matrix(&[p], &t, &w3).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((3.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn probability_checks() {
        let b = nb(0.5, 0.5, 0.2, 0.2);
        assert!(CandidatePrediction::new(vec![0.5, 0.4], b).is_err());
        assert!(CandidatePrediction::new(vec![1.5, -0.5], b).is_err());
        let p1 = CandidatePrediction::new(vec![1.0], b).unwrap();
        let p2 = CandidatePrediction::new(vec![0.5, 0.5], b).unwrap();
        assert!(matches!(
            match_cost_matrix(&[p1, p2], &[], &CostWeights::default()),
            Err(AssignmentError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn max_iou_examples() {
        let t = [ann(0, nb(0.5, 0.5, 0.2, 0.2))];
        let c = [nb(0.5, 0.5, 0.2, 0.2)];
        let l = max_iou_assign(&c, &t, 0.5, 0.4, false).unwrap();
        assert_eq!(l.labels, vec![CandidateLabel::Positive(0)]);

        // IoU of (0.5,0.5,0.2,0.2) with (0.6,0.5,0.2,0.2) is 1/3 ~ 0.333
        let c = [nb(0.6, 0.5, 0.2, 0.2)];
        let l = max_iou_assign(&c, &t, 0.5, 0.4, false).unwrap();
        assert_eq!(l.labels, vec![CandidateLabel::Negative]);
        assert!(max_iou_assign(&c, &t, 0.3, 0.4, false).is_err());
    }

    #[test]
    fn force_match_promotes_best_candidate() {
        // candidate 0: IoU 1/3 with the target; candidate 1: disjoint
        let t = [ann(0, nb(0.5, 0.5, 0.2, 0.2))];
        let c = [nb(0.6, 0.5, 0.2, 0.2), nb(0.1, 0.1, 0.1, 0.1)];
        let off = max_iou_assign(&c, &t, 0.5, 0.4, false).unwrap();
        assert_eq!(off.labels, vec![CandidateLabel::Negative, CandidateLabel::Negative]);
        let on = max_iou_assign(&c, &t, 0.5, 0.4, true).unwrap();
        assert_eq!(on.labels, vec![CandidateLabel::Positive(0), CandidateLabel::Negative]);
    }

    #[test]
    fn ignore_band() {
        let t = [ann(0, nb(0.5, 0.5, 0.2, 0.2))];
        let c = [nb(0.55, 0.5, 0.2, 0.2)]; // IoU 0.6
        let l = max_iou_assign(&c, &t, 0.7, 0.5, false).unwrap();
        assert_eq!(l.labels, vec![CandidateLabel::Ignore]);
    }

    #[test]
    fn topk_examples() {
        let t = [ann(0, nb(0.25, 0.5, 0.2, 0.2)), ann(1, nb(0.75, 0.5, 0.2, 0.2))];
        let c = [nb(0.25, 0.5, 0.2, 0.2), nb(0.75, 0.5, 0.2, 0.2)];
        let l = topk_iou_assign(&c, &t, 1).unwrap();
        assert_eq!(l.labels, vec![CandidateLabel::Positive(0), CandidateLabel::Positive(1)]);

        let t = [ann(0, nb(0.5, 0.5, 0.2, 0.2))];
        let c = [nb(0.52, 0.5, 0.2, 0.2), nb(0.48, 0.5, 0.2, 0.2), nb(0.1, 0.1, 0.1, 0.1)];
        let l = topk_iou_assign(&c, &t, 3).unwrap();
        assert_eq!(l.positives_for(0), vec![0, 1]);
        assert_eq!(l.labels[2], CandidateLabel::Negative);
        assert!(topk_iou_assign(&c, &t, 0).is_err());
    }

    #[test]
    fn topk_candidate_keeps_best_target() {
        // candidate spans x in [0.4, 0.6]; targets overlap it 0.6 and 0.4 of its width
        let c = [nb(0.5, 0.5, 0.2, 0.2)];
        let t0 = ann(0, nb(0.52, 0.5, 0.2, 0.2)); // IoU 0.18/0.22 ~ 0.818
        let t1 = ann(1, nb(0.56, 0.5, 0.2, 0.2)); // IoU 0.14/0.26 ~ 0.538
        let l = topk_iou_assign(&c, &[t1, t0], 1).unwrap();
        assert_eq!(l.labels, vec![CandidateLabel::Positive(1)]);
    }

    #[test]
    fn one_to_many_allows_shared_target() {
        let t = [ann(0, nb(0.5, 0.5, 0.4, 0.4))];
        let c = [nb(0.5, 0.5, 0.4, 0.4), nb(0.51, 0.5, 0.4, 0.4), nb(0.49, 0.5, 0.4, 0.4)];
        let l = max_iou_assign(&c, &t, 0.5, 0.4, true).unwrap();
        assert_eq!(l.positives_for(0).len(), 3);
    }
}
