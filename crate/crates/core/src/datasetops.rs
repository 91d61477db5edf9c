//! Dataset statistics and leakage-free train/validation splitting.
//!
//! Frames cut from one recording share a scene group (see
//! [`scene_group_key`]); a split never puts one group on both sides.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::annotations::Dataset;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SplitError {
    #[error("validation fraction must be in (0, 1), got {0}")]
    Fraction(f64),
    #[error("dataset has {0} scene group(s); at least 2 are needed for a split")]
    TooFewGroups(usize),
}

/// Scene group of an image id: the id with a trailing `_<digits>` frame
/// token removed. Ids without such a suffix form their own group.
pub fn scene_group_key(image_id: &str) -> String {
    if let Some((prefix, frame)) = image_id.rsplit_once('_') {
        if !prefix.is_empty() && !frame.is_empty() && frame.bytes().all(|b| b.is_ascii_digit()) {
            return prefix.to_string();
        }
    }
    image_id.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    val_fraction: f64,
    seed: u64,
}

impl SplitConfig {
    pub fn new(val_fraction: f64, seed: u64) -> Result<Self, SplitError> {
        if !(val_fraction > 0.0 && val_fraction < 1.0) {
            return Err(SplitError::Fraction(val_fraction));
        }
        Ok(SplitConfig { val_fraction, seed })
    }

    pub fn val_fraction(&self) -> f64 {
        self.val_fraction
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            val_fraction: 0.2,
            seed: 43,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitResult {
    pub train_ids: BTreeSet<String>,
    pub val_ids: BTreeSet<String>,
}

impl SplitResult {
    /// `train.txt` / `val.txt` contents: one id per line, sorted.
    pub fn to_lists(&self) -> (String, String) {
        let join = |ids: &BTreeSet<String>| {
            let mut s = String::new();
            for id in ids {
                s.push_str(id);
                s.push('\n');
            }
            s
        };
        (join(&self.train_ids), join(&self.val_ids))
    }
}

/// Uniform integer in `0..n` by rejection, so the mapping from generator
/// output to index is fixed and platform independent.
fn uniform_below(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    debug_assert!(n > 0);
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % n;
        }
    }
}

/// Fisher-Yates shuffle driven by ChaCha8 seeded through `seed_from_u64`.
pub fn seeded_shuffle<T>(items: &mut [T], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..items.len()).rev() {
        let j = uniform_below(&mut rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// Image ids per scene group, groups and ids in lexicographic order.
pub fn scene_groups(d: &Dataset) -> BTreeMap<String, Vec<String>> {
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in &d.records {
        groups.entry(r.group_key.clone()).or_default().push(r.image_id.clone());
    }
    groups
}

/// Split by scene group.
///
/// Groups are taken in lexicographic order, shuffled with the seeded
/// generator, and moved to validation until the validation image count
/// first reaches `val_fraction * total`. The last remaining group always
/// stays in training.
pub fn grouped_split(d: &Dataset, cfg: &SplitConfig) -> Result<SplitResult, SplitError> {
    let groups = scene_groups(d);
    if groups.len() < 2 {
        return Err(SplitError::TooFewGroups(groups.len()));
    }
    let mut order: Vec<(&String, &Vec<String>)> = groups.iter().collect();
    seeded_shuffle(&mut order, cfg.seed);

    let total = d.records.len();
    let target = cfg.val_fraction * total as f64;
    let mut val_ids = BTreeSet::new();
    let mut train_ids = BTreeSet::new();
    let mut filling = true;
    for (i, (_, ids)) in order.iter().enumerate() {
        let remaining = order.len() - i;
        if filling && (val_ids.len() as f64) < target && remaining > 1 {
            val_ids.extend(ids.iter().cloned());
        } else {
            filling = false;
            train_ids.extend(ids.iter().cloned());
        }
    }
    Ok(SplitResult { train_ids, val_ids })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsReport {
    pub class_names: Vec<String>,
    pub per_class: Vec<u64>,
    pub total_objects: u64,
    pub total_images: u64,
    pub per_group_images: BTreeMap<String, u64>,
}

impl StatsReport {
    pub fn summary_line(&self) -> String {
        format!(
            "# images={} objects={} classes={} groups={}",
            self.total_images,
            self.total_objects,
            self.class_names.len(),
            self.per_group_images.len()
        )
    }
}

/// Object counts per class over every record.
pub fn class_distribution(d: &Dataset) -> StatsReport {
    distribution_where(d, |_| true)
}

/// Object counts restricted to the listed image ids.
pub fn class_distribution_of(d: &Dataset, ids: &BTreeSet<String>) -> StatsReport {
    distribution_where(d, |id| ids.contains(id))
}

fn distribution_where(d: &Dataset, keep: impl Fn(&str) -> bool) -> StatsReport {
    let k = d.taxonomy.len();
    let mut per_class = vec![0u64; k];
    let mut per_group_images = BTreeMap::new();
    let mut total_images = 0;
    for r in d.records.iter().filter(|r| keep(&r.image_id)) {
        total_images += 1;
        *per_group_images.entry(r.group_key.clone()).or_insert(0) += 1;
        for a in &r.annotations {
            per_class[a.class_id] += 1;
        }
    }
    StatsReport {
        class_names: d.taxonomy.names().to_vec(),
        total_objects: per_class.iter().sum(),
        per_class,
        total_images,
        per_group_images,
    }
}

/// CSV `class_id,class_name,count`, with `train,val` columns when split
/// reports are given, followed by the summary line.
pub fn stats_csv(report: &StatsReport, split: Option<(&StatsReport, &StatsReport)>) -> String {
    let mut out = String::new();
    match split {
        Some(_) => out.push_str("class_id,class_name,count,train,val\n"),
        None => out.push_str("class_id,class_name,count\n"),
    }
    for (i, (name, count)) in report.class_names.iter().zip(&report.per_class).enumerate() {
        let _ = write!(out, "{i},{},{count}", csv_field(name));
        if let Some((train, val)) = split {
            let _ = write!(out, ",{},{}", train.per_class[i], val.per_class[i]);
        }
        out.push('\n');
    }
    out.push_str(&report.summary_line());
    out.push('\n');
    out
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::{Annotation, ClassTaxonomy, ImageRecord, NormBox};

    pub(crate) fn synthetic(groups: usize, per_group: usize) -> Dataset {
        let taxonomy = ClassTaxonomy::new(vec!["car".into(), "bus".into()]).unwrap();
        let mut records = Vec::new();
        for g in 0..groups {
            for f in 0..per_group {
                let id = format!("scene{g:02}_{f}");
                records.push(ImageRecord {
                    group_key: scene_group_key(&id),
                    image_id: id,
                    width: 64,
                    height: 48,
                    annotations: vec![Annotation {
                        class_id: (g + f) % 2,
                        bbox: NormBox::new(0.5, 0.5, 0.2, 0.2).unwrap(),
                    }],
                });
            }
        }
        Dataset::new(taxonomy, records).unwrap()
    }

    #[test]
    fn group_keys() {
        assert_eq!(scene_group_key("dhaka_night1_1121"), "dhaka_night1");
        assert_eq!(scene_group_key("chittagong_bohoddarhat1_826"), "chittagong_bohoddarhat1");
        assert_eq!(scene_group_key("solo"), "solo");
        assert_eq!(scene_group_key("frame_12a"), "frame_12a");
        assert_eq!(scene_group_key("_123"), "_123");
        assert_eq!(scene_group_key("trailing_"), "trailing_");
    }

    #[test]
    fn uniform_groups_give_exact_fraction() {
        let d = synthetic(10, 10);
        let s = grouped_split(&d, &SplitConfig::new(0.2, 43).unwrap()).unwrap();
        assert_eq!(s.val_ids.len(), 20);
        assert_eq!(s.train_ids.len(), 80);
        let val_groups: BTreeSet<_> = s.val_ids.iter().map(|i| scene_group_key(i)).collect();
        let train_groups: BTreeSet<_> = s.train_ids.iter().map(|i| scene_group_key(i)).collect();
        assert_eq!(val_groups.len(), 2);
        assert!(val_groups.is_disjoint(&train_groups));
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let d = synthetic(12, 3);
        let cfg = SplitConfig::new(0.25, 43).unwrap();
        let a = grouped_split(&d, &cfg).unwrap();
        assert_eq!(a, grouped_split(&d, &cfg).unwrap());
        let others: Vec<_> = (0..8)
            .map(|s| grouped_split(&d, &SplitConfig::new(0.25, s).unwrap()).unwrap())
            .collect();
        assert!(others.iter().any(|o| o != &a));
    }

    #[test]
    fn split_errors() {
        assert!(SplitConfig::new(0.0, 1).is_err());
        assert!(SplitConfig::new(1.0, 1).is_err());
        let d = synthetic(1, 5);
        assert_eq!(
            grouped_split(&d, &SplitConfig::default()),
            Err(SplitError::TooFewGroups(1))
        );
    }

    #[test]
    fn train_never_empty() {
        let d = synthetic(2, 4);
        let s = grouped_split(&d, &SplitConfig::new(0.99, 7).unwrap()).unwrap();
        assert_eq!((s.train_ids.len(), s.val_ids.len()), (4, 4));
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut v: Vec<u32> = (0..50).collect();
        seeded_shuffle(&mut v, 43);
        let mut sorted = v.clone();
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }

    #[test]
    fn distribution_counts() {
        let taxonomy = ClassTaxonomy::new(vec!["a".into(), "b".into()]).unwrap();
        let b = NormBox::new(0.5, 0.5, 0.1, 0.1).unwrap();
        let rec = |id: &str, classes: &[usize]| ImageRecord {
            image_id: id.into(),
            width: 10,
            height: 10,
            annotations: classes.iter().map(|&c| Annotation { class_id: c, bbox: b }).collect(),
            group_key: scene_group_key(id),
        };
        let d = Dataset::new(taxonomy.clone(), vec![rec("x_1", &[0, 0]), rec("x_2", &[1])]).unwrap();
        let r = class_distribution(&d);
        assert_eq!(r.per_class, vec![2, 1]);
        assert_eq!(r.total_objects, 3);
        assert_eq!(r.per_group_images.get("x"), Some(&2));

        let empty = Dataset::new(taxonomy, vec![]).unwrap();
        let r = class_distribution(&empty);
        assert_eq!((r.per_class.clone(), r.total_objects, r.total_images), (vec![0, 0], 0, 0));
        assert_eq!(stats_csv(&r, None), "class_id,class_name,count\n0,a,0\n1,b,0\n# images=0 objects=0 classes=2 groups=0\n");
    }
}
