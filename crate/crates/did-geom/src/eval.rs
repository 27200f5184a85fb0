//! KITTI-style evaluation: difficulty stratification, greedy matching at a
//! rotated-IoU threshold, and AP|R40 for BEV and 3D detection.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::geometry::{iou_3d, iou_bev, Box3D};
use crate::kitti::ObjectLabel;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("ground-truth and detection frame ids do not align: {0}")]
    FrameMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DifficultyLevel {
    Easy,
    Moderate,
    Hard,
    Ignored,
}

impl DifficultyLevel {
    pub const SCORED: [DifficultyLevel; 3] = [
        DifficultyLevel::Easy,
        DifficultyLevel::Moderate,
        DifficultyLevel::Hard,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DifficultyLevel::Easy => "easy",
            DifficultyLevel::Moderate => "moderate",
            DifficultyLevel::Hard => "hard",
            DifficultyLevel::Ignored => "ignored",
        }
    }
}

/// KITTI benchmark thresholds, configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyThresholds {
    pub min_height: [f64; 3],
    pub max_occlusion: [i32; 3],
    pub max_truncation: [f64; 3],
}

impl Default for DifficultyThresholds {
    fn default() -> Self {
        Self {
            min_height: [40.0, 25.0, 25.0],
            max_occlusion: [0, 1, 2],
            max_truncation: [0.15, 0.30, 0.50],
        }
    }
}

pub fn assign_difficulty(label: &ObjectLabel, thr: &DifficultyThresholds) -> DifficultyLevel {
    let height = label.box2d_height();
    for (i, level) in DifficultyLevel::SCORED.iter().enumerate() {
        if height >= thr.min_height[i]
            && label.occlusion <= thr.max_occlusion[i]
            && label.truncation <= thr.max_truncation[i]
        {
            return *level;
        }
    }
    DifficultyLevel::Ignored
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Bev,
    ThreeD,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Bev => "bev",
            Metric::ThreeD => "3d",
        }
    }

    fn iou(&self, a: &Box3D, b: &Box3D) -> f64 {
        match self {
            Metric::Bev => iou_bev(a, b).unwrap_or(0.0),
            Metric::ThreeD => iou_3d(a, b).unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetFlag {
    TruePositive,
    FalsePositive,
    /// Matched an out-of-slice GT; neither TP nor FP.
    Ignored,
}

#[derive(Debug, Clone)]
pub struct FrameMatch {
    /// One flag per detection, in descending-score order.
    pub flags: Vec<(f64, DetFlag)>,
    /// Number of GTs active for the scored slice.
    pub num_gt: usize,
}

/// Greedy matching for one frame, category, and difficulty slice. GTs of an
/// easier or equal difficulty are active; harder and Ignored GTs only absorb
/// detections without counting. Equal-score ties keep stable input order.
pub fn match_frame(
    dets: &[ObjectLabel],
    gts: &[ObjectLabel],
    metric: Metric,
    threshold: f64,
    category: &str,
    difficulty: DifficultyLevel,
    thr: &DifficultyThresholds,
) -> FrameMatch {
    let gt_slice: Vec<(usize, bool)> = gts
        .iter()
        .enumerate()
        .filter(|(_, g)| g.category == category)
        .map(|(i, g)| (i, assign_difficulty(g, thr) <= difficulty))
        .collect();
    let num_gt = gt_slice.iter().filter(|(_, active)| *active).count();

    let mut order: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].category == category)
        .collect();
    order.sort_by(|&a, &b| {
        let sa = dets[a].score.unwrap_or(0.0);
        let sb = dets[b].score.unwrap_or(0.0);
        sb.partial_cmp(&sa).unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut gt_taken = vec![false; gts.len()];
    let mut flags = Vec::with_capacity(order.len());
    for &di in &order {
        let det_box = Box3D::from_label(&dets[di]);
        let mut best_active: Option<(usize, f64)> = None;
        let mut ignored_hit = false;
        for &(gi, active) in &gt_slice {
            if gt_taken[gi] {
                continue;
            }
            let iou = metric.iou(&det_box, &Box3D::from_label(&gts[gi]));
            if iou < threshold {
                continue;
            }
            if active {
                if best_active.map_or(true, |(_, b)| iou > b) {
                    best_active = Some((gi, iou));
                }
            } else {
                ignored_hit = true;
            }
        }
        let flag = if let Some((gi, _)) = best_active {
            gt_taken[gi] = true;
            DetFlag::TruePositive
        } else if ignored_hit {
            DetFlag::Ignored
        } else {
            DetFlag::FalsePositive
        };
        flags.push((dets[di].score.unwrap_or(0.0), flag));
    }
    FrameMatch { flags, num_gt }
}

pub const RECALL_POINTS: usize = 40;

/// AP|R40 from pooled per-detection flags. Returns (ap, 40 interpolated
/// precisions, no_gt flag); zero GTs report AP 0 with the flag set.
pub fn ap40(pooled: &[(f64, DetFlag)], num_gt: usize) -> (f64, Vec<f64>, bool) {
    if num_gt == 0 {
        return (0.0, vec![0.0; RECALL_POINTS], true);
    }
    let mut order: Vec<usize> = (0..pooled.len())
        .filter(|&i| pooled[i].1 != DetFlag::Ignored)
        .collect();
    order.sort_by(|&a, &b| {
        pooled[b]
            .0
            .partial_cmp(&pooled[a].0)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut curve: Vec<(f64, f64)> = Vec::with_capacity(order.len()); // (recall, precision)
    for &i in &order {
        match pooled[i].1 {
            DetFlag::TruePositive => tp += 1,
            DetFlag::FalsePositive => fp += 1,
            DetFlag::Ignored => unreachable!(),
        }
        curve.push((
            tp as f64 / num_gt as f64,
            tp as f64 / (tp + fp) as f64,
        ));
    }
    let mut precisions = Vec::with_capacity(RECALL_POINTS);
    for k in 1..=RECALL_POINTS {
        let r = k as f64 / RECALL_POINTS as f64;
        let p = curve
            .iter()
            .filter(|(rec, _)| *rec >= r - 1e-12)
            .map(|(_, prec)| *prec)
            .fold(0.0f64, f64::max);
        precisions.push(p);
    }
    let ap = precisions.iter().sum::<f64>() / RECALL_POINTS as f64;
    (ap, precisions, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub metrics: Vec<Metric>,
    /// IoU criterion per category; categories absent here use `default_iou`.
    pub iou_per_category: BTreeMap<String, f64>,
    pub default_iou: f64,
    pub thresholds: DifficultyThresholds,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let mut iou = BTreeMap::new();
        iou.insert("Car".to_string(), 0.7);
        iou.insert("Pedestrian".to_string(), 0.5);
        iou.insert("Cyclist".to_string(), 0.5);
        Self {
            metrics: vec![Metric::Bev, Metric::ThreeD],
            iou_per_category: iou,
            default_iou: 0.7,
            thresholds: DifficultyThresholds::default(),
        }
    }
}

impl EvalConfig {
    pub fn iou_for(&self, category: &str) -> f64 {
        *self
            .iou_per_category
            .get(category)
            .unwrap_or(&self.default_iou)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub category: String,
    pub difficulty: String,
    pub metric: String,
    pub iou_threshold: f64,
    pub ap: f64,
    pub precisions: Vec<f64>,
    pub no_gt: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub entries: Vec<EvalEntry>,
}

impl EvalReport {
    pub fn entry(&self, category: &str, difficulty: &str, metric: &str) -> Option<&EvalEntry> {
        self.entries
            .iter()
            .find(|e| e.category == category && e.difficulty == difficulty && e.metric == metric)
    }

    /// Aligned text table, one row per (category, metric).
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:<5} {:>5}  {:>8} {:>8} {:>8}\n",
            "category", "metric", "iou", "easy", "moderate", "hard"
        ));
        let mut keys: Vec<(String, String, f64)> = self
            .entries
            .iter()
            .map(|e| (e.category.clone(), e.metric.clone(), e.iou_threshold))
            .collect();
        keys.dedup();
        for (cat, metric, iou) in keys {
            let ap = |d: &str| {
                self.entry(&cat, d, &metric)
                    .map(|e| format!("{:8.4}", e.ap))
                    .unwrap_or_else(|| "       -".into())
            };
            out.push_str(&format!(
                "{:<12} {:<5} {:>5.2}  {} {} {}\n",
                cat,
                metric,
                iou,
                ap("easy"),
                ap("moderate"),
                ap("hard")
            ));
        }
        out
    }
}

/// Frames keyed by id; deterministic over input ordering.
pub fn evaluate(
    gt_frames: &BTreeMap<String, Vec<ObjectLabel>>,
    det_frames: &BTreeMap<String, Vec<ObjectLabel>>,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    for id in det_frames.keys() {
        if !gt_frames.contains_key(id) {
            return Err(EvalError::FrameMismatch(id.clone()));
        }
    }
    let mut categories: Vec<String> = gt_frames
        .values()
        .flatten()
        .map(|l| l.category.clone())
        .collect();
    categories.sort();
    categories.dedup();

    let mut entries = Vec::new();
    for category in &categories {
        let threshold = config.iou_for(category);
        for metric in &config.metrics {
            for difficulty in DifficultyLevel::SCORED {
                let mut pooled = Vec::new();
                let mut num_gt = 0usize;
                for (id, gts) in gt_frames {
                    let empty = Vec::new();
                    let dets = det_frames.get(id).unwrap_or(&empty);
                    let fm = match_frame(
                        dets,
                        gts,
                        *metric,
                        threshold,
                        category,
                        difficulty,
                        &config.thresholds,
                    );
                    num_gt += fm.num_gt;
                    pooled.extend(fm.flags);
                }
                let (ap, precisions, no_gt) = ap40(&pooled, num_gt);
                entries.push(EvalEntry {
                    category: category.clone(),
                    difficulty: difficulty.name().to_string(),
                    metric: metric.name().to_string(),
                    iou_threshold: threshold,
                    ap,
                    precisions,
                    no_gt,
                });
            }
        }
    }
    Ok(EvalReport { entries })
}
