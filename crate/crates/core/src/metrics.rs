//! Overlap metrics, cross-validation folds and fold-level aggregation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BinaryMask;
use crate::seed::rng;

/// Pixel counts behind IoU and Dice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlapCounts {
    pub a: usize,
    pub b: usize,
    pub intersection: usize,
    pub union: usize,
}

pub fn overlap_counts(a: &BinaryMask, b: &BinaryMask) -> Result<OverlapCounts> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.shape(),
            found: b.shape(),
        });
    }
    let mut counts = OverlapCounts {
        a: 0,
        b: 0,
        intersection: 0,
        union: 0,
    };
    for (&x, &y) in a.values().iter().zip(b.values()) {
        counts.a += x as usize;
        counts.b += y as usize;
        counts.intersection += (x && y) as usize;
        counts.union += (x || y) as usize;
    }
    Ok(counts)
}

impl OverlapCounts {
    /// 1.0 when both masks are empty.
    pub fn iou(&self) -> f64 {
        if self.union == 0 {
            1.0
        } else {
            self.intersection as f64 / self.union as f64
        }
    }

    /// 1.0 when both masks are empty.
    pub fn dice(&self) -> f64 {
        if self.a + self.b == 0 {
            1.0
        } else {
            (2 * self.intersection) as f64 / (self.a + self.b) as f64
        }
    }
}

pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    Ok(overlap_counts(a, b)?.iou())
}

pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    Ok(overlap_counts(a, b)?.dice())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub n_folds: usize,
    pub seed: u64,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldSplit {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn members(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

/// Seeded shuffle, then round-robin assignment.
pub fn make_folds<S: AsRef<str>>(ids: &[S], n_folds: usize, seed: u64) -> Result<FoldSplit> {
    if n_folds < 2 {
        return Err(Error::InvalidParams(format!("need at least 2 folds, got {n_folds}")));
    }
    if ids.len() < n_folds {
        return Err(Error::TooFewSamples {
            needed: n_folds,
            got: ids.len(),
        });
    }
    let mut order: Vec<&str> = ids.iter().map(AsRef::as_ref).collect();
    let unique: std::collections::BTreeSet<&str> = order.iter().copied().collect();
    if unique.len() != order.len() {
        return Err(Error::InvalidParams("sample ids must be unique".into()));
    }
    order.shuffle(&mut rng(seed));
    let assignments = order
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), i % n_folds))
        .collect();
    Ok(FoldSplit {
        n_folds,
        seed,
        assignments,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub id: String,
    pub fold: usize,
    pub iou: f64,
    pub dice: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> MeanStd {
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        if lo == hi {
            return MeanStd { mean: lo, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = (values.iter().sum::<f64>() / n).clamp(lo, hi);
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub images: usize,
    pub iou: f64,
    pub dice: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_image: Vec<ImageMetrics>,
    pub per_fold: Vec<FoldMetrics>,
    pub iou: MeanStd,
    pub dice: MeanStd,
}

/// Per-fold means first, then mean and population std across fold means.
/// Images are ordered by id and folds by index, so the result does not
/// depend on input order.
pub fn aggregate(per_image: &[ImageMetrics]) -> Result<MetricsReport> {
    if per_image.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut images = per_image.to_vec();
    images.sort_by(|a, b| a.id.cmp(&b.id).then(a.fold.cmp(&b.fold)));
    let mut folds: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for m in &images {
        let e = folds.entry(m.fold).or_default();
        e.0.push(m.iou);
        e.1.push(m.dice);
    }
    let per_fold: Vec<FoldMetrics> = folds
        .into_iter()
        .map(|(fold, (ious, dices))| FoldMetrics {
            fold,
            images: ious.len(),
            iou: MeanStd::of(&ious).mean,
            dice: MeanStd::of(&dices).mean,
        })
        .collect();
    let fold_ious: Vec<f64> = per_fold.iter().map(|f| f.iou).collect();
    let fold_dices: Vec<f64> = per_fold.iter().map(|f| f.dice).collect();
    Ok(MetricsReport {
        per_image: images,
        iou: MeanStd::of(&fold_ious),
        dice: MeanStd::of(&fold_dices),
        per_fold,
    })
}
