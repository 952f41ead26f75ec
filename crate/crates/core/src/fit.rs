//! Fit scores, fit-score histograms and segmentation/classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BitMask;

/// Percentage of the region of interest covered by the predicted mask.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FitScore(f64);

impl FitScore {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || !(0.0..=100.0).contains(&value) {
            return Err(Error::InvalidValue(format!(
                "fit score {value} outside [0, 100]"
            )));
        }
        Ok(FitScore(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for FitScore {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        FitScore::new(v)
    }
}

impl From<FitScore> for f64 {
    fn from(s: FitScore) -> f64 {
        s.0
    }
}

/// `100 * |pred ∩ roi| / |roi|`, with `pred` the predicted-positive pixels.
pub fn fit_score(pred: &BitMask, roi: &BitMask) -> Result<FitScore> {
    let covered = pred.overlap(roi)?;
    let area = roi.count_ones();
    if area == 0 {
        return Err(Error::EmptyRoi);
    }
    FitScore::new(100.0 * covered as f64 / area as f64)
}

pub const FIT_BINS: usize = 10;

/// Ten-bin fit-score histogram: `[0,10]`, `(10,20]`, ..., `(90,100]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FitHistogram {
    pub bins: [u64; FIT_BINS],
    pub total: u64,
}

impl FitHistogram {
    /// Zero-based bin for a score.
    pub fn bin_of(score: FitScore) -> usize {
        let v = score.value();
        if v <= 10.0 {
            0
        } else {
            ((v / 10.0).ceil() as usize - 1).min(FIT_BINS - 1)
        }
    }

    pub fn add(&mut self, score: FitScore) {
        self.bins[Self::bin_of(score)] += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &FitHistogram) {
        for (a, b) in self.bins.iter_mut().zip(other.bins) {
            *a += b;
        }
        self.total += other.total;
    }

    /// Label of a zero-based bin in the 1-10 ... 91-100 style.
    pub fn bin_label(bin: usize) -> String {
        format!("{}-{}", bin * 10 + 1, (bin + 1) * 10)
    }
}

pub fn bin_scores<I: IntoIterator<Item = FitScore>>(scores: I) -> FitHistogram {
    let mut h = FitHistogram::default();
    for s in scores {
        h.add(s);
    }
    h
}

/// Share (percent) of scores in bins strictly after the 1-based `threshold_bin`.
pub fn share_above(h: &FitHistogram, threshold_bin: usize) -> Result<f64> {
    if h.total == 0 {
        return Err(Error::EmptyInput("fit histogram"));
    }
    let above: u64 = h.bins.iter().skip(threshold_bin.min(FIT_BINS)).sum();
    Ok(100.0 * above as f64 / h.total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegMetrics {
    pub iou: f64,
    pub recall: f64,
    pub accuracy: f64,
}

/// Pixel-level IoU, recall and accuracy; empty-vs-empty counts as perfect.
pub fn segmentation_metrics(pred: &BitMask, gt: &BitMask) -> Result<SegMetrics> {
    pred.same_shape(gt)?;
    let (mut inter, mut union, mut gt_count, mut agree) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        inter += (p && g) as usize;
        union += (p || g) as usize;
        gt_count += g as usize;
        agree += (p == g) as usize;
    }
    let ratio = |n: usize, d: usize| if d == 0 { 1.0 } else { n as f64 / d as f64 };
    Ok(SegMetrics {
        iou: ratio(inter, union),
        recall: ratio(inter, gt_count),
        accuracy: agree as f64 / pred.bits().len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClsMetrics {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

pub fn classification_metrics(tp: u64, fp: u64, tn: u64, fn_: u64) -> Result<ClsMetrics> {
    let total = tp + fp + tn + fn_;
    if total == 0 {
        return Err(Error::EmptyInput("confusion matrix"));
    }
    let ratio = |n: u64, d: u64| if d == 0 { 1.0 } else { n as f64 / d as f64 };
    Ok(ClsMetrics {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        accuracy: (tp + tn) as f64 / total as f64,
        tp,
        fp,
        tn,
        fn_,
    })
}
