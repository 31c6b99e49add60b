//! Occupancy and semantic evaluation metrics.
//!
//! Occupancy IoU collapses every non-empty label into a single occupied
//! class: `IoU = TP_o / (TP_o + FP_o + FN_o)`. Semantic mIoU averages the
//! per-class IoU over classes that appear in either grid; unknown cells count
//! as empty on both sides.

use super::{validate_metric_inputs, OccupancyLabelGrid, EMPTY};
use crate::error::Result;

/// Per-class and occupancy-level confusion tallies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    /// Indexed by class id minus one.
    pub per_class: Vec<ClassCounts>,
    pub occupancy: ClassCounts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ClassCounts {
    pub fn iou(&self) -> Option<f64> {
        let denom = self.tp + self.fp + self.fn_;
        if denom == 0 {
            None
        } else {
            Some(self.tp as f64 / denom as f64)
        }
    }
}

impl ConfusionCounts {
    pub fn from_grids(
        pred: &OccupancyLabelGrid,
        truth: &OccupancyLabelGrid,
        num_classes: u8,
    ) -> Result<Self> {
        validate_metric_inputs(pred, truth)?;
        let mut counts = ConfusionCounts {
            per_class: vec![ClassCounts::default(); num_classes as usize],
            occupancy: ClassCounts::default(),
        };
        for flat in 0..pred.cell_count() {
            let p = pred.effective_label_at(flat);
            let t = truth.effective_label_at(flat);
            match (p != EMPTY, t != EMPTY) {
                (true, true) => counts.occupancy.tp += 1,
                (true, false) => counts.occupancy.fp += 1,
                (false, true) => counts.occupancy.fn_ += 1,
                (false, false) => {}
            }
            for class in 1..=num_classes {
                let entry = &mut counts.per_class[class as usize - 1];
                match (p == class, t == class) {
                    (true, true) => entry.tp += 1,
                    (true, false) => entry.fp += 1,
                    (false, true) => entry.fn_ += 1,
                    (false, false) => {}
                }
            }
        }
        Ok(counts)
    }
}

/// Binary occupied-vs-empty IoU. Two entirely empty grids score 1.
pub fn occupancy_iou(pred: &OccupancyLabelGrid, truth: &OccupancyLabelGrid) -> Result<f64> {
    let counts = ConfusionCounts::from_grids(pred, truth, 0)?;
    Ok(counts.occupancy.iou().unwrap_or(1.0))
}

/// Mean per-class IoU over the `num_classes` semantic classes.
///
/// Classes absent from both grids (TP + FP + FN = 0) are excluded from the
/// mean; if no class appears at all the score is 1.
pub fn semantic_miou(
    pred: &OccupancyLabelGrid,
    truth: &OccupancyLabelGrid,
    num_classes: u8,
) -> Result<f64> {
    let counts = ConfusionCounts::from_grids(pred, truth, num_classes)?;
    let ious: Vec<f64> = counts.per_class.iter().filter_map(|c| c.iou()).collect();
    if ious.is_empty() {
        Ok(1.0)
    } else {
        Ok(ious.iter().sum::<f64>() / ious.len() as f64)
    }
}
