//! Mask-based action-faithfulness metrics.

mod edt;
mod tube;

pub use edt::{distance_transform, squared_distance_transform};
pub use tube::{centerline_mask, tube_mask, DEFAULT_TUBE_HALF_WIDTH};

use serde::Serialize;
use thiserror::Error;

use crate::kinematics::KinematicsError;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction mask is empty")]
    EmptyPrediction,
    #[error("target mask is empty")]
    EmptyTarget,
    #[error("mask sizes differ: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("label {label} at pixel {index} is outside 0..=3")]
    InvalidLabel { index: usize, label: u8 },
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let data = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self { height, width, data }
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Shifts by `(dy, dx)`; pixels moved outside the frame are dropped.
    pub fn translated(&self, dy: isize, dx: isize) -> Self {
        let mut out = Self::empty(self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(y, x) {
                    continue;
                }
                let (ny, nx) = (y as isize + dy, x as isize + dx);
                if (0..self.height as isize).contains(&ny) && (0..self.width as isize).contains(&nx) {
                    out.set(ny as usize, nx as usize, true);
                }
            }
        }
        out
    }

    fn check_size(&self, o: &Self) -> Result<(), MetricsError> {
        if (self.height, self.width) != (o.height, o.width) {
            return Err(MetricsError::SizeMismatch(self.height, self.width, o.height, o.width));
        }
        Ok(())
    }

    fn overlap(&self, o: &Self) -> (usize, usize) {
        let inter = self.data.iter().zip(&o.data).filter(|(a, b)| **a && **b).count();
        let union = self.data.iter().zip(&o.data).filter(|(a, b)| **a || **b).count();
        (inter, union)
    }
}

/// Part labels of one frame: 0 background, 1 shaft, 2 wrist, 3 gripper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskFrame {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u8>,
}

impl MaskFrame {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self, MetricsError> {
        if labels.len() != height * width {
            return Err(MetricsError::SizeMismatch(height, width, labels.len(), 1));
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l > 3) {
            return Err(MetricsError::InvalidLabel { index, label });
        }
        Ok(Self { height, width, labels })
    }

    pub fn part(&self, label: u8) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.labels.iter().map(|&l| l == label).collect(),
        }
    }

    /// Every labelled pixel.
    pub fn union(&self) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.labels.iter().map(|&l| l != 0).collect(),
        }
    }
}

fn mean_distance_to(from: &BinaryMask, dist_sq: &[f64]) -> f64 {
    let (sum, n) = from
        .data
        .iter()
        .zip(dist_sq)
        .filter(|(&on, _)| on)
        .fold((0.0, 0usize), |(s, n), (_, d)| (s + d.sqrt(), n + 1));
    sum / n as f64
}

/// Symmetric Chamfer distance in pixels.
pub fn chamfer(pred: &BinaryMask, target: &BinaryMask) -> Result<f64, MetricsError> {
    pred.check_size(target)?;
    if pred.is_empty() {
        return Err(MetricsError::EmptyPrediction);
    }
    if target.is_empty() {
        return Err(MetricsError::EmptyTarget);
    }
    let to_target = squared_distance_transform(target);
    let to_pred = squared_distance_transform(pred);
    Ok(0.5 * (mean_distance_to(pred, &to_target) + mean_distance_to(target, &to_pred)))
}

/// Intersection over union of consecutive masks; 1 when both are empty.
pub fn temporal_iou(current: &BinaryMask, previous: &BinaryMask) -> Result<f64, MetricsError> {
    current.check_size(previous)?;
    let (inter, union) = current.overlap(previous);
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// `| |P_t| - |P_t-1| | / max(|P_t-1|, 1)`.
pub fn area_flicker(current: &BinaryMask, previous: &BinaryMask) -> Result<f64, MetricsError> {
    current.check_size(previous)?;
    let (a, b) = (current.area() as f64, previous.area() as f64);
    Ok((a - b).abs() / b.max(1.0))
}

/// `2 |A n B| / (|A| + |B|)`; 1 when both are empty.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MetricsError> {
    a.check_size(b)?;
    let (inter, _) = a.overlap(b);
    let total = a.area() + b.area();
    Ok(if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    })
}

/// Mean over valid entries of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    /// `None` when no entry is valid.
    pub mean: Option<f64>,
    pub valid: usize,
    pub skipped: usize,
}

pub fn aggregate(values: &[Option<f64>]) -> Aggregate {
    let valid: Vec<f64> = values.iter().flatten().copied().collect();
    Aggregate {
        mean: (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64),
        valid: valid.len(),
        skipped: values.len() - valid.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub cd: Option<f64>,
    pub ti: Option<f64>,
    pub af: Option<f64>,
    pub dice: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub frames: Vec<FrameMetrics>,
    pub cd: Aggregate,
    pub ti: Aggregate,
    pub af: Aggregate,
    pub dice: Aggregate,
    /// Frames whose prediction and target were both empty; TI and Dice
    /// score them as 1.
    pub both_empty: usize,
}

/// Scores predicted label masks against target tubes.
///
/// Chamfer and Dice compare the instrument mask of each frame with its
/// target; a frame with an empty prediction or target has no Chamfer value.
/// TI and AF compare consecutive predicted masks and are absent at frame 0.
pub fn evaluate(pred: &[MaskFrame], target: &[MaskFrame]) -> Result<MetricsReport, MetricsError> {
    if pred.len() != target.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), target.len()));
    }
    let mut frames = Vec::with_capacity(pred.len());
    let mut both_empty = 0;
    let mut previous: Option<BinaryMask> = None;
    for (t, (p, g)) in pred.iter().zip(target).enumerate() {
        let (pm, gm) = (p.union(), g.union());
        pm.check_size(&gm)?;
        let cd = match chamfer(&pm, &gm) {
            Ok(v) => Some(v),
            Err(MetricsError::EmptyPrediction | MetricsError::EmptyTarget) => None,
            Err(e) => return Err(e),
        };
        if pm.is_empty() && gm.is_empty() {
            both_empty += 1;
        }
        let (ti, af) = match &previous {
            Some(prev) => (Some(temporal_iou(&pm, prev)?), Some(area_flicker(&pm, prev)?)),
            None => (None, None),
        };
        frames.push(FrameMetrics {
            frame: t,
            cd,
            ti,
            af,
            dice: Some(dice(&pm, &gm)?),
        });
        previous = Some(pm);
    }
    let col = |f: fn(&FrameMetrics) -> Option<f64>| aggregate(&frames.iter().map(f).collect::<Vec<_>>());
    Ok(MetricsReport {
        cd: col(|f| f.cd),
        ti: col(|f| f.ti),
        af: col(|f| f.af),
        dice: col(|f| f.dice),
        frames,
        both_empty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(h: usize, w: usize, y0: usize, x0: usize, size: usize) -> BinaryMask {
        BinaryMask::from_fn(h, w, |y, x| {
            (y0..y0 + size).contains(&y) && (x0..x0 + size).contains(&x)
        })
    }

    #[test]
    fn chamfer_examples() {
        let a = block(8, 8, 2, 2, 3);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        let mut p = BinaryMask::empty(10, 10);
        let mut t = BinaryMask::empty(10, 10);
        p.set(1, 1, true);
        t.set(4, 5, true);
        assert_eq!(chamfer(&p, &t).unwrap(), 5.0);
        assert_eq!(
            chamfer(&BinaryMask::empty(10, 10), &t),
            Err(MetricsError::EmptyPrediction)
        );
        assert_eq!(chamfer(&p, &BinaryMask::empty(10, 10)), Err(MetricsError::EmptyTarget));
    }

    #[test]
    fn overlap_examples() {
        let a = block(6, 6, 1, 1, 2);
        let b = block(6, 6, 1, 2, 2);
        assert!((temporal_iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        assert_eq!(temporal_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(temporal_iou(&a, &block(6, 6, 4, 4, 2)).unwrap(), 0.0);
        let e = BinaryMask::empty(6, 6);
        assert_eq!(temporal_iou(&e, &e).unwrap(), 1.0);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
    }

    #[test]
    fn flicker_examples() {
        let a = BinaryMask::from_fn(20, 20, |y, x| y * 20 + x < 100);
        let b = BinaryMask::from_fn(20, 20, |y, x| y * 20 + x < 150);
        assert_eq!(area_flicker(&b, &a).unwrap(), 0.5);
        assert_eq!(area_flicker(&a, &a).unwrap(), 0.0);
        let seven = BinaryMask::from_fn(20, 20, |y, x| y * 20 + x < 7);
        assert_eq!(area_flicker(&seven, &BinaryMask::empty(20, 20)).unwrap(), 7.0);
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[Some(2.0)]).mean, Some(2.0));
        let none = aggregate(&[None, None, None]);
        assert_eq!((none.mean, none.skipped), (None, 3));
        let mixed = aggregate(&[Some(1.0), None, Some(4.0)]);
        assert_eq!((mixed.mean, mixed.valid, mixed.skipped), (Some(2.5), 2, 1));
    }

    #[test]
    fn label_validation() {
        assert!(MaskFrame::new(1, 2, vec![0, 4]).is_err());
        let f = MaskFrame::new(1, 3, vec![0, 1, 3]).unwrap();
        assert_eq!(f.union().area(), 2);
        assert_eq!(f.part(3).area(), 1);
    }

    #[test]
    fn self_evaluation_is_perfect() {
        let frame = MaskFrame::new(2, 2, vec![1, 0, 2, 3]).unwrap();
        let seq = vec![frame; 3];
        let r = evaluate(&seq, &seq).unwrap();
        assert_eq!(r.cd.mean, Some(0.0));
        assert_eq!(r.ti.mean, Some(1.0));
        assert_eq!(r.ti.skipped, 1);
        assert_eq!(r.dice.mean, Some(1.0));
    }
}
