//! Benchmark-style metrics: per-angle pose MAE, normalized mean landmark
//! error, and detection average precision.

use serde::{Deserialize, Serialize};

use crate::camera::BBox;
use crate::detection::{iou, Detection};
use crate::error::{Error, Result};
use crate::rotation::{matrix_to_euler, RotationMatrix};
use crate::scalar::Real;

/// Mean absolute per-angle pose errors, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorReport<T> {
    pub mae_yaw: T,
    pub mae_pitch: T,
    pub mae_roll: T,
    pub mae_mean: T,
}

impl<T: Real> PoseErrorReport<T> {
    pub fn to_degrees(&self) -> PoseErrorReport<T> {
        let k = T::c(180.0) / T::PI();
        PoseErrorReport {
            mae_yaw: self.mae_yaw * k,
            mae_pitch: self.mae_pitch * k,
            mae_roll: self.mae_roll * k,
            mae_mean: self.mae_mean * k,
        }
    }
}

fn wrap_to_pi<T: Real>(x: T) -> T {
    let pi = T::PI();
    let tau = pi + pi;
    let mut a = x % tau;
    if a > pi {
        a -= tau;
    } else if a <= -pi {
        a += tau;
    }
    a
}

/// Mean absolute yaw/pitch/roll error over paired rotations. Differences
/// are wrapped to (-pi, pi] before taking magnitudes, so angles straddling
/// the +-pi seam compare correctly.
pub fn pose_mae<T: Real>(
    preds: &[RotationMatrix<T>],
    gts: &[RotationMatrix<T>],
) -> Result<PoseErrorReport<T>> {
    if preds.len() != gts.len() {
        return Err(Error::ShapeMismatch {
            what: "pose pairs",
            expected: gts.len(),
            got: preds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::invalid("preds", "need at least one pair"));
    }
    let mut sums = [T::zero(); 3];
    for (p, g) in preds.iter().zip(gts) {
        let ep = matrix_to_euler(p);
        let eg = matrix_to_euler(g);
        sums[0] += wrap_to_pi(ep.yaw - eg.yaw).abs();
        sums[1] += wrap_to_pi(ep.pitch - eg.pitch).abs();
        sums[2] += wrap_to_pi(ep.roll - eg.roll).abs();
    }
    let n = T::from_usize(preds.len()).unwrap();
    let mae_yaw = sums[0] / n;
    let mae_pitch = sums[1] / n;
    let mae_roll = sums[2] / n;
    Ok(PoseErrorReport {
        mae_yaw,
        mae_pitch,
        mae_roll,
        mae_mean: (mae_yaw + mae_pitch + mae_roll) / T::c(3.0),
    })
}

/// Normalized mean landmark error: mean Euclidean distance divided by
/// `sqrt(w * h)` of the ground-truth box.
pub fn nme<T: Real>(pred2d: &[[T; 2]], gt2d: &[[T; 2]], gt_bbox: &BBox<T>) -> Result<T> {
    if pred2d.len() != gt2d.len() {
        return Err(Error::ShapeMismatch {
            what: "landmarks",
            expected: gt2d.len(),
            got: pred2d.len(),
        });
    }
    if pred2d.is_empty() {
        return Err(Error::invalid("pred2d", "need at least one landmark"));
    }
    let area = gt_bbox.area();
    if !(area > T::zero()) {
        return Err(Error::invalid("gt_bbox", "zero-area box"));
    }
    let mut sum = T::zero();
    for (p, g) in pred2d.iter().zip(gt2d) {
        let dx = p[0] - g[0];
        let dy = p[1] - g[1];
        sum += (dx * dx + dy * dy).sqrt();
    }
    Ok(sum / T::from_usize(pred2d.len()).unwrap() / area.sqrt())
}

/// Detection average precision at an IoU threshold.
///
/// Detections are pooled across images and sorted by descending confidence
/// (stable). Each detection greedily matches the unmatched ground-truth box
/// of its image with the highest IoU at or above the threshold (ties by
/// smaller index); the precision-recall curve is integrated with all-point
/// interpolation (precision envelope). AP is 0 when no ground truth exists.
pub fn average_precision<T: Real>(
    dets_per_image: &[Vec<Detection<T>>],
    gts_per_image: &[Vec<BBox<T>>],
    iou_threshold: T,
) -> Result<T> {
    if dets_per_image.len() != gts_per_image.len() {
        return Err(Error::ShapeMismatch {
            what: "images",
            expected: gts_per_image.len(),
            got: dets_per_image.len(),
        });
    }
    let total_gt: usize = gts_per_image.iter().map(|g| g.len()).sum();
    if total_gt == 0 {
        return Ok(T::zero());
    }

    let mut pool: Vec<(usize, usize)> = Vec::new();
    for (img, dets) in dets_per_image.iter().enumerate() {
        for di in 0..dets.len() {
            pool.push((img, di));
        }
    }
    pool.sort_by(|&(ia, da), &(ib, db)| {
        dets_per_image[ib][db]
            .confidence
            .partial_cmp(&dets_per_image[ia][da].confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut matched: Vec<Vec<bool>> = gts_per_image.iter().map(|g| vec![false; g.len()]).collect();
    let mut is_tp = Vec::with_capacity(pool.len());
    for &(img, di) in &pool {
        let det = &dets_per_image[img][di];
        let mut best: Option<(usize, T)> = None;
        for (gi, gt) in gts_per_image[img].iter().enumerate() {
            if matched[img][gi] {
                continue;
            }
            let overlap = iou(&det.bbox, gt);
            if overlap >= iou_threshold {
                let better = match best {
                    None => true,
                    Some((_, b)) => overlap > b,
                };
                if better {
                    best = Some((gi, overlap));
                }
            }
        }
        match best {
            Some((gi, _)) => {
                matched[img][gi] = true;
                is_tp.push(true);
            }
            None => is_tp.push(false),
        }
    }

    // Precision/recall after each pooled detection.
    let mut precisions = Vec::with_capacity(is_tp.len());
    let mut recalls = Vec::with_capacity(is_tp.len());
    let mut tp = 0usize;
    for (k, &hit) in is_tp.iter().enumerate() {
        if hit {
            tp += 1;
        }
        precisions.push(T::from_usize(tp).unwrap() / T::from_usize(k + 1).unwrap());
        recalls.push(T::from_usize(tp).unwrap() / T::from_usize(total_gt).unwrap());
    }

    // Precision envelope from the right, integrated over recall steps.
    let mut ap = T::zero();
    let mut env = T::zero();
    for k in (0..is_tp.len()).rev() {
        env = env.max(precisions[k]);
        let prev_recall = if k == 0 { T::zero() } else { recalls[k - 1] };
        if recalls[k] > prev_recall {
            ap += (recalls[k] - prev_recall) * env;
        }
    }
    Ok(ap)
}
