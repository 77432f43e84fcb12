//! Inference-side detection post-processing: anchor grid construction,
//! raw-prediction decoding, IoU, and greedy non-maximum suppression.

use serde::{Deserialize, Serialize};

use crate::camera::BBox;
use crate::error::{Error, Result};
use crate::morphable::HeadParams;
use crate::scalar::Real;

/// Default multi-scale strides in pixels.
pub const DEFAULT_STRIDES: [u32; 3] = [8, 16, 32];

/// One anchor cell center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor<T> {
    pub cx: T,
    pub cy: T,
    pub stride: T,
}

/// Multi-scale anchor layout over a square image.
///
/// For each stride `s` the grid has `ceil(side / s)` cells per axis with
/// centers at `(x + 0.5) s, (y + 0.5) s`. Anchors are ordered stride-major,
/// then row-major (y outer, x inner). Centers stay within `[0, side]`
/// whenever every stride divides the side.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGrid<T> {
    pub image_side: u32,
    pub strides: Vec<u32>,
    anchors: Vec<Anchor<T>>,
}

impl<T> AnchorGrid<T> {
    pub fn anchors(&self) -> &[Anchor<T>] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

pub fn make_anchor_grid<T: Real>(image_side: u32, strides: &[u32]) -> Result<AnchorGrid<T>> {
    if strides.is_empty() {
        return Err(Error::invalid("strides", "need at least one stride"));
    }
    if image_side == 0 {
        return Err(Error::invalid("image_side", "must be positive"));
    }
    let mut anchors = Vec::new();
    for &stride in strides {
        if stride == 0 {
            return Err(Error::invalid("strides", "stride must be positive"));
        }
        let cells = image_side.div_ceil(stride) as usize;
        let s = T::from_u32(stride).unwrap();
        for y in 0..cells {
            let cy = (T::from_usize(y).unwrap() + T::half()) * s;
            for x in 0..cells {
                let cx = (T::from_usize(x).unwrap() + T::half()) * s;
                anchors.push(Anchor { cx, cy, stride: s });
            }
        }
    }
    Ok(AnchorGrid {
        image_side,
        strides: strides.to_vec(),
        anchors,
    })
}

/// Per-anchor raw network output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawPrediction<T> {
    /// Cell-relative center offsets.
    pub dx: T,
    pub dy: T,
    /// Log-size offsets.
    pub dw: T,
    pub dh: T,
    /// Confidence logit.
    pub logit: T,
    #[serde(default = "none_params", skip_serializing_if = "Option::is_none")]
    pub params: Option<HeadParams<T>>,
}

fn none_params<T>() -> Option<HeadParams<T>> {
    None
}

/// A decoded detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection<T> {
    pub bbox: BBox<T>,
    pub confidence: T,
    #[serde(default = "none_params", skip_serializing_if = "Option::is_none")]
    pub params: Option<HeadParams<T>>,
}

/// Decode raw predictions against an anchor grid:
/// `center = anchor + (dx, dy) stride`, `size = stride exp(dw), stride exp(dh)`,
/// `confidence = logistic(logit)`. Detections below `conf_threshold` are
/// dropped; attached parameters pass through untouched.
pub fn decode<T: Real>(
    raw: &[RawPrediction<T>],
    grid: &AnchorGrid<T>,
    conf_threshold: T,
) -> Result<Vec<Detection<T>>> {
    if raw.len() != grid.len() {
        return Err(Error::ShapeMismatch {
            what: "raw predictions",
            expected: grid.len(),
            got: raw.len(),
        });
    }
    let mut out = Vec::new();
    for (r, a) in raw.iter().zip(grid.anchors()) {
        let confidence = logistic(r.logit);
        if confidence < conf_threshold {
            continue;
        }
        let cx = a.cx + r.dx * a.stride;
        let cy = a.cy + r.dy * a.stride;
        let hw = a.stride * r.dw.exp() * T::half();
        let hh = a.stride * r.dh.exp() * T::half();
        out.push(Detection {
            bbox: BBox::new(cx - hw, cy - hh, cx + hw, cy + hh),
            confidence,
            params: r.params.clone(),
        });
    }
    Ok(out)
}

fn logistic<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Intersection over union; 0 for disjoint or zero-area inputs.
pub fn iou<T: Real>(a: &BBox<T>, b: &BBox<T>) -> T {
    let aw = a.width();
    let ah = a.height();
    let bw = b.width();
    let bh = b.height();
    if aw <= T::zero() || ah <= T::zero() || bw <= T::zero() || bh <= T::zero() {
        return T::zero();
    }
    let iw = a.x2.min(b.x2) - a.x1.max(b.x1);
    let ih = a.y2.min(b.y2) - a.y1.max(b.y1);
    if iw <= T::zero() || ih <= T::zero() {
        return T::zero();
    }
    let inter = iw * ih;
    inter / (aw * ah + bw * bh - inter)
}

/// Greedy non-maximum suppression.
///
/// Detections are visited by descending confidence (ties broken by smaller
/// x1, then smaller y1, then input order) and kept iff their IoU with every
/// already-kept detection is at most `iou_threshold`. Output is in kept
/// order.
pub fn nms<T: Real>(dets: &[Detection<T>], iou_threshold: T) -> Vec<Detection<T>> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| {
        let a = &dets[i];
        let b = &dets[j];
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(
                a.bbox
                    .x1
                    .partial_cmp(&b.bbox.x1)
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
            .then(
                a.bbox
                    .y1
                    .partial_cmp(&b.bbox.y1)
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
            .then(i.cmp(&j))
    });
    let mut kept: Vec<Detection<T>> = Vec::new();
    for idx in order {
        let candidate = &dets[idx];
        if kept
            .iter()
            .all(|k| iou(&k.bbox, &candidate.bbox) <= iou_threshold)
        {
            kept.push(candidate.clone());
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn det(x1: f64, y1: f64, x2: f64, y2: f64, conf: f64) -> Detection<f64> {
        Detection {
            bbox: BBox::new(x1, y1, x2, y2),
            confidence: conf,
            params: None,
        }
    }

    #[test]
    fn grid_examples() {
        let g: AnchorGrid<f64> = make_anchor_grid(640, &[32]).unwrap();
        assert_eq!(g.len(), 400);
        assert_eq!(g.anchors()[0], Anchor { cx: 16.0, cy: 16.0, stride: 32.0 });

        let g: AnchorGrid<f64> = make_anchor_grid(64, &[64]).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.anchors()[0], Anchor { cx: 32.0, cy: 32.0, stride: 64.0 });

        let g: AnchorGrid<f64> = make_anchor_grid(640, &DEFAULT_STRIDES).unwrap();
        assert_eq!(g.len(), 80 * 80 + 40 * 40 + 20 * 20);

        assert!(make_anchor_grid::<f64>(640, &[]).is_err());
    }

    #[test]
    fn decode_examples() {
        let g: AnchorGrid<f64> = make_anchor_grid(64, &[32]).unwrap();
        // Anchor 0 sits at (16, 16) with stride 32.
        let mut raw = vec![
            RawPrediction {
                dx: 0.0,
                dy: 0.0,
                dw: 0.0,
                dh: 0.0,
                logit: 0.0,
                params: None,
            };
            g.len()
        ];
        for r in raw.iter_mut().skip(1) {
            r.logit = -100.0; // suppressed by the threshold below
        }
        let dets = decode(&raw, &g, 0.25).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, BBox::new(0.0, 0.0, 32.0, 32.0));
        assert_eq!(dets[0].confidence, 0.5);

        assert!(decode(&raw[1..], &g, 0.25).is_err());
    }

    #[test]
    fn decode_matches_naive_oracle() {
        let g: AnchorGrid<f64> = make_anchor_grid(64, &DEFAULT_STRIDES).unwrap();
        let mut rng = SplitMix64::new(109);
        let raw: Vec<RawPrediction<f64>> = (0..g.len())
            .map(|_| RawPrediction {
                dx: rng.uniform_in(-1.0, 1.0),
                dy: rng.uniform_in(-1.0, 1.0),
                dw: rng.uniform_in(-1.5, 1.5),
                dh: rng.uniform_in(-1.5, 1.5),
                logit: rng.uniform_in(-4.0, 4.0),
                params: None,
            })
            .collect();
        let dets = decode(&raw, &g, 0.0).unwrap();
        assert_eq!(dets.len(), raw.len());
        for ((r, a), d) in raw.iter().zip(g.anchors()).zip(&dets) {
            let cx = a.cx + r.dx * a.stride;
            let cy = a.cy + r.dy * a.stride;
            let w = a.stride * r.dw.exp();
            let h = a.stride * r.dh.exp();
            assert!((d.bbox.x1 - (cx - w / 2.0)).abs() <= 1e-12);
            assert!((d.bbox.y1 - (cy - h / 2.0)).abs() <= 1e-12);
            assert!((d.bbox.x2 - (cx + w / 2.0)).abs() <= 1e-12);
            assert!((d.bbox.y2 - (cy + h / 2.0)).abs() <= 1e-12);
            assert!((d.confidence - 1.0 / (1.0 + (-r.logit).exp())).abs() <= 1e-15);
            assert!(d.bbox.width() > 0.0 && d.bbox.height() > 0.0);
        }
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0f64, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        let disjoint = BBox::new(5.0f64, 5.0, 6.0, 6.0);
        assert_eq!(iou(&a, &disjoint), 0.0);
        let b = BBox::new(1.0f64, 1.0, 3.0, 3.0);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() <= 1e-12);
        assert_eq!(iou(&a, &b), iou(&b, &a));
        let degenerate = BBox::new(0.0f64, 0.0, 0.0, 2.0);
        assert_eq!(iou(&a, &degenerate), 0.0);
    }

    #[test]
    fn nms_examples() {
        let single = vec![det(0.0, 0.0, 1.0, 1.0, 0.7)];
        assert_eq!(nms(&single, 0.5), single);

        let pair = vec![det(0.0, 0.0, 1.0, 1.0, 0.8), det(0.0, 0.0, 1.0, 1.0, 0.9)];
        let kept = nms(&pair, 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].confidence, 0.9);
    }

    /// Independent quadratic reference: a detection is suppressed iff some
    /// higher-priority unsuppressed detection overlaps it beyond the
    /// threshold.
    fn nms_reference(dets: &[Detection<f64>], thr: f64) -> Vec<Detection<f64>> {
        let mut order: Vec<usize> = (0..dets.len()).collect();
        order.sort_by(|&i, &j| {
            dets[j]
                .confidence
                .partial_cmp(&dets[i].confidence)
                .unwrap()
                .then(dets[i].bbox.x1.partial_cmp(&dets[j].bbox.x1).unwrap())
                .then(dets[i].bbox.y1.partial_cmp(&dets[j].bbox.y1).unwrap())
                .then(i.cmp(&j))
        });
        let mut suppressed = vec![false; dets.len()];
        for (rank, &i) in order.iter().enumerate() {
            for &j in &order[..rank] {
                if !suppressed[j] && iou(&dets[i].bbox, &dets[j].bbox) > thr {
                    suppressed[i] = true;
                    break;
                }
            }
        }
        order
            .into_iter()
            .filter(|&i| !suppressed[i])
            .map(|i| dets[i].clone())
            .collect()
    }

    #[test]
    fn nms_matches_reference_on_random_sets() {
        let mut rng = SplitMix64::new(113);
        for _ in 0..10 {
            let dets: Vec<Detection<f64>> = (0..500)
                .map(|_| {
                    let x1 = rng.uniform_in(0.0, 500.0);
                    let y1 = rng.uniform_in(0.0, 500.0);
                    det(
                        x1,
                        y1,
                        x1 + rng.uniform_in(5.0, 120.0),
                        y1 + rng.uniform_in(5.0, 120.0),
                        rng.uniform(),
                    )
                })
                .collect();
            let kept = nms(&dets, 0.5);
            let reference = nms_reference(&dets, 0.5);
            assert_eq!(kept, reference);

            // Kept detections overlap at most the threshold pairwise.
            for (i, a) in kept.iter().enumerate() {
                for b in &kept[..i] {
                    assert!(iou(&a.bbox, &b.bbox) <= 0.5);
                }
            }
            // Idempotent.
            assert_eq!(nms(&kept, 0.5), kept);
        }
    }
}
