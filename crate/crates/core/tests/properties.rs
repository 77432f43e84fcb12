//! Property tests for the library invariants that hold on arbitrary
//! inputs, not just the seeded fixtures.

use proptest::prelude::*;

use headmesh::detection::{iou, nms, Detection};
use headmesh::losses::{normalize_unit_cube, total_loss, LossWeights};
use headmesh::rotation::{geodesic_distance, rot6d_to_matrix};
use headmesh::BBox64;

fn arb_box() -> impl Strategy<Value = BBox64> {
    (
        -100.0f64..100.0,
        -100.0f64..100.0,
        1.0f64..80.0,
        1.0f64..80.0,
    )
        .prop_map(|(x, y, w, h)| BBox64::new(x, y, x + w, y + h))
}

fn arb_detections(max: usize) -> impl Strategy<Value = Vec<Detection<f64>>> {
    prop::collection::vec((arb_box(), 0.0f64..1.0), 0..max).prop_map(|items| {
        items
            .into_iter()
            .map(|(bbox, confidence)| Detection {
                bbox,
                confidence,
                params: None,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn rot6d_outputs_are_rotations(a in prop::array::uniform6(-3.0f64..3.0)) {
        if let Ok(r) = rot6d_to_matrix(&a) {
            prop_assert!(r.orthonormality_residual() <= 1e-12);
            prop_assert!((r.det() - 1.0).abs() <= 1e-12);
            prop_assert_eq!(geodesic_distance(&r, &r), 0.0);
        }
    }

    #[test]
    fn rot6d_is_scale_invariant(
        a in prop::array::uniform6(-3.0f64..3.0),
        s1 in 0.1f64..10.0,
        s2 in 0.1f64..10.0,
    ) {
        let scaled = [a[0] * s1, a[1] * s1, a[2] * s1, a[3] * s2, a[4] * s2, a[5] * s2];
        if let (Ok(r1), Ok(r2)) = (rot6d_to_matrix(&a), rot6d_to_matrix(&scaled)) {
            prop_assert!(geodesic_distance(&r1, &r2) <= 1e-9);
        }
    }

    #[test]
    fn unit_cube_bounds_and_longest_edge(
        verts in prop::collection::vec(prop::array::uniform3(-50.0f64..50.0), 2..40)
    ) {
        if let Ok((out, _)) = normalize_unit_cube(&verts) {
            let mut lo = [f64::MAX; 3];
            let mut hi = [f64::MIN; 3];
            for v in &out {
                for a in 0..3 {
                    prop_assert!(v[a] >= -1e-12 && v[a] <= 1.0 + 1e-12);
                    lo[a] = lo[a].min(v[a]);
                    hi[a] = hi[a].max(v[a]);
                }
            }
            let longest = (0..3).map(|a| hi[a] - lo[a]).fold(0.0f64, f64::max);
            prop_assert!((longest - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let ab = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, iou(&b, &a));
        prop_assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn nms_subset_threshold_idempotent(
        dets in arb_detections(60),
        thr in 0.05f64..0.95,
    ) {
        let kept = nms(&dets, thr);
        prop_assert!(kept.len() <= dets.len());
        for d in &kept {
            prop_assert!(dets.contains(d));
        }
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[..i] {
                prop_assert!(iou(&a.bbox, &b.bbox) <= thr);
            }
        }
        prop_assert_eq!(nms(&kept, thr), kept);
    }

    #[test]
    fn total_loss_is_linear_in_each_component(
        c in prop::array::uniform5(0.0f64..5.0),
        beta in 0.0f64..4.0,
        idx in 0usize..5,
    ) {
        let w = LossWeights::<f64>::default();
        let base = total_loss(c[0], c[1], c[2], c[3], c[4], &w).total;
        let mut bumped = c;
        bumped[idx] += beta;
        let after = total_loss(bumped[0], bumped[1], bumped[2], bumped[3], bumped[4], &w).total;
        let coeff = [w.w_3d, w.w_rot, w.w_reproj, w.w_cls, w.w_reg][idx];
        prop_assert!((after - base - coeff * beta).abs() <= 1e-9 * after.abs().max(1.0));
    }
}
