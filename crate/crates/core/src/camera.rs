//! Weak-perspective camera: scaled orthographic projection into pixel
//! space, head/face bounding boxes from reprojected vertices, and the
//! scale-preserving alignment crop.
//!
//! Image convention: the pixel y axis points down, so camera-space y is
//! negated when mapping to pixels. `p = (s (Rv)_x + t_x, -s (Rv)_y + t_y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphable::{select, ModelAssets};
use crate::rotation::{matrix_to_euler, RotationMatrix};
use crate::scalar::Real;

/// Axis-aligned box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    pub x1: T,
    pub y1: T,
    pub x2: T,
    pub y2: T,
}

impl<T: Real> BBox<T> {
    pub fn new(x1: T, y1: T, x2: T, y2: T) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> T {
        self.x2 - self.x1
    }

    pub fn height(&self) -> T {
        self.y2 - self.y1
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn center(&self) -> [T; 2] {
        [
            (self.x1 + self.x2) * T::half(),
            (self.y1 + self.y2) * T::half(),
        ]
    }

    pub fn contains_box(&self, other: &BBox<T>) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }
}

/// A mesh projected into image space.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedHead<T> {
    /// n x 2 pixel coordinates.
    pub points2d: Vec<[T; 2]>,
    /// Camera-space depth per vertex (model units times scale).
    pub depth: Vec<T>,
    pub rotation: RotationMatrix<T>,
    pub translation: [T; 2],
    pub scale: T,
}

/// Project canonical vertices with rotation, uniform scale and 2D
/// translation.
pub fn project<T: Real>(
    vertices: &[[T; 3]],
    rotation: &RotationMatrix<T>,
    scale: T,
    translation: [T; 2],
) -> Result<ProjectedHead<T>> {
    if !(scale > T::zero()) {
        return Err(Error::invalid("scale", format!("must be > 0, got {scale}")));
    }
    let mut points2d = Vec::with_capacity(vertices.len());
    let mut depth = Vec::with_capacity(vertices.len());
    for v in vertices {
        let r = rotation.apply(*v);
        points2d.push([scale * r[0] + translation[0], -scale * r[1] + translation[1]]);
        depth.push(scale * r[2]);
    }
    Ok(ProjectedHead {
        points2d,
        depth,
        rotation: *rotation,
        translation,
        scale,
    })
}

/// Componentwise min/max rectangle of all projected points.
pub fn head_bbox<T: Real>(proj: &ProjectedHead<T>) -> Result<BBox<T>> {
    min_max_box(&proj.points2d)
}

pub(crate) fn min_max_box<T: Real>(points: &[[T; 2]]) -> Result<BBox<T>> {
    let first = points
        .first()
        .ok_or_else(|| Error::invalid("points", "empty point set"))?;
    let mut b = BBox::new(first[0], first[1], first[0], first[1]);
    for p in &points[1..] {
        b.x1 = b.x1.min(p[0]);
        b.y1 = b.y1.min(p[1]);
        b.x2 = b.x2.max(p[0]);
        b.y2 = b.y2.max(p[1]);
    }
    Ok(b)
}

/// Minimum bounding rectangle of the facial vertices, or `None` when the
/// head faces away (|yaw| > pi/2, boundary inclusive).
pub fn face_bbox<T: Real>(proj: &ProjectedHead<T>, assets: &ModelAssets<T>) -> Option<BBox<T>> {
    let yaw = matrix_to_euler(&proj.rotation).yaw;
    if yaw.abs() > T::FRAC_PI_2() {
        return None;
    }
    let picked = select(&assets.face_indices, &proj.points2d);
    min_max_box(&picked).ok()
}

/// Square crop centered on the projection of the model-space origin.
///
/// The origin projects to `translation` (the template is origin-centered),
/// so the crop is centered there; the side is `margin * scale * D` with `D`
/// the template's bounding-sphere diameter. The box may extend past the
/// image; padding is the caller's concern.
pub fn alignment_crop<T: Real>(
    proj: &ProjectedHead<T>,
    assets: &ModelAssets<T>,
    margin: T,
) -> BBox<T> {
    let side = margin * proj.scale * assets.bounding_diameter();
    let half = side * T::half();
    let [cx, cy] = proj.translation;
    BBox::new(cx - half, cy - half, cx + half, cy + half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphable::{generate_toy_assets, HeadParams};
    use crate::rotation::{axis_angle_to_matrix, euler_to_matrix, rot6d_to_matrix, EulerPose};

    #[test]
    fn identity_projection_flips_y() {
        let verts = vec![[0.5f64, 0.25, -1.0]];
        let proj = project(&verts, &RotationMatrix::identity(), 1.0, [0.0, 0.0]).unwrap();
        assert_eq!(proj.points2d[0], [0.5, -0.25]);
        assert_eq!(proj.depth[0], -1.0);
    }

    #[test]
    fn scaled_translated_projection() {
        let verts = vec![[1.0f64, 1.0, 9.0]];
        let proj = project(&verts, &RotationMatrix::identity(), 2.0, [10.0, 5.0]).unwrap();
        assert_eq!(proj.points2d[0], [12.0, 3.0]);
        assert_eq!(proj.depth[0], 18.0);
    }

    #[test]
    fn projection_rejects_nonpositive_scale() {
        let verts = vec![[0.0f64, 0.0, 0.0]];
        assert!(project(&verts, &RotationMatrix::identity(), 0.0, [0.0, 0.0]).is_err());
        assert!(project(&verts, &RotationMatrix::identity(), -1.0, [0.0, 0.0]).is_err());
    }

    #[test]
    fn projection_matches_matrix_oracle() {
        let mut rng = crate::rng::SplitMix64::new(61);
        for _ in 0..50 {
            let verts: Vec<[f64; 3]> = (0..20)
                .map(|_| std::array::from_fn(|_| rng.normal()))
                .collect();
            let a: [f64; 6] = std::array::from_fn(|_| rng.normal());
            let r = match rot6d_to_matrix(&a) {
                Ok(r) => r,
                Err(_) => continue,
            };
            let s = rng.uniform_in(0.5, 100.0);
            let t = [rng.uniform_in(-50.0, 50.0), rng.uniform_in(-50.0, 50.0)];
            let proj = project(&verts, &r, s, t).unwrap();
            for (v, p) in verts.iter().zip(&proj.points2d) {
                let m = r.entries();
                let rx = m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2];
                let ry = m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2];
                assert!((p[0] - (s * rx + t[0])).abs() <= 1e-12 * s.max(1.0));
                assert!((p[1] - (-s * ry + t[1])).abs() <= 1e-12 * s.max(1.0));
            }
        }
    }

    #[test]
    fn head_bbox_examples() {
        let mk = |pts: Vec<[f64; 2]>| ProjectedHead {
            points2d: pts,
            depth: vec![],
            rotation: RotationMatrix::identity(),
            translation: [0.0, 0.0],
            scale: 1.0,
        };
        let b = head_bbox(&mk(vec![[0.0, 0.0], [4.0, 2.0]])).unwrap();
        assert_eq!(b, BBox::new(0.0, 0.0, 4.0, 2.0));
        let b = head_bbox(&mk(vec![[3.0, 3.0]])).unwrap();
        assert_eq!(b, BBox::new(3.0, 3.0, 3.0, 3.0));
        assert!(head_bbox(&mk(vec![])).is_err());
    }

    #[test]
    fn head_bbox_matches_scan_oracle_and_contains_points() {
        let mut rng = crate::rng::SplitMix64::new(67);
        for _ in 0..50 {
            let pts: Vec<[f64; 2]> = (0..40)
                .map(|_| [rng.uniform_in(-30.0, 30.0), rng.uniform_in(-30.0, 30.0)])
                .collect();
            let proj = ProjectedHead {
                points2d: pts.clone(),
                depth: vec![0.0; 40],
                rotation: RotationMatrix::identity(),
                translation: [0.0, 0.0],
                scale: 1.0,
            };
            let b = head_bbox(&proj).unwrap();
            let (mut x1, mut y1, mut x2, mut y2) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
            for p in &pts {
                x1 = x1.min(p[0]);
                y1 = y1.min(p[1]);
                x2 = x2.max(p[0]);
                y2 = y2.max(p[1]);
                assert!(b.x1 <= p[0] && p[0] <= b.x2);
                assert!(b.y1 <= p[1] && p[1] <= b.y2);
            }
            assert_eq!(b, BBox::new(x1, y1, x2, y2));
        }
    }

    #[test]
    fn face_bbox_yaw_gating() {
        let assets = generate_toy_assets::<f64>(7, 162, 4, 2, 16).unwrap();
        let params = HeadParams::zeros(4, 2);
        let verts = crate::morphable::forward_canonical(&assets, &params).unwrap();

        let away = euler_to_matrix(&EulerPose { yaw: 2.0, pitch: 0.0, roll: 0.0 });
        let proj = project(&verts, &away, 100.0, [320.0, 240.0]).unwrap();
        assert!(face_bbox(&proj, &assets).is_none());

        let front = RotationMatrix::identity();
        let proj = project(&verts, &front, 100.0, [320.0, 240.0]).unwrap();
        let fb = face_bbox(&proj, &assets).unwrap();
        let hb = head_bbox(&proj).unwrap();
        assert!(hb.contains_box(&fb));

        // Boundary is not strict: exactly pi/2 stays present.
        let boundary = euler_to_matrix(&EulerPose {
            yaw: std::f64::consts::FRAC_PI_2,
            pitch: 0.0,
            roll: 0.0,
        });
        let proj = project(&verts, &boundary, 100.0, [320.0, 240.0]).unwrap();
        assert!(face_bbox(&proj, &assets).is_some());
    }

    #[test]
    fn face_bbox_from_explicit_points() {
        let assets = generate_toy_assets::<f64>(7, 162, 4, 2, 16).unwrap();
        let mut points2d = vec![[0.0f64, 0.0]; assets.n_vertices];
        points2d[assets.face_indices[0]] = [1.0, 1.0];
        points2d[assets.face_indices[1]] = [2.0, 3.0];
        for (j, &i) in assets.face_indices.iter().enumerate().skip(2) {
            points2d[i] = [1.0 + 0.001 * j as f64, 1.0 + 0.001 * j as f64];
        }
        let proj = ProjectedHead {
            points2d,
            depth: vec![0.0; assets.n_vertices],
            rotation: RotationMatrix::identity(),
            translation: [0.0, 0.0],
            scale: 1.0,
        };
        let fb = face_bbox(&proj, &assets).unwrap();
        assert_eq!(fb, BBox::new(1.0, 1.0, 2.0, 3.0));
    }

    #[test]
    fn alignment_crop_arithmetic() {
        let assets = generate_toy_assets::<f64>(7, 162, 4, 2, 16).unwrap();
        let d = assets.bounding_diameter();
        let proj = ProjectedHead {
            points2d: vec![],
            depth: vec![],
            rotation: RotationMatrix::identity(),
            translation: [100.0, 50.0],
            scale: 1.0,
        };
        // Pick margin so margin * scale * D = 80.
        let margin = 80.0 / d;
        let crop = alignment_crop(&proj, &assets, margin);
        assert!((crop.x1 - 60.0).abs() < 1e-9);
        assert!((crop.y1 - 10.0).abs() < 1e-9);
        assert!((crop.x2 - 140.0).abs() < 1e-9);
        assert!((crop.y2 - 90.0).abs() < 1e-9);
    }

    #[test]
    fn alignment_crop_is_rotation_invariant_and_centered() {
        let assets = generate_toy_assets::<f64>(7, 162, 4, 2, 16).unwrap();
        let params = HeadParams::zeros(4, 2);
        let verts = crate::morphable::forward_canonical(&assets, &params).unwrap();
        let r1 = axis_angle_to_matrix([0.3, 0.5, -0.2]);
        let r2 = axis_angle_to_matrix([-1.0, 0.2, 0.8]);
        let p1 = project(&verts, &r1, 75.0, [200.0, 180.0]).unwrap();
        let p2 = project(&verts, &r2, 75.0, [200.0, 180.0]).unwrap();
        let c1 = alignment_crop(&p1, &assets, 1.3);
        let c2 = alignment_crop(&p2, &assets, 1.3);
        assert_eq!(c1.width(), c2.width());
        assert_eq!(c1.center(), [200.0, 180.0]);
    }
}
