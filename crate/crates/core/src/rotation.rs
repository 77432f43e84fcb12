//! Rotation representations and conversions.
//!
//! Covers the 6D over-parameterization (orthonormalized by Gram-Schmidt),
//! axis-angle (Rodrigues), the yaw/pitch/roll view used by pose metrics,
//! and the geodesic distance on SO(3).
//!
//! Axes are right-handed: x right, y up, z toward the viewer. The Euler
//! convention is pinned as `R = Ry(yaw) * Rx(pitch) * Rz(roll)`, so yaw is
//! the wide-range head-turn angle in (-pi, pi], pitch is the elevation in
//! [-pi/2, pi/2], and roll is in (-pi, pi]. Gimbal lock sits at
//! |pitch| = pi/2 and is resolved by assigning roll = 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Element of SO(3): orthonormal 3x3 matrix with determinant +1.
///
/// Stored row-major; `self.0[i][j]` is row `i`, column `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RotationMatrix<T>(pub [[T; 3]; 3]);

/// Yaw/pitch/roll in radians under the pinned convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerPose<T> {
    pub yaw: T,
    pub pitch: T,
    pub roll: T,
}

const ORTHONORMALITY_TOL: f64 = 1e-10;

impl<T: Real> RotationMatrix<T> {
    pub fn identity() -> Self {
        let o = T::one();
        let z = T::zero();
        RotationMatrix([[o, z, z], [z, o, z], [z, z, o]])
    }

    /// Wrap a raw 3x3 array without validating orthonormality.
    ///
    /// Intended for gradient checks and other contexts that deliberately
    /// evaluate rotation expressions off the manifold.
    pub fn from_array_unchecked(m: [[T; 3]; 3]) -> Self {
        RotationMatrix(m)
    }

    /// Wrap a raw 3x3 array, validating `R^T R = I` and `det R = 1`.
    pub fn from_array(m: [[T; 3]; 3]) -> Result<Self> {
        let r = RotationMatrix(m);
        let ortho = r.orthonormality_residual();
        if ortho > T::c(ORTHONORMALITY_TOL) {
            return Err(Error::validation(
                "rotation",
                format!("R^T R deviates from identity by {ortho}"),
            ));
        }
        let det = r.det();
        if (det - T::one()).abs() > T::c(ORTHONORMALITY_TOL) {
            return Err(Error::validation(
                "rotation",
                format!("determinant {det} != 1"),
            ));
        }
        Ok(r)
    }

    pub fn entries(&self) -> &[[T; 3]; 3] {
        &self.0
    }

    /// Max-abs entry of `R^T R - I`.
    pub fn orthonormality_residual(&self) -> T {
        let m = &self.0;
        let mut worst = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                // (R^T R)_ij = column_i . column_j
                let mut dot = T::zero();
                for k in 0..3 {
                    dot += m[k][i] * m[k][j];
                }
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    pub fn det(&self) -> T {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        RotationMatrix([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn apply(&self, v: [T; 3]) -> [T; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn compose(&self, rhs: &Self) -> Self {
        let a = &self.0;
        let b = &rhs.0;
        let mut out = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut s = T::zero();
                for k in 0..3 {
                    s += a[i][k] * b[k][j];
                }
                out[i][j] = s;
            }
        }
        RotationMatrix(out)
    }

    /// First two columns stacked: the 6D encoding that maps back to `self`
    /// exactly under [`rot6d_to_matrix`] (the columns are already
    /// orthonormal, so Gram-Schmidt is the identity on them).
    pub fn to_rot6d(&self) -> [T; 6] {
        let m = &self.0;
        [m[0][0], m[1][0], m[2][0], m[0][1], m[1][1], m[2][1]]
    }
}

fn dot3<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3<T: Real>(a: [T; 3]) -> T {
    dot3(a, a).sqrt()
}

/// Orthonormalize a 6-vector into a rotation matrix.
///
/// `b1 = normalize(a[0..3])`, `b2 = normalize(a[3..6] - (b1.a[3..6]) b1)`,
/// `b3 = b1 x b2`; the result has columns `(b1, b2, b3)`. Invariant to
/// positive scaling of either input triple.
pub fn rot6d_to_matrix<T: Real>(a: &[T; 6]) -> Result<RotationMatrix<T>> {
    let u = [a[0], a[1], a[2]];
    let v = [a[3], a[4], a[5]];
    let un = norm3(u);
    if un < T::c(1e-12) {
        return Err(Error::SingularInput(
            "first triple of the 6D rotation is near zero".into(),
        ));
    }
    let b1 = [u[0] / un, u[1] / un, u[2] / un];
    let proj = dot3(b1, v);
    let w = [v[0] - proj * b1[0], v[1] - proj * b1[1], v[2] - proj * b1[2]];
    let wn = norm3(w);
    if wn < T::c(1e-12) {
        return Err(Error::SingularInput(
            "second triple of the 6D rotation is parallel to the first".into(),
        ));
    }
    let b2 = [w[0] / wn, w[1] / wn, w[2] / wn];
    let b3 = cross3(b1, b2);
    Ok(RotationMatrix([
        [b1[0], b2[0], b3[0]],
        [b1[1], b2[1], b3[1]],
        [b1[2], b2[2], b3[2]],
    ]))
}

/// Backpropagate a gradient through [`rot6d_to_matrix`].
///
/// `grad_matrix[i][j]` is the upstream derivative with respect to entry
/// (i, j) of the output; the return value is the derivative with respect
/// to the six input entries. `a` must be non-singular (same preconditions
/// as the forward map).
pub fn rot6d_backward<T: Real>(a: &[T; 6], grad_matrix: &[[T; 3]; 3]) -> Result<[T; 6]> {
    let u = [a[0], a[1], a[2]];
    let v = [a[3], a[4], a[5]];
    let un = norm3(u);
    if un < T::c(1e-12) {
        return Err(Error::SingularInput("6D rotation gradient at zero triple".into()));
    }
    let b1 = [u[0] / un, u[1] / un, u[2] / un];
    let proj = dot3(b1, v);
    let w = [v[0] - proj * b1[0], v[1] - proj * b1[1], v[2] - proj * b1[2]];
    let wn = norm3(w);
    if wn < T::c(1e-12) {
        return Err(Error::SingularInput("6D rotation gradient at parallel triples".into()));
    }
    let b2 = [w[0] / wn, w[1] / wn, w[2] / wn];

    // Column gradients.
    let g1 = [grad_matrix[0][0], grad_matrix[1][0], grad_matrix[2][0]];
    let g2 = [grad_matrix[0][1], grad_matrix[1][1], grad_matrix[2][1]];
    let g3 = [grad_matrix[0][2], grad_matrix[1][2], grad_matrix[2][2]];

    // b3 = b1 x b2.
    let mut gb1 = [
        g1[0] + b2[1] * g3[2] - b2[2] * g3[1],
        g1[1] + b2[2] * g3[0] - b2[0] * g3[2],
        g1[2] + b2[0] * g3[1] - b2[1] * g3[0],
    ];
    let gb2 = [
        g2[0] + g3[1] * b1[2] - g3[2] * b1[1],
        g2[1] + g3[2] * b1[0] - g3[0] * b1[2],
        g2[2] + g3[0] * b1[1] - g3[1] * b1[0],
    ];

    // b2 = w / |w|: gw = (gb2 - (gb2.b2) b2) / |w|.
    let gb2_dot_b2 = dot3(gb2, b2);
    let gw = [
        (gb2[0] - gb2_dot_b2 * b2[0]) / wn,
        (gb2[1] - gb2_dot_b2 * b2[1]) / wn,
        (gb2[2] - gb2_dot_b2 * b2[2]) / wn,
    ];

    // w = v - (b1.v) b1.
    let gw_dot_b1 = dot3(gw, b1);
    let gv = [
        gw[0] - gw_dot_b1 * b1[0],
        gw[1] - gw_dot_b1 * b1[1],
        gw[2] - gw_dot_b1 * b1[2],
    ];
    for i in 0..3 {
        gb1[i] = gb1[i] - gw_dot_b1 * v[i] - proj * gw[i];
    }

    // b1 = u / |u|.
    let gb1_dot_b1 = dot3(gb1, b1);
    let gu = [
        (gb1[0] - gb1_dot_b1 * b1[0]) / un,
        (gb1[1] - gb1_dot_b1 * b1[1]) / un,
        (gb1[2] - gb1_dot_b1 * b1[2]) / un,
    ];

    Ok([gu[0], gu[1], gu[2], gv[0], gv[1], gv[2]])
}

/// Rodrigues rotation from an axis-angle vector (angle = |w| radians).
///
/// Callers should keep `|w| < pi` to stay off the branch cut; small angles
/// below 1e-8 use the Taylor expansion of `sin(t)/t` and `(1-cos(t))/t^2`.
pub fn axis_angle_to_matrix<T: Real>(w: [T; 3]) -> RotationMatrix<T> {
    let theta2 = dot3(w, w);
    let theta = theta2.sqrt();
    let (a, b) = sin_cos_coeffs(theta);
    rodrigues_from_coeffs(w, a, b)
}

/// `(sin(t)/t, (1-cos(t))/t^2)` with the small-angle Taylor branch.
fn sin_cos_coeffs<T: Real>(theta: T) -> (T, T) {
    if theta < T::c(1e-8) {
        let t2 = theta * theta;
        (
            T::one() - t2 / T::c(6.0),
            T::half() - t2 / T::c(24.0),
        )
    } else {
        let t2 = theta * theta;
        (theta.sin() / theta, (T::one() - theta.cos()) / t2)
    }
}

fn rodrigues_from_coeffs<T: Real>(w: [T; 3], a: T, b: T) -> RotationMatrix<T> {
    let (x, y, z) = (w[0], w[1], w[2]);
    let theta2 = dot3(w, w);
    // R = I + a [w]_x + b [w]_x^2, with [w]_x^2 = w w^T - theta^2 I.
    let mut m = [[T::zero(); 3]; 3];
    let id_coeff = T::one() - b * theta2;
    m[0][0] = id_coeff + b * x * x;
    m[1][1] = id_coeff + b * y * y;
    m[2][2] = id_coeff + b * z * z;
    m[0][1] = b * x * y - a * z;
    m[1][0] = b * x * y + a * z;
    m[0][2] = b * x * z + a * y;
    m[2][0] = b * x * z - a * y;
    m[1][2] = b * y * z - a * x;
    m[2][1] = b * y * z + a * x;
    RotationMatrix(m)
}

/// Derivatives of the Rodrigues map: `out[k][i][j] = dR_ij / dw_k`.
pub fn axis_angle_jacobian<T: Real>(w: [T; 3]) -> [[[T; 3]; 3]; 3] {
    let theta2 = dot3(w, w);
    let theta = theta2.sqrt();
    let (a, b) = sin_cos_coeffs(theta);
    // da/dw_k = da_dt * w_k, db/dw_k = db_dt * w_k with the cancellation-safe
    // forms of (t cos t - sin t)/t^3 and (t sin t - 2(1 - cos t))/t^4.
    let (da_dt, db_dt) = if theta < T::c(1e-4) {
        (
            -T::c(1.0 / 3.0) + theta2 / T::c(30.0),
            -T::c(1.0 / 12.0) + theta2 / T::c(180.0),
        )
    } else {
        let t3 = theta2 * theta;
        let t4 = theta2 * theta2;
        (
            (theta * theta.cos() - theta.sin()) / t3,
            (theta * theta.sin() - T::two() * (T::one() - theta.cos())) / t4,
        )
    };

    let mut out = [[[T::zero(); 3]; 3]; 3];
    for k in 0..3 {
        let da = da_dt * w[k];
        let db = db_dt * w[k];
        // dR/dw_k = da [w]_x + a [e_k]_x + db ([w]_x^2) + b d([w]_x^2)/dw_k
        // where [w]_x^2 = w w^T - theta^2 I and its derivative is
        // e_k w^T + w e_k^T - 2 w_k I.
        let mut d = [[T::zero(); 3]; 3];
        let (x, y, z) = (w[0], w[1], w[2]);
        // da [w]_x
        d[0][1] += -da * z;
        d[1][0] += da * z;
        d[0][2] += da * y;
        d[2][0] += -da * y;
        d[1][2] += -da * x;
        d[2][1] += da * x;
        // a [e_k]_x
        let (i, j) = match k {
            0 => (1, 2),
            1 => (2, 0),
            _ => (0, 1),
        };
        d[i][j] -= a;
        d[j][i] += a;
        // db (w w^T - theta^2 I)
        for r in 0..3 {
            for c in 0..3 {
                d[r][c] += db * w[r] * w[c];
            }
            d[r][r] -= db * theta2;
        }
        // b (e_k w^T + w e_k^T - 2 w_k I)
        for c in 0..3 {
            d[k][c] += b * w[c];
            d[c][k] += b * w[c];
        }
        for r in 0..3 {
            d[r][r] -= T::two() * b * w[k];
        }
        out[k] = d;
    }
    out
}

/// Geodesic distance on SO(3) in radians: `acos((tr(R1 R2^T) - 1) / 2)`,
/// with the trace argument clamped to [-1, 1].
///
/// Within 1e-9 of the upper clamp the distance is reported as exactly 0:
/// the trace of a product of two computed rotations can land a few ulps
/// below 3 even for identical inputs, and `acos` would amplify that
/// roundoff to ~1e-8. The band spans distances below ~4.5e-5 rad.
pub fn geodesic_distance<T: Real>(r1: &RotationMatrix<T>, r2: &RotationMatrix<T>) -> T {
    // tr(R1 R2^T) is the elementwise dot product of the two matrices.
    let mut trace = T::zero();
    for i in 0..3 {
        for j in 0..3 {
            trace += r1.0[i][j] * r2.0[i][j];
        }
    }
    let c = (trace - T::one()) / T::two();
    if c >= T::one() - T::c(1e-9) {
        return T::zero();
    }
    c.max(-T::one()).acos()
}

fn wrap_angle<T: Real>(x: T) -> T {
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

/// Build a rotation from yaw/pitch/roll: `R = Ry(yaw) Rx(pitch) Rz(roll)`.
pub fn euler_to_matrix<T: Real>(e: &EulerPose<T>) -> RotationMatrix<T> {
    let (sy, cy) = (e.yaw.sin(), e.yaw.cos());
    let (sp, cp) = (e.pitch.sin(), e.pitch.cos());
    let (sr, cr) = (e.roll.sin(), e.roll.cos());
    RotationMatrix([
        [
            cy * cr + sy * sp * sr,
            -cy * sr + sy * sp * cr,
            sy * cp,
        ],
        [cp * sr, cp * cr, -sp],
        [
            -sy * cr + cy * sp * sr,
            sy * sr + cy * sp * cr,
            cy * cp,
        ],
    ])
}

/// Extract yaw/pitch/roll under the pinned convention.
///
/// In the gimbal neighborhood (|pitch| = pi/2) the split between yaw and
/// roll is not unique; the tie is broken by assigning roll = 0.
pub fn matrix_to_euler<T: Real>(r: &RotationMatrix<T>) -> EulerPose<T> {
    let m = &r.0;
    let sp = -m[1][2];
    if T::one() - sp.abs() < T::c(1e-12) {
        let pitch = if sp > T::zero() {
            T::FRAC_PI_2()
        } else {
            -T::FRAC_PI_2()
        };
        let yaw = if sp > T::zero() {
            m[0][1].atan2(m[0][0])
        } else {
            (-m[0][1]).atan2(m[0][0])
        };
        return EulerPose {
            yaw: wrap_angle(yaw),
            pitch,
            roll: T::zero(),
        };
    }
    EulerPose {
        yaw: wrap_angle(m[0][2].atan2(m[2][2])),
        pitch: sp.min(T::one()).max(-T::one()).asin(),
        roll: wrap_angle(m[1][0].atan2(m[1][1])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type R64 = RotationMatrix<f64>;

    fn quat_to_matrix(q: [f64; 4]) -> [[f64; 3]; 3] {
        let [w, x, y, z] = q;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    fn random_unit_quat(rng: &mut crate::rng::SplitMix64) -> [f64; 4] {
        // Shoemake's method.
        let u1 = rng.uniform();
        let u2 = rng.uniform();
        let u3 = rng.uniform();
        let tau = std::f64::consts::TAU;
        [
            (1.0 - u1).sqrt() * (tau * u2).sin(),
            (1.0 - u1).sqrt() * (tau * u2).cos(),
            u1.sqrt() * (tau * u3).sin(),
            u1.sqrt() * (tau * u3).cos(),
        ]
    }

    #[test]
    fn rot6d_identity() {
        let r = rot6d_to_matrix(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(r, R64::identity());
    }

    #[test]
    fn rot6d_positive_scale_invariance() {
        let r = rot6d_to_matrix(&[2.0f64, 0.0, 0.0, 0.0, 3.0, 0.0]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((r.0[i][j] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rot6d_orthonormal_on_random_inputs() {
        let mut rng = crate::rng::SplitMix64::new(11);
        for _ in 0..2000 {
            let a: [f64; 6] = std::array::from_fn(|_| rng.normal());
            let r = match rot6d_to_matrix(&a) {
                Ok(r) => r,
                Err(_) => continue,
            };
            assert!(r.orthonormality_residual() <= 1e-12);
            assert!((r.det() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn rot6d_degenerate_inputs_error() {
        assert!(rot6d_to_matrix(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).is_err());
        assert!(rot6d_to_matrix(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn axis_angle_identity_and_quarter_turn() {
        let r = axis_angle_to_matrix([0.0, 0.0, 0.0]);
        assert_eq!(r, R64::identity());
        let r = axis_angle_to_matrix([0.0, 0.0, std::f64::consts::FRAC_PI_2]);
        let mapped = r.apply([1.0, 0.0, 0.0]);
        assert!((mapped[0]).abs() < 1e-15);
        assert!((mapped[1] - 1.0).abs() < 1e-15);
        assert!((mapped[2]).abs() < 1e-15);
    }

    #[test]
    fn axis_angle_matches_quaternion_oracle() {
        let mut rng = crate::rng::SplitMix64::new(3);
        for _ in 0..500 {
            let axis_raw: [f64; 3] = std::array::from_fn(|_| rng.normal());
            let n = (axis_raw.iter().map(|v| v * v).sum::<f64>()).sqrt();
            let theta = rng.uniform_in(0.0, 3.0);
            let w = [
                axis_raw[0] / n * theta,
                axis_raw[1] / n * theta,
                axis_raw[2] / n * theta,
            ];
            let r = axis_angle_to_matrix(w);
            let h = theta / 2.0;
            let q = [
                h.cos(),
                w[0] / theta.max(1e-300) * h.sin(),
                w[1] / theta.max(1e-300) * h.sin(),
                w[2] / theta.max(1e-300) * h.sin(),
            ];
            let expect = quat_to_matrix(q);
            for i in 0..3 {
                for j in 0..3 {
                    assert!(
                        (r.0[i][j] - expect[i][j]).abs() <= 1e-12,
                        "entry ({i},{j}) differs"
                    );
                }
            }
        }
    }

    #[test]
    fn axis_angle_jacobian_matches_finite_differences() {
        let mut rng = crate::rng::SplitMix64::new(5);
        for _ in 0..100 {
            let w: [f64; 3] = std::array::from_fn(|_| rng.uniform_in(-1.2, 1.2));
            let jac = axis_angle_jacobian(w);
            let eps = 1e-6;
            for k in 0..3 {
                let mut wp = w;
                let mut wm = w;
                wp[k] += eps;
                wm[k] -= eps;
                let rp = axis_angle_to_matrix(wp);
                let rm = axis_angle_to_matrix(wm);
                for i in 0..3 {
                    for j in 0..3 {
                        let fd = (rp.0[i][j] - rm.0[i][j]) / (2.0 * eps);
                        assert!(
                            (jac[k][i][j] - fd).abs() <= 1e-7,
                            "dR[{i}][{j}]/dw[{k}]: analytic {} vs fd {fd}",
                            jac[k][i][j]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn geodesic_identity_and_quarter_turn() {
        let i = R64::identity();
        assert_eq!(geodesic_distance(&i, &i), 0.0);
        let r = axis_angle_to_matrix([std::f64::consts::FRAC_PI_2, 0.0, 0.0]);
        assert!((geodesic_distance(&i, &r) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn geodesic_matches_quaternion_oracle() {
        let mut rng = crate::rng::SplitMix64::new(17);
        for _ in 0..1000 {
            let q1 = random_unit_quat(&mut rng);
            let q2 = random_unit_quat(&mut rng);
            let r1 = R64::from_array_unchecked(quat_to_matrix(q1));
            let r2 = R64::from_array_unchecked(quat_to_matrix(q2));
            let dot: f64 = q1.iter().zip(&q2).map(|(a, b)| a * b).sum();
            let expect = 2.0 * dot.abs().min(1.0).acos();
            let got = geodesic_distance(&r1, &r2);
            assert!((got - expect).abs() <= 1e-9, "{got} vs {expect}");
        }
    }

    #[test]
    fn geodesic_symmetric_and_axis_exact() {
        let mut rng = crate::rng::SplitMix64::new(23);
        for _ in 0..100 {
            let q = random_unit_quat(&mut rng);
            let r = R64::from_array_unchecked(quat_to_matrix(q));
            let theta = rng.uniform_in(0.05, std::f64::consts::PI - 0.05);
            let axis_raw: [f64; 3] = std::array::from_fn(|_| rng.normal());
            let n = (axis_raw.iter().map(|v| v * v).sum::<f64>()).sqrt();
            let step = axis_angle_to_matrix([
                axis_raw[0] / n * theta,
                axis_raw[1] / n * theta,
                axis_raw[2] / n * theta,
            ]);
            let r2 = r.compose(&step);
            let d = geodesic_distance(&r, &r2);
            assert!((d - theta).abs() <= 1e-9);
            assert_eq!(d, geodesic_distance(&r2, &r));
        }
    }

    #[test]
    fn geodesic_self_distance_is_exactly_zero() {
        let mut rng = crate::rng::SplitMix64::new(31);
        for _ in 0..200 {
            let q = random_unit_quat(&mut rng);
            let r = R64::from_array_unchecked(quat_to_matrix(q));
            assert_eq!(geodesic_distance(&r, &r), 0.0);
        }
    }

    #[test]
    fn euler_identity() {
        let e = matrix_to_euler(&R64::identity());
        assert_eq!((e.yaw, e.pitch, e.roll), (0.0, 0.0, 0.0));
    }

    #[test]
    fn euler_round_trip_interior() {
        let e = EulerPose::<f64> {
            yaw: 0.3,
            pitch: -0.2,
            roll: 0.1,
        };
        let back = matrix_to_euler(&euler_to_matrix(&e));
        assert!((back.yaw - 0.3).abs() <= 1e-9);
        assert!((back.pitch + 0.2).abs() <= 1e-9);
        assert!((back.roll - 0.1).abs() <= 1e-9);
    }

    #[test]
    fn euler_yaw_quarter_turn_first_column() {
        let r = euler_to_matrix(&EulerPose::<f64> {
            yaw: std::f64::consts::FRAC_PI_2,
            pitch: 0.0,
            roll: 0.0,
        });
        // Direct construction of Ry(pi/2): first column (0, 0, -1).
        assert!((r.0[0][0]).abs() < 1e-15);
        assert!((r.0[1][0]).abs() < 1e-15);
        assert!((r.0[2][0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn euler_wide_yaw_recovered() {
        let e = EulerPose::<f64> {
            yaw: 2.0,
            pitch: 0.1,
            roll: -0.3,
        };
        let back = matrix_to_euler(&euler_to_matrix(&e));
        assert!((back.yaw - 2.0).abs() <= 1e-9);
        assert!((back.pitch - 0.1).abs() <= 1e-9);
        assert!((back.roll + 0.3).abs() <= 1e-9);
    }

    #[test]
    fn euler_gimbal_assigns_zero_roll() {
        let e = EulerPose::<f64> {
            yaw: 0.7,
            pitch: std::f64::consts::FRAC_PI_2,
            roll: 0.2,
        };
        let back = matrix_to_euler(&euler_to_matrix(&e));
        assert_eq!(back.roll, 0.0);
        // Only yaw - roll is observable at the north gimbal.
        assert!((back.yaw - 0.5).abs() <= 1e-9);
        assert!((back.pitch - std::f64::consts::FRAC_PI_2).abs() <= 1e-9);
    }

    #[test]
    fn rot6d_backward_matches_finite_differences() {
        let mut rng = crate::rng::SplitMix64::new(29);
        for _ in 0..200 {
            let a: [f64; 6] = std::array::from_fn(|_| rng.uniform_in(-2.0, 2.0));
            if rot6d_to_matrix(&a).is_err() {
                continue;
            }
            // Random linear functional of the matrix entries.
            let weights: [[f64; 3]; 3] =
                std::array::from_fn(|_| std::array::from_fn(|_| rng.uniform_in(-1.0, 1.0)));
            let grad = rot6d_backward(&a, &weights).unwrap();
            let f = |x: &[f64; 6]| -> f64 {
                let r = rot6d_to_matrix(x).unwrap();
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        s += weights[i][j] * r.0[i][j];
                    }
                }
                s
            };
            let eps = 1e-6;
            for k in 0..6 {
                let mut xp = a;
                let mut xm = a;
                xp[k] += eps;
                xm[k] -= eps;
                let fd = (f(&xp) - f(&xm)) / (2.0 * eps);
                let denom = fd.abs().max(grad[k].abs()).max(1e-8);
                assert!(
                    ((grad[k] - fd) / denom).abs() <= 1e-5,
                    "entry {k}: analytic {} vs fd {fd}",
                    grad[k]
                );
            }
        }
    }
}
