//! Linear morphable head model: template plus shape/expression blendshapes
//! plus a single-joint jaw articulated by linear blend skinning.
//!
//! Everything here is canonical-space geometry; global rotation, translation
//! and scale belong to the camera module.

mod io;
mod toy;

pub use io::{load_assets, save_assets, write_obj};
pub use toy::generate_toy_assets;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotation::{axis_angle_jacobian, axis_angle_to_matrix};
use crate::scalar::Real;

/// Statistical head model container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelAssets<T> {
    pub n_vertices: usize,
    /// n x 3 rest-pose coordinates, centroid at the origin.
    pub template: Vec<[T; 3]>,
    /// K_s per-vertex displacement fields.
    pub shape_basis: Vec<Vec<[T; 3]>>,
    /// K_e per-vertex displacement fields.
    pub expr_basis: Vec<Vec<[T; 3]>>,
    /// Skinning weight per vertex in [0, 1]; 0 means rigid to the skull.
    pub jaw_weights: Vec<T>,
    pub jaw_pivot: [T; 3],
    /// m x 3 vertex indices.
    pub triangles: Vec<[usize; 3]>,
    /// Vertices entering the 3D vertices loss.
    pub subsample_indices: Vec<usize>,
    /// Facial-region vertices (face bounding box).
    pub face_indices: Vec<usize>,
    /// Landmark vertices, length L.
    pub landmark_indices: Vec<usize>,
}

/// Per-head prediction vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams<T> {
    pub shape: Vec<T>,
    pub expression: Vec<T>,
    /// Axis-angle jaw rotation, radians.
    pub jaw: [T; 3],
    /// 6D rotation encoding of the global pose.
    pub rot6d: [T; 6],
    /// Pixels.
    pub translation: [T; 2],
    /// Pixels per model unit, > 0.
    pub scale: T,
}

/// Default shape coefficient count.
pub const DEFAULT_K_SHAPE: usize = 300;
/// Default expression coefficient count.
pub const DEFAULT_K_EXPR: usize = 100;

impl<T: Real> HeadParams<T> {
    /// All-zero morph coefficients, identity pose, unit scale.
    pub fn zeros(k_shape: usize, k_expr: usize) -> Self {
        let z = T::zero();
        let o = T::one();
        HeadParams {
            shape: vec![z; k_shape],
            expression: vec![z; k_expr],
            jaw: [z; 3],
            rot6d: [o, z, z, z, o, z],
            translation: [z; 2],
            scale: o,
        }
    }

    pub fn validate(&self, k_shape: usize, k_expr: usize) -> Result<()> {
        if self.shape.len() != k_shape {
            return Err(Error::ShapeMismatch {
                what: "shape coefficients",
                expected: k_shape,
                got: self.shape.len(),
            });
        }
        if self.expression.len() != k_expr {
            return Err(Error::ShapeMismatch {
                what: "expression coefficients",
                expected: k_expr,
                got: self.expression.len(),
            });
        }
        if !(self.scale > T::zero()) {
            return Err(Error::validation("scale", format!("must be > 0, got {}", self.scale)));
        }
        let all = self
            .shape
            .iter()
            .chain(&self.expression)
            .chain(&self.jaw)
            .chain(&self.rot6d)
            .chain(&self.translation)
            .chain(std::iter::once(&self.scale));
        for v in all {
            if !v.is_finite() {
                return Err(Error::validation("params", "non-finite entry".to_string()));
            }
        }
        Ok(())
    }

    /// Flat layout used by the fitting loop:
    /// shape, expression, jaw, rot6d, translation, scale.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(&self.shape);
        out.extend_from_slice(&self.expression);
        out.extend_from_slice(&self.jaw);
        out.extend_from_slice(&self.rot6d);
        out.extend_from_slice(&self.translation);
        out.push(self.scale);
        out
    }

    pub fn from_flat(flat: &[T], k_shape: usize, k_expr: usize) -> Result<Self> {
        let dim = k_shape + k_expr + 12;
        if flat.len() != dim {
            return Err(Error::ShapeMismatch {
                what: "flat parameter vector",
                expected: dim,
                got: flat.len(),
            });
        }
        let mut at = 0;
        let mut take = |n: usize| {
            let s = &flat[at..at + n];
            at += n;
            s
        };
        Ok(HeadParams {
            shape: take(k_shape).to_vec(),
            expression: take(k_expr).to_vec(),
            jaw: take(3).try_into().unwrap(),
            rot6d: take(6).try_into().unwrap(),
            translation: take(2).try_into().unwrap(),
            scale: take(1)[0],
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.len() + self.expression.len() + 12
    }
}

impl<T: Real> ModelAssets<T> {
    /// Validate every structural invariant, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_vertices;
        if self.template.len() != n {
            return Err(Error::validation(
                "template",
                format!("expected {n} rows, got {}", self.template.len()),
            ));
        }
        if n == 0 {
            return Err(Error::validation("n_vertices", "must be positive".to_string()));
        }
        for (k, field) in self.shape_basis.iter().enumerate() {
            if field.len() != n {
                return Err(Error::validation(
                    "shape_basis",
                    format!("basis vector {k} has {} rows, expected {n}", field.len()),
                ));
            }
        }
        for (k, field) in self.expr_basis.iter().enumerate() {
            if field.len() != n {
                return Err(Error::validation(
                    "expr_basis",
                    format!("basis vector {k} has {} rows, expected {n}", field.len()),
                ));
            }
        }
        if self.jaw_weights.len() != n {
            return Err(Error::validation(
                "jaw_weights",
                format!("expected {n} entries, got {}", self.jaw_weights.len()),
            ));
        }
        for (i, w) in self.jaw_weights.iter().enumerate() {
            if !(*w >= T::zero() && *w <= T::one()) {
                return Err(Error::validation(
                    "jaw_weights",
                    format!("entry {i} = {w} outside [0, 1]"),
                ));
            }
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                if v >= n {
                    return Err(Error::validation(
                        "triangles",
                        format!("triangle {t} references vertex {v} >= {n}"),
                    ));
                }
            }
        }
        for (field, list) in [
            ("subsample_indices", &self.subsample_indices),
            ("face_indices", &self.face_indices),
            ("landmark_indices", &self.landmark_indices),
        ] {
            validate_index_list(field, list, n)?;
        }
        // Centroid at the origin: required by the alignment rule. 1e-9 at
        // f64; widened to the scalar's own precision at narrower widths.
        let tol = T::c(1e-9).max(T::epsilon() * T::c(100.0));
        let centroid = centroid(&self.template);
        for (axis, c) in centroid.iter().enumerate() {
            if c.abs() > tol {
                return Err(Error::validation(
                    "template",
                    format!("centroid axis {axis} = {c} exceeds {tol}"),
                ));
            }
        }
        Ok(())
    }

    /// Diameter of the template's bounding sphere about the origin.
    pub fn bounding_diameter(&self) -> T {
        let mut max_r2 = T::zero();
        for v in &self.template {
            let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            max_r2 = max_r2.max(r2);
        }
        T::two() * max_r2.sqrt()
    }

    pub fn k_shape(&self) -> usize {
        self.shape_basis.len()
    }

    pub fn k_expr(&self) -> usize {
        self.expr_basis.len()
    }
}

fn validate_index_list(field: &'static str, list: &[usize], n: usize) -> Result<()> {
    if list.is_empty() {
        return Err(Error::validation(field, "empty index list".to_string()));
    }
    let mut seen = vec![false; n];
    for &i in list {
        if i >= n {
            return Err(Error::validation(field, format!("index {i} >= {n}")));
        }
        if seen[i] {
            return Err(Error::validation(field, format!("duplicate index {i}")));
        }
        seen[i] = true;
    }
    Ok(())
}

pub(crate) fn centroid<T: Real>(rows: &[[T; 3]]) -> [T; 3] {
    let mut sum = [T::zero(); 3];
    for v in rows {
        for a in 0..3 {
            sum[a] += v[a];
        }
    }
    let n = T::from_usize(rows.len()).unwrap();
    [sum[0] / n, sum[1] / n, sum[2] / n]
}

/// Template plus blendshape displacements (no jaw).
pub fn blend_vertices<T: Real>(assets: &ModelAssets<T>, params: &HeadParams<T>) -> Result<Vec<[T; 3]>> {
    if params.shape.len() != assets.k_shape() {
        return Err(Error::ShapeMismatch {
            what: "shape coefficients",
            expected: assets.k_shape(),
            got: params.shape.len(),
        });
    }
    if params.expression.len() != assets.k_expr() {
        return Err(Error::ShapeMismatch {
            what: "expression coefficients",
            expected: assets.k_expr(),
            got: params.expression.len(),
        });
    }
    let mut out = assets.template.clone();
    for (coeff, field) in params
        .shape
        .iter()
        .zip(&assets.shape_basis)
        .chain(params.expression.iter().zip(&assets.expr_basis))
    {
        if coeff.is_zero() {
            continue;
        }
        for (v, d) in out.iter_mut().zip(field) {
            v[0] += *coeff * d[0];
            v[1] += *coeff * d[1];
            v[2] += *coeff * d[2];
        }
    }
    Ok(out)
}

/// Gradient of a scalar through [`blend_vertices`] back to the coefficients.
///
/// Returns (d/d shape, d/d expression) given the upstream per-vertex
/// gradient.
pub fn blend_backward<T: Real>(
    assets: &ModelAssets<T>,
    grad_vertices: &[[T; 3]],
) -> (Vec<T>, Vec<T>) {
    let project = |basis: &[Vec<[T; 3]>]| -> Vec<T> {
        basis
            .iter()
            .map(|field| {
                let mut acc = T::zero();
                for (g, d) in grad_vertices.iter().zip(field) {
                    acc += g[0] * d[0] + g[1] * d[1] + g[2] * d[2];
                }
                acc
            })
            .collect()
    };
    (project(&assets.shape_basis), project(&assets.expr_basis))
}

/// Single-joint linear blend skinning about the jaw pivot:
/// `v' = pivot + (1 - w) (v - pivot) + w R_jaw (v - pivot)`, computed as
/// `v + w (R_jaw o - o)` so the zero-jaw case reproduces the input
/// bit-exactly.
pub fn articulate_jaw<T: Real>(
    assets: &ModelAssets<T>,
    vertices: &[[T; 3]],
    jaw: [T; 3],
) -> Vec<[T; 3]> {
    let r = axis_angle_to_matrix(jaw);
    let p = assets.jaw_pivot;
    vertices
        .iter()
        .zip(&assets.jaw_weights)
        .map(|(v, &w)| {
            if w.is_zero() {
                return *v;
            }
            let o = [v[0] - p[0], v[1] - p[1], v[2] - p[2]];
            let ro = r.apply(o);
            [
                v[0] + w * (ro[0] - o[0]),
                v[1] + w * (ro[1] - o[1]),
                v[2] + w * (ro[2] - o[2]),
            ]
        })
        .collect()
}

/// Gradient through [`articulate_jaw`]: returns the gradient with respect
/// to the pre-articulation vertices and the three jaw parameters.
pub fn articulate_jaw_backward<T: Real>(
    assets: &ModelAssets<T>,
    vertices: &[[T; 3]],
    jaw: [T; 3],
    grad_out: &[[T; 3]],
) -> (Vec<[T; 3]>, [T; 3]) {
    let r = axis_angle_to_matrix(jaw);
    let rt = r.transpose();
    let p = assets.jaw_pivot;
    let mut grad_r = [[T::zero(); 3]; 3];
    let grad_vertices: Vec<[T; 3]> = vertices
        .iter()
        .zip(&assets.jaw_weights)
        .zip(grad_out)
        .map(|((v, &w), g)| {
            if w.is_zero() {
                return *g;
            }
            let o = [v[0] - p[0], v[1] - p[1], v[2] - p[2]];
            for i in 0..3 {
                for j in 0..3 {
                    grad_r[i][j] += w * g[i] * o[j];
                }
            }
            let rtg = rt.apply(*g);
            let keep = T::one() - w;
            [
                keep * g[0] + w * rtg[0],
                keep * g[1] + w * rtg[1],
                keep * g[2] + w * rtg[2],
            ]
        })
        .collect();
    let jac = axis_angle_jacobian(jaw);
    let mut grad_jaw = [T::zero(); 3];
    for k in 0..3 {
        let mut acc = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                acc += grad_r[i][j] * jac[k][i][j];
            }
        }
        grad_jaw[k] = acc;
    }
    (grad_vertices, grad_jaw)
}

/// Full canonical synthesis: blendshapes then jaw articulation. Global
/// rotation, translation and scale are deliberately not applied here.
pub fn forward_canonical<T: Real>(
    assets: &ModelAssets<T>,
    params: &HeadParams<T>,
) -> Result<Vec<[T; 3]>> {
    let blended = blend_vertices(assets, params)?;
    Ok(articulate_jaw(assets, &blended, params.jaw))
}

/// Gather rows by index, preserving order. Indices must be in bounds.
pub fn select<Row: Copy>(indices: &[usize], rows: &[Row]) -> Vec<Row> {
    indices.iter().map(|&i| rows[i]).collect()
}
