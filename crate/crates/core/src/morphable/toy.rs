//! Deterministic toy-asset generator: a unit-radius triangulated sphere with
//! pseudo-random blendshapes, a lower-third jaw region, and index subsets.
//! Substitutes for licensed statistical head models in tests and demos.

use super::{centroid, ModelAssets};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scalar::Real;

/// RMS per-vertex displacement of each generated basis field, model units.
const BASIS_RMS: f64 = 0.05;
/// Template y below which jaw skinning weights become nonzero.
const JAW_Y_START: f64 = -0.2;
/// Ramp length from weight 0 to weight 1.
const JAW_RAMP: f64 = 0.3;
/// Template y below which vertices count as "neck" and leave the subsample.
const NECK_Y: f64 = -0.75;
/// Template z at and above which vertices count as facial.
const FACE_Z: f64 = 0.3;

pub fn generate_toy_assets<T: Real>(
    seed: u64,
    n_vertices: usize,
    k_shape: usize,
    k_expr: usize,
    n_landmarks: usize,
) -> Result<ModelAssets<T>> {
    if n_vertices < 12 {
        return Err(Error::invalid(
            "n_vertices",
            format!("must be >= 12, got {n_vertices}"),
        ));
    }
    if k_shape == 0 || k_expr == 0 || n_landmarks == 0 {
        return Err(Error::invalid("counts", "basis and landmark counts must be >= 1"));
    }
    if n_landmarks > n_vertices {
        return Err(Error::invalid(
            "n_landmarks",
            format!("{n_landmarks} exceeds vertex count {n_vertices}"),
        ));
    }

    let (mut template, triangles) = sphere_mesh(n_vertices);

    // Exact recentering so the model-space origin is the geometric center.
    let c = centroid(&template);
    for v in &mut template {
        for a in 0..3 {
            v[a] -= c[a];
        }
    }

    let mut rng = SplitMix64::new(seed);
    let shape_basis = gen_basis(&mut rng, k_shape, n_vertices);
    let expr_basis = gen_basis(&mut rng, k_expr, n_vertices);

    let jaw_weights: Vec<f64> = template
        .iter()
        .map(|v| {
            if v[1] < JAW_Y_START {
                ((JAW_Y_START - v[1]) / JAW_RAMP).min(1.0)
            } else {
                0.0
            }
        })
        .collect();
    let jaw_pivot = [0.0, JAW_Y_START, 0.0];

    let subsample_indices: Vec<usize> = (0..n_vertices)
        .filter(|&i| template[i][1] >= NECK_Y)
        .collect();
    let mut face_indices: Vec<usize> = (0..n_vertices)
        .filter(|&i| template[i][2] >= FACE_Z)
        .collect();
    if face_indices.len() < n_landmarks {
        // Tiny meshes: fall back to the whole head for landmark placement.
        face_indices = (0..n_vertices).collect();
    }
    let landmark_indices = spread_indices(&face_indices, n_landmarks);

    let assets = ModelAssets {
        n_vertices,
        template: convert_rows(&template),
        shape_basis: shape_basis.iter().map(|f| convert_rows(f)).collect(),
        expr_basis: expr_basis.iter().map(|f| convert_rows(f)).collect(),
        jaw_weights: jaw_weights.iter().map(|&w| T::c(w)).collect(),
        jaw_pivot: [T::c(jaw_pivot[0]), T::c(jaw_pivot[1]), T::c(jaw_pivot[2])],
        triangles,
        subsample_indices,
        face_indices,
        landmark_indices,
    };
    assets.validate()?;
    Ok(assets)
}

fn convert_rows<T: Real>(rows: &[[f64; 3]]) -> Vec<[T; 3]> {
    rows.iter()
        .map(|r| [T::c(r[0]), T::c(r[1]), T::c(r[2])])
        .collect()
}

/// Latitude-ring sphere with two poles; handles any vertex count >= 12 by
/// distributing the interior vertices over the rings and zippering adjacent
/// rings of unequal size.
fn sphere_mesh(n_vertices: usize) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let interior = n_vertices - 2;
    let rings = (((interior as f64) / 2.0).sqrt().round() as usize).max(3);
    let base = interior / rings;
    let extra = interior % rings;

    let mut vertices = Vec::with_capacity(n_vertices);
    vertices.push([0.0, 1.0, 0.0]); // north pole
    let mut ring_ranges: Vec<(usize, usize)> = Vec::with_capacity(rings);
    for r in 0..rings {
        let count = base + usize::from(r < extra);
        let phi = std::f64::consts::PI * (r + 1) as f64 / (rings + 1) as f64;
        let (y, rho) = (phi.cos(), phi.sin());
        let start = vertices.len();
        for j in 0..count {
            let theta = std::f64::consts::TAU * j as f64 / count as f64;
            vertices.push([rho * theta.sin(), y, rho * theta.cos()]);
        }
        ring_ranges.push((start, count));
    }
    vertices.push([0.0, -1.0, 0.0]); // south pole
    let south = vertices.len() - 1;

    let mut triangles = Vec::new();
    let (first_start, first_count) = ring_ranges[0];
    for j in 0..first_count {
        triangles.push([0, first_start + j, first_start + (j + 1) % first_count]);
    }
    for w in ring_ranges.windows(2) {
        let (a_start, a_count) = w[0];
        let (b_start, b_count) = w[1];
        zipper(a_start, a_count, b_start, b_count, &mut triangles);
    }
    let (last_start, last_count) = ring_ranges[rings - 1];
    for j in 0..last_count {
        triangles.push([south, last_start + (j + 1) % last_count, last_start + j]);
    }
    (vertices, triangles)
}

/// Triangulate the band between two rings by advancing whichever side has
/// made the smaller angular progress.
fn zipper(a_start: usize, a_count: usize, b_start: usize, b_count: usize, out: &mut Vec<[usize; 3]>) {
    let mut i = 0usize;
    let mut j = 0usize;
    while i < a_count || j < b_count {
        let advance_a = if j >= b_count {
            true
        } else if i >= a_count {
            false
        } else {
            (i + 1) * b_count <= (j + 1) * a_count
        };
        if advance_a {
            out.push([
                a_start + i % a_count,
                a_start + (i + 1) % a_count,
                b_start + j % b_count,
            ]);
            i += 1;
        } else {
            out.push([
                b_start + (j + 1) % b_count,
                b_start + j % b_count,
                a_start + i % a_count,
            ]);
            j += 1;
        }
    }
}

fn gen_basis(rng: &mut SplitMix64, k: usize, n: usize) -> Vec<Vec<[f64; 3]>> {
    (0..k)
        .map(|_| {
            let mut field: Vec<[f64; 3]> = (0..n)
                .map(|_| std::array::from_fn(|_| rng.normal()))
                .collect();
            let ms: f64 = field
                .iter()
                .map(|d| d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
                .sum::<f64>()
                / n as f64;
            let scale = BASIS_RMS / ms.sqrt();
            for d in &mut field {
                for a in 0..3 {
                    d[a] *= scale;
                }
            }
            field
        })
        .collect()
}

/// Pick `count` distinct indices spread evenly over `pool` (pool is sorted
/// ascending and at least `count` long).
fn spread_indices(pool: &[usize], count: usize) -> Vec<usize> {
    if count == 1 {
        return vec![pool[0]];
    }
    (0..count)
        .map(|j| pool[j * (pool.len() - 1) / (count - 1)])
        .collect()
}
