//! Asset file I/O (versioned JSON) and Wavefront OBJ export.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::ModelAssets;
use crate::error::{Error, Result};
use crate::jsonio;
use crate::scalar::Real;

const ASSET_VERSION: u32 = 1;

/// On-disk schema. Numeric arrays hold 64-bit floats; indices are integers.
#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: DeserializeOwned"))]
pub(crate) struct AssetsFile<T> {
    version: u32,
    n_vertices: usize,
    template: Vec<[T; 3]>,
    shape_basis: Vec<Vec<[T; 3]>>,
    expr_basis: Vec<Vec<[T; 3]>>,
    jaw_weights: Vec<T>,
    jaw_pivot: [T; 3],
    triangles: Vec<[usize; 3]>,
    subsample_indices: Vec<usize>,
    face_indices: Vec<usize>,
    landmark_indices: Vec<usize>,
}

pub(crate) fn to_file<T: Clone>(assets: &ModelAssets<T>) -> AssetsFile<T> {
    AssetsFile {
        version: ASSET_VERSION,
        n_vertices: assets.n_vertices,
        template: assets.template.clone(),
        shape_basis: assets.shape_basis.clone(),
        expr_basis: assets.expr_basis.clone(),
        jaw_weights: assets.jaw_weights.clone(),
        jaw_pivot: assets.jaw_pivot.clone(),
        triangles: assets.triangles.clone(),
        subsample_indices: assets.subsample_indices.clone(),
        face_indices: assets.face_indices.clone(),
        landmark_indices: assets.landmark_indices.clone(),
    }
}

/// Write assets as deterministic JSON. `save` then [`load_assets`]
/// round-trips bit-exactly.
pub fn save_assets<T: Real + Serialize>(assets: &ModelAssets<T>, path: impl AsRef<Path>) -> Result<()> {
    let text = jsonio::to_json_string(&to_file(assets))?;
    fs::write(path, text)?;
    Ok(())
}

/// Load assets, validating every structural invariant before returning.
pub fn load_assets<T: Real + DeserializeOwned>(path: impl AsRef<Path>) -> Result<ModelAssets<T>> {
    let text = fs::read_to_string(path)?;
    let file: AssetsFile<T> = serde_json::from_str(&text)?;
    if file.version != ASSET_VERSION {
        return Err(Error::validation(
            "version",
            format!("unsupported asset version {}", file.version),
        ));
    }
    let assets = ModelAssets {
        n_vertices: file.n_vertices,
        template: file.template,
        shape_basis: file.shape_basis,
        expr_basis: file.expr_basis,
        jaw_weights: file.jaw_weights,
        jaw_pivot: file.jaw_pivot,
        triangles: file.triangles,
        subsample_indices: file.subsample_indices,
        face_indices: file.face_indices,
        landmark_indices: file.landmark_indices,
    };
    assets.validate()?;
    Ok(assets)
}

/// Wavefront OBJ export: `v` records with 9 significant digits, `f` records
/// with 1-based indices.
pub fn write_obj<T: Real, W: Write>(
    vertices: &[[T; 3]],
    triangles: &[[usize; 3]],
    out: &mut W,
) -> std::io::Result<()> {
    for v in vertices {
        writeln!(
            out,
            "v {:.8e} {:.8e} {:.8e}",
            v[0].to_f64().unwrap_or(f64::NAN),
            v[1].to_f64().unwrap_or(f64::NAN),
            v[2].to_f64().unwrap_or(f64::NAN)
        )?;
    }
    for t in triangles {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphable::generate_toy_assets;

    #[test]
    fn save_load_round_trip() {
        let assets = generate_toy_assets::<f64>(7, 162, 4, 2, 16).unwrap();
        let dir = std::env::temp_dir().join(format!("headmesh-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("assets.json");
        save_assets(&assets, &path).unwrap();
        let back: ModelAssets<f64> = load_assets(&path).unwrap();
        assert_eq!(assets, back);
        // Byte-exact when saved again.
        let first = fs::read(&path).unwrap();
        save_assets(&back, &path).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn load_rejects_bad_triangle_index() {
        let assets = generate_toy_assets::<f64>(7, 24, 2, 1, 4).unwrap();
        let mut file = to_file(&assets);
        file.triangles[0][1] = 24;
        let text = jsonio::to_json_string(&file).unwrap();
        let dir = std::env::temp_dir().join(format!("headmesh-io2-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.json");
        fs::write(&path, text).unwrap();
        let err = load_assets::<f64>(&path).unwrap_err();
        assert!(err.to_string().contains("triangles"), "{err}");
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn load_rejects_out_of_range_jaw_weight() {
        let assets = generate_toy_assets::<f64>(7, 24, 2, 1, 4).unwrap();
        let mut file = to_file(&assets);
        file.jaw_weights[3] = 1.5;
        let text = jsonio::to_json_string(&file).unwrap();
        let dir = std::env::temp_dir().join(format!("headmesh-io3-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.json");
        fs::write(&path, text).unwrap();
        let err = load_assets::<f64>(&path).unwrap_err();
        assert!(err.to_string().contains("jaw_weights"), "{err}");
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn obj_export_formats_records() {
        let verts = vec![[1.0f64, -0.5, 0.125]];
        let tris = vec![[0usize, 0, 0]];
        let mut buf = Vec::new();
        write_obj(&verts, &tris, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "v 1.00000000e0 -5.00000000e-1 1.25000000e-1\nf 1 1 1\n"
        );
    }
}
