//! Projected Normalized Coordinate Code rendering: per-vertex RGB from
//! normalized canonical coordinates (x -> R, y -> G, z -> B) and a minimal
//! deterministic z-buffer triangle rasterizer with binary PPM output.
//!
//! Rasterization samples pixel centers with edge functions under the
//! top-left fill rule, so shared edges paint exactly one triangle and the
//! output is independent of triangle submission order. Weak perspective is
//! affine in screen space, so plain barycentric interpolation is exact.

use std::io::Write;
use std::path::Path;

use crate::camera::ProjectedHead;
use crate::error::{Error, Result};
use crate::losses::normalize_unit_cube;
use crate::scalar::Real;

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
}

impl RasterImage {
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let at = 3 * (y as usize * self.width as usize + x as usize);
        [self.rgb[at], self.rgb[at + 1], self.rgb[at + 2]]
    }
}

/// Normalized-coordinate colors for a canonical mesh: unit-cube
/// normalization followed by the identity map (x, y, z) -> (r, g, b).
/// Outputs are clamped into [0, 1]^3 against rounding dust.
pub fn ncc_encode<T: Real>(vertices: &[[T; 3]]) -> Result<Vec<[T; 3]>> {
    let (normalized, _) = normalize_unit_cube(vertices)?;
    Ok(normalized
        .into_iter()
        .map(|v| {
            [
                v[0].max(T::zero()).min(T::one()),
                v[1].max(T::zero()).min(T::one()),
                v[2].max(T::zero()).min(T::one()),
            ]
        })
        .collect())
}

fn edge<T: Real>(a: [T; 2], b: [T; 2], p: [T; 2]) -> T {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// With inside-positive orientation in y-down pixel coordinates, a shared
/// pixel belongs to the triangle whose edge is "top" (horizontal, pointing
/// +x) or "left" (pointing -y).
fn is_top_left<T: Real>(a: [T; 2], b: [T; 2]) -> bool {
    (a[1] == b[1] && b[0] > a[0]) || b[1] < a[1]
}

/// Rasterize colored triangles over a black background. The nearest
/// fragment (smallest depth) wins; exact depth ties resolve to the
/// lexicographically smaller quantized color so the result never depends
/// on submission order.
pub fn rasterize<T: Real>(
    proj: &ProjectedHead<T>,
    triangles: &[[usize; 3]],
    colors: &[[T; 3]],
    width: u32,
    height: u32,
) -> Result<RasterImage> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("size", "image dimensions must be positive"));
    }
    if colors.len() != proj.points2d.len() {
        return Err(Error::ShapeMismatch {
            what: "vertex colors",
            expected: proj.points2d.len(),
            got: colors.len(),
        });
    }
    let npix = width as usize * height as usize;
    let mut zbuf: Vec<Option<(T, [u8; 3])>> = vec![None; npix];

    for tri in triangles {
        let [i0, i1, i2] = *tri;
        let mut v = [proj.points2d[i0], proj.points2d[i1], proj.points2d[i2]];
        let mut z = [proj.depth[i0], proj.depth[i1], proj.depth[i2]];
        let mut c = [colors[i0], colors[i1], colors[i2]];
        let mut area2 = edge(v[0], v[1], v[2]);
        if area2.is_zero() {
            continue;
        }
        if area2 < T::zero() {
            v.swap(1, 2);
            z.swap(1, 2);
            c.swap(1, 2);
            area2 = -area2;
        }

        let min_x = v[0][0].min(v[1][0]).min(v[2][0]);
        let max_x = v[0][0].max(v[1][0]).max(v[2][0]);
        let min_y = v[0][1].min(v[1][1]).min(v[2][1]);
        let max_y = v[0][1].max(v[1][1]).max(v[2][1]);
        let x0 = (min_x - T::half()).ceil().to_f64().unwrap_or(0.0).max(0.0) as u32;
        let y0 = (min_y - T::half()).ceil().to_f64().unwrap_or(0.0).max(0.0) as u32;
        let x1 = (max_x - T::half())
            .floor()
            .to_f64()
            .unwrap_or(-1.0)
            .min((width - 1) as f64);
        let y1 = (max_y - T::half())
            .floor()
            .to_f64()
            .unwrap_or(-1.0)
            .min((height - 1) as f64);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        let (x1, y1) = (x1 as u32, y1 as u32);

        let tl = [
            is_top_left(v[1], v[2]),
            is_top_left(v[2], v[0]),
            is_top_left(v[0], v[1]),
        ];

        for py in y0..=y1 {
            for px in x0..=x1 {
                let p = [
                    T::from_u32(px).unwrap() + T::half(),
                    T::from_u32(py).unwrap() + T::half(),
                ];
                let w0 = edge(v[1], v[2], p);
                let w1 = edge(v[2], v[0], p);
                let w2 = edge(v[0], v[1], p);
                let inside = (w0 > T::zero() || (w0.is_zero() && tl[0]))
                    && (w1 > T::zero() || (w1.is_zero() && tl[1]))
                    && (w2 > T::zero() || (w2.is_zero() && tl[2]));
                if !inside {
                    continue;
                }
                let l0 = w0 / area2;
                let l1 = w1 / area2;
                let l2 = w2 / area2;
                let depth = l0 * z[0] + l1 * z[1] + l2 * z[2];
                let rgb = quantize([
                    l0 * c[0][0] + l1 * c[1][0] + l2 * c[2][0],
                    l0 * c[0][1] + l1 * c[1][1] + l2 * c[2][1],
                    l0 * c[0][2] + l1 * c[1][2] + l2 * c[2][2],
                ]);
                let slot = &mut zbuf[py as usize * width as usize + px as usize];
                let replace = match slot {
                    None => true,
                    Some((cur, cur_rgb)) => depth < *cur || (depth == *cur && rgb < *cur_rgb),
                };
                if replace {
                    *slot = Some((depth, rgb));
                }
            }
        }
    }

    let mut rgb = vec![0u8; 3 * npix];
    for (i, slot) in zbuf.iter().enumerate() {
        if let Some((_, c)) = slot {
            rgb[3 * i] = c[0];
            rgb[3 * i + 1] = c[1];
            rgb[3 * i + 2] = c[2];
        }
    }
    Ok(RasterImage { width, height, rgb })
}

/// Round half-up to 8 bits.
fn quantize<T: Real>(c: [T; 3]) -> [u8; 3] {
    std::array::from_fn(|i| {
        let v = (c[i] * T::c(255.0) + T::half()).floor();
        v.to_f64().unwrap_or(0.0).clamp(0.0, 255.0) as u8
    })
}

/// Binary PPM (P6) bytes: `P6\n{w} {h}\n255\n` followed by raw RGB.
pub fn ppm_bytes(img: &RasterImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.rgb);
    out
}

pub fn write_ppm(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&ppm_bytes(img))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::project;
    use crate::morphable::{forward_canonical, generate_toy_assets, HeadParams};
    use crate::rotation::{axis_angle_to_matrix, RotationMatrix};

    fn test_read_ppm(bytes: &[u8]) -> RasterImage {
        let header_end = bytes
            .windows(1)
            .enumerate()
            .filter(|(_, w)| w[0] == b'\n')
            .map(|(i, _)| i)
            .nth(2)
            .unwrap();
        let header = std::str::from_utf8(&bytes[..header_end]).unwrap();
        let mut parts = header.split_whitespace();
        assert_eq!(parts.next(), Some("P6"));
        let width: u32 = parts.next().unwrap().parse().unwrap();
        let height: u32 = parts.next().unwrap().parse().unwrap();
        assert_eq!(parts.next(), Some("255"));
        RasterImage {
            width,
            height,
            rgb: bytes[header_end + 1..].to_vec(),
        }
    }

    fn flat_proj(points: Vec<[f64; 2]>, depth: Vec<f64>) -> ProjectedHead<f64> {
        ProjectedHead {
            points2d: points,
            depth,
            rotation: RotationMatrix::identity(),
            translation: [0.0, 0.0],
            scale: 1.0,
        }
    }

    #[test]
    fn ncc_endpoints() {
        let verts = vec![[0.0f64, 0.0, 0.0], [2.0, 2.0, 2.0], [1.0, 1.5, 0.5]];
        let colors = ncc_encode(&verts).unwrap();
        assert_eq!(colors[0], [0.0, 0.0, 0.0]);
        assert_eq!(colors[1], [1.0, 1.0, 1.0]);
        for c in &colors {
            for v in c {
                assert!((0.0..=1.0).contains(v));
            }
        }
    }

    #[test]
    fn ncc_bounds_on_random_meshes() {
        let mut rng = crate::rng::SplitMix64::new(157);
        for _ in 0..20 {
            let verts: Vec<[f64; 3]> = (0..30)
                .map(|_| std::array::from_fn(|_| rng.uniform_in(-10.0, 10.0)))
                .collect();
            for c in ncc_encode(&verts).unwrap() {
                for v in c {
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn single_triangle_paints_pixel() {
        let proj = flat_proj(
            vec![[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]],
            vec![0.0, 0.0, 0.0],
        );
        let colors = vec![[1.0, 0.0, 0.0]; 3];
        let img = rasterize(&proj, &[[0, 1, 2]], &colors, 4, 4).unwrap();
        assert_eq!(img.pixel(1, 1), [255, 0, 0]);
        assert_eq!(img.pixel(3, 3), [0, 0, 0]);
    }

    #[test]
    fn nearer_triangle_wins() {
        let proj = flat_proj(
            vec![
                [0.0, 0.0],
                [8.0, 0.0],
                [0.0, 8.0],
                [0.0, 0.0],
                [8.0, 0.0],
                [0.0, 8.0],
            ],
            vec![5.0, 5.0, 5.0, 1.0, 1.0, 1.0],
        );
        let mut colors = vec![[1.0, 0.0, 0.0]; 3];
        colors.extend(vec![[0.0, 1.0, 0.0]; 3]);
        let img1 = rasterize(&proj, &[[0, 1, 2], [3, 4, 5]], &colors, 8, 8).unwrap();
        assert_eq!(img1.pixel(2, 2), [0, 255, 0]);
        // Reversed submission order: identical output.
        let img2 = rasterize(&proj, &[[3, 4, 5], [0, 1, 2]], &colors, 8, 8).unwrap();
        assert_eq!(img1, img2);
    }

    #[test]
    fn shared_edge_paints_once() {
        // Two triangles sharing the diagonal of a quad should tile it with
        // no gaps; with distinct flat colors every interior pixel is one of
        // the two pure colors (no seam dropouts on the shared edge).
        let proj = flat_proj(
            vec![[0.0, 0.0], [8.0, 0.0], [8.0, 8.0], [0.0, 8.0]],
            vec![0.0; 4],
        );
        let colors = vec![
            [1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
        ];
        let img = rasterize(&proj, &[[0, 1, 2], [0, 2, 3]], &colors, 8, 8).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(img.pixel(x, y), [255, 0, 0], "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn interpolated_colors_stay_in_vertex_hull() {
        let mut rng = crate::rng::SplitMix64::new(163);
        for _ in 0..20 {
            let pts: Vec<[f64; 2]> = (0..3)
                .map(|_| [rng.uniform_in(0.0, 16.0), rng.uniform_in(0.0, 16.0)])
                .collect();
            let colors: Vec<[f64; 3]> = (0..3)
                .map(|_| std::array::from_fn(|_| rng.uniform()))
                .collect();
            let proj = flat_proj(pts, vec![0.0; 3]);
            let img = rasterize(&proj, &[[0, 1, 2]], &colors, 16, 16).unwrap();
            for ch in 0..3 {
                let lo = colors.iter().map(|c| c[ch]).fold(f64::MAX, f64::min);
                let hi = colors.iter().map(|c| c[ch]).fold(f64::MIN, f64::max);
                let lo8 = ((lo * 255.0 + 0.5).floor() - 1.0).max(0.0) as u8;
                let hi8 = ((hi * 255.0 + 0.5).floor() + 1.0).min(255.0) as u8;
                for y in 0..16 {
                    for x in 0..16 {
                        let px = img.pixel(x, y);
                        if px != [0, 0, 0] {
                            assert!(px[ch] >= lo8 && px[ch] <= hi8);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn toy_head_render_is_deterministic_and_order_invariant() {
        let assets = generate_toy_assets::<f64>(7, 162, 4, 2, 16).unwrap();
        let params = HeadParams::zeros(4, 2);
        let canonical = forward_canonical(&assets, &params).unwrap();
        let colors = ncc_encode(&canonical).unwrap();
        let rot = axis_angle_to_matrix([0.0, 0.4, 0.0]);
        let proj = project(&canonical, &rot, 100.0, [128.0, 128.0]).unwrap();
        let img1 = rasterize(&proj, &assets.triangles, &colors, 256, 256).unwrap();
        let img2 = rasterize(&proj, &assets.triangles, &colors, 256, 256).unwrap();
        assert_eq!(img1, img2);

        let mut reversed = assets.triangles.clone();
        reversed.reverse();
        let img3 = rasterize(&proj, &reversed, &colors, 256, 256).unwrap();
        assert_eq!(img1, img3);

        // The head actually covers pixels.
        assert!(img1.rgb.iter().any(|&b| b != 0));
    }

    #[test]
    fn ppm_format_examples() {
        let img = RasterImage {
            width: 1,
            height: 1,
            rgb: vec![255, 255, 255],
        };
        let bytes = ppm_bytes(&img);
        assert_eq!(&bytes, b"P6\n1 1\n255\n\xff\xff\xff");

        let back = test_read_ppm(&bytes);
        assert_eq!(back, img);
    }
}
