//! Finite-difference verification of every analytic gradient in the loss
//! stack, sampled at random non-singular points (away from subgradient
//! kinks and the arccos singularity).

use headmesh::fitting::{objective_and_gradient, objective_value_frozen, pred_transform_at};
use headmesh::losses::{
    ciou_alpha_v, ciou_loss, ciou_loss_frozen_alpha, finite_difference_check, focal_loss,
    reprojection_loss, rotation_loss, unit_cube_transform, vertices_loss_with_transforms,
    LossWeights,
};
use headmesh::morphable::{forward_canonical, generate_toy_assets, select, HeadParams};
use headmesh::rng::SplitMix64;
use headmesh::rotation::{axis_angle_to_matrix, geodesic_distance, rot6d_to_matrix, RotationMatrix};
use headmesh::{camera, BBox64, FitConfig64, FitTargets64, Result};

use crate::schema::GradcheckReport;

const EPS: f64 = 1e-6;

pub fn run(seed: u64, points: usize) -> Result<GradcheckReport> {
    Ok(GradcheckReport {
        reprojection: check_reprojection(seed, points),
        vertices3d: check_vertices(seed ^ 0x9e37, points),
        rotation: check_rotation(seed ^ 0x79b9, points),
        focal: check_focal(seed ^ 0x7f4a, points),
        ciou: check_ciou(seed ^ 0x7c15, points),
        objective: check_objective(seed ^ 0x85eb, points)?,
    })
}

fn check_reprojection(seed: u64, points: usize) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let gt: Vec<[f64; 2]> = (0..8)
            .map(|_| [rng.uniform_in(-20.0, 20.0), rng.uniform_in(-20.0, 20.0)])
            .collect();
        let pred: Vec<[f64; 2]> = gt
            .iter()
            .map(|p| {
                let sx = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                let sy = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                // Residuals stay clear of the |.| kink.
                [
                    p[0] + sx * rng.uniform_in(0.1, 3.0),
                    p[1] + sy * rng.uniform_in(0.1, 3.0),
                ]
            })
            .collect();
        let (_, grad) = reprojection_loss(&pred, &gt).expect("shapes match");
        let x: Vec<f64> = pred.iter().flatten().copied().collect();
        let g: Vec<f64> = grad.iter().flatten().copied().collect();
        let f = |v: &[f64]| {
            let pts: Vec<[f64; 2]> = v.chunks(2).map(|c| [c[0], c[1]]).collect();
            reprojection_loss(&pts, &gt).unwrap().0
        };
        worst = worst.max(finite_difference_check(f, &x, &g, EPS));
    }
    worst
}

fn check_vertices(seed: u64, points: usize) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let pred: Vec<[f64; 3]> = (0..12)
            .map(|_| std::array::from_fn(|_| rng.uniform_in(-2.0, 2.0)))
            .collect();
        let gt: Vec<[f64; 3]> = pred
            .iter()
            .map(|p| {
                std::array::from_fn(|a| {
                    let s = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                    p[a] + s * rng.uniform_in(0.05, 0.5)
                })
            })
            .collect();
        let tp = unit_cube_transform(&pred).unwrap();
        let tg = unit_cube_transform(&gt).unwrap();
        let (_, grad) = vertices_loss_with_transforms(&pred, &gt, &tp, &tg).unwrap();
        let x: Vec<f64> = pred.iter().flatten().copied().collect();
        let g: Vec<f64> = grad.iter().flatten().copied().collect();
        // The normalization transform is a stop-gradient: difference the
        // same frozen evaluation the gradient is defined against.
        let f = |v: &[f64]| {
            let pts: Vec<[f64; 3]> = v.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
            vertices_loss_with_transforms(&pts, &gt, &tp, &tg).unwrap().0
        };
        worst = worst.max(finite_difference_check(f, &x, &g, EPS));
    }
    worst
}

fn check_rotation(seed: u64, points: usize) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < points {
        let wp: [f64; 3] = std::array::from_fn(|_| rng.uniform_in(-1.3, 1.3));
        let wg: [f64; 3] = std::array::from_fn(|_| rng.uniform_in(-1.3, 1.3));
        let r_pred = axis_angle_to_matrix(wp);
        let r_gt = axis_angle_to_matrix(wg);
        let angle = geodesic_distance(&r_pred, &r_gt);
        if angle < 0.1 || angle > std::f64::consts::PI - 0.1 {
            continue;
        }
        done += 1;
        let (_, grad) = rotation_loss(&r_pred, &r_gt);
        let x: Vec<f64> = r_pred.entries().iter().flatten().copied().collect();
        let g: Vec<f64> = grad.iter().flatten().copied().collect();
        let f = |v: &[f64]| {
            let m = RotationMatrix::from_array_unchecked([
                [v[0], v[1], v[2]],
                [v[3], v[4], v[5]],
                [v[6], v[7], v[8]],
            ]);
            rotation_loss(&m, &r_gt).0
        };
        worst = worst.max(finite_difference_check(f, &x, &g, EPS));
    }
    worst
}

fn check_focal(seed: u64, points: usize) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let p = rng.uniform_in(0.05, 0.95);
        let positive = rng.uniform() < 0.5;
        let alpha = rng.uniform_in(0.1, 0.9);
        let gamma = rng.uniform_in(0.0, 4.0);
        let (_, grad) = focal_loss(p, positive, alpha, gamma);
        let f = |v: &[f64]| focal_loss(v[0], positive, alpha, gamma).0;
        worst = worst.max(finite_difference_check(f, &[p], &[grad], EPS));
    }
    worst
}

fn check_ciou(seed: u64, points: usize) -> f64 {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < points {
        let gt = BBox64::new(
            rng.uniform_in(-5.0, 0.0),
            rng.uniform_in(-5.0, 0.0),
            rng.uniform_in(1.0, 6.0),
            rng.uniform_in(1.0, 6.0),
        );
        let pred = BBox64::new(
            gt.x1 + rng.uniform_in(-2.0, 2.0),
            gt.y1 + rng.uniform_in(-2.0, 2.0),
            gt.x2 + rng.uniform_in(-2.0, 2.0),
            gt.y2 + rng.uniform_in(-2.0, 2.0),
        );
        if pred.width() <= 0.1 || pred.height() <= 0.1 {
            continue;
        }
        // Stay away from min/max ties and the contact boundary.
        if (pred.x1 - gt.x1).abs() < 1e-3
            || (pred.y1 - gt.y1).abs() < 1e-3
            || (pred.x2 - gt.x2).abs() < 1e-3
            || (pred.y2 - gt.y2).abs() < 1e-3
        {
            continue;
        }
        let ix = pred.x2.min(gt.x2) - pred.x1.max(gt.x1);
        let iy = pred.y2.min(gt.y2) - pred.y1.max(gt.y1);
        if ix.abs() < 1e-3 || iy.abs() < 1e-3 {
            continue;
        }
        done += 1;
        let (_, grad) = ciou_loss(&pred, &gt).unwrap();
        // alpha_v is treated as a constant; freeze it at the base point.
        let alpha = ciou_alpha_v(&pred, &gt).unwrap();
        let f = |v: &[f64]| {
            ciou_loss_frozen_alpha(&BBox64::new(v[0], v[1], v[2], v[3]), &gt, alpha)
                .unwrap()
                .0
        };
        worst = worst.max(finite_difference_check(
            f,
            &[pred.x1, pred.y1, pred.x2, pred.y2],
            &grad,
            EPS,
        ));
    }
    worst
}

fn check_objective(seed: u64, points: usize) -> Result<f64> {
    let assets = generate_toy_assets::<f64>(seed, 162, 4, 2, 16)?;
    let weights = LossWeights::default();
    let mut worst = 0.0f64;
    let mut done = 0;
    let mut attempt = 0u64;
    while done < points {
        attempt += 1;
        let mut rng = SplitMix64::new(seed.wrapping_mul(31).wrapping_add(attempt));
        let truth = random_params(&assets, &mut rng);
        let targets = targets_from(&assets, &truth)?;
        let config = FitConfig64 {
            seed: attempt,
            ..FitConfig64::default()
        };
        let point = config.perturb_init(&truth)?;
        if !nonsingular(&assets, &point, &targets)? {
            continue;
        }
        done += 1;
        let (_, grad) = objective_and_gradient(&assets, &point, &targets, &weights)?;
        let frozen = pred_transform_at(&assets, &point)?;
        let flat = point.to_flat();
        let f = |v: &[f64]| {
            let p = HeadParams::from_flat(v, assets.k_shape(), assets.k_expr()).unwrap();
            objective_value_frozen(&assets, &p, &targets, &weights, &frozen).unwrap()
        };
        worst = worst.max(finite_difference_check(f, &flat, &grad, EPS));
    }
    Ok(worst)
}

fn random_params(assets: &headmesh::ModelAssets64, rng: &mut SplitMix64) -> HeadParams<f64> {
    let mut p = HeadParams::zeros(assets.k_shape(), assets.k_expr());
    for c in p.shape.iter_mut().chain(p.expression.iter_mut()) {
        *c = 0.5 * rng.normal();
    }
    p.jaw = [0.15 * rng.normal(), 0.15 * rng.normal(), 0.15 * rng.normal()];
    let axis: [f64; 3] = std::array::from_fn(|_| rng.normal());
    let n = (axis.iter().map(|a| a * a).sum::<f64>()).sqrt();
    let angle = rng.uniform_in(0.2, 1.2);
    let r = axis_angle_to_matrix([
        axis[0] / n * angle,
        axis[1] / n * angle,
        axis[2] / n * angle,
    ]);
    p.rot6d = r.to_rot6d();
    p.translation = [rng.uniform_in(200.0, 400.0), rng.uniform_in(150.0, 350.0)];
    p.scale = rng.uniform_in(60.0, 160.0);
    p
}

fn targets_from(
    assets: &headmesh::ModelAssets64,
    truth: &HeadParams<f64>,
) -> Result<FitTargets64> {
    let canonical = forward_canonical(assets, truth)?;
    let rotation = rot6d_to_matrix(&truth.rot6d)?;
    let proj = camera::project(&canonical, &rotation, truth.scale, truth.translation)?;
    Ok(FitTargets64 {
        landmarks2d: select(&assets.landmark_indices, &proj.points2d),
        gt_rotation: Some(rotation),
        gt_canonical: Some(select(&assets.subsample_indices, &canonical)),
    })
}

/// Every landmark residual, normalized vertex difference, and the rotation
/// angle must sit clear of the nearest kink or singularity.
fn nonsingular(
    assets: &headmesh::ModelAssets64,
    params: &HeadParams<f64>,
    targets: &FitTargets64,
) -> Result<bool> {
    let canonical = forward_canonical(assets, params)?;
    let rotation = match rot6d_to_matrix(&params.rot6d) {
        Ok(r) => r,
        Err(_) => return Ok(false),
    };
    let proj = camera::project(&canonical, &rotation, params.scale, params.translation)?;
    let lm = select(&assets.landmark_indices, &proj.points2d);
    for (p, g) in lm.iter().zip(&targets.landmarks2d) {
        if (p[0] - g[0]).abs() < 1e-3 || (p[1] - g[1]).abs() < 1e-3 {
            return Ok(false);
        }
    }
    if let Some(gt) = &targets.gt_rotation {
        let angle = geodesic_distance(&rotation, gt);
        if angle < 1e-2 || angle > std::f64::consts::PI - 1e-2 {
            return Ok(false);
        }
    }
    if let Some(gt) = &targets.gt_canonical {
        let sub = select(&assets.subsample_indices, &canonical);
        let tp = unit_cube_transform(&sub)?;
        let tg = unit_cube_transform(gt)?;
        for (p, g) in sub.iter().zip(gt) {
            let pn = tp.apply(*p);
            let gn = tg.apply(*g);
            let d = ((pn[0] - gn[0]).powi(2) + (pn[1] - gn[1]).powi(2) + (pn[2] - gn[2]).powi(2))
                .sqrt();
            if d < 1e-3 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
