//! Inverse problem: recover head parameters from 2D landmarks and optional
//! rotation / canonical-mesh targets by gradient descent through the full
//! differentiable chain (blendshapes, jaw skinning, 6D orthonormalization,
//! weak-perspective projection, and the loss stack).
//!
//! The loss surface is piecewise linear around its kinks (L1 reprojection,
//! per-point vertex norms), so the solver is a deterministic subgradient
//! walk rather than a line-searched descent: a monotone line search wedges
//! at kink intersections where no step along the negative gradient
//! decreases the loss, while a subgradient walk keeps contracting the
//! distance to the optimum even when the recorded loss moves uphill for a
//! stretch. Steps follow the momentum-filtered gradient, normalized
//! per-coordinate by the largest gradient magnitude seen (the parameter
//! blocks live on very different scales), and are sized to cancel the
//! current loss under the local linear model, capped by the scheduled
//! step envelope. The trace records the walk verbatim; the returned
//! parameters are the best iterate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{
    reprojection_loss, rotation_loss, total_loss, unit_cube_transform,
    vertices_loss_with_transforms, LossBreakdown, LossWeights, UnitCubeTransform,
};
use crate::morphable::{
    articulate_jaw, articulate_jaw_backward, blend_backward, blend_vertices, select, HeadParams,
    ModelAssets,
};
use crate::rng::SplitMix64;
use crate::rotation::{axis_angle_to_matrix, rot6d_backward, rot6d_to_matrix, RotationMatrix};
use crate::scalar::Real;

/// Ground-truth evidence for one head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTargets<T> {
    /// L x 2 pixel landmarks (required).
    pub landmarks2d: Vec<[T; 2]>,
    /// Optional ground-truth global rotation.
    pub gt_rotation: Option<RotationMatrix<T>>,
    /// Optional subsampled canonical mesh (k x 3 model units).
    pub gt_canonical: Option<Vec<[T; 3]>>,
}

/// Descent hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig<T> {
    pub max_iters: usize,
    pub step_size: T,
    /// Scheduled decay: multiply the step by `decay_factor` every
    /// `decay_every` iterations.
    pub decay_every: usize,
    pub decay_factor: T,
    pub weights: LossWeights<T>,
    /// Converged when the total loss changes by less than this over
    /// `convergence_window` iterations.
    pub convergence_tol: T,
    pub convergence_window: usize,
    /// Seed for [`FitConfig::perturb_init`].
    pub seed: u64,
    /// Rotation perturbation magnitude used by `perturb_init`, radians.
    pub init_rot_perturb: T,
    /// Coefficient perturbation sigma used by `perturb_init`.
    pub init_coeff_sigma: T,
}

impl<T: Real> Default for FitConfig<T> {
    fn default() -> Self {
        FitConfig {
            max_iters: 2000,
            step_size: T::c(0.05),
            decay_every: 500,
            decay_factor: T::half(),
            weights: LossWeights::default(),
            convergence_tol: T::c(1e-10),
            convergence_window: 20,
            seed: 0,
            init_rot_perturb: T::c(0.2),
            init_coeff_sigma: T::c(0.1),
        }
    }
}

impl<T: Real> FitConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be >= 1"));
        }
        if !(self.step_size > T::zero()) {
            return Err(Error::invalid("step_size", "must be positive"));
        }
        self.weights.validate()
    }

    /// Perturb ground-truth parameters into a starting point: the rotation
    /// is composed with a random-axis rotation of `init_rot_perturb`
    /// radians, and shape/expression/jaw coefficients get N(0, sigma)
    /// noise. Deterministic in `seed`.
    pub fn perturb_init(&self, params: &HeadParams<T>) -> Result<HeadParams<T>> {
        let mut rng = SplitMix64::new(self.seed);
        let mut out = params.clone();
        for c in out.shape.iter_mut().chain(out.expression.iter_mut()) {
            *c += T::c(rng.normal()) * self.init_coeff_sigma;
        }
        for c in out.jaw.iter_mut() {
            *c += T::c(rng.normal()) * self.init_coeff_sigma;
        }
        let axis = [rng.normal(), rng.normal(), rng.normal()];
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let angle = self.init_rot_perturb;
        let step = axis_angle_to_matrix([
            T::c(axis[0] / n) * angle,
            T::c(axis[1] / n) * angle,
            T::c(axis[2] / n) * angle,
        ]);
        let r = rot6d_to_matrix(&out.rot6d)?;
        out.rot6d = r.compose(&step).to_rot6d();
        Ok(out)
    }
}

/// A scheduled decay of the step envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepEvent {
    pub iteration: usize,
}

/// Record of one descent run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace<T> {
    /// Loss at the initial point followed by one entry per iteration,
    /// recorded verbatim (the walk may move uphill between decays).
    pub breakdowns: Vec<LossBreakdown<T>>,
    /// Best parameters seen.
    pub final_params: HeadParams<T>,
    /// Loss breakdown at `final_params`.
    pub final_breakdown: LossBreakdown<T>,
    pub iterations: usize,
    pub converged: bool,
    pub step_events: Vec<StepEvent>,
}

impl<T: Real> FitTrace<T> {
    pub fn final_total(&self) -> T {
        self.final_breakdown.total
    }
}

/// Fitting failure.
#[derive(Debug)]
pub enum FitError<T> {
    /// The total loss became NaN or infinite; the trace up to that point
    /// is attached.
    Diverged { trace: Box<FitTrace<T>> },
    Core(Error),
}

impl<T: std::fmt::Debug> std::fmt::Display for FitError<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitError::Diverged { trace } => {
                write!(f, "fit diverged after {} iterations", trace.iterations)
            }
            FitError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl<T: std::fmt::Debug> std::error::Error for FitError<T> {}

impl<T> From<Error> for FitError<T> {
    fn from(e: Error) -> Self {
        FitError::Core(e)
    }
}

fn validate_targets<T: Real>(assets: &ModelAssets<T>, targets: &FitTargets<T>) -> Result<()> {
    if targets.landmarks2d.len() != assets.landmark_indices.len() {
        return Err(Error::ShapeMismatch {
            what: "landmarks",
            expected: assets.landmark_indices.len(),
            got: targets.landmarks2d.len(),
        });
    }
    if let Some(gt) = &targets.gt_canonical {
        if gt.len() != assets.subsample_indices.len() {
            return Err(Error::ShapeMismatch {
                what: "canonical target vertices",
                expected: assets.subsample_indices.len(),
                got: gt.len(),
            });
        }
    }
    Ok(())
}

/// Loss breakdown and exact analytic gradient over the flat parameter
/// vector (shape, expression, jaw, rot6d, translation, scale).
///
/// The reprojection term always contributes; the rotation and 3D vertices
/// terms contribute exactly zero to value and gradient when their targets
/// are absent. Classification and box terms are not part of the fitting
/// objective (no anchors here) and stay zero in the breakdown.
pub fn objective_and_gradient<T: Real>(
    assets: &ModelAssets<T>,
    params: &HeadParams<T>,
    targets: &FitTargets<T>,
    weights: &LossWeights<T>,
) -> Result<(LossBreakdown<T>, Vec<T>)> {
    validate_targets(assets, targets)?;
    params.validate(assets.k_shape(), assets.k_expr())?;

    // Forward chain.
    let blended = blend_vertices(assets, params)?;
    let canonical = articulate_jaw(assets, &blended, params.jaw);
    let rotation = rot6d_to_matrix(&params.rot6d)?;
    let scale = params.scale;
    let translation = params.translation;
    let n = canonical.len();

    let landmarks_pred: Vec<[T; 2]> = assets
        .landmark_indices
        .iter()
        .map(|&i| {
            let r = rotation.apply(canonical[i]);
            [scale * r[0] + translation[0], -scale * r[1] + translation[1]]
        })
        .collect();

    let (l_reproj, grad_landmarks) = reprojection_loss(&landmarks_pred, &targets.landmarks2d)?;

    let (l_rot, grad_rot_loss) = match &targets.gt_rotation {
        Some(gt) => rotation_loss(&rotation, gt),
        None => (T::zero(), [[T::zero(); 3]; 3]),
    };

    let mut grad_canonical = vec![[T::zero(); 3]; n];

    let l_3d = match &targets.gt_canonical {
        Some(gt) => {
            let sub = select(&assets.subsample_indices, &canonical);
            let tp = unit_cube_transform(&sub)?;
            let tg = unit_cube_transform(gt)?;
            let (value, grad_sub) = vertices_loss_with_transforms(&sub, gt, &tp, &tg)?;
            for (&vi, g) in assets.subsample_indices.iter().zip(&grad_sub) {
                for a in 0..3 {
                    grad_canonical[vi][a] += weights.w_3d * g[a];
                }
            }
            value
        }
        None => T::zero(),
    };

    let breakdown = total_loss(l_3d, l_rot, l_reproj, T::zero(), T::zero(), weights);

    // Backward: start from the landmark gradients and the rotation loss.
    let mut grad_rotation = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            grad_rotation[i][j] = weights.w_rot * grad_rot_loss[i][j];
        }
    }
    let mut grad_translation = [T::zero(); 2];
    let mut grad_scale = T::zero();

    let m = rotation.entries();
    for (&vi, g2) in assets.landmark_indices.iter().zip(&grad_landmarks) {
        let gx = weights.w_reproj * g2[0];
        let gy = weights.w_reproj * g2[1];
        let v = canonical[vi];
        let r = rotation.apply(v);
        grad_scale += gx * r[0] - gy * r[1];
        grad_translation[0] += gx;
        grad_translation[1] += gy;
        for j in 0..3 {
            grad_rotation[0][j] += gx * scale * v[j];
            grad_rotation[1][j] -= gy * scale * v[j];
            grad_canonical[vi][j] += scale * (gx * m[0][j] - gy * m[1][j]);
        }
    }

    let grad_rot6d = rot6d_backward(&params.rot6d, &grad_rotation)?;
    let (grad_blended, grad_jaw) =
        articulate_jaw_backward(assets, &blended, params.jaw, &grad_canonical);
    let (grad_shape, grad_expr) = blend_backward(assets, &grad_blended);

    let mut grad = Vec::with_capacity(params.dim());
    grad.extend(grad_shape);
    grad.extend(grad_expr);
    grad.extend(grad_jaw);
    grad.extend(grad_rot6d);
    grad.extend(grad_translation);
    grad.push(grad_scale);
    Ok((breakdown, grad))
}

/// Objective value only, with the prediction-side unit-cube transform of
/// the 3D vertices term frozen to `pred_transform`.
///
/// The analytic gradient treats that transform as a constant
/// (stop-gradient), so finite-difference checks of the full objective must
/// difference this function, frozen at the base point, rather than the
/// self-normalizing objective.
pub fn objective_value_frozen<T: Real>(
    assets: &ModelAssets<T>,
    params: &HeadParams<T>,
    targets: &FitTargets<T>,
    weights: &LossWeights<T>,
    pred_transform: &UnitCubeTransform<T>,
) -> Result<T> {
    validate_targets(assets, targets)?;
    let blended = blend_vertices(assets, params)?;
    let canonical = articulate_jaw(assets, &blended, params.jaw);
    let rotation = rot6d_to_matrix(&params.rot6d)?;

    let landmarks_pred: Vec<[T; 2]> = assets
        .landmark_indices
        .iter()
        .map(|&i| {
            let r = rotation.apply(canonical[i]);
            [
                params.scale * r[0] + params.translation[0],
                -params.scale * r[1] + params.translation[1],
            ]
        })
        .collect();
    let (l_reproj, _) = reprojection_loss(&landmarks_pred, &targets.landmarks2d)?;
    let l_rot = match &targets.gt_rotation {
        Some(gt) => rotation_loss(&rotation, gt).0,
        None => T::zero(),
    };
    let l_3d = match &targets.gt_canonical {
        Some(gt) => {
            let sub = select(&assets.subsample_indices, &canonical);
            let tg = unit_cube_transform(gt)?;
            vertices_loss_with_transforms(&sub, gt, pred_transform, &tg)?.0
        }
        None => T::zero(),
    };
    Ok(total_loss(l_3d, l_rot, l_reproj, T::zero(), T::zero(), weights).total)
}

/// Unit-cube transform of the subsampled canonical mesh at `params`; the
/// quantity [`objective_value_frozen`] expects.
pub fn pred_transform_at<T: Real>(
    assets: &ModelAssets<T>,
    params: &HeadParams<T>,
) -> Result<UnitCubeTransform<T>> {
    let canonical = crate::morphable::forward_canonical(assets, params)?;
    let sub = select(&assets.subsample_indices, &canonical);
    unit_cube_transform(&sub)
}

/// First-order parameter recovery. Deterministic in its inputs; returns
/// the full trace.
///
/// Each iteration takes a momentum-filtered subgradient step, normalized
/// per-coordinate by the largest gradient magnitude seen and sized to
/// cancel the current total under the local linear model; the scheduled
/// envelope (`step_size`, decayed every `decay_every` iterations) caps
/// the largest per-coordinate move. Individual iterations may move uphill
/// (the trace records the walk verbatim); the best iterate is tracked and
/// returned. Convergence is declared when the gradient vanishes, or when
/// the best total stops improving by `convergence_tol` across several
/// consecutive windows while the loss-proportional step has shrunk to
/// nothing (the objective has bottomed out).
pub fn fit<T: Real>(
    assets: &ModelAssets<T>,
    targets: &FitTargets<T>,
    init: &HeadParams<T>,
    config: &FitConfig<T>,
) -> std::result::Result<FitTrace<T>, FitError<T>> {
    config.validate()?;
    let k_shape = assets.k_shape();
    let k_expr = assets.k_expr();

    let (breakdown, grad) = objective_and_gradient(assets, init, targets, &config.weights)?;
    let mut trace = FitTrace {
        breakdowns: vec![breakdown],
        final_params: init.clone(),
        final_breakdown: breakdown,
        iterations: 0,
        converged: false,
        step_events: Vec::new(),
    };
    if !breakdown.total.is_finite() {
        return Err(FitError::Diverged { trace: Box::new(trace) });
    }

    let mut theta = init.to_flat();
    let mut grad = grad;
    let mut best_theta = theta.clone();
    let mut best = breakdown;
    let mut best_grad = grad.clone();
    // Windowed convergence check on the best-so-far envelope. A single
    // stalled window can be a momentum transient; convergence needs a
    // run of them.
    let mut window_anchor = breakdown.total;
    let mut window_iters = 0usize;
    let mut stalled_windows = 0usize;
    let mut prev_total = breakdown.total;
    // Per-parameter sensitivity bound: the largest gradient magnitude seen
    // on each coordinate. The blocks of the parameter vector live on
    // wildly different scales (pixels vs unitless 6D entries whose
    // gradients carry a factor of `scale`); dividing each coordinate by
    // its own bound balances the blocks while keeping the step of a
    // nearly-converged coordinate proportional to its own residual.
    let mut sens: Vec<T> = grad.iter().map(|g| g.abs()).collect();

    // Scheduled envelope on per-coordinate movement.
    let mut step = config.step_size;
    let momentum = T::c(0.92);
    let mut velocity = vec![T::zero(); theta.len()];

    for iter in 1..=config.max_iters {
        if config.decay_every > 0 && iter % config.decay_every == 0 {
            let capped = step * config.decay_factor;
            if capped < step {
                step = capped;
                trace.step_events.push(StepEvent { iteration: iter });
            }
        }

        let grad_norm = grad.iter().fold(T::zero(), |acc, g| acc + *g * *g).sqrt();
        if grad_norm <= T::c(1e-14) {
            trace.converged = true;
            break;
        }

        // Preconditioned direction and its slope.
        let mut slope = T::zero();
        let mut dir_max = T::zero();
        let dir: Vec<T> = grad
            .iter()
            .zip(sens.iter_mut())
            .map(|(g, v)| {
                *v = v.max(g.abs());
                let d = if *v > T::zero() { *g / *v } else { T::zero() };
                slope += *g * d;
                dir_max = dir_max.max(d.abs());
                d
            })
            .collect();
        // Step sized to cancel the current loss under the local linear
        // model (the synthetic objectives bottom out at zero), capped so
        // no coordinate moves further than the scheduled envelope.
        let mut alpha = prev_total / slope;
        if alpha * dir_max > step {
            alpha = step / dir_max;
        }
        let last_move = alpha * dir_max;
        for ((x, d), v) in theta.iter_mut().zip(&dir).zip(velocity.iter_mut()) {
            *v = momentum * *v + alpha * *d;
            *x -= *v;
        }
        let params = HeadParams::from_flat(&theta, k_shape, k_expr)?;
        let evaluated = objective_and_gradient(assets, &params, targets, &config.weights);
        let (bd, g) = match evaluated {
            Ok((bd, g)) if bd.total.is_finite() => (bd, g),
            // Off the feasible set (non-finite loss or non-positive
            // scale): restart from the incumbent with a cleared velocity.
            _ => {
                theta = best_theta.clone();
                for v in velocity.iter_mut() {
                    *v = T::zero();
                }
                (best, best_grad.clone())
            }
        };
        grad = g;
        trace.breakdowns.push(bd);
        trace.iterations = iter;

        if bd.total < best.total {
            best = bd;
            best_theta = theta.clone();
            best_grad = grad.clone();
        }

        prev_total = bd.total;
        window_iters += 1;
        if window_iters >= config.convergence_window {
            // The walk is allowed to move uphill (subgradient steps off a
            // kink often do); convergence is read off the best-so-far
            // envelope instead of the raw sequence.
            if window_anchor - best.total < config.convergence_tol {
                stalled_windows += 1;
                // Mid-run stalls still take sizable steps; at the floor the
                // loss-proportional step has shrunk to nothing.
                let scale_guard = T::c(1e-12)
                    * (T::one() + theta.iter().fold(T::zero(), |m, x| m.max(x.abs())));
                if stalled_windows >= 5 && last_move < scale_guard {
                    trace.converged = true;
                    break;
                }
            } else {
                stalled_windows = 0;
            }
            window_anchor = best.total;
            window_iters = 0;
        }
    }

    trace.final_params = HeadParams::from_flat(&best_theta, k_shape, k_expr)?;
    trace.final_breakdown = best;
    Ok(trace)
}
