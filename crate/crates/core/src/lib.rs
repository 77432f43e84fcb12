//! # headmesh
//!
//! Geometric and numerical core of a multi-head 3D morphable-model
//! detection/reconstruction toolkit:
//!
//! - parametric head-mesh synthesis (blendshapes + jaw skinning) with a
//!   deterministic toy-asset generator and JSON/OBJ I/O ([`morphable`]);
//! - rotation representations: 6D Gram-Schmidt, axis-angle, Euler views,
//!   geodesic distance ([`rotation`]);
//! - weak-perspective projection, head/face boxes and the scale-preserving
//!   alignment crop ([`camera`]);
//! - the five-component loss stack with analytic gradients and a
//!   finite-difference checker ([`losses`]);
//! - gradient-descent parameter fitting through the full differentiable
//!   chain ([`fitting`]);
//! - anchor decode, IoU and NMS ([`detection`]);
//! - pose MAE, landmark NME and detection AP ([`metrics`]);
//! - the four-rule dataset-QA filtering pipeline over JSONL ([`dataqa`]);
//! - PNCC encoding and a deterministic z-buffer rasterizer ([`pncc`]).
//!
//! All numeric modules are generic over the [`Real`] scalar (`f32` or
//! `f64`); the `*32`/`*64` aliases below pin the common instantiations.

pub mod camera;
pub mod dataqa;
pub mod detection;
mod error;
pub mod fitting;
pub mod jsonio;
pub mod losses;
pub mod metrics;
pub mod morphable;
pub mod pncc;
pub mod rng;
pub mod rotation;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub use camera::{alignment_crop, face_bbox, head_bbox, project, BBox, ProjectedHead};
pub use detection::{decode, iou, make_anchor_grid, nms, AnchorGrid, Detection, RawPrediction};
pub use fitting::{fit, objective_and_gradient, FitConfig, FitError, FitTargets, FitTrace};
pub use losses::{
    ciou_loss, finite_difference_check, focal_loss, normalize_unit_cube, reprojection_loss,
    rotation_loss, total_loss, vertices_loss_3d, LossBreakdown, LossWeights,
};
pub use metrics::{average_precision, nme, pose_mae, PoseErrorReport};
pub use morphable::{
    forward_canonical, generate_toy_assets, load_assets, save_assets, select, write_obj,
    HeadParams, ModelAssets,
};
pub use pncc::{ncc_encode, rasterize, write_ppm, RasterImage};
pub use rotation::{
    axis_angle_to_matrix, euler_to_matrix, geodesic_distance, matrix_to_euler, rot6d_to_matrix,
    EulerPose, RotationMatrix,
};

/// `f64` instantiations (the precision used by the CLI and file formats).
pub type ModelAssets64 = ModelAssets<f64>;
pub type HeadParams64 = HeadParams<f64>;
pub type RotationMatrix64 = RotationMatrix<f64>;
pub type EulerPose64 = EulerPose<f64>;
pub type BBox64 = BBox<f64>;
pub type ProjectedHead64 = ProjectedHead<f64>;
pub type Detection64 = Detection<f64>;
pub type LossWeights64 = LossWeights<f64>;
pub type LossBreakdown64 = LossBreakdown<f64>;
pub type FitTargets64 = FitTargets<f64>;
pub type FitConfig64 = FitConfig<f64>;

/// `f32` instantiations.
pub type ModelAssets32 = ModelAssets<f32>;
pub type HeadParams32 = HeadParams<f32>;
pub type RotationMatrix32 = RotationMatrix<f32>;
pub type EulerPose32 = EulerPose<f32>;
pub type BBox32 = BBox<f32>;
pub type ProjectedHead32 = ProjectedHead<f32>;
pub type Detection32 = Detection<f32>;
