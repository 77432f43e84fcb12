//! Interchange schemas for CLI inputs and outputs.

use serde::{Deserialize, Serialize};

use headmesh::fitting::StepEvent;
use headmesh::{HeadParams64, LossBreakdown64, PoseErrorReport, RotationMatrix64};

/// One line of `decode` input.
#[derive(Debug, Deserialize)]
pub struct RawPredictionLine {
    pub image_id: String,
    pub raw: Vec<headmesh::RawPrediction<f64>>,
}

/// One line of `decode` output; shares the box-list convention of the
/// dataset-QA records.
#[derive(Debug, Serialize)]
pub struct DetectionLine {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub heads: Vec<[f64; 4]>,
    pub confidences: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<Option<HeadParams64>>>,
}

/// One line of `eval` prediction input.
#[derive(Debug, Deserialize)]
pub struct EvalPredLine {
    pub image_id: String,
    #[serde(default)]
    pub heads: Vec<[f64; 4]>,
    #[serde(default)]
    pub confidences: Vec<f64>,
    #[serde(default)]
    pub rot6d: Option<Vec<[f64; 6]>>,
    #[serde(default)]
    pub landmarks2d: Option<Vec<Vec<[f64; 2]>>>,
}

/// One line of `eval` ground-truth input.
#[derive(Debug, Deserialize)]
pub struct EvalGtLine {
    pub image_id: String,
    #[serde(default)]
    pub heads: Vec<[f64; 4]>,
    #[serde(default)]
    pub rot6d: Option<Vec<[f64; 6]>>,
    #[serde(default)]
    pub landmarks2d: Option<Vec<Vec<[f64; 2]>>>,
}

/// `eval` output report.
#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub ap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pose_mae_rad: Option<PoseErrorReport<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pose_mae_deg: Option<PoseErrorReport<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nme: Option<f64>,
}

/// `fit` targets file.
#[derive(Debug, Deserialize)]
pub struct TargetsFile {
    pub landmarks2d: Vec<[f64; 2]>,
    #[serde(default)]
    pub gt_rotation: Option<RotationMatrix64>,
    #[serde(default)]
    pub gt_canonical: Option<Vec<[f64; 3]>>,
}

/// `fit` output.
#[derive(Debug, Serialize)]
pub struct FitOutput {
    pub converged: bool,
    pub iterations: usize,
    pub params: HeadParams64,
    pub final_breakdown: LossBreakdown64,
    /// Per-iteration loss breakdowns, starting at the initial point.
    pub trace: Vec<LossBreakdown64>,
    pub step_events: Vec<StepEvent>,
}

/// `align` output.
#[derive(Debug, Serialize)]
pub struct CropOutput {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

/// `gradcheck` output: max relative finite-difference error per loss.
#[derive(Debug, Serialize)]
pub struct GradcheckReport {
    pub reprojection: f64,
    pub vertices3d: f64,
    pub rotation: f64,
    pub focal: f64,
    pub ciou: f64,
    pub objective: f64,
}

impl GradcheckReport {
    pub fn worst(&self) -> f64 {
        [
            self.reprojection,
            self.vertices3d,
            self.rotation,
            self.focal,
            self.ciou,
            self.objective,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}
