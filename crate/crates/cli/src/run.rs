//! Implementations of the CLI subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use headmesh::dataqa::{run_pipeline, PipelineOptions};
use headmesh::jsonio;
use headmesh::losses::LossWeights;
use headmesh::morphable::{
    forward_canonical, generate_toy_assets, load_assets, save_assets, write_obj,
};
use headmesh::rotation::rot6d_to_matrix;
use headmesh::{
    alignment_crop, average_precision, camera, decode as decode_raw, make_anchor_grid, ncc_encode,
    nme, nms, pose_mae, rasterize, write_ppm, BBox64, Detection64, FitConfig64, FitTargets64,
    HeadParams64, ModelAssets64, RotationMatrix64,
};

use crate::schema::{
    CropOutput, DetectionLine, EvalGtLine, EvalPredLine, FitOutput, RawPredictionLine, TargetsFile,
};
use crate::{
    gradcheck, AlignArgs, CliError, DecodeArgs, EvalArgs, FilterArgs, FitArgs, ForwardArgs,
    GenAssetsArgs, GradcheckArgs, PnccArgs,
};

type CliResult = Result<ExitCode, CliError>;

fn require_file(path: &Path) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::Validation(format!(
            "input file not found: {}",
            path.display()
        )));
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    require_file(path)?;
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = jsonio::to_json_string(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn load_assets_checked(path: &Path) -> Result<ModelAssets64, CliError> {
    require_file(path)?;
    Ok(load_assets(path)?)
}

fn load_params(path: &Path, assets: &ModelAssets64) -> Result<HeadParams64, CliError> {
    let params: HeadParams64 = read_json(path)?;
    params.validate(assets.k_shape(), assets.k_expr())?;
    Ok(params)
}

fn read_lines(path: &Path) -> Result<Vec<String>, CliError> {
    require_file(path)?;
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::to_string)
        .collect())
}

pub fn gen_assets(args: GenAssetsArgs) -> CliResult {
    let assets =
        generate_toy_assets::<f64>(args.seed, args.n_vertices, args.k_shape, args.k_expr, args.n_landmarks)?;
    save_assets(&assets, &args.out)?;
    Ok(ExitCode::SUCCESS)
}

pub fn forward(args: ForwardArgs) -> CliResult {
    let assets = load_assets_checked(&args.assets)?;
    let params = load_params(&args.params, &assets)?;
    let vertices = forward_canonical(&assets, &params)?;
    let file = fs::File::create(&args.out)?;
    let mut out = BufWriter::new(file);
    write_obj(&vertices, &assets.triangles, &mut out)?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

pub fn fit(args: FitArgs) -> CliResult {
    let assets = load_assets_checked(&args.assets)?;
    let targets_file: TargetsFile = read_json(&args.targets)?;
    if let Some(r) = &targets_file.gt_rotation {
        // Reject matrices that are not rotations before fitting starts.
        RotationMatrix64::from_array(*r.entries())?;
    }
    let targets = FitTargets64 {
        landmarks2d: targets_file.landmarks2d,
        gt_rotation: targets_file.gt_rotation,
        gt_canonical: targets_file.gt_canonical,
    };
    let init = match &args.init {
        Some(path) => load_params(path, &assets)?,
        None => default_init(&assets, &targets.landmarks2d),
    };
    let config = FitConfig64 {
        max_iters: args.max_iters,
        step_size: args.step_size,
        decay_every: args.decay_every,
        decay_factor: args.decay_factor,
        convergence_tol: args.convergence_tol,
        convergence_window: args.convergence_window,
        seed: args.seed,
        weights: LossWeights {
            w_3d: args.weights.w_3d,
            w_rot: args.weights.w_rot,
            w_reproj: args.weights.w_reproj,
            w_cls: args.weights.w_cls,
            w_reg: args.weights.w_reg,
        },
        ..FitConfig64::default()
    };
    let trace = headmesh::fit(&assets, &targets, &init, &config).map_err(|e| match e {
        headmesh::FitError::Diverged { trace } => CliError::Runtime(format!(
            "fit diverged after {} iterations",
            trace.iterations
        )),
        headmesh::FitError::Core(core) => CliError::from(core),
    })?;
    write_json(
        &args.out,
        &FitOutput {
            converged: trace.converged,
            iterations: trace.iterations,
            params: trace.final_params.clone(),
            final_breakdown: trace.final_breakdown,
            trace: trace.breakdowns,
            step_events: trace.step_events,
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

/// Zero coefficients, identity pose, translation at the landmark centroid,
/// and a rough scale from the landmark spread against the template
/// diameter.
fn default_init(assets: &ModelAssets64, landmarks: &[[f64; 2]]) -> HeadParams64 {
    let mut init = HeadParams64::zeros(assets.k_shape(), assets.k_expr());
    if landmarks.is_empty() {
        return init;
    }
    let n = landmarks.len() as f64;
    let cx = landmarks.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = landmarks.iter().map(|p| p[1]).sum::<f64>() / n;
    init.translation = [cx, cy];
    let (mut w, mut h) = (0.0f64, 0.0f64);
    for p in landmarks {
        w = w.max((p[0] - cx).abs());
        h = h.max((p[1] - cy).abs());
    }
    let spread = 2.0 * w.max(h);
    if spread > 0.0 {
        init.scale = (1.5 * spread / assets.bounding_diameter()).max(1e-6);
    }
    init
}

pub fn align(args: AlignArgs) -> CliResult {
    if !(args.margin > 0.0) {
        return Err(CliError::Validation("margin must be positive".into()));
    }
    let assets = load_assets_checked(&args.assets)?;
    let params = load_params(&args.params, &assets)?;
    let vertices = forward_canonical(&assets, &params)?;
    let rotation = rot6d_to_matrix(&params.rot6d)?;
    let proj = camera::project(&vertices, &rotation, params.scale, params.translation)?;
    let crop = alignment_crop(&proj, &assets, args.margin);
    write_json(
        &args.out,
        &CropOutput {
            x1: crop.x1,
            y1: crop.y1,
            x2: crop.x2,
            y2: crop.y2,
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

pub fn decode(args: DecodeArgs) -> CliResult {
    let grid = make_anchor_grid::<f64>(args.image_side, &args.strides)?;
    let lines = read_lines(&args.input)?;

    let process = |line_no: usize, line: &str| -> Result<String, CliError> {
        let parsed: RawPredictionLine = serde_json::from_str(line).map_err(|e| {
            CliError::Validation(format!("line {line_no}: {e}"))
        })?;
        let detections = decode_raw(&parsed.raw, &grid, args.conf_threshold)?;
        let kept = nms(&detections, args.nms_threshold);
        let any_params = kept.iter().any(|d| d.params.is_some());
        let out = DetectionLine {
            image_id: parsed.image_id,
            width: args.image_side,
            height: args.image_side,
            heads: kept
                .iter()
                .map(|d| [d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2])
                .collect(),
            confidences: kept.iter().map(|d| d.confidence).collect(),
            params: any_params.then(|| kept.iter().map(|d| d.params.clone()).collect()),
        };
        Ok(jsonio::to_json_string(&out)?)
    };

    let threads = args.threads.max(1);
    let outputs: Vec<String> = if threads == 1 || lines.len() <= 1 {
        lines
            .iter()
            .enumerate()
            .map(|(i, l)| process(i + 1, l))
            .collect::<Result<_, _>>()?
    } else {
        let chunk_size = lines.len().div_ceil(threads);
        let chunks: Vec<Result<Vec<String>, CliError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = lines
                .chunks(chunk_size)
                .enumerate()
                .map(|(ci, chunk)| {
                    let process = &process;
                    scope.spawn(move || {
                        chunk
                            .iter()
                            .enumerate()
                            .map(|(i, l)| process(ci * chunk_size + i + 1, l))
                            .collect()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut all = Vec::with_capacity(lines.len());
        for chunk in chunks {
            all.extend(chunk?);
        }
        all
    };

    let file = fs::File::create(&args.output)?;
    let mut out = BufWriter::new(file);
    for line in outputs {
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

pub fn eval(args: EvalArgs) -> CliResult {
    let pred_lines = read_lines(&args.pred)?;
    let gt_lines = read_lines(&args.gt)?;

    let mut preds: BTreeMap<String, EvalPredLine> = BTreeMap::new();
    for (i, line) in pred_lines.iter().enumerate() {
        let rec: EvalPredLine = serde_json::from_str(line)
            .map_err(|e| CliError::Validation(format!("pred line {}: {e}", i + 1)))?;
        if rec.heads.len() != rec.confidences.len() {
            return Err(CliError::Validation(format!(
                "pred line {}: {} heads but {} confidences",
                i + 1,
                rec.heads.len(),
                rec.confidences.len()
            )));
        }
        if preds.insert(rec.image_id.clone(), rec).is_some() {
            return Err(CliError::Validation(format!(
                "pred line {}: duplicate image_id",
                i + 1
            )));
        }
    }
    let mut gts: BTreeMap<String, EvalGtLine> = BTreeMap::new();
    for (i, line) in gt_lines.iter().enumerate() {
        let rec: EvalGtLine = serde_json::from_str(line)
            .map_err(|e| CliError::Validation(format!("gt line {}: {e}", i + 1)))?;
        if gts.insert(rec.image_id.clone(), rec).is_some() {
            return Err(CliError::Validation(format!(
                "gt line {}: duplicate image_id",
                i + 1
            )));
        }
    }

    let ids: Vec<String> = preds
        .keys()
        .chain(gts.keys())
        .cloned()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut dets_per_image: Vec<Vec<Detection64>> = Vec::new();
    let mut gts_per_image: Vec<Vec<BBox64>> = Vec::new();
    for id in &ids {
        let dets = preds
            .get(id)
            .map(|p| {
                p.heads
                    .iter()
                    .zip(&p.confidences)
                    .map(|(b, &c)| Detection64 {
                        bbox: BBox64::new(b[0], b[1], b[2], b[3]),
                        confidence: c,
                        params: None,
                    })
                    .collect()
            })
            .unwrap_or_default();
        let boxes = gts
            .get(id)
            .map(|g| {
                g.heads
                    .iter()
                    .map(|b| BBox64::new(b[0], b[1], b[2], b[3]))
                    .collect()
            })
            .unwrap_or_default();
        dets_per_image.push(dets);
        gts_per_image.push(boxes);
    }
    let ap = average_precision(&dets_per_image, &gts_per_image, args.iou_threshold)?;

    // Pose MAE over index-aligned heads, when both sides carry rotations
    // everywhere and the per-image counts agree.
    let mut pose_pairs: Option<(Vec<RotationMatrix64>, Vec<RotationMatrix64>)> =
        Some((Vec::new(), Vec::new()));
    for id in &ids {
        let (p6, g6) = match (preds.get(id), gts.get(id)) {
            (Some(p), Some(g)) => (p.rot6d.as_ref(), g.rot6d.as_ref()),
            _ => (None, None),
        };
        match (p6, g6) {
            (Some(p6), Some(g6)) if p6.len() == g6.len() => {
                if let Some((ps, gs)) = pose_pairs.as_mut() {
                    for (a, b) in p6.iter().zip(g6) {
                        ps.push(rot6d_to_matrix(a)?);
                        gs.push(rot6d_to_matrix(b)?);
                    }
                }
            }
            _ => pose_pairs = None,
        }
    }
    let pose = match pose_pairs {
        Some((ps, gs)) if !ps.is_empty() => Some(pose_mae(&ps, &gs)?),
        _ => None,
    };

    // Mean NME over index-aligned heads, normalized by each ground-truth
    // head box.
    let mut nme_values: Option<Vec<f64>> = Some(Vec::new());
    for id in &ids {
        let (pl, gl, gheads) = match (preds.get(id), gts.get(id)) {
            (Some(p), Some(g)) => (p.landmarks2d.as_ref(), g.landmarks2d.as_ref(), &g.heads),
            _ => (None, None, &Vec::new() as &Vec<[f64; 4]>),
        };
        match (pl, gl) {
            (Some(pl), Some(gl)) if pl.len() == gl.len() && pl.len() == gheads.len() => {
                if let Some(values) = nme_values.as_mut() {
                    for ((p, g), b) in pl.iter().zip(gl).zip(gheads) {
                        values.push(nme(p, g, &BBox64::new(b[0], b[1], b[2], b[3]))?);
                    }
                }
            }
            _ => nme_values = None,
        }
    }
    let nme_mean = match nme_values {
        Some(values) if !values.is_empty() => {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
        _ => None,
    };

    write_json(
        &args.out,
        &crate::schema::EvalReport {
            ap,
            pose_mae_rad: pose,
            pose_mae_deg: pose.map(|p| p.to_degrees()),
            nme: nme_mean,
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

pub fn filter(args: FilterArgs) -> CliResult {
    require_file(&args.input)?;
    let input = fs::File::open(&args.input)?;
    let reader = std::io::BufReader::new(input);
    let out_file = fs::File::create(&args.output)?;
    let mut writer = BufWriter::new(out_file);
    let options = PipelineOptions {
        strict: args.strict,
        threads: args.threads.max(1),
        ..PipelineOptions::default()
    };
    let report = run_pipeline(reader, &mut writer, None, &options)?;
    writer.flush()?;
    write_json(&args.report, &report)?;
    Ok(ExitCode::SUCCESS)
}

pub fn pncc(args: PnccArgs) -> CliResult {
    if args.size == 0 {
        return Err(CliError::Validation("size must be positive".into()));
    }
    let assets = load_assets_checked(&args.assets)?;
    let params = load_params(&args.params, &assets)?;
    let vertices = forward_canonical(&assets, &params)?;
    let colors = ncc_encode(&vertices)?;
    let rotation = rot6d_to_matrix(&params.rot6d)?;
    let proj = camera::project(&vertices, &rotation, params.scale, params.translation)?;
    let image = rasterize(&proj, &assets.triangles, &colors, args.size, args.size)?;
    write_ppm(&image, &args.out)?;
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck_cmd(args: GradcheckArgs) -> CliResult {
    if args.points == 0 {
        return Err(CliError::Validation("points must be positive".into()));
    }
    let report = gradcheck::run(args.seed, args.points)?;
    let mut text = jsonio::to_json_string(&report)?;
    text.push('\n');
    print!("{text}");
    if report.worst() <= 1e-4 {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(CliError::Runtime(format!(
            "gradient check failed: max relative error {}",
            report.worst()
        )))
    }
}
