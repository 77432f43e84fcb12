//! Dataset quality filtering: four deterministic rules over per-image
//! detection evidence, with streaming JSONL ingestion, a pluggable
//! detector for records that lack derived fields, and an audit report.
//!
//! Rules run in order and short-circuit at the first failure; the keep
//! verdict never depends on the order because every rule is an independent
//! predicate (only the attributed failing rule changes).

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw box as `[x1, y1, x2, y2]` pixels.
pub type RawBox = [f64; 4];

/// Per-image detection evidence. Any derived field may be absent and
/// filled on demand through a [`Detector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageQARecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    /// Head boxes on the original image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heads: Option<Vec<RawBox>>,
    /// Head boxes on the horizontally flipped image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heads_flipped: Option<Vec<RawBox>>,
    /// Head boxes on the left / right vertical halves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heads_left: Option<Vec<RawBox>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heads_right: Option<Vec<RawBox>>,
    /// Independent face detector output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faces: Option<Vec<RawBox>>,
}

impl ImageQARecord {
    /// Clamp all boxes to the image bounds.
    pub fn clamp_boxes(&mut self) {
        let w = self.width as f64;
        let h = self.height as f64;
        for field in [
            &mut self.heads,
            &mut self.heads_flipped,
            &mut self.heads_left,
            &mut self.heads_right,
            &mut self.faces,
        ]
        .into_iter()
        .flatten()
        {
            for b in field.iter_mut() {
                b[0] = b[0].clamp(0.0, w);
                b[2] = b[2].clamp(0.0, w);
                b[1] = b[1].clamp(0.0, h);
                b[3] = b[3].clamp(0.0, h);
            }
        }
    }
}

/// The four filtering rules, in the pipeline's default order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QaRule {
    NoHeads,
    FlipMismatch,
    FaceHeadOverlap,
    HalfSplitMismatch,
}

pub const DEFAULT_RULE_ORDER: [QaRule; 4] = [
    QaRule::NoHeads,
    QaRule::FlipMismatch,
    QaRule::FaceHeadOverlap,
    QaRule::HalfSplitMismatch,
];

impl QaRule {
    pub fn name(&self) -> &'static str {
        match self {
            QaRule::NoHeads => "NoHeads",
            QaRule::FlipMismatch => "FlipMismatch",
            QaRule::FaceHeadOverlap => "FaceHeadOverlap",
            QaRule::HalfSplitMismatch => "HalfSplitMismatch",
        }
    }

    /// Record fields the rule reads.
    fn required_fields(&self) -> &'static [Field] {
        match self {
            QaRule::NoHeads => &[Field::Heads],
            QaRule::FlipMismatch => &[Field::Heads, Field::HeadsFlipped],
            QaRule::FaceHeadOverlap => &[Field::Heads, Field::Faces],
            QaRule::HalfSplitMismatch => &[Field::Heads, Field::HeadsLeft, Field::HeadsRight],
        }
    }

    pub fn evaluate(&self, rec: &ImageQARecord) -> Result<QaDecision> {
        match self {
            QaRule::NoHeads => rule_no_heads(rec),
            QaRule::FlipMismatch => rule_flip_consistency(rec),
            QaRule::FaceHeadOverlap => rule_face_head_overlap(rec),
            QaRule::HalfSplitMismatch => rule_half_split(rec),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Heads,
    HeadsFlipped,
    HeadsLeft,
    HeadsRight,
    Faces,
}

impl Field {
    fn name(&self) -> &'static str {
        match self {
            Field::Heads => "heads",
            Field::HeadsFlipped => "heads_flipped",
            Field::HeadsLeft => "heads_left",
            Field::HeadsRight => "heads_right",
            Field::Faces => "faces",
        }
    }

    /// Variant reference passed to the detector for this field.
    fn image_ref(&self, image_id: &str) -> String {
        match self {
            Field::Heads => image_id.to_string(),
            Field::HeadsFlipped => format!("{image_id}#flipped"),
            Field::HeadsLeft => format!("{image_id}#left"),
            Field::HeadsRight => format!("{image_id}#right"),
            Field::Faces => format!("{image_id}#faces"),
        }
    }

    fn get_mut<'a>(&self, rec: &'a mut ImageQARecord) -> &'a mut Option<Vec<RawBox>> {
        match self {
            Field::Heads => &mut rec.heads,
            Field::HeadsFlipped => &mut rec.heads_flipped,
            Field::HeadsLeft => &mut rec.heads_left,
            Field::HeadsRight => &mut rec.heads_right,
            Field::Faces => &mut rec.faces,
        }
    }
}

/// Verdict for one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaDecision {
    pub keep: bool,
    pub failed_rule: Option<QaRule>,
    pub detail: String,
}

impl QaDecision {
    fn keep(detail: impl Into<String>) -> Self {
        QaDecision {
            keep: true,
            failed_rule: None,
            detail: detail.into(),
        }
    }

    fn drop(rule: QaRule, detail: impl Into<String>) -> Self {
        QaDecision {
            keep: false,
            failed_rule: Some(rule),
            detail: detail.into(),
        }
    }
}

/// Box supplier for records that lack precomputed fields. `image_ref` is
/// the record's `image_id`, optionally suffixed with `#flipped`, `#left`,
/// `#right` or `#faces` for the derived variants. Implementations must be
/// pure per reference.
pub trait Detector: Send + Sync {
    fn detect(&self, image_ref: &str) -> Vec<RawBox>;
}

/// Fixture-backed detector for tests: serves boxes from a map and logs
/// every invocation.
#[derive(Debug, Default)]
pub struct FixtureDetector {
    boxes: HashMap<String, Vec<RawBox>>,
    calls: Mutex<Vec<String>>,
}

impl FixtureDetector {
    pub fn new(boxes: HashMap<String, Vec<RawBox>>) -> Self {
        FixtureDetector {
            boxes,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }

    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }
}

impl Detector for FixtureDetector {
    fn detect(&self, image_ref: &str) -> Vec<RawBox> {
        self.calls.lock().unwrap().push(image_ref.to_string());
        self.boxes.get(image_ref).cloned().unwrap_or_default()
    }
}

fn require(rec: &ImageQARecord, field: Field) -> Result<&Vec<RawBox>> {
    let opt = match field {
        Field::Heads => &rec.heads,
        Field::HeadsFlipped => &rec.heads_flipped,
        Field::HeadsLeft => &rec.heads_left,
        Field::HeadsRight => &rec.heads_right,
        Field::Faces => &rec.faces,
    };
    opt.as_ref().ok_or_else(|| Error::IncompleteRecord {
        record: rec.image_id.clone(),
        field: field.name(),
    })
}

/// Stage 1: drop images with no detected heads.
pub fn rule_no_heads(rec: &ImageQARecord) -> Result<QaDecision> {
    let heads = require(rec, Field::Heads)?;
    if heads.is_empty() {
        Ok(QaDecision::drop(QaRule::NoHeads, "no heads detected"))
    } else {
        Ok(QaDecision::keep(format!("{} heads", heads.len())))
    }
}

/// Stage 2: drop when the head count differs between the original and the
/// horizontally flipped image. Counts only; geometry is ignored.
pub fn rule_flip_consistency(rec: &ImageQARecord) -> Result<QaDecision> {
    let heads = require(rec, Field::Heads)?;
    let flipped = require(rec, Field::HeadsFlipped)?;
    if heads.len() != flipped.len() {
        Ok(QaDecision::drop(
            QaRule::FlipMismatch,
            format!("{} vs {} flipped", heads.len(), flipped.len()),
        ))
    } else {
        Ok(QaDecision::keep("flip counts agree"))
    }
}

fn intersection_area(a: &RawBox, b: &RawBox) -> f64 {
    let iw = a[2].min(b[2]) - a[0].max(b[0]);
    let ih = a[3].min(b[3]) - a[1].max(b[1]);
    if iw > 0.0 && ih > 0.0 {
        iw * ih
    } else {
        0.0
    }
}

/// Stage 3: drop when some detected face has no overlap (strictly positive
/// intersection area) with any head box. Records without faces pass
/// vacuously.
pub fn rule_face_head_overlap(rec: &ImageQARecord) -> Result<QaDecision> {
    let heads = require(rec, Field::Heads)?;
    let faces = require(rec, Field::Faces)?;
    for (i, face) in faces.iter().enumerate() {
        let touches_head = heads.iter().any(|h| intersection_area(face, h) > 0.0);
        if !touches_head {
            return Ok(QaDecision::drop(
                QaRule::FaceHeadOverlap,
                format!("face {i} overlaps no head"),
            ));
        }
    }
    Ok(QaDecision::keep("all faces overlap heads"))
}

/// Stage 4: drop when the head counts of the two vertical halves do not
/// sum to the full-image count.
pub fn rule_half_split(rec: &ImageQARecord) -> Result<QaDecision> {
    let heads = require(rec, Field::Heads)?;
    let left = require(rec, Field::HeadsLeft)?;
    let right = require(rec, Field::HeadsRight)?;
    if left.len() + right.len() != heads.len() {
        Ok(QaDecision::drop(
            QaRule::HalfSplitMismatch,
            format!("{} + {} halves vs {} full", left.len(), right.len(), heads.len()),
        ))
    } else {
        Ok(QaDecision::keep("half counts agree"))
    }
}

/// Run the rules in order against one record, short-circuiting at the
/// first failure. Missing fields are filled through the detector (lazily,
/// so rules after a failure never trigger detector calls); without a
/// detector a missing field is an incomplete-record error.
pub fn evaluate_record(
    rec: &mut ImageQARecord,
    rules: &[QaRule],
    detector: Option<&dyn Detector>,
) -> Result<QaDecision> {
    for rule in rules {
        if let Some(det) = detector {
            for field in rule.required_fields() {
                let image_ref = field.image_ref(&rec.image_id);
                let slot = field.get_mut(rec);
                if slot.is_none() {
                    *slot = Some(det.detect(&image_ref));
                }
            }
        }
        let decision = rule.evaluate(rec)?;
        if !decision.keep {
            return Ok(decision);
        }
    }
    Ok(QaDecision::keep("passed all rules"))
}

/// A line that failed to parse or evaluate (lenient mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseIssue {
    pub line: usize,
    pub message: String,
}

/// Audit report of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaReport {
    /// Records parsed.
    pub total: usize,
    pub kept: usize,
    pub dropped_by_rule: DroppedByRule,
    pub parse_errors: Vec<ParseIssue>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DroppedByRule {
    #[serde(rename = "NoHeads")]
    pub no_heads: usize,
    #[serde(rename = "FlipMismatch")]
    pub flip_mismatch: usize,
    #[serde(rename = "FaceHeadOverlap")]
    pub face_head_overlap: usize,
    #[serde(rename = "HalfSplitMismatch")]
    pub half_split_mismatch: usize,
}

impl DroppedByRule {
    fn bump(&mut self, rule: QaRule) {
        match rule {
            QaRule::NoHeads => self.no_heads += 1,
            QaRule::FlipMismatch => self.flip_mismatch += 1,
            QaRule::FaceHeadOverlap => self.face_head_overlap += 1,
            QaRule::HalfSplitMismatch => self.half_split_mismatch += 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub rules: Vec<QaRule>,
    /// Abort on the first unparseable or incomplete line instead of
    /// recording it and continuing.
    pub strict: bool,
    /// Worker threads; records are split into contiguous chunks and the
    /// output is reassembled in input order, so the result is identical
    /// for any thread count.
    pub threads: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            rules: DEFAULT_RULE_ORDER.to_vec(),
            strict: false,
            threads: 1,
        }
    }
}

enum LineOutcome {
    Kept(String),
    Dropped(QaRule),
    Failed(ParseIssue),
}

/// Stream JSONL records through the rules. Kept records are echoed to the
/// output verbatim, in input order; the report counts drops per rule.
pub fn run_pipeline<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    detector: Option<&dyn Detector>,
    opts: &PipelineOptions,
) -> Result<QaReport> {
    let lines: Vec<String> = input.lines().collect::<std::io::Result<_>>()?;
    let outcomes = process_lines(&lines, detector, opts)?;

    let mut report = QaReport {
        total: 0,
        kept: 0,
        dropped_by_rule: DroppedByRule::default(),
        parse_errors: Vec::new(),
    };
    for outcome in outcomes {
        match outcome {
            LineOutcome::Kept(line) => {
                report.total += 1;
                report.kept += 1;
                writeln!(output, "{line}")?;
            }
            LineOutcome::Dropped(rule) => {
                report.total += 1;
                report.dropped_by_rule.bump(rule);
            }
            LineOutcome::Failed(issue) => report.parse_errors.push(issue),
        }
    }
    Ok(report)
}

fn process_lines(
    lines: &[String],
    detector: Option<&dyn Detector>,
    opts: &PipelineOptions,
) -> Result<Vec<LineOutcome>> {
    let threads = opts.threads.max(1);
    let process_one = |line_no: usize, line: &str| -> Result<LineOutcome> {
        match serde_json::from_str::<ImageQARecord>(line) {
            Ok(mut rec) => {
                rec.clamp_boxes();
                match evaluate_record(&mut rec, &opts.rules, detector) {
                    Ok(decision) => {
                        if decision.keep {
                            Ok(LineOutcome::Kept(line.to_string()))
                        } else {
                            Ok(LineOutcome::Dropped(decision.failed_rule.unwrap()))
                        }
                    }
                    Err(e) if opts.strict => Err(e),
                    Err(e) => Ok(LineOutcome::Failed(ParseIssue {
                        line: line_no,
                        message: e.to_string(),
                    })),
                }
            }
            Err(e) if opts.strict => Err(Error::Parse {
                line: line_no,
                message: e.to_string(),
            }),
            Err(e) => Ok(LineOutcome::Failed(ParseIssue {
                line: line_no,
                message: e.to_string(),
            })),
        }
    };

    if threads == 1 || lines.len() <= 1 {
        return lines
            .iter()
            .enumerate()
            .map(|(i, line)| process_one(i + 1, line))
            .collect();
    }

    let chunk_size = lines.len().div_ceil(threads);
    let results: Vec<Result<Vec<LineOutcome>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = lines
            .chunks(chunk_size)
            .enumerate()
            .map(|(ci, chunk)| {
                let process_one = &process_one;
                scope.spawn(move || {
                    chunk
                        .iter()
                        .enumerate()
                        .map(|(i, line)| process_one(ci * chunk_size + i + 1, line))
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let mut out = Vec::with_capacity(lines.len());
    for chunk in results {
        out.extend(chunk?);
    }
    Ok(out)
}
