//! Scan → registration → cell crops → blank filter → digit recognition →
//! confidence segregation, with whole-form fallback to review.

mod metrics;

pub use metrics::{evaluate_corpus, sweep_thresholds, BlankConfusion, MetricsReport, SweepRow, SWEEP_THRESHOLDS};

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::TensorSet;
use crate::imaging::{read_image, resize_to, GrayImage};
use crate::models::{apply_row_rule, classify_blank, predict_digits, CellClass, DigitPrediction, ModelError};
use crate::nn::{load_checkpoint, Network, NnError};
use crate::registration::{
    detect_features, register, warp_to_template, Keypoint, MatchFilterConfig, RansacConfig, RegistrationError,
};
use crate::review::{Correction, Label, ReviewItem};
use crate::template::{
    read_truth, FormTemplate, GroundTruth, TemplateError, DIGITS_PER_ROW, SCANS_DIR, TEMPLATE_FILE, TRUTH_FILE,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("registration failed: {0}")]
    RegistrationFailed(#[from] RegistrationError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("form {form_id}: no cell ({row}, {cell})")]
    UnknownCell { form_id: String, row: usize, cell: usize },
    #[error("segregation threshold must lie in [0, 1], got {0}")]
    BadThreshold(f32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Predictions below `threshold` go to review; `confidence ≥ threshold`
/// is final.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegregationPolicy {
    pub threshold: f32,
}

impl SegregationPolicy {
    pub fn new(threshold: f32) -> Result<Self, PipelineError> {
        if (0.0..=1.0).contains(&threshold) {
            Ok(Self { threshold })
        } else {
            Err(PipelineError::BadThreshold(threshold))
        }
    }

    pub fn is_low(&self, confidence: f32) -> bool {
        confidence < self.threshold
    }
}

impl Default for SegregationPolicy {
    fn default() -> Self {
        Self { threshold: 0.9 }
    }
}

/// Indices of the high and low confidence groups, a partition of `0..len`.
pub fn segregate(predictions: &[DigitPrediction], policy: &SegregationPolicy) -> (Vec<usize>, Vec<usize>) {
    (0..predictions.len()).partition(|&i| !policy.is_low(predictions[i].confidence))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DigitizedRow {
    pub row_index: usize,
    /// Ten cells; `digit == None` marks a blank cell.
    pub cells: Vec<DigitPrediction>,
    /// Minimum cell confidence.
    pub phone_confidence: f32,
    pub needs_review: bool,
}

impl DigitizedRow {
    fn new(row_index: usize, cells: Vec<DigitPrediction>, policy: &SegregationPolicy) -> Self {
        let mut row = Self {
            row_index,
            cells,
            phone_confidence: 0.0,
            needs_review: false,
        };
        row.refresh(policy);
        row
    }

    fn refresh(&mut self, policy: &SegregationPolicy) {
        self.phone_confidence = self.cells.iter().map(|c| c.confidence).fold(1.0, f32::min);
        self.needs_review = !self.is_all_blank() && self.cells.iter().any(|c| policy.is_low(c.confidence));
    }

    pub fn is_all_blank(&self) -> bool {
        self.cells.iter().all(|c| c.digit.is_none())
    }

    /// `"BLANK"`, or ten characters with `_` for blank cells.
    pub fn digit_string(&self) -> String {
        if self.is_all_blank() {
            return "BLANK".into();
        }
        self.cells
            .iter()
            .map(|c| c.digit.map_or('_', |d| char::from(b'0' + d)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FormStatus {
    Processed,
    /// Registration failed; the whole form went to review.
    Unprocessed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DigitizedForm {
    pub form_id: String,
    pub status: FormStatus,
    pub rows: Vec<DigitizedRow>,
    pub policy: SegregationPolicy,
}

/// The two networks the pipeline runs. Inference mutates layer caches, so
/// each worker owns a clone.
#[derive(Clone, Debug)]
pub struct Models {
    pub blank: Network,
    pub digit: Network,
}

pub const BLANK_MODEL_FILE: &str = "blank.fsnn";
pub const DIGIT_MODEL_FILE: &str = "digit.fsnn";

impl Models {
    /// Loads `blank.fsnn` and `digit.fsnn` from a model directory.
    pub fn load_dir(dir: &Path) -> Result<Self, PipelineError> {
        Ok(Self {
            blank: load_checkpoint(&dir.join(BLANK_MODEL_FILE))?.network,
            digit: load_checkpoint(&dir.join(DIGIT_MODEL_FILE))?.network,
        })
    }
}

/// Template plus its reference image's keypoints, computed once.
#[derive(Clone, Debug)]
pub struct TemplateContext {
    pub template: FormTemplate,
    pub features: Vec<Keypoint>,
    pub reference_height: usize,
}

impl TemplateContext {
    pub fn new(template: FormTemplate, reference: &GrayImage) -> Result<Self, PipelineError> {
        template.validate()?;
        Ok(Self {
            features: detect_features(reference)?,
            reference_height: reference.height(),
            template,
        })
    }

    /// Loads a template JSON and its reference image.
    pub fn load(template_path: &Path) -> Result<Self, PipelineError> {
        let t = FormTemplate::load(template_path)?;
        let base = template_path.parent().unwrap_or(Path::new("."));
        let reference = t.load_reference(base)?;
        Self::new(t, &reference)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub filter: MatchFilterConfig,
    pub ransac: RansacConfig,
    pub policy: SegregationPolicy,
}

/// Model-ready crops (32×32, ink-high) of every template cell, row-major,
/// from a scan already warped into template coordinates.
pub fn crop_cells(warped: &GrayImage, t: &FormTemplate) -> Vec<GrayImage> {
    t.cells().iter().map(|b| warped.crop_box(b, 32, 32).inverted()).collect()
}

/// Blank filtering with the row rule, then digit recognition, on crops of
/// one form (row-major, `DIGITS_PER_ROW` per row).
pub fn recognize_cells(
    crops: &[GrayImage],
    models: &mut Models,
    policy: &SegregationPolicy,
) -> Result<Vec<DigitizedRow>, PipelineError> {
    let blank = classify_blank(&mut models.blank, crops)?;
    let mut classes: Vec<CellClass> = blank.iter().map(|(c, _)| *c).collect();
    for row in classes.chunks_mut(DIGITS_PER_ROW) {
        apply_row_rule(row);
    }
    let digit_idx: Vec<usize> = (0..crops.len()).filter(|&i| classes[i] == CellClass::Digit).collect();
    let digit_crops: Vec<GrayImage> = digit_idx.iter().map(|&i| crops[i].clone()).collect();
    let mut preds = if digit_crops.is_empty() {
        Vec::new()
    } else {
        let inputs = TensorSet::from_images(&digit_crops, &vec![0; digit_crops.len()]).inputs;
        predict_digits(&mut models.digit, &inputs)?
    }
    .into_iter();
    let mut next = digit_idx.iter().peekable();
    let cells: Vec<DigitPrediction> = (0..crops.len())
        .map(|i| {
            if next.peek() == Some(&&i) {
                next.next();
                preds.next().expect("one prediction per digit cell")
            } else {
                // a demoted cell keeps no class probability of its own
                let confidence = if blank[i].0 == CellClass::Blank { blank[i].1 } else { 1.0 - blank[i].1 };
                DigitPrediction {
                    digit: None,
                    confidence,
                    embedding: None,
                }
            }
        })
        .collect();
    Ok(cells
        .chunks(DIGITS_PER_ROW)
        .enumerate()
        .map(|(r, c)| DigitizedRow::new(r, c.to_vec(), policy))
        .collect())
}

fn thumbnail(scan: &GrayImage) -> GrayImage {
    let w = 64usize;
    let h = ((scan.height() * w) as f64 / scan.width().max(1) as f64).round().max(1.0) as usize;
    resize_to(scan, w, h)
}

/// Digitizes one scan. A registration failure is not an error: the form
/// comes back `Unprocessed` with a single whole-form review item.
pub fn digitize_form(
    scan: &GrayImage,
    form_id: &str,
    ctx: &TemplateContext,
    models: &mut Models,
    cfg: &PipelineConfig,
) -> Result<(DigitizedForm, Vec<ReviewItem>), PipelineError> {
    let t = &ctx.template;
    let registered = detect_features(scan)
        .and_then(|kps| register(scan, &kps, &ctx.features, ctx.reference_height, &cfg.filter, &cfg.ransac))
        .and_then(|r| warp_to_template(scan, &r.homography, t));
    let warped = match registered {
        Ok(w) => w,
        Err(e) => {
            let form = DigitizedForm {
                form_id: form_id.to_string(),
                status: FormStatus::Unprocessed,
                rows: Vec::new(),
                policy: cfg.policy,
            };
            let item = {
                let reason = PipelineError::RegistrationFailed(e).to_string();
                ReviewItem::form(form_id, &thumbnail(scan), &reason)
            };
            return Ok((form, vec![item]));
        }
    };
    let crops = crop_cells(&warped, t);
    let mut rows = recognize_cells(&crops, models, &cfg.policy)?;
    for (row, template_row) in rows.iter_mut().zip(&t.rows) {
        row.row_index = template_row.row_index;
    }
    let mut items = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        if row.is_all_blank() {
            continue;
        }
        for (c, cell) in row.cells.iter().enumerate() {
            if cfg.policy.is_low(cell.confidence) {
                let crop = &crops[r * DIGITS_PER_ROW + c];
                items.push(ReviewItem::cell(form_id, row.row_index, c, crop, cell.digit, cell.confidence));
            }
        }
    }
    let form = DigitizedForm {
        form_id: form_id.to_string(),
        status: FormStatus::Processed,
        rows,
        policy: cfg.policy,
    };
    Ok((form, items))
}

/// Digitizes `n` scans on `workers` threads; results keep input order.
/// `load(i)` yields the form id and scan of input `i`.
pub fn digitize_all<F>(
    n: usize,
    load: F,
    ctx: &TemplateContext,
    models: &Models,
    cfg: &PipelineConfig,
    workers: usize,
) -> Result<Vec<(DigitizedForm, Vec<ReviewItem>)>, PipelineError>
where
    F: Fn(usize) -> Result<(String, GrayImage), PipelineError> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(std::io::Error::other)?;
    pool.install(|| {
        (0..n)
            .into_par_iter()
            .map_init(
                || models.clone(),
                |m, i| {
                    let (id, scan) = load(i)?;
                    digitize_form(&scan, &id, ctx, m, cfg)
                },
            )
            .collect()
    })
}

/// Digitizes a corpus directory as written by `write_corpus`, returning
/// the forms alongside their ground truth in truth-file order.
pub fn digitize_corpus_dir(
    dir: &Path,
    models: &Models,
    cfg: &PipelineConfig,
    workers: usize,
) -> Result<(Vec<DigitizedForm>, Vec<ReviewItem>, Vec<GroundTruth>), PipelineError> {
    let ctx = TemplateContext::load(&dir.join(TEMPLATE_FILE))?;
    let truth = read_truth(&dir.join(TRUTH_FILE))?;
    let results = digitize_all(
        truth.len(),
        |i| {
            let id = truth[i].form.clone();
            let scan = read_image(dir.join(SCANS_DIR).join(format!("{id}.png"))).map_err(TemplateError::from)?;
            Ok((id, scan))
        },
        &ctx,
        models,
        cfg,
        workers,
    )?;
    let (mut forms, mut items) = (Vec::with_capacity(results.len()), Vec::new());
    for (f, it) in results {
        forms.push(f);
        items.extend(it);
    }
    Ok((forms, items, truth))
}

/// Replaces the referenced cells with the operator's label at confidence
/// 1.0. Corrections for other forms are ignored.
pub fn apply_corrections(form: &DigitizedForm, corrections: &[Correction]) -> Result<DigitizedForm, PipelineError> {
    let mut out = form.clone();
    for c in corrections.iter().filter(|c| c.form_id == form.form_id) {
        let unknown = || PipelineError::UnknownCell {
            form_id: c.form_id.clone(),
            row: c.row_index,
            cell: c.cell_index,
        };
        let row = out.rows.iter_mut().find(|r| r.row_index == c.row_index).ok_or_else(unknown)?;
        let cell = row.cells.get_mut(c.cell_index).ok_or_else(unknown)?;
        *cell = DigitPrediction {
            digit: c.label.digit(),
            confidence: 1.0,
            embedding: None,
        };
    }
    for row in &mut out.rows {
        row.refresh(&out.policy);
    }
    Ok(out)
}

/// `form_id,row_index,digits,min_confidence,needs_review`, one line per
/// row; an unprocessed form is one `UNPROCESSED` line.
pub fn records_csv(forms: &[DigitizedForm]) -> String {
    let mut s = String::from("form_id,row_index,digits,min_confidence,needs_review\n");
    for f in forms {
        match f.status {
            FormStatus::Unprocessed => {
                let _ = writeln!(s, "{},,UNPROCESSED,0.000000,true", f.form_id);
            }
            FormStatus::Processed => {
                for r in &f.rows {
                    let _ = writeln!(
                        s,
                        "{},{},{},{:.6},{}",
                        f.form_id,
                        r.row_index,
                        r.digit_string(),
                        r.phone_confidence,
                        r.needs_review
                    );
                }
            }
        }
    }
    s
}

/// The review label a perfect operator would give for a cell.
pub fn truth_label(digit: Option<u8>) -> Label {
    digit.map_or(Label::Blank, Label::Digit)
}

#[cfg(test)]
mod tests;
