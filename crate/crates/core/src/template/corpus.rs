use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::{render_blank_template, render_filled_scan, GroundTruth};
use super::{FormTemplate, GlyphSampler, RenderSpec, TemplateError, DIGITS_PER_ROW};
use crate::imaging::{write_png, GrayImage};

/// A batch of synthetic filled forms sharing one template and distortion
/// model; form `i` renders with its own seed derived from `render.seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub forms: usize,
    /// Probability that a row carries a phone number.
    pub fill_rate: f64,
    pub render: RenderSpec,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            forms: 25,
            fill_rate: 0.6,
            render: RenderSpec::default(),
        }
    }
}

impl CorpusSpec {
    pub fn form_id(&self, t: &FormTemplate, index: usize) -> String {
        format!("{}-{:05}", t.id, index)
    }

    fn form_rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.render.seed);
        rng.set_stream(index as u64 + 1);
        rng
    }

    /// Phone numbers of form `index`: each row independently present with
    /// probability `fill_rate`, digits uniform.
    pub fn digits(&self, t: &FormTemplate, index: usize) -> Vec<Option<String>> {
        let mut rng = self.form_rng(index);
        t.rows
            .iter()
            .map(|_| {
                rng.random_bool(self.fill_rate.clamp(0.0, 1.0)).then(|| {
                    (0..DIGITS_PER_ROW).map(|_| char::from(b'0' + rng.random_range(0..10u8))).collect()
                })
            })
            .collect()
    }

    pub fn render_spec(&self, index: usize) -> RenderSpec {
        RenderSpec {
            seed: self.form_rng(index).random(),
            ..self.render.clone()
        }
    }

    pub fn render_form(
        &self,
        t: &FormTemplate,
        index: usize,
        glyphs: &dyn GlyphSampler,
    ) -> Result<(GrayImage, GroundTruth), TemplateError> {
        render_filled_scan(t, &self.digits(t, index), glyphs, &self.render_spec(index), &self.form_id(t, index))
    }
}

/// The printed blank form used as the registration reference: same border
/// style and marks as the scans, no distortion and no noise.
pub fn reference_spec(spec: &RenderSpec) -> RenderSpec {
    RenderSpec {
        border_style: spec.border_style,
        corner_marks: spec.corner_marks,
        ..RenderSpec::clean(spec.border_style, spec.corner_marks)
    }
}

pub const TRUTH_FILE: &str = "truth.jsonl";
pub const TEMPLATE_FILE: &str = "template.json";
pub const REFERENCE_FILE: &str = "reference.png";
pub const SCANS_DIR: &str = "scans";

/// Writes `template.json`, `reference.png`, `scans/<form>.png` and
/// `truth.jsonl` under `dir`; returns the scan paths in form order.
pub fn write_corpus(
    dir: &Path,
    t: &FormTemplate,
    spec: &CorpusSpec,
    glyphs: &dyn GlyphSampler,
) -> Result<Vec<PathBuf>, TemplateError> {
    std::fs::create_dir_all(dir.join(SCANS_DIR))?;
    let reference = render_blank_template(t, &reference_spec(&spec.render));
    write_png(&reference, dir.join(REFERENCE_FILE))?;
    let mut with_ref = t.clone();
    with_ref.reference_image_path = REFERENCE_FILE.into();
    with_ref.save(&dir.join(TEMPLATE_FILE))?;

    let mut truth = BufWriter::new(File::create(dir.join(TRUTH_FILE))?);
    let mut paths = Vec::with_capacity(spec.forms);
    for i in 0..spec.forms {
        let (scan, gt) = spec.render_form(t, i, glyphs)?;
        let path = dir.join(SCANS_DIR).join(format!("{}.png", gt.form));
        write_png(&scan, &path)?;
        serde_json::to_writer(&mut truth, &gt)?;
        truth.write_all(b"\n")?;
        paths.push(path);
    }
    truth.flush()?;
    Ok(paths)
}

pub fn read_truth(path: &Path) -> Result<Vec<GroundTruth>, TemplateError> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
