//! Form templates (JSON geometry) and a synthetic scan renderer.

mod corpus;
mod glyphs;
mod render;

pub use corpus::{
    read_truth, reference_spec, write_corpus, CorpusSpec, REFERENCE_FILE, SCANS_DIR, TEMPLATE_FILE, TRUTH_FILE,
};

pub use glyphs::{FontGlyphs, GlyphSampler, SetGlyphs};
pub use render::{
    render_blank_template, render_cell_sample, render_filled_scan, GroundTruth, RowTruth,
};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{BoundingBox, GrayImage};

pub const DIGITS_PER_ROW: usize = 10;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("row {row}: {reason}")]
    BadRow { row: usize, reason: String },
    #[error("cells {a:?} and {b:?} overlap")]
    Overlap { a: (usize, usize), b: (usize, usize) },
    #[error("cell ({row}, {cell}) leaves the page")]
    OutOfPage { row: usize, cell: usize },
    #[error("row {row}: malformed digits {digits:?} (need exactly {DIGITS_PER_ROW} characters 0-9)")]
    MalformedDigits { row: usize, digits: String },
    #[error("render spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] crate::imaging::ImageError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhoneRow {
    pub row_index: usize,
    #[serde(with = "int_boxes")]
    pub cells: Vec<BoundingBox>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormTemplate {
    pub id: String,
    pub page_width: usize,
    pub page_height: usize,
    pub rows: Vec<PhoneRow>,
    #[serde(rename = "reference_image", default)]
    pub reference_image_path: String,
}

/// Grid geometry used by the built-in templates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridLayout {
    pub rows: usize,
    pub cell: usize,
    /// Horizontal space between neighbouring cells of a row.
    pub gap: usize,
    pub row_pitch: usize,
    pub first_row_y: usize,
    pub first_cell_x: usize,
}

impl GridLayout {
    /// Joined cells separated only by a shared rule.
    pub const JOINED: Self = Self {
        rows: 16,
        cell: 48,
        gap: 4,
        row_pitch: 112,
        first_row_y: 440,
        first_cell_x: 620,
    };
    /// Free-standing cells with visible gaps.
    pub const SEPARATED: Self = Self {
        gap: 16,
        first_cell_x: 580,
        ..Self::JOINED
    };
}

pub const PAGE_WIDTH: usize = 1654;
pub const PAGE_HEIGHT: usize = 2339;

impl FormTemplate {
    pub fn with_layout(id: &str, layout: GridLayout) -> Self {
        let rows = (0..layout.rows)
            .map(|r| {
                let y0 = (layout.first_row_y + r * layout.row_pitch) as f64;
                let cells = (0..DIGITS_PER_ROW)
                    .map(|c| {
                        let x0 = (layout.first_cell_x + c * (layout.cell + layout.gap)) as f64;
                        BoundingBox::new(x0, y0, x0 + layout.cell as f64, y0 + layout.cell as f64)
                            .expect("positive cell size")
                    })
                    .collect();
                PhoneRow { row_index: r, cells }
            })
            .collect();
        Self {
            id: id.to_string(),
            page_width: PAGE_WIDTH,
            page_height: PAGE_HEIGHT,
            rows,
            reference_image_path: format!("{id}.png"),
        }
    }

    /// Sixteen rows of joined cells.
    pub fn form1() -> Self {
        Self::with_layout("form1", GridLayout::JOINED)
    }

    /// Sixteen rows of separated cells.
    pub fn form2() -> Self {
        Self::with_layout("form2", GridLayout::SEPARATED)
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        let page = BoundingBox::new(0.0, 0.0, self.page_width as f64, self.page_height as f64)
            .ok_or_else(|| TemplateError::BadSpec("empty page".into()))?;
        let mut all = Vec::new();
        for (ri, row) in self.rows.iter().enumerate() {
            if row.cells.len() != DIGITS_PER_ROW {
                return Err(TemplateError::BadRow {
                    row: ri,
                    reason: format!("{} cells", row.cells.len()),
                });
            }
            if row.cells.windows(2).any(|w| w[0].x0 >= w[1].x0) {
                return Err(TemplateError::BadRow {
                    row: ri,
                    reason: "cells not ordered left to right".into(),
                });
            }
            for (ci, c) in row.cells.iter().enumerate() {
                if c.x0 >= c.x1 || c.y0 >= c.y1 {
                    return Err(TemplateError::BadRow {
                        row: ri,
                        reason: format!("degenerate cell {ci}"),
                    });
                }
                if c.x0 < page.x0 || c.y0 < page.y0 || c.x1 > page.x1 || c.y1 > page.y1 {
                    return Err(TemplateError::OutOfPage { row: ri, cell: ci });
                }
                all.push(((ri, ci), *c));
            }
        }
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                if all[i].1.intersects(&all[j].1) {
                    return Err(TemplateError::Overlap { a: all[i].0, b: all[j].0 });
                }
            }
        }
        Ok(())
    }

    /// All cell boxes in row-major order.
    pub fn cells(&self) -> Vec<BoundingBox> {
        self.rows.iter().flat_map(|r| r.cells.iter().copied()).collect()
    }

    pub fn from_json(s: &str) -> Result<Self, TemplateError> {
        let t: Self = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), TemplateError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Loads the reference scan; relative paths resolve against `base_dir`
    /// (normally the directory of the template JSON).
    pub fn load_reference(&self, base_dir: &Path) -> Result<GrayImage, TemplateError> {
        let p = Path::new(&self.reference_image_path);
        let full = if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
        Ok(crate::imaging::read_image(full)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BorderStyle {
    /// Thick dark rules shared by adjacent cells.
    DarkJoined,
    /// Thin grey outline around each cell.
    LightSeparated,
}

/// Distortion and drawing parameters of a synthetic scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSpec {
    /// Maximum displacement of each page corner, as a fraction of the page
    /// dimension along that axis.
    pub corner_jitter: f64,
    pub noise_sigma: f64,
    pub border_style: BorderStyle,
    pub corner_marks: bool,
    /// Maximum magnitude of a uniform random page translation, per axis.
    pub crop_shift: f64,
    pub seed: u64,
    /// Pixels by which cell rules spill inward into the cells.
    pub border_bleed: f64,
    /// Every corner mark is drawn with the glyph variant of the row this many
    /// rows away (wrapping), so marks resemble those of another row.
    pub decoy_row_offset: usize,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            corner_jitter: 0.01,
            noise_sigma: 0.03,
            border_style: BorderStyle::DarkJoined,
            corner_marks: false,
            crop_shift: 0.0,
            seed: 0,
            border_bleed: 0.0,
            decoy_row_offset: 0,
        }
    }
}

impl RenderSpec {
    pub fn validate(&self) -> Result<(), TemplateError> {
        if !(0.0..=0.05).contains(&self.corner_jitter) {
            return Err(TemplateError::BadSpec(format!("corner_jitter {}", self.corner_jitter)));
        }
        if !(0.0..=0.2).contains(&self.noise_sigma) {
            return Err(TemplateError::BadSpec(format!("noise_sigma {}", self.noise_sigma)));
        }
        if !(self.crop_shift >= 0.0 && self.border_bleed >= 0.0) {
            return Err(TemplateError::BadSpec("negative shift or bleed".into()));
        }
        Ok(())
    }

    /// Undistorted, noiseless rendering parameters in the given style.
    pub fn clean(style: BorderStyle, corner_marks: bool) -> Self {
        Self {
            corner_jitter: 0.0,
            noise_sigma: 0.0,
            border_style: style,
            corner_marks,
            ..Self::default()
        }
    }
}

mod int_boxes {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::imaging::BoundingBox;

    #[derive(Serialize, Deserialize)]
    struct Raw {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    }

    #[derive(Serialize)]
    struct Int {
        x0: i64,
        y0: i64,
        x1: i64,
        y1: i64,
    }

    pub fn serialize<S: Serializer>(boxes: &[BoundingBox], s: S) -> Result<S::Ok, S::Error> {
        boxes
            .iter()
            .map(|b| Int {
                x0: b.x0.round() as i64,
                y0: b.y0.round() as i64,
                x1: b.x1.round() as i64,
                y1: b.y1.round() as i64,
            })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BoundingBox>, D::Error> {
        Vec::<Raw>::deserialize(d)?
            .into_iter()
            .map(|r| {
                BoundingBox::new(r.x0, r.y0, r.x1, r.y1)
                    .ok_or_else(|| serde::de::Error::custom("cell box with x0 >= x1 or y0 >= y1"))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_templates_are_valid() {
        for t in [FormTemplate::form1(), FormTemplate::form2()] {
            t.validate().unwrap();
            assert_eq!(t.rows.len(), 16);
            assert_eq!(t.cells().len(), 160);
        }
        // joined cells leave room for exactly one shared rule
        let t = FormTemplate::form1();
        assert_eq!(t.rows[0].cells[1].x0 - t.rows[0].cells[0].x1, GridLayout::JOINED.gap as f64);
    }

    #[test]
    fn json_round_trip_uses_integer_boxes() {
        let t = FormTemplate::form2();
        let json = t.to_json();
        assert!(json.contains("\"x0\": 580,"));
        assert!(json.contains("\"reference_image\""));
        assert_eq!(FormTemplate::from_json(&json).unwrap(), t);
    }

    #[test]
    fn validation_rejects_bad_rows() {
        let mut t = FormTemplate::form1();
        t.rows[2].cells.pop();
        assert!(matches!(t.validate(), Err(TemplateError::BadRow { row: 2, .. })));
        let mut t = FormTemplate::form1();
        t.rows[1].cells[0] = t.rows[0].cells[0];
        assert!(t.validate().is_err());
        let mut t = FormTemplate::form1();
        t.rows[0].cells[9].x1 = 5000.0;
        assert!(matches!(t.validate(), Err(TemplateError::OutOfPage { .. })));
    }

    #[test]
    fn spec_bounds() {
        assert!(RenderSpec { corner_jitter: 0.06, ..RenderSpec::default() }.validate().is_err());
        assert!(RenderSpec { noise_sigma: 0.3, ..RenderSpec::default() }.validate().is_err());
        RenderSpec::default().validate().unwrap();
    }
}
