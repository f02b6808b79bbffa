//! Corpus-level accuracy against ground truth, and the threshold sweep.
//!
//! Routable cells are those of rows the pipeline reports as phone numbers,
//! plus every truth-filled cell of an unprocessed form (the whole form goes
//! to review). The low group is the routable cells below the threshold; an
//! oracle correction sets each of them to its true label.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{DigitizedForm, FormStatus, SegregationPolicy};
use crate::template::{GroundTruth, DIGITS_PER_ROW};

pub const SWEEP_THRESHOLDS: [f32; 4] = [0.6, 0.7, 0.8, 0.9];

/// Cell-level blank detection outcomes. "Blank" on the predicted side means
/// the cell carries no digit after the row rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlankConfusion {
    pub blank_as_blank: usize,
    pub blank_as_digit: usize,
    pub digit_as_blank: usize,
    pub digit_as_digit: usize,
    /// Digit-predicted cells in rows whose truth is all blank.
    pub digit_cells_in_blank_rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f32,
    pub forms: usize,
    pub unprocessed_forms: usize,
    /// Cells whose true label is a digit.
    pub digit_cells: usize,
    pub digit_accuracy: f64,
    pub phone_rows: usize,
    pub phone_accuracy: f64,
    pub blank: BlankConfusion,
    pub routable_cells: usize,
    pub low_cells: usize,
    pub low_fraction: f64,
    /// Accuracy of the low group before correction; NaN when empty.
    pub low_accuracy: f64,
    pub high_accuracy: f64,
    pub corrected_digit_accuracy: f64,
    pub corrected_phone_accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

/// Scores digitized forms against their ground truth, matched by position.
///
/// Panics if the slices differ in length or a pair names different forms.
pub fn evaluate_corpus(forms: &[DigitizedForm], truth: &[GroundTruth], policy: &SegregationPolicy) -> MetricsReport {
    assert_eq!(forms.len(), truth.len(), "one ground truth per form");
    let mut blank = BlankConfusion::default();
    let (mut digit_cells, mut digit_ok, mut fixed_ok) = (0, 0, 0);
    let (mut phone_rows, mut phone_ok, mut fixed_phone_ok) = (0, 0, 0);
    let (mut routable, mut low, mut low_ok, mut high_ok) = (0, 0, 0, 0);
    let mut unprocessed = 0;

    for (f, gt) in forms.iter().zip(truth) {
        assert_eq!(f.form_id, gt.form, "forms and truth out of order");
        if f.status == FormStatus::Unprocessed {
            unprocessed += 1;
            for _ in gt.rows.iter().filter(|r| r.digits.is_some()) {
                digit_cells += DIGITS_PER_ROW;
                fixed_ok += DIGITS_PER_ROW;
                phone_rows += 1;
                fixed_phone_ok += 1;
                routable += DIGITS_PER_ROW;
                low += DIGITS_PER_ROW;
            }
            continue;
        }
        for row in &f.rows {
            let routed = !row.is_all_blank();
            let filled = gt.rows.iter().any(|r| r.row_index == row.row_index && r.digits.is_some());
            let (mut all_ok, mut all_fixed) = (true, true);
            for (c, cell) in row.cells.iter().enumerate() {
                let want = gt.cell_label(row.row_index, c);
                let ok = cell.digit == want;
                let in_low = routed && policy.is_low(cell.confidence);
                let fixed = ok || in_low;
                match (want.is_some(), cell.digit.is_some()) {
                    (false, false) => blank.blank_as_blank += 1,
                    (false, true) => blank.blank_as_digit += 1,
                    (true, false) => blank.digit_as_blank += 1,
                    (true, true) => blank.digit_as_digit += 1,
                }
                if !filled && cell.digit.is_some() {
                    blank.digit_cells_in_blank_rows += 1;
                }
                if routed {
                    routable += 1;
                    if in_low {
                        low += 1;
                        low_ok += ok as usize;
                    } else {
                        high_ok += ok as usize;
                    }
                }
                if want.is_some() {
                    digit_cells += 1;
                    digit_ok += ok as usize;
                    fixed_ok += fixed as usize;
                }
                all_ok &= ok;
                all_fixed &= fixed;
            }
            if filled {
                phone_rows += 1;
                phone_ok += all_ok as usize;
                fixed_phone_ok += all_fixed as usize;
            }
        }
    }
    MetricsReport {
        threshold: policy.threshold,
        forms: forms.len(),
        unprocessed_forms: unprocessed,
        digit_cells,
        digit_accuracy: ratio(digit_ok, digit_cells),
        phone_rows,
        phone_accuracy: ratio(phone_ok, phone_rows),
        blank,
        routable_cells: routable,
        low_cells: low,
        low_fraction: ratio(low, routable),
        low_accuracy: ratio(low_ok, low),
        high_accuracy: ratio(high_ok, routable - low),
        corrected_digit_accuracy: ratio(fixed_ok, digit_cells),
        corrected_phone_accuracy: ratio(fixed_phone_ok, phone_rows),
    }
}

/// One line of the segregation table. Percentages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f32,
    pub percent_data: f64,
    pub low_initial_accuracy: f64,
    pub high_accuracy: f64,
    pub overall_digit_accuracy: f64,
    pub overall_phone_accuracy: f64,
}

impl From<&MetricsReport> for SweepRow {
    fn from(m: &MetricsReport) -> Self {
        Self {
            threshold: m.threshold,
            percent_data: 100.0 * m.low_fraction,
            low_initial_accuracy: 100.0 * m.low_accuracy,
            high_accuracy: 100.0 * m.high_accuracy,
            overall_digit_accuracy: 100.0 * m.corrected_digit_accuracy,
            overall_phone_accuracy: 100.0 * m.corrected_phone_accuracy,
        }
    }
}

/// Re-scores a fixed set of predictions at each threshold. The stored
/// per-form policies are ignored.
pub fn sweep_thresholds(forms: &[DigitizedForm], truth: &[GroundTruth], thresholds: &[f32]) -> Vec<SweepRow> {
    thresholds
        .iter()
        .map(|&t| SweepRow::from(&evaluate_corpus(forms, truth, &SegregationPolicy { threshold: t })))
        .collect()
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "threshold,percent_data,low_initial_accuracy,high_accuracy,overall_digit_accuracy,overall_phone_accuracy";

    pub fn csv_line(&self) -> String {
        format!(
            "{:.1},{:.2},{:.2},{:.2},{:.2},{:.2}",
            self.threshold,
            self.percent_data,
            self.low_initial_accuracy,
            self.high_accuracy,
            self.overall_digit_accuracy,
            self.overall_phone_accuracy
        )
    }

    pub fn to_csv(rows: &[SweepRow]) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in rows {
            let _ = writeln!(s, "{}", r.csv_line());
        }
        s
    }
}
