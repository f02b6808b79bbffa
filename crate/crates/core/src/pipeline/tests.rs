use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::models::{build_blank_classifier, build_direct_classifier};
use crate::registration::Homography;
use crate::template::{GroundTruth, RowTruth};

fn pred(digit: Option<u8>, confidence: f32) -> DigitPrediction {
    DigitPrediction {
        digit,
        confidence,
        embedding: None,
    }
}

fn blank_row(r: usize, policy: &SegregationPolicy) -> DigitizedRow {
    DigitizedRow::new(r, vec![pred(None, 0.99); DIGITS_PER_ROW], policy)
}

fn digit_row(r: usize, s: &str, conf: f32, policy: &SegregationPolicy) -> DigitizedRow {
    let cells = s.bytes().map(|b| pred(Some(b - b'0'), conf)).collect();
    DigitizedRow::new(r, cells, policy)
}

fn truth(form: &str, rows: Vec<Option<&str>>) -> GroundTruth {
    GroundTruth {
        form: form.into(),
        rows: rows
            .into_iter()
            .enumerate()
            .map(|(row_index, d)| RowTruth {
                row_index,
                digits: d.map(str::to_string),
            })
            .collect(),
        true_boxes: Vec::new(),
        distortion: Homography::identity(),
    }
}

fn processed(form_id: &str, rows: Vec<DigitizedRow>, policy: SegregationPolicy) -> DigitizedForm {
    DigitizedForm {
        form_id: form_id.into(),
        status: FormStatus::Processed,
        rows,
        policy,
    }
}

#[test]
fn threshold_boundary_goes_high() {
    let p = SegregationPolicy::new(0.8).unwrap();
    let (high, low) = segregate(&[pred(Some(1), 0.8), pred(Some(2), 0.7999)], &p);
    assert_eq!(high, vec![0]);
    assert_eq!(low, vec![1]);
    let zero = SegregationPolicy::new(0.0).unwrap();
    assert!(segregate(&[pred(Some(1), 0.0)], &zero).1.is_empty());
    assert!(SegregationPolicy::new(1.5).is_err());
}

proptest! {
    #[test]
    fn segregation_partitions_and_grows(confs in proptest::collection::vec(0.0f32..1.0, 0..50),
                                        a in 0.0f32..1.0, b in 0.0f32..1.0) {
        let preds: Vec<_> = confs.iter().map(|&c| pred(Some(3), c)).collect();
        let (lo_t, hi_t) = if a <= b { (a, b) } else { (b, a) };
        let (high, low) = segregate(&preds, &SegregationPolicy { threshold: lo_t });
        let mut all: Vec<usize> = high.iter().chain(&low).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..preds.len()).collect::<Vec<_>>());
        let (_, low2) = segregate(&preds, &SegregationPolicy { threshold: hi_t });
        prop_assert!(low.iter().all(|i| low2.contains(i)));
    }
}

#[test]
fn row_strings_and_csv() {
    let p = SegregationPolicy::default();
    let mut row = digit_row(3, "9876543210", 0.95, &p);
    assert_eq!(row.digit_string(), "9876543210");
    assert!(!row.needs_review);
    row.cells[2] = pred(None, 0.6);
    row.refresh(&p);
    assert_eq!(row.digit_string(), "98_6543210");
    assert!(row.needs_review);
    assert_eq!(row.phone_confidence, 0.6);

    let forms = vec![
        processed("f1", vec![blank_row(0, &p), digit_row(1, "0123456789", 0.5, &p)], p),
        DigitizedForm {
            form_id: "f2".into(),
            status: FormStatus::Unprocessed,
            rows: Vec::new(),
            policy: p,
        },
    ];
    assert_eq!(
        records_csv(&forms),
        "form_id,row_index,digits,min_confidence,needs_review\n\
         f1,0,BLANK,0.990000,false\n\
         f1,1,0123456789,0.500000,true\n\
         f2,,UNPROCESSED,0.000000,true\n"
    );
}

#[test]
fn corrections_replace_cells_and_are_idempotent() {
    let p = SegregationPolicy::default();
    let form = processed("f", vec![digit_row(0, "5550001111", 0.95, &p), blank_row(1, &p)], p);
    assert_eq!(apply_corrections(&form, &[]).unwrap(), form);

    let fix = vec![
        Correction {
            form_id: "f".into(),
            row_index: 0,
            cell_index: 3,
            label: Label::Digit(7),
        },
        Correction {
            form_id: "other".into(),
            row_index: 99,
            cell_index: 0,
            label: Label::Blank,
        },
    ];
    let once = apply_corrections(&form, &fix).unwrap();
    assert_eq!(once.rows[0].digit_string(), "5557001111");
    assert_eq!(once.rows[0].cells[3].confidence, 1.0);
    assert_eq!(once.rows[1], form.rows[1]);
    assert_eq!(apply_corrections(&once, &fix).unwrap(), once);

    let bad = Correction {
        form_id: "f".into(),
        row_index: 0,
        cell_index: 10,
        label: Label::Blank,
    };
    assert!(matches!(apply_corrections(&form, &[bad]), Err(PipelineError::UnknownCell { cell: 10, .. })));
}

#[test]
fn perfect_predictor_scores_full_marks() {
    let p = SegregationPolicy::default();
    let gt = truth("a", vec![Some("0123456789"), None, Some("9999999999")]);
    let form = processed(
        "a",
        vec![
            digit_row(0, "0123456789", 1.0, &p),
            blank_row(1, &p),
            digit_row(2, "9999999999", 1.0, &p),
        ],
        p,
    );
    let m = evaluate_corpus(&[form], &[gt], &p);
    assert_eq!((m.digit_cells, m.phone_rows), (20, 2));
    assert_eq!(m.digit_accuracy, 1.0);
    assert_eq!(m.phone_accuracy, 1.0);
    assert_eq!(m.blank.blank_as_blank, 10);
    assert_eq!(m.blank.digit_as_digit, 20);
    assert_eq!(m.low_cells, 0);
    assert!(m.low_accuracy.is_nan());
}

#[test]
fn unprocessed_forms_count_as_wrong_then_fully_corrected() {
    let p = SegregationPolicy::default();
    let gt = truth("u", vec![Some("0123456789"), None]);
    let form = DigitizedForm {
        form_id: "u".into(),
        status: FormStatus::Unprocessed,
        rows: Vec::new(),
        policy: p,
    };
    let m = evaluate_corpus(&[form], &[gt], &p);
    assert_eq!(m.unprocessed_forms, 1);
    assert_eq!(m.digit_accuracy, 0.0);
    assert_eq!(m.corrected_digit_accuracy, 1.0);
    assert_eq!(m.low_fraction, 1.0);
}

/// Every digit is independently right with probability `d`; the phone rate
/// must track the binomial all-ten-correct probability.
#[test]
fn iid_errors_give_tenth_power_phone_accuracy() {
    let d = 0.985f64;
    let p = SegregationPolicy::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut forms, mut truths) = (Vec::new(), Vec::new());
    for f in 0..2000 {
        let id = format!("f{f}");
        let s: String = (0..10).map(|_| char::from(b'0' + rng.random_range(0..10u8))).collect();
        let got: String = s
            .bytes()
            .map(|b| if rng.random_bool(d) { b as char } else { char::from(b'0' + (b - b'0' + 1) % 10) })
            .collect();
        truths.push(truth(&id, vec![Some(&s)]));
        forms.push(processed(&id, vec![digit_row(0, &got, 0.99, &p)], p));
    }
    let m = evaluate_corpus(&forms, &truths, &p);
    assert!((m.digit_accuracy - d).abs() < 0.005, "{}", m.digit_accuracy);
    assert!((m.phone_accuracy - d.powi(10)).abs() < 0.02, "{} vs {}", m.phone_accuracy, d.powi(10));
}

proptest! {
    #[test]
    fn corrected_accuracy_is_monotone_in_threshold(
        cells in proptest::collection::vec((0u8..10, 0u8..11, 0.0f32..1.0), 10..=10),
        blank_in_truth in any::<bool>(),
    ) {
        let p = SegregationPolicy::default();
        let s: String = cells.iter().map(|c| char::from(b'0' + c.0)).collect();
        let preds = cells.iter().map(|&(_, g, c)| pred((g < 10).then_some(g), c)).collect();
        let row = DigitizedRow::new(0, preds, &p);
        let gt = truth("x", vec![(!blank_in_truth).then_some(s.as_str())]);
        let form = processed("x", vec![row], p);
        let rows = sweep_thresholds(&[form], &[gt], &SWEEP_THRESHOLDS);
        for w in rows.windows(2) {
            if !w[0].overall_digit_accuracy.is_nan() {
                prop_assert!(w[1].overall_digit_accuracy >= w[0].overall_digit_accuracy);
                prop_assert!(w[1].overall_phone_accuracy >= w[0].overall_phone_accuracy);
            }
            prop_assert!(w[1].percent_data >= w[0].percent_data || w[0].percent_data.is_nan());
        }
    }
}

#[test]
fn sweep_report_has_the_table_columns() {
    let p = SegregationPolicy::default();
    let gt = truth("a", vec![Some("0123456789")]);
    let mut row = digit_row(0, "0123456789", 0.95, &p);
    row.cells[0] = pred(Some(8), 0.65);
    row.refresh(&p);
    let rows = sweep_thresholds(&[processed("a", vec![row], p)], &[gt], &SWEEP_THRESHOLDS);
    let csv = SweepRow::to_csv(&rows);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], SweepRow::CSV_HEADER);
    assert_eq!(lines[1], "0.6,0.00,NaN,90.00,90.00,0.00");
    assert_eq!(lines[2], "0.7,10.00,0.00,100.00,100.00,100.00");
    assert_eq!(lines.len(), 5);
}

#[test]
fn unregistrable_scan_goes_to_review_whole() {
    let t = FormTemplate::form1();
    let reference = crate::template::render_blank_template(&t, &crate::template::reference_spec(&Default::default()));
    let ctx = TemplateContext::new(t, &reference).unwrap();
    let mut models = Models {
        blank: build_blank_classifier(1),
        digit: build_direct_classifier(2),
    };
    let scan = GrayImage::filled(400, 560, 1.0);
    let (form, items) = digitize_form(&scan, "empty-page", &ctx, &mut models, &PipelineConfig::default()).unwrap();
    assert_eq!(form.status, FormStatus::Unprocessed);
    assert!(form.rows.is_empty());
    assert_eq!(items.len(), 1);
    assert_eq!(items[0].id, "empty-page:form");
    assert!(items[0].reason.as_deref().unwrap_or("").contains("registration"));
}
