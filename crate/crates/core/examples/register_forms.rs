//! Registers synthetic scans against their template with and without the
//! vertical filter and reports mean cell IoU.
//!
//! usage: register_forms [form1|form2] [forms] [corner_jitter] [decoy_row_offset]

use std::time::Instant;

use formscan::registration::{detect_features, evaluate_alignment, register, MatchFilterConfig, RansacConfig};
use formscan::template::{render_blank_template, render_filled_scan, BorderStyle, FontGlyphs, FormTemplate, RenderSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let (template, style) = match args.get(1).map(String::as_str).unwrap_or("form1") {
        "form2" => (FormTemplate::form2(), BorderStyle::LightSeparated),
        _ => (FormTemplate::form1(), BorderStyle::DarkJoined),
    };
    let forms: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5);
    let jitter: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.015);
    let decoy: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0);

    let reference_spec = RenderSpec { corner_marks: decoy > 0, ..RenderSpec::clean(style, decoy > 0) };
    let reference = render_blank_template(&template, &reference_spec);
    let t0 = Instant::now();
    let tmpl_kps = detect_features(&reference)?;
    println!("template keypoints: {} ({:.2?})", tmpl_kps.len(), t0.elapsed());

    let digits: Vec<Option<String>> = (0..template.rows.len())
        .map(|r| (r % 3 != 2).then(|| format!("{:010}", 5_550_000_000u64 + 7_919 * r as u64)))
        .collect();
    let cells = template.cells();
    let (mut sum_f, mut sum_u, mut strict) = (0.0, 0.0, 0);
    for seed in 0..forms {
        let spec = RenderSpec {
            corner_jitter: jitter,
            border_style: style,
            corner_marks: decoy > 0,
            decoy_row_offset: decoy,
            seed,
            ..RenderSpec::default()
        };
        let t1 = Instant::now();
        let (scan, truth) = render_filled_scan(&template, &digits, &FontGlyphs, &spec, &format!("f{seed}"))?;
        let scan_kps = detect_features(&scan)?;
        let iou = |cfg: &MatchFilterConfig| {
            match register(&scan, &scan_kps, &tmpl_kps, reference.height(), cfg, &RansacConfig::default()) {
                Ok(r) => (evaluate_alignment(&truth.true_boxes, &cells, &r.homography), r.matches.len(), r.inlier_count()),
                Err(e) => {
                    println!("  {e}");
                    (0.0, 0, 0)
                }
            }
        };
        let (f, fm, fi) = iou(&MatchFilterConfig::default());
        let (u, um, ui) = iou(&MatchFilterConfig::unfiltered());
        sum_f += f;
        sum_u += u;
        strict += usize::from(f > u);
        println!(
            "form {seed}: scan kps {}  filtered {f:.4} ({fi}/{fm})  unfiltered {u:.4} ({ui}/{um})  [{:.2?}]",
            scan_kps.len(),
            t1.elapsed()
        );
    }
    let n = forms as f64;
    println!("mean IoU filtered {:.4} unfiltered {:.4}; filtered strictly better on {strict}/{forms}", sum_f / n, sum_u / n);
    Ok(())
}
