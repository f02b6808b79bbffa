//! Renders a synthetic corpus with held-out MNIST handwriting, digitizes it
//! and prints the accuracy report and the threshold sweep.
//!
//!     cargo run --release --example evaluate_corpus -- <model-dir> [form1|form2] [forms] [jitter]
//!
//! `<model-dir>` holds `blank.fsnn` and `digit.fsnn`.

use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use formscan::datasets::{load_mnist_pooled, locate_mnist, split};
use formscan::pipeline::{
    digitize_all, evaluate_corpus, sweep_thresholds, Models, PipelineConfig, SweepRow, TemplateContext,
    SWEEP_THRESHOLDS,
};
use formscan::template::{
    reference_spec, render_blank_template, BorderStyle, CorpusSpec, FormTemplate, RenderSpec, SetGlyphs,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let model_dir = args.next().ok_or("usage: evaluate_corpus <model-dir> [form1|form2] [forms] [jitter]")?;
    let which = args.next().unwrap_or_else(|| "form1".into());
    let forms: usize = args.next().map_or(Ok(50), |s| s.parse())?;
    let jitter: f64 = args.next().map_or(Ok(0.01), |s| s.parse())?;

    let (t, style, marks) = match which.as_str() {
        "form2" => (FormTemplate::form2(), BorderStyle::LightSeparated, true),
        _ => (FormTemplate::form1(), BorderStyle::DarkJoined, false),
    };
    let spec = CorpusSpec {
        forms,
        render: RenderSpec {
            corner_jitter: jitter,
            border_style: style,
            corner_marks: marks,
            seed: 42,
            ..RenderSpec::default()
        },
        ..CorpusSpec::default()
    };
    let dir = locate_mnist().ok_or("MNIST not found; run scripts/fetch_mnist.sh")?;
    let (_, _, test) = split(&load_mnist_pooled(&dir)?, [0.6, 0.2, 0.2], 42)?;
    let glyphs = SetGlyphs::new(test);
    let models = Models::load_dir(Path::new(&model_dir))?;
    let ctx = TemplateContext::new(t.clone(), &render_blank_template(&t, &reference_spec(&spec.render)))?;
    let cfg = PipelineConfig::default();

    let start = Instant::now();
    let truth = Mutex::new(vec![None; forms]);
    let results = digitize_all(
        forms,
        |i| {
            let (scan, gt) = spec.render_form(&t, i, &glyphs)?;
            let id = gt.form.clone();
            truth.lock().unwrap()[i] = Some(gt);
            Ok((id, scan))
        },
        &ctx,
        &models,
        &cfg,
        rayon::current_num_threads(),
    )?;
    let truth: Vec<_> = truth.into_inner().unwrap().into_iter().map(Option::unwrap).collect();
    let digitized: Vec<_> = results.into_iter().map(|(f, _)| f).collect();
    println!("digitized {forms} forms in {:.1?}", start.elapsed());

    let m = evaluate_corpus(&digitized, &truth, &cfg.policy);
    println!("{}", serde_json::to_string_pretty(&m)?);
    println!(
        "digit {:.4}  phone {:.4}  digit^10 {:.4}",
        m.digit_accuracy,
        m.phone_accuracy,
        m.digit_accuracy.powi(10)
    );
    print!("{}", SweepRow::to_csv(&sweep_thresholds(&digitized, &truth, &SWEEP_THRESHOLDS)));
    Ok(())
}
