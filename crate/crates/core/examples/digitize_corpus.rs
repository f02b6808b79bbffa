//! Digitizes a corpus directory written by `render_corpus` (or `formscan
//! render`), prints the records CSV and writes the review journal.
//!
//!     cargo run --example digitize_corpus -- <corpus-dir> <model-dir> [threshold] [journal]

use std::path::PathBuf;

use formscan::pipeline::{digitize_corpus_dir, evaluate_corpus, records_csv, Models, PipelineConfig, SegregationPolicy};
use formscan::review::ReviewQueue;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let usage = "usage: digitize_corpus <corpus-dir> <model-dir> [threshold] [journal]";
    let corpus: PathBuf = args.next().ok_or(usage)?.into();
    let model_dir: PathBuf = args.next().ok_or(usage)?.into();
    let threshold: f32 = args.next().map_or(Ok(0.9), |s| s.parse())?;
    let journal: PathBuf = args.next().unwrap_or_else(|| "review.jsonl".into()).into();

    let policy = SegregationPolicy::new(threshold)?;
    let cfg = PipelineConfig { policy, ..PipelineConfig::default() };
    let models = Models::load_dir(&model_dir)?;
    let (forms, items, truth) = digitize_corpus_dir(&corpus, &models, &cfg, 1)?;
    print!("{}", records_csv(&forms));

    if journal.exists() {
        std::fs::remove_file(&journal)?;
    }
    ReviewQueue::open(&journal)?.enqueue(items.clone())?;
    let m = evaluate_corpus(&forms, &truth, &policy);
    eprintln!(
        "{} review items -> {}; digit accuracy {:.4}, phone accuracy {:.4}",
        items.len(),
        journal.display(),
        m.digit_accuracy,
        m.phone_accuracy
    );
    Ok(())
}
