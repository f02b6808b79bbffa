//! Writes a synthetic corpus (template, reference scan, scans, truth) drawn
//! with the built-in font.
//!
//!     cargo run --example render_corpus -- <out-dir> [form1|form2] [forms] [jitter]

use std::path::PathBuf;

use formscan::template::{write_corpus, BorderStyle, CorpusSpec, FontGlyphs, FormTemplate, RenderSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out: PathBuf = args.next().ok_or("usage: render_corpus <out-dir> [form1|form2] [forms] [jitter]")?.into();
    let which = args.next().unwrap_or_else(|| "form1".into());
    let forms: usize = args.next().map_or(Ok(10), |s| s.parse())?;
    let jitter: f64 = args.next().map_or(Ok(0.01), |s| s.parse())?;

    let (t, style, marks) = match which.as_str() {
        "form2" => (FormTemplate::form2(), BorderStyle::LightSeparated, true),
        _ => (FormTemplate::form1(), BorderStyle::DarkJoined, false),
    };
    let spec = CorpusSpec {
        forms,
        fill_rate: 0.6,
        render: RenderSpec {
            corner_jitter: jitter,
            border_style: style,
            corner_marks: marks,
            seed: 42,
            ..RenderSpec::default()
        },
    };
    let paths = write_corpus(&out, &t, &spec, &FontGlyphs)?;
    println!("wrote {} scans of {} under {}", paths.len(), t.id, out.display());
    Ok(())
}
