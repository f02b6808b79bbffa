//! The `formscan` command line. [`run`] maps argv to an exit code: 0 on
//! success, 2 on a usage error, 1 on a runtime failure.

mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::datasets::{
    blank_cell_set, cell_layouts, load_emnist_digits_pooled, load_mnist_pooled, split, LabeledDigitSet, TensorSet,
    CELL_MISALIGN,
};
use crate::imaging::read_image;
use crate::models::eval::embedding_separation;
use crate::models::{
    accuracy, embed, gradient_suite, train_blank, train_softmax, train_triplet, History, TrainConfig, TripletConfig,
};
use crate::nn::{load_checkpoint, save_checkpoint, Network};
use crate::pipeline::{
    apply_corrections, digitize_all, digitize_corpus_dir, evaluate_corpus, records_csv, sweep_thresholds,
    DigitizedForm, Models, PipelineConfig, SegregationPolicy, SweepRow, TemplateContext, DIGIT_MODEL_FILE,
    SWEEP_THRESHOLDS,
};
use crate::review::{read_corrections, ReviewQueue};
use crate::template::{write_corpus, BorderStyle, CorpusSpec, FontGlyphs, FormTemplate, GlyphSampler, RenderSpec, SetGlyphs};

pub const DEFAULT_SEED: u64 = 42;

type BoxError = Box<dyn std::error::Error + Send + Sync>;

enum Failure {
    Usage(String),
    Runtime(BoxError),
}

impl<E: Into<BoxError>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

#[derive(Parser, Debug)]
#[command(name = "formscan", version, about = "Digitize handwritten phone-number forms")]
pub struct Cli {
    /// JSON object whose keys mirror the subcommand's long flags; flags
    /// given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic corpus: reference, template, scans and truth.
    Render(RenderArgs),
    /// Train the blank, softmax or triplet model.
    Train(TrainArgs),
    /// Dataset and corpus accuracy of a model directory.
    Eval(EvalArgs),
    /// Segregation report over confidence thresholds.
    SweepThreshold(SweepArgs),
    /// Digitize a directory of scans into records and a review journal.
    Digitize(DigitizeArgs),
    /// Merge operator labels into digitized forms.
    ApplyCorrections(ApplyArgs),
    /// Serve the review queue over HTTP.
    ServeReview(ServeArgs),
    /// Finite-difference check of every layer under both losses.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GlyphSource {
    /// Built-in 5×7 font strokes.
    Font,
    /// Handwriting from the held-out MNIST test split.
    Mnist,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Style {
    DarkJoined,
    LightSeparated,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// `form1`, `form2`, or a template JSON file.
    #[arg(long, default_value = "form1")]
    pub template: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 25)]
    pub forms: usize,
    #[arg(long, default_value_t = 0.6)]
    pub fill_rate: f64,
    #[arg(long, default_value_t = 0.01)]
    pub jitter: f64,
    #[arg(long, default_value_t = 0.03)]
    pub noise: f64,
    /// Defaults to dark joined rules for form1 and light outlines otherwise.
    #[arg(long, value_enum)]
    pub style: Option<Style>,
    #[arg(long)]
    pub corner_marks: bool,
    #[arg(long, default_value_t = 0)]
    pub decoy_offset: usize,
    #[arg(long, default_value_t = 0.0)]
    pub crop_shift: f64,
    #[arg(long, default_value_t = 0.0)]
    pub border_bleed: f64,
    #[arg(long, value_enum, default_value = "font")]
    pub glyphs: GlyphSource,
    #[arg(long, default_value = "data/mnist")]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Blank,
    Softmax,
    Triplet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DatasetName {
    Mnist,
    Emnist,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    #[arg(long, value_enum, default_value = "mnist")]
    pub dataset: DatasetName,
    #[arg(long, default_value = "data/mnist")]
    pub data_dir: PathBuf,
    /// Defaults: blank 10, softmax 15, triplet 50.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Cap on training samples; validation and test shrink in proportion.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Checkpoint path; a `.json` metadata sidecar is written beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch history CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory holding `digit.fsnn` and, for corpora, `blank.fsnn`.
    #[arg(long)]
    pub model_dir: PathBuf,
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetName>,
    #[arg(long, default_value = "data/mnist")]
    pub data_dir: PathBuf,
    /// Rendered corpus directory; repeatable.
    #[arg(long)]
    pub corpus: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f32,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub model_dir: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = SWEEP_THRESHOLDS.to_vec())]
    pub thresholds: Vec<f32>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DigitizeArgs {
    /// Template JSON; its `reference_image` resolves against its directory.
    #[arg(long)]
    pub template: PathBuf,
    /// Directory of PNG or PGM scans, processed in file-name order.
    #[arg(long)]
    pub scans: PathBuf,
    /// Model directory holding `blank.fsnn` and `digit.fsnn`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f32,
    /// Records CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Review journal, replaced by the low-confidence items of this run.
    #[arg(long)]
    pub review_out: Option<PathBuf>,
    /// Digitized forms as JSON lines, the input of `apply-corrections`.
    #[arg(long)]
    pub forms_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("labels").required(true).args(["journal", "corrections"])))]
pub struct ApplyArgs {
    /// Digitized forms JSON lines from `digitize --forms-out`.
    #[arg(long)]
    pub forms: PathBuf,
    /// Review journal; its labeled items become corrections.
    #[arg(long)]
    pub journal: Option<PathBuf>,
    /// Corrections JSON lines.
    #[arg(long)]
    pub corrections: Option<PathBuf>,
    /// Corrected records CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub forms_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    pub journal: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Static UI assets served at `/`.
    #[arg(long)]
    pub assets: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Print the cases as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// exit code. Diagnostics go to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match config::expand(argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {}", one_line(&*e));
            1
        }
    }
}

fn one_line(e: &(dyn std::error::Error + 'static)) -> String {
    let mut s = e.to_string();
    let mut src = e.source();
    while let Some(cause) = src {
        let c = cause.to_string();
        if !s.contains(&c) {
            s.push_str(": ");
            s.push_str(&c);
        }
        src = cause.source();
    }
    s.replace('\n', " ")
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Render(a) => render(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::SweepThreshold(a) => sweep(a),
        Command::Digitize(a) => digitize(a),
        Command::ApplyCorrections(a) => apply(a),
        Command::ServeReview(a) => serve_review(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn check_threshold(t: f32) -> Result<SegregationPolicy, Failure> {
    SegregationPolicy::new(t).map_err(|e| usage(e.to_string()))
}

fn check_workers(n: usize) -> Result<(), Failure> {
    if n == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(())
}

fn load_dataset(name: DatasetName, dir: &Path) -> Result<LabeledDigitSet, Failure> {
    Ok(match name {
        DatasetName::Mnist => load_mnist_pooled(dir)?,
        DatasetName::Emnist => load_emnist_digits_pooled(dir)?,
    })
}

fn split_sets(
    name: DatasetName,
    dir: &Path,
    seed: u64,
) -> Result<(LabeledDigitSet, LabeledDigitSet, LabeledDigitSet), Failure> {
    Ok(split(&load_dataset(name, dir)?, [0.6, 0.2, 0.2], seed)?)
}

fn resolve_template(spec: &str) -> Result<FormTemplate, Failure> {
    Ok(match spec {
        "form1" => FormTemplate::form1(),
        "form2" => FormTemplate::form2(),
        path => FormTemplate::load(Path::new(path))?,
    })
}

fn render(a: RenderArgs) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&a.fill_rate) {
        return Err(usage(format!("--fill-rate must lie in [0, 1], got {}", a.fill_rate)));
    }
    let t = resolve_template(&a.template)?;
    let style = match a.style {
        Some(Style::DarkJoined) => BorderStyle::DarkJoined,
        Some(Style::LightSeparated) => BorderStyle::LightSeparated,
        None if t.id == "form1" => BorderStyle::DarkJoined,
        None => BorderStyle::LightSeparated,
    };
    let render = RenderSpec {
        corner_jitter: a.jitter,
        noise_sigma: a.noise,
        border_style: style,
        corner_marks: a.corner_marks,
        crop_shift: a.crop_shift,
        seed: a.seed,
        border_bleed: a.border_bleed,
        decoy_row_offset: a.decoy_offset,
    };
    render.validate().map_err(|e| usage(e.to_string()))?;
    let spec = CorpusSpec {
        forms: a.forms,
        fill_rate: a.fill_rate,
        render,
    };
    let glyphs: Box<dyn GlyphSampler> = match a.glyphs {
        GlyphSource::Font => Box::new(FontGlyphs),
        GlyphSource::Mnist => Box::new(SetGlyphs::new(split_sets(DatasetName::Mnist, &a.data_dir, a.seed)?.2)),
    };
    let paths = write_corpus(&a.out, &t, &spec, glyphs.as_ref())?;
    println!("wrote {} scans to {}", paths.len(), a.out.display());
    Ok(())
}

fn print_epoch(h: &crate::models::TrainEvent<'_>) {
    if let crate::models::TrainEvent::Epoch(r) = h {
        eprintln!(
            "epoch {:>2}  train {:.4}  val {:.4}  acc {:.4}  lr {:.1e}",
            r.epoch, r.train_loss, r.val_loss, r.val_acc, r.lr
        );
    }
}

fn train(a: TrainArgs) -> Result<(), Failure> {
    if a.limit == Some(0) || a.epochs == Some(0) {
        return Err(usage("--limit and --epochs must be positive"));
    }
    let epochs = a.epochs.unwrap_or(match a.task {
        Task::Blank => 10,
        Task::Softmax => 15,
        Task::Triplet => 50,
    });
    let cfg = TrainConfig {
        epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let (train_set, val_set, test_set) = split_sets(a.dataset, &a.data_dir, a.seed)?;
    let shrink = |s: TensorSet, share: usize| match a.limit {
        Some(n) => s.take((n * share).div_ceil(3)),
        None => s,
    };
    let mut log = |ev: crate::models::TrainEvent<'_>| print_epoch(&ev);
    let (net, history, mut meta): (Network, History, serde_json::Value) = match a.task {
        Task::Blank => {
            let layouts = cell_layouts();
            let scale = |n: usize| a.limit.map_or(n, |l| (n * l).div_ceil(20_000).max(2));
            let mk = |set: LabeledDigitSet, n, seed| {
                TensorSet::from_set(&blank_cell_set(&layouts, scale(n), &SetGlyphs::new(set), CELL_MISALIGN, seed))
            };
            let (tr, va, te) = (
                mk(train_set, 20_000, a.seed),
                mk(val_set, 4_000, a.seed + 1),
                mk(test_set, 10_000, a.seed + 2),
            );
            let (mut net, h) = train_blank(&tr, &va, &cfg, &mut log)?;
            let acc = accuracy(&mut net, &te)?;
            println!("test accuracy {acc:.6}");
            (net, h, json!({ "test_accuracy": acc }))
        }
        Task::Softmax => {
            let tr = shrink(TensorSet::from_set(&train_set), 3);
            let va = shrink(TensorSet::from_set(&val_set), 1);
            let te = shrink(TensorSet::from_set(&test_set), 1);
            let (mut net, h) = train_softmax(&tr, &va, &cfg, &mut log)?;
            let acc = accuracy(&mut net, &te)?;
            println!("test accuracy {acc:.6}");
            (net, h, json!({ "test_accuracy": acc }))
        }
        Task::Triplet => {
            let tr = shrink(TensorSet::from_set(&train_set), 3);
            let va = shrink(TensorSet::from_set(&val_set), 1);
            let te = shrink(TensorSet::from_set(&test_set), 1);
            let mut m = train_triplet(&tr, &va, &cfg, &TripletConfig::default(), &mut log)?;
            let acc = accuracy(&mut m.classifier, &te)?;
            let sep = embedding_separation(&embed(&mut m.embedder, &te.inputs)?, &te.labels);
            println!("test accuracy {acc:.6}");
            println!("mean intra-class distance {:.6}, inter-class {:.6}", sep.intra, sep.inter);
            let meta = json!({ "test_accuracy": acc, "intra": sep.intra, "inter": sep.inter });
            (m.classifier, m.history, meta)
        }
    };
    let task = format!("{:?}", a.task).to_lowercase();
    let dataset = format!("{:?}", a.dataset).to_lowercase();
    meta["task"] = json!(task);
    meta["dataset"] = json!(dataset);
    meta["seed"] = json!(a.seed);
    meta["epochs_run"] = json!(history.epochs.len());
    meta["best_epoch"] = json!(history.best_epoch);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_checkpoint(&net, &meta, &a.out)?;
    if let Some(h) = &a.history {
        write_atomic(h, history.to_csv().as_bytes())?;
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    let policy = check_threshold(a.threshold)?;
    check_workers(a.workers)?;
    if a.dataset.is_none() && a.corpus.is_empty() {
        return Err(usage("nothing to evaluate: give --dataset and/or --corpus"));
    }
    let mut report = json!({ "threshold": a.threshold });
    if let Some(d) = a.dataset {
        let mut net = load_checkpoint(&a.model_dir.join(DIGIT_MODEL_FILE))?.network;
        let (_, _, test) = split_sets(d, &a.data_dir, a.seed)?;
        let acc = accuracy(&mut net, &TensorSet::from_set(&test))?;
        report["dataset"] = json!({ "name": format!("{d:?}").to_lowercase(), "samples": test.len(), "accuracy": acc });
    }
    if !a.corpus.is_empty() {
        let models = Models::load_dir(&a.model_dir)?;
        let cfg = PipelineConfig {
            policy,
            ..PipelineConfig::default()
        };
        let mut rows = Vec::new();
        for dir in &a.corpus {
            let (forms, _, truth) = digitize_corpus_dir(dir, &models, &cfg, a.workers)?;
            let m = evaluate_corpus(&forms, &truth, &policy);
            rows.push(json!({ "corpus": dir.display().to_string(), "metrics": m }));
        }
        report["corpora"] = json!(rows);
    }
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &a.out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sweep(a: SweepArgs) -> Result<(), Failure> {
    check_workers(a.workers)?;
    for &t in &a.thresholds {
        check_threshold(t)?;
    }
    let models = Models::load_dir(&a.model_dir)?;
    let (forms, _, truth) = digitize_corpus_dir(&a.corpus, &models, &PipelineConfig::default(), a.workers)?;
    let csv = SweepRow::to_csv(&sweep_thresholds(&forms, &truth, &a.thresholds));
    match &a.out {
        Some(p) => write_atomic(p, csv.as_bytes()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn list_scans(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let p = entry?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "pgm")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<(), Failure> {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it)?);
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

fn digitize(a: DigitizeArgs) -> Result<(), Failure> {
    let policy = check_threshold(a.threshold)?;
    check_workers(a.workers)?;
    let scans = list_scans(&a.scans)?;
    let ctx = TemplateContext::load(&a.template)?;
    let models = Models::load_dir(&a.model)?;
    let cfg = PipelineConfig {
        policy,
        ..PipelineConfig::default()
    };
    let results = digitize_all(
        scans.len(),
        |i| {
            let p = &scans[i];
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let img = read_image(p).map_err(crate::template::TemplateError::from)?;
            Ok((id, img))
        },
        &ctx,
        &models,
        &cfg,
        a.workers,
    )?;
    let (forms, items): (Vec<DigitizedForm>, Vec<_>) = results.into_iter().unzip();
    let items: Vec<_> = items.into_iter().flatten().collect();
    write_atomic(&a.out, records_csv(&forms).as_bytes())?;
    if let Some(p) = &a.forms_out {
        write_jsonl(p, &forms)?;
    }
    if let Some(p) = &a.review_out {
        if p.exists() {
            std::fs::remove_file(p)?;
        }
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut q = ReviewQueue::open(p)?;
        q.enqueue(items.clone())?;
    }
    let low_rows = forms.iter().flat_map(|f| &f.rows).filter(|r| r.needs_review).count();
    eprintln!(
        "{} forms, {} rows need review, {} review items",
        forms.len(),
        low_rows,
        items.len()
    );
    Ok(())
}

fn read_forms(path: &Path) -> Result<Vec<DigitizedForm>, Failure> {
    let f = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("{} line {}: {e}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn apply(a: ApplyArgs) -> Result<(), Failure> {
    let forms = read_forms(&a.forms)?;
    let corrections = match (&a.journal, &a.corrections) {
        (Some(j), _) => {
            if !j.is_file() {
                return Err(format!("{}: no such journal", j.display()).into());
            }
            ReviewQueue::open(j)?.export_labels()
        }
        (None, Some(c)) => read_corrections(c)?,
        (None, None) => unreachable!("clap requires one of the two"),
    };
    let fixed = forms
        .iter()
        .map(|f| apply_corrections(f, &corrections))
        .collect::<Result<Vec<_>, _>>()?;
    write_atomic(&a.out, records_csv(&fixed).as_bytes())?;
    if let Some(p) = &a.forms_out {
        write_jsonl(p, &fixed)?;
    }
    eprintln!("applied {} corrections to {} forms", corrections.len(), fixed.len());
    Ok(())
}

fn serve_review(a: ServeArgs) -> Result<(), Failure> {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| usage(format!("bad --host/--port: {e}")))?;
    let queue = Arc::new(Mutex::new(ReviewQueue::open(&a.journal)?));
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    eprintln!("serving {} on http://{addr}", a.journal.display());
    rt.block_on(crate::review::serve(queue, addr, a.assets))?;
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<(), Failure> {
    let cases = gradient_suite()?;
    let worst = cases.iter().map(|c| c.max_relative_error).fold(0.0, f64::max);
    let mut out = BufWriter::new(std::io::stdout().lock());
    if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&cases)?)?;
    } else {
        for c in &cases {
            writeln!(out, "{:<18} {:<13} {:>10.3e}  ({} coordinates)", c.layer, c.loss, c.max_relative_error, c.checked)?;
        }
        writeln!(out, "max relative error {worst:.3e}")?;
    }
    out.flush()?;
    if cases.iter().all(|c| c.passed()) {
        Ok(())
    } else {
        Err(format!("gradient check failed: max relative error {worst:.3e}").into())
    }
}

#[cfg(test)]
mod tests;
