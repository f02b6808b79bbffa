use std::ffi::OsString;

use super::*;

fn args(s: &str) -> Vec<OsString> {
    s.split_whitespace().map(OsString::from).collect()
}

#[test]
fn config_fills_missing_flags_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"model_dir": "m", "threshold": 0.7, "workers": 3, "forms_out": null, "corpus": ["a", "b"]}"#).unwrap();
    let argv = args(&format!("formscan eval --config {} --threshold 0.8", cfg.display()));
    let out = config::expand(argv).unwrap();
    let cli = Cli::try_parse_from(out).unwrap();
    let Command::Eval(e) = cli.command else { panic!("eval expected") };
    assert_eq!(e.threshold, 0.8);
    assert_eq!(e.workers, 3);
    assert_eq!(e.corpus, vec![PathBuf::from("a"), PathBuf::from("b")]);
}

#[test]
fn config_errors_are_usage_errors() {
    assert_eq!(run(args("formscan gradcheck --config /nonexistent/c.json")), 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, "[1, 2]").unwrap();
    assert_eq!(run(args(&format!("formscan gradcheck --config {}", cfg.display()))), 2);
}

#[test]
fn usage_errors_exit_2_without_touching_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("records.csv");
    std::fs::write(&out, "keep").unwrap();
    let o = out.display();
    for argv in [
        format!("formscan digitize --template t.json --scans s --model m --out {o} --threshold 1.5"),
        format!("formscan digitize --template t.json --scans s --model m --out {o} --workers 0"),
        format!("formscan digitize --template t.json --out {o}"),
        format!("formscan apply-corrections --forms f.jsonl --out {o}"),
        format!("formscan train --task nonsense --out {o}"),
        "formscan no-such-command".to_string(),
    ] {
        assert_eq!(run(args(&argv)), 2, "{argv}");
    }
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "keep");
}

#[test]
fn runtime_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let argv = format!(
        "formscan digitize --template {0}/missing.json --scans {0} --model {0} --out {0}/r.csv",
        dir.path().display()
    );
    assert_eq!(run(args(&argv)), 1);
    assert!(!dir.path().join("r.csv").exists());
}

#[test]
fn sweep_defaults_to_the_four_thresholds() {
    let cli = Cli::try_parse_from(args("formscan sweep-threshold --corpus c --model-dir m")).unwrap();
    let Command::SweepThreshold(s) = cli.command else { panic!("sweep expected") };
    assert_eq!(s.thresholds, vec![0.6, 0.7, 0.8, 0.9]);
}
