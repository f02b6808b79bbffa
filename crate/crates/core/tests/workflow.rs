//! Render → digitize → review over HTTP → apply corrections, driven through
//! the CLI entry point. Uses font glyphs and untrained models, so it needs no
//! dataset; the assertions only concern plumbing, not recognition quality.

use std::path::Path;
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use formscan::models::{build_blank_classifier, build_direct_classifier};
use formscan::nn::save_checkpoint;
use formscan::pipeline::{BLANK_MODEL_FILE, DIGIT_MODEL_FILE};
use formscan::review::{router, ReviewQueue};
use formscan::template::read_truth;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn cli(args: &[&str]) -> i32 {
    formscan::cli::run(std::iter::once("formscan").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_models(dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    save_checkpoint(&build_blank_classifier(1), &json!({}), &dir.join(BLANK_MODEL_FILE)).unwrap();
    save_checkpoint(&build_direct_classifier(2), &json!({}), &dir.join(DIGIT_MODEL_FILE)).unwrap();
}

/// `form_id,row_index` → digits column.
fn records(path: &Path) -> Vec<(String, String)> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("form_id,row_index,digits,min_confidence,needs_review"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 5, "{l}");
            (format!("{},{}", f[0], f[1]), f[2].to_string())
        })
        .collect()
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    // crops are PNG; anything that is not JSON reads as null
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn review_round_trip_reproduces_truth_on_reviewed_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let (corpus, models) = (d.join("corpus"), d.join("models"));
    write_models(&models);

    assert_eq!(cli(&["render", "--template", "form2", "--forms", "3", "--seed", "5", "--out", s(&corpus)]), 0);
    let (rec, journal, forms) = (d.join("rec.csv"), d.join("journal.jsonl"), d.join("forms.jsonl"));
    // threshold 1 routes every cell of every non-blank row to review
    let code = cli(&[
        "digitize",
        "--template",
        s(&corpus.join("template.json")),
        "--scans",
        s(&corpus.join("scans")),
        "--model",
        s(&models),
        "--threshold",
        "1",
        "--out",
        s(&rec),
        "--review-out",
        s(&journal),
        "--forms-out",
        s(&forms),
    ]);
    assert_eq!(code, 0);
    let before = records(&rec);
    assert_eq!(before.len(), 3 * 16);
    assert!(before.iter().all(|(_, digits)| digits != "UNPROCESSED"));

    let truth = read_truth(&corpus.join("truth.jsonl")).unwrap();
    let label_of = |form: &str, row: usize, cell: usize| {
        let gt = truth.iter().find(|t| t.form == form).unwrap();
        gt.cell_label(row, cell).map_or("BLANK".to_string(), |d| d.to_string())
    };

    let queue = Arc::new(Mutex::new(ReviewQueue::open(&journal).unwrap()));
    let app = router(queue, None);
    let (_, stats) = call(&app, Request::get("/api/stats").body(Body::empty()).unwrap()).await;
    let total = stats["total"].as_u64().unwrap();
    assert!(total > 0);
    let mut reviewed_rows = std::collections::BTreeSet::new();
    loop {
        let (status, item) = call(&app, Request::get("/api/queue/next").body(Body::empty()).unwrap()).await;
        if status == StatusCode::NO_CONTENT {
            break;
        }
        assert_eq!(status, StatusCode::OK);
        let (id, form) = (item["id"].as_str().unwrap(), item["form_id"].as_str().unwrap());
        let (row, cell) = (item["row_index"].as_u64().unwrap() as usize, item["cell_index"].as_u64().unwrap() as usize);
        let (crop_status, _) = call(
            &app,
            Request::get(item["crop_url"].as_str().unwrap()).body(Body::empty()).unwrap(),
        )
        .await;
        assert_eq!(crop_status, StatusCode::OK);
        let body = json!({ "label": label_of(form, row, cell) }).to_string();
        let req = Request::post(format!("/api/queue/{id}/label"))
            .header("content-type", "application/json")
            .body(Body::from(body))
            .unwrap();
        let (status, labeled) = call(&app, req).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(labeled["status"], "labeled");
        reviewed_rows.insert(format!("{form},{row}"));
    }
    let (_, stats) = call(&app, Request::get("/api/stats").body(Body::empty()).unwrap()).await;
    assert_eq!((stats["pending"].as_u64(), stats["labeled"].as_u64()), (Some(0), Some(total)));

    let fixed = d.join("fixed.csv");
    assert_eq!(
        cli(&["apply-corrections", "--forms", s(&forms), "--journal", s(&journal), "--out", s(&fixed)]),
        0
    );
    let after = records(&fixed);
    assert_eq!(after.len(), before.len());
    for ((key, old), (key2, new)) in before.iter().zip(&after) {
        assert_eq!(key, key2);
        if reviewed_rows.contains(key) {
            let (form, row) = key.split_once(',').unwrap();
            let gt = truth.iter().find(|t| t.form == form).unwrap();
            let want = gt.rows[row.parse::<usize>().unwrap()].digits.clone().unwrap_or("BLANK".into());
            assert_eq!(new, &want, "{key}");
        } else {
            assert_eq!(new, old, "{key}");
        }
    }
}

#[test]
fn gradcheck_subcommand_passes() {
    assert_eq!(cli(&["gradcheck"]), 0);
}

#[test]
fn render_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        assert_eq!(cli(&["render", "--template", "form1", "--forms", "2", "--out", s(&out)]), 0);
    }
    for f in ["template.json", "truth.jsonl", "reference.png"] {
        let (a, b) = (tmp.path().join("a").join(f), tmp.path().join("b").join(f));
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), "{f}");
    }
}
