use axum::body::Body;
use axum::http::{Request, StatusCode};
use chrono::TimeZone;
use http_body_util::BodyExt;
use proptest::prelude::*;
use tower::ServiceExt;

use std::sync::{Arc, Mutex};

use super::*;

fn crop(v: f32) -> GrayImage {
    GrayImage::filled(32, 32, v)
}

fn items(n: usize) -> Vec<ReviewItem> {
    (0..n).map(|i| ReviewItem::cell("f1", i / 10, i % 10, &crop(i as f32 / 100.0), Some((i % 10) as u8), 0.5)).collect()
}

fn at(s: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(1_700_000_000 + s, 0).unwrap()
}

#[test]
fn labels_parse_and_print() {
    assert_eq!("7".parse::<Label>().unwrap(), Label::Digit(7));
    assert_eq!("BLANK".parse::<Label>().unwrap(), Label::Blank);
    for bad in ["", "10", "b", "x"] {
        assert!(matches!(bad.parse::<Label>(), Err(ReviewError::BadLabel(_))));
    }
    assert_eq!(serde_json::to_string(&Label::Blank).unwrap(), "\"BLANK\"");
}

#[test]
fn empty_queue_has_nothing_pending() {
    let mut q = ReviewQueue::in_memory();
    assert!(q.next_pending().is_none());
    assert_eq!(q.stats(), QueueStats::default());
}

#[test]
fn counting_after_one_label() {
    let mut q = ReviewQueue::in_memory();
    assert_eq!(q.enqueue(items(3)).unwrap(), 3);
    let first = q.next_pending().unwrap().id.clone();
    q.submit_label(&first, Label::Digit(4)).unwrap();
    assert_eq!(q.stats(), QueueStats { pending: 2, labeled: 1, total: 3 });
    assert_ne!(q.next_pending().unwrap().id, first);
}

#[test]
fn second_label_is_rejected_and_first_wins() {
    let mut q = ReviewQueue::in_memory();
    q.enqueue(items(2)).unwrap();
    let id = ReviewItem::cell_id("f1", 0, 1);
    let labeled = q.submit_label_at(&id, Label::Digit(3), at(0)).unwrap();
    assert_eq!((labeled.status, labeled.operator_label), (ItemStatus::Labeled, Some(Label::Digit(3))));
    assert!(matches!(q.submit_label_at(&id, Label::Blank, at(1)), Err(ReviewError::AlreadyLabeled(_))));
    let stored = q.get(&id).unwrap();
    assert_eq!((stored.operator_label, stored.labeled_at), (Some(Label::Digit(3)), Some(at(0))));
    assert!(matches!(q.submit_label(&"nope".to_string(), Label::Blank), Err(ReviewError::UnknownItem(_))));
}

#[test]
fn duplicate_batches_leave_queue_untouched() {
    let mut q = ReviewQueue::in_memory();
    q.enqueue(items(2)).unwrap();
    let mut batch = items(4);
    batch.drain(..2);
    batch.push(items(1).remove(0));
    assert!(matches!(q.enqueue(batch), Err(ReviewError::DuplicateId(_))));
    assert_eq!(q.stats().total, 2);
}

#[test]
fn export_follows_submission_order_and_skips_forms() {
    let mut q = ReviewQueue::in_memory();
    let mut all = items(3);
    all.push(ReviewItem::form("f2", &crop(1.0), "too few matches"));
    q.enqueue(all).unwrap();
    q.submit_label_at("f1:0:2", Label::Digit(9), at(0)).unwrap();
    q.submit_label_at("f2:form", Label::Blank, at(1)).unwrap();
    q.submit_label_at("f1:0:0", Label::Blank, at(2)).unwrap();
    let ex = q.export_labels();
    assert_eq!(ex.len(), 2);
    assert_eq!((ex[0].cell_index, ex[0].label), (2, Label::Digit(9)));
    assert_eq!((ex[1].cell_index, ex[1].label), (0, Label::Blank));
}

#[test]
fn journal_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("queue.jsonl");
    {
        let mut q = ReviewQueue::open(&path).unwrap();
        q.enqueue(items(5)).unwrap();
        q.submit_label_at("f1:0:3", Label::Digit(1), at(5)).unwrap();
        q.submit_label_at("f1:0:1", Label::Blank, at(6)).unwrap();
    }
    let mut q = ReviewQueue::open(&path).unwrap();
    assert_eq!(q.stats(), QueueStats { pending: 3, labeled: 2, total: 5 });
    assert_eq!(q.get("f1:0:3").unwrap().labeled_at, Some(at(5)));
    assert_eq!(q.get("f1:0:4").unwrap().crop, items(5)[4].crop);
    assert_eq!(q.export_labels()[1].label, Label::Blank);
    assert_eq!(q.next_pending().unwrap().id, "f1:0:0");
    // the reopened queue keeps journaling
    q.submit_label_at("f1:0:0", Label::Digit(0), at(7)).unwrap();
    assert_eq!(ReviewQueue::open(&path).unwrap().stats().labeled, 3);
}

#[test]
fn corrupt_journal_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("queue.jsonl");
    std::fs::write(&path, "{\"event\":\"label\",\"id\":\"x\",\"label\":\"1\",\"at\":\"2024-01-01T00:00:00Z\"}\n").unwrap();
    assert!(matches!(ReviewQueue::open(&path), Err(ReviewError::Journal { line: 1, .. })));
}

#[test]
fn corrections_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    let c = vec![Correction { form_id: "a".into(), row_index: 1, cell_index: 2, label: Label::Digit(5) }];
    write_corrections(&path, &c).unwrap();
    assert_eq!(read_corrections(&path).unwrap(), c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counts_always_add_up(ops in proptest::collection::vec((0usize..12, 0u8..11), 0..40)) {
        let mut q = ReviewQueue::in_memory();
        q.enqueue(items(10)).unwrap();
        let mut labeled = std::collections::HashSet::new();
        for (i, l) in ops {
            let id = ReviewItem::cell_id("f1", 0, i);
            let label = if l == 10 { Label::Blank } else { Label::Digit(l) };
            let r = q.submit_label(&id, label);
            match (i < 10, labeled.contains(&i)) {
                (false, _) => prop_assert!(matches!(r, Err(ReviewError::UnknownItem(_)))),
                (true, true) => prop_assert!(matches!(r, Err(ReviewError::AlreadyLabeled(_)))),
                (true, false) => { prop_assert!(r.is_ok()); labeled.insert(i); }
            }
            let s = q.stats();
            prop_assert_eq!(s.pending + s.labeled, s.total);
            prop_assert_eq!(s.labeled, labeled.len());
        }
    }
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post_label(id: &str, label: &str) -> Request<Body> {
    Request::post(format!("/api/queue/{id}/label"))
        .header("content-type", "application/json")
        .body(Body::from(format!("{{\"label\":\"{label}\"}}")))
        .unwrap()
}

#[tokio::test]
async fn http_api_walks_the_queue() {
    let mut q = ReviewQueue::in_memory();
    q.enqueue(items(2)).unwrap();
    let shared: SharedQueue = Arc::new(Mutex::new(q));
    let app = router(shared.clone(), None);

    let (s, body) = call(&app, get("/api/queue/next")).await;
    assert_eq!(s, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["id"], "f1:0:0");
    assert_eq!(v["predicted"], "0");
    assert_eq!(v["confidence"], 0.5);
    assert_eq!(v["crop_url"], "/api/crops/f1:0:0.png");
    assert_eq!((v["labeled"].as_u64(), v["total"].as_u64()), (Some(0), Some(2)));

    let (s, png) = call(&app, get("/api/crops/f1:0:1.png")).await;
    assert_eq!(s, StatusCode::OK);
    let img = crate::imaging::decode_png(&png).unwrap();
    assert_eq!((img.width(), img.height()), (256, 256));
    assert_eq!(img, shared.lock().unwrap().get("f1:0:1").unwrap().crop.upscale_nearest(8));

    let (s, body) = call(&app, post_label("f1:0:0", "7")).await;
    assert_eq!(s, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!((v["status"].as_str(), v["operator_label"].as_str()), (Some("labeled"), Some("7")));

    // a double submission is refused and does not overwrite
    let (s, _) = call(&app, post_label("f1:0:0", "3")).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, _) = call(&app, post_label("f1:0:1", "seven")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, post_label("missing", "1")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, get("/api/crops/missing.png")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (_, body) = call(&app, get("/api/stats")).await;
    assert_eq!(serde_json::from_slice::<QueueStats>(&body).unwrap(), QueueStats { pending: 1, labeled: 1, total: 2 });

    let (s, _) = call(&app, post_label("f1:0:1", "BLANK")).await;
    assert_eq!(s, StatusCode::OK);
    let (s, body) = call(&app, get("/api/queue/next")).await;
    assert_eq!((s, body.len()), (StatusCode::NO_CONTENT, 0));
    assert_eq!(shared.lock().unwrap().get("f1:0:0").unwrap().operator_label, Some(Label::Digit(7)));
}
