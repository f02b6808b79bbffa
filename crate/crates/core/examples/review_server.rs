//! Serves the review API over a journal. Without an existing journal, seeds
//! one with a handful of rendered cells so the endpoints have something to
//! return.
//!
//!     cargo run --example review_server -- [journal] [port]
//!
//! Then: `curl localhost:8080/api/queue/next`, and label with
//! `curl -XPOST -H 'content-type: application/json' -d '{"label":"7"}' localhost:8080/api/queue/<id>/label`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use formscan::review::{serve, ReviewItem, ReviewQueue};
use formscan::template::{render_cell_sample, FontGlyphs, FormTemplate, GlyphSampler, RenderSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let journal: PathBuf = args.next().unwrap_or_else(|| "review.jsonl".into()).into();
    let port: u16 = args.next().map_or(Ok(8080), |s| s.parse())?;

    let seed_demo = !journal.exists();
    let mut queue = ReviewQueue::open(&journal)?;
    if seed_demo {
        let t = FormTemplate::form1();
        let spec = RenderSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let items = (0..10)
            .map(|c| {
                let digit = ((c * 3) % 10) as u8;
                let glyph = FontGlyphs.sample(digit, &mut rng);
                let cell = render_cell_sample(&t, &spec, 0, c, Some(&glyph), 0.0, &mut rng);
                ReviewItem::cell("demo", 0, c, &cell, Some(digit), 0.5)
            })
            .collect();
        queue.enqueue(items)?;
    }
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    println!("{} items in {}; serving http://{addr}", queue.stats().total, journal.display());
    serve(Arc::new(Mutex::new(queue)), addr, None).await?;
    Ok(())
}
