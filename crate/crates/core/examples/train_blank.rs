//! Trains the blank/digit cell classifier on rendered cell crops and scores
//! it on a balanced 10k set whose glyphs come from the held-out MNIST split.
//!
//!     cargo run --release --example train_blank -- [epochs] [checkpoint]

use std::path::Path;
use std::time::Instant;

use formscan::datasets::{
    blank_cell_set, cell_layouts, load_mnist_pooled, locate_mnist, split, TensorSet, CELL_MISALIGN,
};
use formscan::models::{accuracy, train_blank, TrainConfig, TrainEvent};
use formscan::nn::save_checkpoint;
use formscan::template::SetGlyphs;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(Ok(10), |s| s.parse())?;
    let out = args.next();
    let dir = locate_mnist().ok_or("MNIST not found; run scripts/fetch_mnist.sh")?;
    let (train, val, test) = split(&load_mnist_pooled(&dir)?, [0.6, 0.2, 0.2], 42)?;
    let layouts = cell_layouts();
    let start = Instant::now();
    let train = blank_cell_set(&layouts, 20_000, &SetGlyphs::new(train), CELL_MISALIGN, 1);
    let val = blank_cell_set(&layouts, 4_000, &SetGlyphs::new(val), CELL_MISALIGN, 2);
    let test = blank_cell_set(&layouts, 10_000, &SetGlyphs::new(test), CELL_MISALIGN, 3);
    println!("rendered cells in {:.1?}", start.elapsed());
    let (train, val, test) = (TensorSet::from_set(&train), TensorSet::from_set(&val), TensorSet::from_set(&test));

    let cfg = TrainConfig { epochs, ..TrainConfig::default() };
    let (mut net, history) = train_blank(&train, &val, &cfg, &mut |ev| {
        if let TrainEvent::Epoch(r) = ev {
            println!("epoch {:>2}  val {:.5}  acc {:.5}  [{:.0?}]", r.epoch, r.val_loss, r.val_acc, start.elapsed());
        }
    })?;
    let acc = accuracy(&mut net, &test)?;
    println!("best epoch {}, test accuracy {acc:.5}", history.best_epoch);
    if let Some(path) = out {
        save_checkpoint(&net, &serde_json::json!({ "task": "blank", "test_accuracy": acc }), Path::new(&path))?;
    }
    Ok(())
}
