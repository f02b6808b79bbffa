//! Trains the triplet-loss embedder plus softmax head on pooled MNIST and
//! reports accuracy, embedding separation and mining soundness.
//!
//!     cargo run --release --example train_triplet -- [epochs] [checkpoint]

use std::path::Path;
use std::time::Instant;

use formscan::datasets::{load_mnist_pooled, locate_mnist, split, TensorSet};
use formscan::models::eval::embedding_separation;
use formscan::models::{accuracy, embed, train_triplet, triplet_violations, TrainConfig, TrainEvent, TripletConfig};
use formscan::nn::save_checkpoint;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(Ok(50), |s| s.parse())?;
    let out = args.next();
    let dir = locate_mnist().ok_or("MNIST not found; run scripts/fetch_mnist.sh")?;
    let (train, val, test) = split(&load_mnist_pooled(&dir)?, [0.6, 0.2, 0.2], 42)?;
    let (train, val, test) = (TensorSet::from_set(&train), TensorSet::from_set(&val), TensorSet::from_set(&test));

    let cfg = TrainConfig { epochs, ..TrainConfig::default() };
    let start = Instant::now();
    let (mut mined, mut violations) = (0usize, 0usize);
    let mut model = train_triplet(&train, &val, &cfg, &TripletConfig::default(), &mut |ev| match ev {
        TrainEvent::Mined { embeddings, labels, triplets, margin } => {
            mined += triplets.len();
            violations += triplet_violations(embeddings, labels, triplets, margin);
        }
        TrainEvent::Epoch(r) => println!(
            "epoch {:>2}  train {:.4}  val {:.4}  acc {:.4}  lr {:.1e}  [{:.0?}]",
            r.epoch, r.train_loss, r.val_loss, r.val_acc, r.lr, start.elapsed()
        ),
        TrainEvent::Batch { .. } => {}
    })?;
    let acc = accuracy(&mut model.classifier, &test)?;
    let sep = embedding_separation(&embed(&mut model.embedder, &test.inputs)?, &test.labels);
    println!("best epoch {}, test accuracy {acc:.4}", model.history.best_epoch);
    println!("intra {:.4} inter {:.4}; mined {mined} triplets, {violations} violations", sep.intra, sep.inter);
    if let Some(path) = out {
        let meta = serde_json::json!({ "task": "triplet", "test_accuracy": acc, "epochs": model.history.epochs.len() });
        save_checkpoint(&model.classifier, &meta, Path::new(&path))?;
    }
    Ok(())
}
