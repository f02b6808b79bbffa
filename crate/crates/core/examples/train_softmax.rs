//! Trains the direct softmax classifier on pooled MNIST (60:20:20 split).
//!
//!     cargo run --release --example train_softmax -- [epochs] [limit]

use std::time::Instant;

use formscan::datasets::{load_mnist_pooled, locate_mnist, split, TensorSet};
use formscan::models::{accuracy, build_direct_classifier, train_model, Objective, TrainConfig, TrainEvent};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(Ok(15), |s| s.parse())?;
    let limit: Option<usize> = args.next().map(|s| s.parse()).transpose()?;
    let dir = locate_mnist().ok_or("MNIST not found; run scripts/fetch_mnist.sh")?;
    let pooled = load_mnist_pooled(&dir)?;
    let (train, val, test) = split(&pooled, [0.6, 0.2, 0.2], 42)?;
    let (mut train, mut val) = (TensorSet::from_set(&train), TensorSet::from_set(&val));
    if let Some(n) = limit {
        train = train.take(n);
        val = val.take(n / 3);
    }
    let test = TensorSet::from_set(&test);

    let cfg = TrainConfig { epochs, ..TrainConfig::default() };
    let start = Instant::now();
    let (mut net, history) = train_model(build_direct_classifier(cfg.seed), &train, &val, &cfg, &Objective::CrossEntropy, &mut |ev| {
        if let TrainEvent::Epoch(r) = ev {
            println!(
                "epoch {:>2}  train {:.4}  val {:.4}  acc {:.4}  lr {:.1e}  [{:.0?}]",
                r.epoch, r.train_loss, r.val_loss, r.val_acc, r.lr, start.elapsed()
            );
        }
    })?;
    println!("best epoch {}, test accuracy {:.4}", history.best_epoch, accuracy(&mut net, &test)?);
    Ok(())
}
