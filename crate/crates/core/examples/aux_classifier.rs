//! Trains the auxiliary digit classifier used to score generated samples
//! and reports held-out accuracy per class.
//!
//! cargo run --release --example aux_classifier -- [mnist_dir] [save_path]

use std::time::Instant;

use ewc_gan::data::{load_mnist, MnistSplit};
use ewc_gan::eval::{AuxClassifier, ClassifierConfig};

fn main() -> ewc_gan::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "data/mnist".into());
    let save = args.next();

    let train = load_mnist(&dir, MnistSplit::Train)?;
    let test = load_mnist(&dir, MnistSplit::Test)?;
    println!("train {} / test {} images", train.len(), test.len());

    let start = Instant::now();
    let clf = AuxClassifier::train(&train, 10, &ClassifierConfig::default())?;
    let (acc, per_class) = clf.evaluate(&test)?;
    println!("held-out accuracy {acc:.4} ({:.1}s)", start.elapsed().as_secs_f64());
    for (c, a) in per_class {
        println!("  digit {c}: {a:.3}");
    }
    if let Some(path) = save {
        clf.save(&path)?;
        println!("saved to {path}");
    }
    Ok(())
}
