//! Digits {0,1}, then 2, 3 and 4, with and without consolidation; scores
//! every digit seen so far with the auxiliary classifier after each run.
//!
//! cargo run --release --example mnist_sequential -- [data/mnist] [lambda]

use ewc_gan::data::{load_mnist, MnistSplit};
use ewc_gan::eval::{retention_metrics_mnist, sample_grid, AuxClassifier, ClassifierConfig};
use ewc_gan::trainer::{run_sequence, Regime, RunConfig};
use ewc_gan::RngStream;

fn main() -> ewc_gan::Result<()> {
    let mut args = std::env::args().skip(1);
    let data = args.next().unwrap_or_else(|| "data/mnist".into());
    let lambda: f64 = args.next().map_or(1000.0, |s| s.parse().expect("lambda"));

    let train = load_mnist(&data, MnistSplit::Train)?;
    let clf = AuxClassifier::train(&train, 10, &ClassifierConfig::default())?;
    let tasks = vec![vec![0, 1], vec![2], vec![3], vec![4]];
    let seen = [0, 1, 2, 3, 4];

    for (regime, l) in [(Regime::Naive, 0.0), (Regime::Ewc, lambda)] {
        let mut cfg = RunConfig::mnist(tasks.clone(), &data);
        cfg.regime = regime;
        cfg.lambda = l;
        let out = run_sequence(&cfg)?;
        let acc = retention_metrics_mnist(&out.gan, &clf, &seen, 1000, &mut RngStream::new(7))?;
        let row: Vec<String> = acc.iter().map(|a| format!("{}:{:.2}", a.class, a.accuracy)).collect();
        println!("{regime:>5} {}", row.join(" "));
        sample_grid(&out.gan, &seen, 6, &mut RngStream::new(0))?.write_png(format!("mnist_{regime}.png"))?;
    }
    Ok(())
}
