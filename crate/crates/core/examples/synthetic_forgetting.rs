//! Two Gaussian classes learned one after the other, with and without
//! consolidation. Prints the class-0 mean gap after each task.
//!
//! cargo run --release --example synthetic_forgetting -- [lambda] [seeds]

use ewc_gan::checkpoint::Checkpoint;
use ewc_gan::eval::retention_metrics_synthetic;
use ewc_gan::trainer::{run_sequence, run_sequence_with, Regime, RunConfig};
use ewc_gan::RngStream;

fn class0_gap(cfg: &RunConfig, gan: &ewc_gan::CondGan) -> ewc_gan::Result<f64> {
    let rows = retention_metrics_synthetic(gan, &cfg.synthetic, 4096, &mut RngStream::new(99))?;
    Ok(rows[0].mean_gap)
}

fn main() -> ewc_gan::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let lambda: f64 = args.first().map_or(1e8, |s| s.parse().expect("lambda"));
    let seeds: u64 = args.get(1).map_or(3, |s| s.parse().expect("seeds"));

    for seed in 0..seeds {
        let mut cfg = RunConfig::synthetic(vec![vec![0], vec![1]], 4).with_seed(seed);
        cfg.lambda = lambda;
        cfg.regime = Regime::Ewc;

        let mut first = cfg.clone();
        first.tasks.truncate(1);
        let a = run_sequence(&first)?;
        let gap_a = class0_gap(&cfg, &a.gan)?;

        let mut after = Vec::new();
        for regime in [Regime::Naive, Regime::Ewc] {
            let mut c = cfg.clone();
            c.regime = regime;
            let resume = Checkpoint {
                gan: a.gan.deep_clone(),
                records: a.records.clone(),
                completed_tasks: a.completed_tasks.clone(),
            };
            let out = run_sequence_with(&c, Some(resume), &mut ())?;
            after.push(class0_gap(&cfg, &out.gan)?);
        }
        println!(
            "seed {seed}: after A {gap_a:.4} | after B naive {:.4} ({:.1}x) ewc {:.4} ({:.2}x)",
            after[0],
            after[0] / gap_a,
            after[1],
            after[1] / gap_a
        );
    }
    Ok(())
}
