//! Class-0 retention on the two-task Gaussian problem across consolidation
//! strengths, all branching from one shared first task.
//!
//! cargo run --release --example lambda_sweep -- [seed]

use ewc_gan::checkpoint::Checkpoint;
use ewc_gan::eval::{report_csv, retention_metrics_synthetic, RetentionReport};
use ewc_gan::trainer::{run_sequence, run_sequence_with, Regime, RunConfig};
use ewc_gan::RngStream;

fn main() -> ewc_gan::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let cfg = RunConfig::synthetic(vec![vec![0], vec![1]], 4).with_seed(seed);
    let mut first = cfg.clone();
    first.tasks.truncate(1);
    first.regime = Regime::Ewc;
    let a = run_sequence(&first)?;

    let mut reports = Vec::new();
    for lambda in [0.0, 1e2, 1e3, 5e3, 1e5, 1e6, 1e7, 1e8] {
        let mut c = cfg.clone();
        c.regime = if lambda == 0.0 { Regime::Naive } else { Regime::Ewc };
        c.lambda = lambda;
        let ck = Checkpoint {
            gan: a.gan.deep_clone(),
            records: a.records.clone(),
            completed_tasks: a.completed_tasks.clone(),
        };
        let out = run_sequence_with(&c, Some(ck), &mut ())?;
        let rows = retention_metrics_synthetic(&out.gan, &c.synthetic, 4096, &mut RngStream::new(99))?;
        let mut report = RetentionReport::new(c.regime.to_string(), lambda, seed);
        report.add_synthetic(&rows[..2]);
        reports.push(report);
    }
    print!("{}", report_csv(&reports, "mean_gap"));
    Ok(())
}
