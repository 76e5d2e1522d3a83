//! Training cost of consolidation vs. regenerate-and-retrain over a run of
//! equal single-class tasks.
//!
//! cargo run --release --example replay_cost -- [tasks]

use ewc_gan::data::SyntheticTaskSpec;
use ewc_gan::trainer::{replay_baseline, run_sequence, Regime, RunConfig, TaskSpec};

fn main() -> ewc_gan::Result<()> {
    let tasks: usize = std::env::args().nth(1).map_or(6, |s| s.parse().expect("tasks"));
    let mut cfg = RunConfig::synthetic((0..tasks).map(|c| vec![c]).collect(), tasks);
    cfg.synthetic = SyntheticTaskSpec::ring(tasks, 2.0, 0.2, 128);
    cfg.tasks = (0..tasks).map(|c| TaskSpec::new(vec![c], 5, 32)).collect();
    cfg.gan.hidden = 32;
    cfg.d_steps = 1;
    cfg.fisher_samples = 128;

    cfg.regime = Regime::Ewc;
    let ewc = run_sequence(&cfg)?;
    cfg.regime = Regime::Replay;
    let replay = replay_baseline(&cfg)?;

    println!("task  ewc_steps  ewc_examples  replay_steps  replay_examples");
    let (es, ee) = (ewc.log.cumulative_steps(), ewc.log.cumulative_examples());
    let (rs, re) = (replay.log.cumulative_steps(), replay.log.cumulative_examples());
    for t in 0..tasks {
        println!("{:>4}  {:>9}  {:>12}  {:>12}  {:>15}", t + 1, es[t], ee[t], rs[t], re[t]);
    }
    Ok(())
}
