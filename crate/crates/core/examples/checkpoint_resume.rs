//! Write a checkpoint per task, resume from the first one and confirm the
//! resumed run ends in the same state.
//!
//! cargo run --release --example checkpoint_resume

use ewc_gan::checkpoint::load_checkpoint;
use ewc_gan::trainer::{run_sequence, run_sequence_with, Regime, RunConfig};

fn main() -> ewc_gan::Result<()> {
    let dir = std::env::temp_dir().join("ewc_gan_checkpoint_resume");
    let mut cfg = RunConfig::synthetic(vec![vec![0], vec![1], vec![2]], 3);
    cfg.regime = Regime::Ewc;
    cfg.lambda = 1e4;
    for t in &mut cfg.tasks {
        t.epochs = 10;
    }
    cfg.out_dir = Some(dir.clone());
    let full = run_sequence(&cfg)?;
    for p in &full.checkpoints {
        println!("{} ({} bytes)", p.display(), std::fs::metadata(p)?.len());
    }

    let ck = load_checkpoint(&full.checkpoints[0])?;
    println!("resuming after tasks {:?}", ck.completed_tasks);
    cfg.out_dir = None;
    let resumed = run_sequence_with(&cfg, Some(ck), &mut ())?;
    let same = resumed.gan.generator_params().flatten() == full.gan.generator_params().flatten()
        && resumed.gan.discriminator_params().flatten() == full.gan.discriminator_params().flatten();
    println!("resumed run identical to uninterrupted run: {same}");
    Ok(())
}
