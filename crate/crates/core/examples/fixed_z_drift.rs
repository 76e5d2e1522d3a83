//! Digits 1 and 2, then 3: follow one fixed noise vector for each old digit
//! through the second task and save the start and end images.
//!
//! cargo run --release --example fixed_z_drift -- [data/mnist] [out_dir]

use std::path::PathBuf;

use ewc_gan::checkpoint::Checkpoint;
use ewc_gan::eval::{DriftRecorder, GrayImage};
use ewc_gan::trainer::{run_sequence, run_sequence_with, Regime, RunConfig};
use ewc_gan::RngStream;

fn main() -> ewc_gan::Result<()> {
    let mut args = std::env::args().skip(1);
    let data = args.next().unwrap_or_else(|| "data/mnist".into());
    let out = PathBuf::from(args.next().unwrap_or_else(|| "drift_out".into()));
    std::fs::create_dir_all(&out)?;

    let cfg = RunConfig::mnist(vec![vec![1, 2], vec![3]], &data);
    let mut first = cfg.clone();
    first.tasks.truncate(1);
    first.regime = Regime::Ewc;
    let a = run_sequence(&first)?;
    let z = a.gan.sample_noise(1, &mut RngStream::new(5)).to_vec();

    for (regime, lambda) in [(Regime::Naive, 0.0), (Regime::Ewc, 1000.0)] {
        let mut c = cfg.clone();
        c.regime = regime;
        c.lambda = lambda;
        let ck = Checkpoint {
            gan: a.gan.deep_clone(),
            records: a.records.clone(),
            completed_tasks: a.completed_tasks.clone(),
        };
        let mut rec = DriftRecorder::new(1, z.clone(), vec![1, 2], 250);
        run_sequence_with(&c, Some(ck), &mut rec)?;
        for trace in rec.traces() {
            let steps: Vec<String> = trace.distances().iter().map(|(s, d)| format!("{s}:{d:.2}")).collect();
            println!("{regime} digit {}: {}", trace.class_id, steps.join(" "));
            let last = trace.points.last().expect("end of task recorded");
            for (tag, p) in [("start", &trace.points[0]), ("end", last)] {
                GrayImage::from_unit(28, 28, &p.image)?
                    .write_png(out.join(format!("{regime}_{}_{tag}.png", trace.class_id)))?;
            }
        }
    }
    println!("images in {}", out.display());
    Ok(())
}
