//! Train on digits 0-5 together, then render where the Fisher information
//! of each class sits in pixel space.
//!
//! cargo run --release --example fisher_saliency -- [data/mnist] [out_dir]

use std::path::PathBuf;

use ewc_gan::eval::GrayImage;
use ewc_gan::objectives::estimate_class_saliency;
use ewc_gan::trainer::{run_sequence, Regime, RunConfig};
use ewc_gan::RngStream;

fn main() -> ewc_gan::Result<()> {
    let mut args = std::env::args().skip(1);
    let data = args.next().unwrap_or_else(|| "data/mnist".into());
    let out = PathBuf::from(args.next().unwrap_or_else(|| "saliency_out".into()));
    std::fs::create_dir_all(&out)?;

    let classes: Vec<usize> = (0..6).collect();
    let mut cfg = RunConfig::mnist(vec![classes.clone()], &data);
    cfg.regime = Regime::Naive;
    let run = run_sequence(&cfg)?;

    let maps = estimate_class_saliency(&run.gan, &classes, 512, &mut RngStream::new(1))?;
    let mut sheet = GrayImage::new(28 * maps.len(), 28);
    for (i, (c, map)) in maps.iter().enumerate() {
        let tile = GrayImage::from_unit(28, 28, map)?;
        tile.write_pgm(out.join(format!("fisher_{c}.pgm")))?;
        sheet.blit(&tile, 28 * i, 0);
        let center: f64 = (0..784)
            .filter(|j| (4..24).contains(&(j / 28)) && (4..24).contains(&(j % 28)))
            .map(|j| map[j])
            .sum();
        let total: f64 = map.iter().sum();
        println!("digit {c}: {:.0}% of Fisher mass in the central 20x20", 100.0 * center / total);
    }
    sheet.write_png(out.join("fisher_sheet.png"))?;
    Ok(())
}
