//! Finite-difference check of the augmented generator loss on a tiny GAN.
//!
//! cargo run --release --example gradient_check

use ewc_gan::nets::one_hot_batch;
use ewc_gan::objectives::{estimate_fisher_diag, generator_objective};
use ewc_gan::{CondGan, ConsolidationRecord, GanSpec, LambdaWeight, RngStream};

fn main() -> ewc_gan::Result<()> {
    let spec = GanSpec {
        z_dim: 3,
        data_dim: 4,
        hidden: 5,
        classes: 3,
        init_std: 0.5,
    };
    let mut rng = RngStream::new(1);
    let gan = CondGan::init(spec, &mut rng)?;
    let g = gan.generator_params();

    // anchor the current weights, then move them a little
    let fisher = estimate_fisher_diag(&gan, &[0, 1], 64, &mut rng)?;
    let record = ConsolidationRecord {
        task_index: 0,
        class_ids: vec![0, 1],
        theta_star: g.snapshot(),
        fisher_diag: fisher,
        sample_count: 64,
    };
    let moved: Vec<f64> = g.flatten().iter().map(|v| v + rng.normal(0.0, 0.05)).collect();
    g.load_flat(&moved)?;

    let z = gan.sample_noise(6, &mut rng);
    let y = one_hot_batch(&[0, 1, 2, 2, 1, 0], 3)?;
    let lambda = LambdaWeight::new(500.0)?;
    gan.discriminator_params().set_requires_grad(false);
    let loss = |theta: &[f64]| -> ewc_gan::Result<f64> {
        g.load_flat(theta)?;
        let d = gan.disc_forward(&gan.gen_forward(&z, &y)?, &y)?;
        Ok(generator_objective(&d, g, std::slice::from_ref(&record), lambda)?.total.item())
    };

    g.load_flat(&moved)?;
    g.zero_grad();
    let d = gan.disc_forward(&gan.gen_forward(&z, &y)?, &y)?;
    let out = generator_objective(&d, g, std::slice::from_ref(&record), lambda)?;
    out.total.backward()?;
    let analytic = g.flat_grad();
    println!("loss {:.6} (adversarial {:.6}, penalty {:.6})", out.total.item(), out.adversarial.item(), out.penalty_value());

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..moved.len() {
        let mut p = moved.clone();
        p[i] += h;
        let up = loss(&p)?;
        p[i] -= 2.0 * h;
        let down = loss(&p)?;
        worst = worst.max((analytic[i] - (up - down) / (2.0 * h)).abs());
    }
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("{} parameters, max |analytic - numeric| / max |grad| = {:.2e}", moved.len(), worst / scale);
    Ok(())
}
