//! Adversarial losses, diagonal empirical Fisher estimation and the
//! consolidation penalty.
//!
//! The discriminator minimises `-E[log D(x,y)] - E[log(1 - D(G(z,y),y))]`.
//! The generator uses the non-saturating cost `-E[log D(G(z,y),y)]`, plus,
//! once earlier tasks have been consolidated,
//!
//! ```text
//! sum_r sum_i (lambda / 2) * F_{r,i} * (theta_i - theta*_{r,i})^2
//! ```
//!
//! where `F_r` is the per-parameter mean of the squared gradient of
//! `log D(G(z,y),y)` taken at the end of task `r`.

use std::collections::BTreeSet;
use std::thread;

use crate::error::{Error, Result};
use crate::nets::{one_hot, sample_noise, CondGan, GanSpec, ParamVector, ParameterStore};
use crate::rng::RngStream;
use crate::tensor::{SharedSlice, Tensor};

/// Non-negative weight of the consolidation penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaWeight(f64);

impl LambdaWeight {
    pub fn new(value: f64) -> Result<Self> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and >= 0, got {value}"
            )));
        }
        Ok(Self(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Parameter snapshot and Fisher diagonal taken at the end of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsolidationRecord {
    pub task_index: usize,
    pub class_ids: Vec<usize>,
    pub theta_star: ParamVector,
    pub fisher_diag: ParamVector,
    pub sample_count: usize,
}

impl ConsolidationRecord {
    pub fn validate(&self, param_count: usize) -> Result<()> {
        if self.theta_star.len() != param_count || self.fisher_diag.len() != param_count {
            return Err(Error::InvalidDims(format!(
                "record for task {} has {} / {} entries, generator has {param_count}",
                self.task_index,
                self.theta_star.len(),
                self.fisher_diag.len()
            )));
        }
        if let Some(v) = self.fisher_diag.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("negative Fisher entry {v}")));
        }
        Ok(())
    }
}

fn check_probs(d: &Tensor, what: &str) -> Result<()> {
    if d.cols() != 1 || d.rows() == 0 {
        return Err(Error::InvalidDims(format!("{what} must be a nonempty B x 1 column, got {}", d.shape())));
    }
    Ok(())
}

/// `-mean(log d_real) - mean(log(1 - d_fake))` with clamped logs.
pub fn disc_loss(d_real: &Tensor, d_fake: &Tensor) -> Result<Tensor> {
    check_probs(d_real, "d_real")?;
    check_probs(d_fake, "d_fake")?;
    if d_real.rows() != d_fake.rows() {
        return Err(Error::InvalidDims(format!(
            "real batch {} vs fake batch {}",
            d_real.rows(),
            d_fake.rows()
        )));
    }
    let real_term = d_real.log().mean_all()?;
    let one_minus = Tensor::full(d_fake.rows(), 1, 1.0).sub(d_fake)?;
    let fake_term = one_minus.log().mean_all()?;
    Ok(real_term.add(&fake_term)?.neg())
}

/// Non-saturating generator cost `-mean(log d_fake)`.
pub fn gen_loss_nonsat(d_fake: &Tensor) -> Result<Tensor> {
    check_probs(d_fake, "d_fake")?;
    Ok(d_fake.log().mean_all()?.neg())
}

/// Sum of the per-record quadratic penalties. Exactly zero (a constant)
/// when there are no records.
pub fn ewc_penalty(
    theta: &ParameterStore,
    records: &[ConsolidationRecord],
    lambda: LambdaWeight,
) -> Result<Tensor> {
    if records.is_empty() {
        return Ok(Tensor::scalar(0.0));
    }
    let n = theta.numel();
    let mut total: Option<Tensor> = None;
    for record in records {
        record.validate(n)?;
        let anchor = record.theta_star.shared();
        let weight = record.fisher_diag.shared();
        let mut off = 0;
        for t in theta.tensors() {
            let len = t.numel();
            let term = t.weighted_sq_dist(
                SharedSlice::new(anchor.clone(), off, len),
                SharedSlice::new(weight.clone(), off, len),
            )?;
            off += len;
            total = Some(match total {
                None => term,
                Some(acc) => acc.add(&term)?,
            });
        }
    }
    Ok(total.expect("records nonempty").scale(lambda.value() / 2.0))
}

/// The generator objective split into its parts.
#[derive(Debug, Clone)]
pub struct GeneratorLoss {
    pub total: Tensor,
    pub adversarial: Tensor,
    /// `None` when the penalty is structurally absent (no records or
    /// `lambda == 0`), in which case `total` is `adversarial` itself.
    pub penalty: Option<Tensor>,
}

impl GeneratorLoss {
    pub fn penalty_value(&self) -> f64 {
        self.penalty.as_ref().map_or(0.0, Tensor::item)
    }
}

pub fn generator_objective(
    d_fake: &Tensor,
    theta: &ParameterStore,
    records: &[ConsolidationRecord],
    lambda: LambdaWeight,
) -> Result<GeneratorLoss> {
    let adversarial = gen_loss_nonsat(d_fake)?;
    if records.is_empty() || lambda.value() == 0.0 {
        for r in records {
            r.validate(theta.numel())?;
        }
        return Ok(GeneratorLoss {
            total: adversarial.clone(),
            adversarial,
            penalty: None,
        });
    }
    let penalty = ewc_penalty(theta, records, lambda)?;
    Ok(GeneratorLoss {
        total: adversarial.add(&penalty)?,
        adversarial,
        penalty: Some(penalty),
    })
}

/// `gen_loss_nonsat(d_fake) + ewc_penalty(theta, records, lambda)`.
pub fn augmented_gen_loss(
    d_fake: &Tensor,
    theta: &ParameterStore,
    records: &[ConsolidationRecord],
    lambda: LambdaWeight,
) -> Result<Tensor> {
    Ok(generator_objective(d_fake, theta, records, lambda)?.total)
}

fn fisher_classes(class_ids: &[usize], spec: &GanSpec, n_samples: usize) -> Result<Vec<usize>> {
    if class_ids.is_empty() {
        return Err(Error::InvalidArgument("Fisher estimation needs at least one class".into()));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("Fisher estimation needs n_samples >= 1".into()));
    }
    if let Some(&c) = class_ids.iter().find(|&&c| c >= spec.classes) {
        return Err(Error::Capacity {
            class: c,
            capacity: spec.classes,
        });
    }
    Ok(class_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect())
}

/// Sum over samples `range` of the squared per-sample generator gradient of
/// `log D(G(z,y),y)`. Sample `i` draws `(z, y)` from `base.substream(i)`.
fn squared_grad_sum(
    gan: &CondGan,
    classes: &[usize],
    range: std::ops::Range<usize>,
    base: &RngStream,
) -> Result<Vec<f64>> {
    let g_params = gan.generator_params();
    let d_params = gan.discriminator_params();
    let d_flags: Vec<bool> = d_params.tensors().map(Tensor::requires_grad).collect();
    let g_flags: Vec<bool> = g_params.tensors().map(Tensor::requires_grad).collect();
    d_params.set_requires_grad(false);
    g_params.set_requires_grad(true);

    let spec = gan.spec();
    let mut acc = vec![0.0; g_params.numel()];
    let result = (|| -> Result<()> {
        for i in range {
            let mut rng = base.substream(i as u64);
            let z = sample_noise(1, spec.z_dim, &mut rng);
            let y = one_hot(classes[rng.index(classes.len())], spec.classes)?;
            g_params.zero_grad();
            let d = gan.disc_forward(&gan.gen_forward(&z, &y)?, &y)?;
            d.log().sum_all().backward()?;
            let mut off = 0;
            for t in g_params.tensors() {
                let g = t.grad_ref();
                let g = g.as_ref().expect("zeroed above");
                for (a, v) in acc[off..off + g.len()].iter_mut().zip(g) {
                    *a += v * v;
                }
                off += g.len();
            }
        }
        Ok(())
    })();

    g_params.zero_grad();
    for (t, on) in d_params.tensors().zip(d_flags) {
        t.set_requires_grad(on);
    }
    for (t, on) in g_params.tensors().zip(g_flags) {
        t.set_requires_grad(on);
    }
    result.map(|_| acc)
}

/// Diagonal empirical Fisher of the generator: the mean over `n_samples`
/// draws of `(d/dtheta_i log D(G(z,y),y))^2`, with `z` from the noise prior
/// and `y` uniform over `class_ids`. Each draw gets its own backward pass.
pub fn estimate_fisher_diag(
    gan: &CondGan,
    class_ids: &[usize],
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<ParamVector> {
    let classes = fisher_classes(class_ids, gan.spec(), n_samples)?;
    let base = RngStream::new(rng.next_u64());
    let mut sum = squared_grad_sum(gan, &classes, 0..n_samples, &base)?;
    let inv = 1.0 / n_samples as f64;
    sum.iter_mut().for_each(|v| *v *= inv);
    Ok(ParamVector::new(sum))
}

/// Same estimate as [`estimate_fisher_diag`] with the draws split across
/// `workers` threads. Draws are keyed by sample index, so the result
/// differs from the single-threaded one only in summation order.
pub fn estimate_fisher_diag_sharded(
    gan: &CondGan,
    class_ids: &[usize],
    n_samples: usize,
    workers: usize,
    rng: &mut RngStream,
) -> Result<ParamVector> {
    let workers = workers.clamp(1, n_samples.max(1));
    if workers == 1 {
        return estimate_fisher_diag(gan, class_ids, n_samples, rng);
    }
    let classes = fisher_classes(class_ids, gan.spec(), n_samples)?;
    let base = RngStream::new(rng.next_u64());
    let spec = *gan.spec();
    let g_flat = gan.generator_params().flatten();
    let d_flat = gan.discriminator_params().flatten();
    let chunk = n_samples.div_ceil(workers);

    let partials: Vec<Result<Vec<f64>>> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (classes, base, g_flat, d_flat) = (&classes, &base, &g_flat, &d_flat);
                s.spawn(move || {
                    let start = (w * chunk).min(n_samples);
                    let end = ((w + 1) * chunk).min(n_samples);
                    let local = CondGan::from_flat(spec, g_flat, d_flat)?;
                    squared_grad_sum(&local, classes, start..end, base)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("Fisher worker panicked"))
            .collect()
    });

    let mut sum = vec![0.0; g_flat.len()];
    for part in partials {
        for (a, v) in sum.iter_mut().zip(part?) {
            *a += v;
        }
    }
    let inv = 1.0 / n_samples as f64;
    sum.iter_mut().for_each(|v| *v *= inv);
    Ok(ParamVector::new(sum))
}

/// Per-pixel mean Fisher over the output-layer weights and bias feeding
/// each generator output, scaled so the largest pixel is 1.
///
/// `record` should hold a Fisher estimate whose `y` was fixed to
/// `class_id`; see [`estimate_class_saliency`].
pub fn fisher_pixel_saliency(
    record: &ConsolidationRecord,
    spec: &GanSpec,
    class_id: usize,
) -> Result<Vec<f64>> {
    if !record.class_ids.contains(&class_id) {
        return Err(Error::InvalidArgument(format!(
            "class {class_id} is not covered by the record (classes {:?})",
            record.class_ids
        )));
    }
    record.validate(spec.generator_param_count())?;
    let (h, out) = (spec.hidden, spec.data_dim);
    let w_off = (spec.z_dim + spec.classes) * h + h;
    let b_off = w_off + h * out;
    let f = &record.fisher_diag;
    let mut map: Vec<f64> = (0..out)
        .map(|j| {
            let weights: f64 = (0..h).map(|i| f[w_off + i * out + j]).sum();
            (weights + f[b_off + j]) / (h + 1) as f64
        })
        .collect();
    let max = map.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        map.iter_mut().for_each(|v| *v /= max);
    }
    Ok(map)
}

/// Re-estimates the Fisher diagonal with `y` fixed to each class in turn
/// and returns one saliency map per class.
pub fn estimate_class_saliency(
    gan: &CondGan,
    classes: &[usize],
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<Vec<(usize, Vec<f64>)>> {
    let g = gan.generator_params();
    classes
        .iter()
        .map(|&c| {
            let fisher = estimate_fisher_diag(gan, &[c], n_samples, rng)?;
            let record = ConsolidationRecord {
                task_index: 0,
                class_ids: vec![c],
                theta_star: g.snapshot(),
                fisher_diag: fisher,
                sample_count: n_samples,
            };
            Ok((c, fisher_pixel_saliency(&record, gan.spec(), c)?))
        })
        .collect()
}
