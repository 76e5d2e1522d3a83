//! Sequential task training under three regimes.
//!
//! - `naive`: the standard conditional GAN objective on each task's data.
//! - `ewc`: after every task the generator is consolidated; later tasks
//!   add the accumulated quadratic penalties to the generator objective.
//! - `replay`: before each task, samples for every previously seen class
//!   are regenerated from the current generator and mixed in as real data.
//!
//! The discriminator persists across tasks and is never penalised. Both
//! Adam states are reset at every task boundary.
//!
//! All randomness is drawn from substreams keyed by task index, so a run
//! resumed from the checkpoint written after task `k` reproduces the
//! uninterrupted run exactly.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::data::{load_mnist, make_synthetic, Dataset, MnistSplit, SyntheticTaskSpec};
use crate::error::{Error, Result};
use crate::nets::{one_hot_batch, CondGan, GanSpec};
use crate::objectives::{
    disc_loss, estimate_fisher_diag_sharded, generator_objective, ConsolidationRecord, LambdaWeight,
};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::RngStream;
use crate::tensor::Tensor;

const FISHER_STREAM: u64 = 1 << 32;
const REPLAY_STREAM: u64 = 2 << 32;
const SYNTHETIC_STREAM: u64 = 3 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Naive,
    Ewc,
    Replay,
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "naive" => Ok(Regime::Naive),
            "ewc" => Ok(Regime::Ewc),
            "replay" => Ok(Regime::Replay),
            other => Err(Error::InvalidArgument(format!(
                "unknown regime {other:?} (expected naive, ewc or replay)"
            ))),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Naive => "naive",
            Regime::Ewc => "ewc",
            Regime::Replay => "replay",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Mnist,
    Synthetic,
}

impl FromStr for DataSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mnist" => Ok(DataSource::Mnist),
            "synthetic" => Ok(DataSource::Synthetic),
            other => Err(Error::InvalidArgument(format!(
                "unknown data source {other:?} (expected mnist or synthetic)"
            ))),
        }
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataSource::Mnist => "mnist",
            DataSource::Synthetic => "synthetic",
        })
    }
}

/// One training session over a fixed class set.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub class_ids: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
}

impl TaskSpec {
    pub fn new(class_ids: Vec<usize>, epochs: usize, batch_size: usize) -> Self {
        Self {
            class_ids,
            epochs,
            batch_size,
        }
    }

    pub fn validate(&self, capacity: usize) -> Result<()> {
        if self.class_ids.is_empty() {
            return Err(Error::InvalidArgument("task with no classes".into()));
        }
        if let Some(&c) = self.class_ids.iter().find(|&&c| c >= capacity) {
            return Err(Error::Capacity { class: c, capacity });
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// A complete experiment.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub tasks: Vec<TaskSpec>,
    pub regime: Regime,
    pub lambda: f64,
    pub fisher_samples: usize,
    pub fisher_workers: usize,
    pub init_seed: u64,
    pub data_seed: u64,
    pub noise_seed: u64,
    pub adam: AdamConfig,
    pub gan: GanSpec,
    pub source: DataSource,
    pub mnist_dir: PathBuf,
    /// Caps the number of real training examples per class.
    pub train_per_class: Option<usize>,
    pub synthetic: SyntheticTaskSpec,
    /// Discriminator updates per generator update.
    pub d_steps: usize,
    /// Regenerated examples per previously seen class (replay regime).
    /// Defaults to the mean per-class count of the current task's data.
    pub replay_per_class: Option<usize>,
    pub log_every: usize,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Desk-scale synthetic defaults: a ring of `classes` Gaussians, one
    /// hidden layer of 128 units, 960 generator steps per task with five
    /// discriminator steps each.
    pub fn synthetic(tasks: Vec<Vec<usize>>, classes: usize) -> Self {
        let synthetic = SyntheticTaskSpec::ring(classes, 2.0, 0.2, 512);
        Self {
            tasks: tasks.into_iter().map(|c| TaskSpec::new(c, 120, 64)).collect(),
            regime: Regime::Naive,
            lambda: 1000.0,
            fisher_samples: 2048,
            fisher_workers: 1,
            init_seed: 0,
            data_seed: 1,
            noise_seed: 2,
            adam: AdamConfig {
                lr: 1e-3,
                beta1: 0.0,
                ..AdamConfig::default()
            },
            gan: GanSpec {
                z_dim: 64,
                data_dim: 2,
                hidden: 128,
                classes,
                init_std: 0.1,
            },
            source: DataSource::Synthetic,
            mnist_dir: PathBuf::from("data/mnist"),
            train_per_class: None,
            synthetic,
            d_steps: 5,
            replay_per_class: None,
            log_every: 100,
            out_dir: None,
        }
    }

    /// MNIST defaults: two-layer MLPs with 150 epochs per task
    /// over the bundled subset, about as many steps as 20 epochs of the
    /// full training set.
    pub fn mnist(tasks: Vec<Vec<usize>>, mnist_dir: impl Into<PathBuf>) -> Self {
        Self {
            tasks: tasks.into_iter().map(|c| TaskSpec::new(c, 150, 64)).collect(),
            gan: GanSpec {
                init_std: 0.05,
                ..GanSpec::mnist()
            },
            adam: AdamConfig {
                lr: 1e-3,
                ..AdamConfig::default()
            },
            d_steps: 1,
            source: DataSource::Mnist,
            mnist_dir: mnist_dir.into(),
            log_every: 50,
            synthetic: SyntheticTaskSpec::ring(10, 2.0, 0.2, 512),
            ..Self::synthetic(Vec::new(), 10)
        }
    }

    /// Same seed for init, data and noise streams (each gets its own salt).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.init_seed = seed.wrapping_mul(3);
        self.data_seed = seed.wrapping_mul(3).wrapping_add(1);
        self.noise_seed = seed.wrapping_mul(3).wrapping_add(2);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.gan.validate()?;
        for t in &self.tasks {
            t.validate(self.gan.classes)?;
        }
        LambdaWeight::new(self.lambda)?;
        if self.regime == Regime::Ewc && self.fisher_samples == 0 {
            return Err(Error::InvalidArgument("fisher_samples must be >= 1".into()));
        }
        if self.d_steps == 0 {
            return Err(Error::InvalidArgument("d_steps must be >= 1".into()));
        }
        let expected_dim = match self.source {
            DataSource::Mnist => 784,
            DataSource::Synthetic => 2,
        };
        if self.gan.data_dim != expected_dim {
            return Err(Error::InvalidDims(format!(
                "{} data has width {expected_dim}, model expects {}",
                self.source, self.gan.data_dim
            )));
        }
        if self.source == DataSource::Synthetic {
            self.synthetic.validate()?;
            if self.synthetic.classes.len() > self.gan.classes {
                return Err(Error::Capacity {
                    class: self.synthetic.classes.len() - 1,
                    capacity: self.gan.classes,
                });
            }
        }
        if self.regime != Regime::Ewc && self.lambda != 0.0 {
            log::debug!("lambda = {} has no effect under the {} regime", self.lambda, self.regime);
        }
        Ok(())
    }

    pub fn init_gan(&self) -> Result<CondGan> {
        CondGan::init(self.gan, &mut RngStream::new(self.init_seed))
    }

    /// All real training data the tasks draw from.
    pub fn load_pool(&self) -> Result<Dataset> {
        let pool = match self.source {
            DataSource::Mnist => load_mnist(&self.mnist_dir, MnistSplit::Train)?,
            DataSource::Synthetic => make_synthetic(
                &self.synthetic,
                &mut RngStream::new(self.data_seed).substream(SYNTHETIC_STREAM),
            )?,
        };
        Ok(match self.train_per_class {
            Some(n) => pool.take_per_class(n),
            None => pool,
        })
    }

    pub fn lambda_weight(&self) -> LambdaWeight {
        LambdaWeight::new(self.lambda).expect("validated")
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct StepRecord {
    pub task: usize,
    pub epoch: usize,
    pub step: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub penalty: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TaskSummary {
    pub task: usize,
    pub classes: Vec<usize>,
    pub steps: usize,
    pub examples_trained: usize,
    pub examples_regenerated: usize,
    pub dataset_size: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct RunLog {
    pub steps: Vec<StepRecord>,
    pub tasks: Vec<TaskSummary>,
}

impl RunLog {
    pub fn extend(&mut self, other: RunLog) {
        self.steps.extend(other.steps);
        self.tasks.extend(other.tasks);
    }

    /// One JSON object per line: task, epoch, step, d_loss, g_loss,
    /// penalty, wall_ms.
    pub fn write_steps_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        write_jsonl(path, &self.steps)
    }

    pub fn write_tasks_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        write_jsonl(path, &self.tasks)
    }

    pub fn cumulative_steps(&self) -> Vec<usize> {
        cumulative(self.tasks.iter().map(|t| t.steps))
    }

    /// Trained plus regenerated examples, accumulated over tasks.
    pub fn cumulative_examples(&self) -> Vec<usize> {
        cumulative(self.tasks.iter().map(|t| t.examples_trained + t.examples_regenerated))
    }
}

fn cumulative(it: impl Iterator<Item = usize>) -> Vec<usize> {
    it.scan(0, |acc, v| {
        *acc += v;
        Some(*acc)
    })
    .collect()
}

fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut f, r).map_err(std::io::Error::from)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Hook called as training progresses. `step` counts completed
/// generator updates within the task; `on_task_start` sees step 0.
pub trait StepObserver {
    fn on_task_start(&mut self, _task: usize, _gan: &CondGan) {}
    fn on_step(&mut self, _task: usize, _step: usize, _gan: &CondGan) {}
    fn on_task_end(&mut self, _task: usize, _steps: usize, _gan: &CondGan) {}
}

impl StepObserver for () {}

struct Optimizers {
    g: AdamState,
    d: AdamState,
}

fn d_step(gan: &CondGan, x: &Tensor, y: &Tensor, opt: &mut AdamState, rng: &mut RngStream) -> Result<f64> {
    let (g, d) = (gan.generator_params(), gan.discriminator_params());
    g.set_requires_grad(false);
    d.set_requires_grad(true);
    d.zero_grad();
    let z = gan.sample_noise(x.rows(), rng);
    let fake = gan.gen_forward(&z, y)?;
    let loss = disc_loss(&gan.disc_forward(x, y)?, &gan.disc_forward(&fake, y)?)?;
    loss.backward()?;
    opt.step(d)?;
    Ok(loss.item())
}

fn g_step(
    gan: &CondGan,
    y: &Tensor,
    records: &[ConsolidationRecord],
    lambda: LambdaWeight,
    opt: &mut AdamState,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    let (g, d) = (gan.generator_params(), gan.discriminator_params());
    g.set_requires_grad(true);
    d.set_requires_grad(false);
    g.zero_grad();
    let z = gan.sample_noise(y.rows(), rng);
    let d_fake = gan.disc_forward(&gan.gen_forward(&z, y)?, y)?;
    let obj = generator_objective(&d_fake, g, records, lambda)?;
    obj.total.backward()?;
    opt.step(g)?;
    Ok((obj.adversarial.item(), obj.penalty_value()))
}

/// Trains one task. Under `Regime::Ewc` the generator objective includes
/// the penalties of all `records`; otherwise records are ignored.
#[allow(clippy::too_many_arguments)]
pub fn train_task(
    gan: &CondGan,
    task_index: usize,
    task: &TaskSpec,
    data: &Dataset,
    records: &[ConsolidationRecord],
    config: &RunConfig,
    observer: &mut dyn StepObserver,
) -> Result<RunLog> {
    task.validate(gan.spec().classes)?;
    let start = Instant::now();
    let mut data_rng = RngStream::new(config.data_seed).substream(task_index as u64);
    let mut noise_rng = RngStream::new(config.noise_seed).substream(task_index as u64);
    let mut opt = Optimizers {
        g: AdamState::new(config.adam, gan.generator_params()),
        d: AdamState::new(config.adam, gan.discriminator_params()),
    };
    let active: &[ConsolidationRecord] = if config.regime == Regime::Ewc { records } else { &[] };
    let lambda = config.lambda_weight();

    observer.on_task_start(task_index, gan);
    let mut log = RunLog::default();
    let mut step = 0;
    let mut examples = 0;
    let total_steps = task.epochs * data.len().div_ceil(task.batch_size);
    for epoch in 0..task.epochs {
        for batch in data.minibatches(task.batch_size, gan.spec().classes, &mut data_rng)? {
            let mut d_loss = 0.0;
            for _ in 0..config.d_steps {
                d_loss = d_step(gan, &batch.x, &batch.y, &mut opt.d, &mut noise_rng)?;
            }
            let (g_loss, penalty) = g_step(gan, &batch.y, active, lambda, &mut opt.g, &mut noise_rng)?;
            step += 1;
            examples += batch.labels.len();
            if !(d_loss.is_finite() && g_loss.is_finite() && penalty.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "non-finite loss at task {task_index} step {step}: d={d_loss} g={g_loss} penalty={penalty}"
                )));
            }
            if step == 1 || step % config.log_every.max(1) == 0 || step == total_steps {
                log.steps.push(StepRecord {
                    task: task_index,
                    epoch,
                    step,
                    d_loss,
                    g_loss,
                    penalty,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                });
            }
            observer.on_step(task_index, step, gan);
        }
    }
    gan.generator_params().set_requires_grad(true);
    gan.discriminator_params().set_requires_grad(true);
    observer.on_task_end(task_index, step, gan);
    log.tasks.push(TaskSummary {
        task: task_index,
        classes: task.class_ids.clone(),
        steps: step,
        examples_trained: examples,
        examples_regenerated: 0,
        dataset_size: data.len(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    });
    Ok(log)
}

/// Snapshot of the generator plus its Fisher diagonal over `class_ids`.
pub fn consolidate(
    gan: &CondGan,
    task_index: usize,
    class_ids: &[usize],
    config: &RunConfig,
) -> Result<ConsolidationRecord> {
    let mut rng = RngStream::new(config.noise_seed).substream(FISHER_STREAM + task_index as u64);
    let fisher = estimate_fisher_diag_sharded(
        gan,
        class_ids,
        config.fisher_samples,
        config.fisher_workers,
        &mut rng,
    )?;
    Ok(ConsolidationRecord {
        task_index,
        class_ids: class_ids.to_vec(),
        theta_star: gan.generator_params().snapshot(),
        fisher_diag: fisher,
        sample_count: config.fisher_samples,
    })
}

/// `per_class` generator samples for each class, labelled as that class.
pub fn regenerate(
    gan: &CondGan,
    classes: &[usize],
    per_class: usize,
    rng: &mut RngStream,
) -> Result<Dataset> {
    let spec = gan.spec();
    let mut features = Vec::with_capacity(classes.len() * per_class * spec.data_dim);
    let mut labels = Vec::with_capacity(classes.len() * per_class);
    let flags: Vec<bool> = gan.generator_params().tensors().map(Tensor::requires_grad).collect();
    gan.generator_params().set_requires_grad(false);
    for &c in classes {
        let mut left = per_class;
        while left > 0 {
            let n = left.min(256);
            let y = one_hot_batch(&vec![c; n], spec.classes)?;
            let x = gan.gen_forward(&gan.sample_noise(n, rng), &y)?;
            features.extend_from_slice(&x.data());
            labels.extend(std::iter::repeat_n(c, n));
            left -= n;
        }
    }
    for (t, on) in gan.generator_params().tensors().zip(flags) {
        t.set_requires_grad(on);
    }
    Dataset::new(spec.data_dim, features, labels)
}

/// Result of a (possibly resumed) task sequence.
#[derive(Debug)]
pub struct RunOutcome {
    pub gan: CondGan,
    pub records: Vec<ConsolidationRecord>,
    pub log: RunLog,
    pub completed_tasks: Vec<Vec<usize>>,
    /// Per task run here: example reads of its real dataset at the end of
    /// that task and at the end of the run.
    pub data_reads: Vec<(usize, usize)>,
    pub checkpoints: Vec<PathBuf>,
}

pub fn run_sequence(config: &RunConfig) -> Result<RunOutcome> {
    run_sequence_with(config, None, &mut ())
}

/// Alias of [`run_sequence`] for `Regime::Replay` configs.
pub fn replay_baseline(config: &RunConfig) -> Result<RunOutcome> {
    if config.regime != Regime::Replay {
        return Err(Error::InvalidArgument(format!(
            "replay_baseline called with regime {}",
            config.regime
        )));
    }
    run_sequence(config)
}

/// Runs the configured tasks in order, optionally continuing from a
/// checkpoint written by an earlier run of the same config.
pub fn run_sequence_with(
    config: &RunConfig,
    resume: Option<Checkpoint>,
    observer: &mut dyn StepObserver,
) -> Result<RunOutcome> {
    config.validate()?;
    let (gan, mut records, mut completed) = match resume {
        Some(ck) => {
            if ck.gan.spec().classes != config.gan.classes
                || ck.gan.spec().data_dim != config.gan.data_dim
                || ck.gan.spec().z_dim != config.gan.z_dim
                || ck.gan.spec().hidden != config.gan.hidden
            {
                return Err(Error::InvalidDims(format!(
                    "checkpoint model {:?} does not match config {:?}",
                    ck.gan.spec(),
                    config.gan
                )));
            }
            let done = ck.completed_tasks.len();
            if done > config.tasks.len()
                || ck
                    .completed_tasks
                    .iter()
                    .zip(&config.tasks)
                    .any(|(a, b)| *a != b.class_ids)
            {
                return Err(Error::InvalidArgument(
                    "checkpoint task history does not match the configured tasks".into(),
                ));
            }
            (ck.gan, ck.records, ck.completed_tasks)
        }
        None => (config.init_gan()?, Vec::new(), Vec::new()),
    };
    let pool = config.load_pool()?;
    let first = completed.len();
    let task_data: Vec<Dataset> = config.tasks[first..]
        .iter()
        .map(|t| pool.filter_classes(&t.class_ids))
        .collect();
    for (t, ds) in config.tasks[first..].iter().zip(&task_data) {
        if ds.is_empty() {
            return Err(Error::InvalidArgument(format!("no training data for classes {:?}", t.class_ids)));
        }
    }
    if let Some(dir) = &config.out_dir {
        fs::create_dir_all(dir)?;
    }

    let mut log = RunLog::default();
    let mut reads_at_end = Vec::new();
    let mut checkpoints = Vec::new();
    for (offset, task) in config.tasks[first..].iter().enumerate() {
        let t = first + offset;
        let real = &task_data[offset];
        let (train_set, regenerated) = if config.regime == Regime::Replay && t > 0 {
            let seen: Vec<usize> = completed
                .iter()
                .flatten()
                .copied()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let per_class = config
                .replay_per_class
                .unwrap_or_else(|| real.len().div_ceil(real.classes().len().max(1)));
            let mut rng = RngStream::new(config.noise_seed).substream(REPLAY_STREAM + t as u64);
            let regen = regenerate(&gan, &seen, per_class, &mut rng)?;
            let n = regen.len();
            (real.concat(&regen)?, n)
        } else {
            (real.clone(), 0)
        };
        let mut task_log = train_task(&gan, t, task, &train_set, &records, config, observer)?;
        if let Some(s) = task_log.tasks.last_mut() {
            s.examples_regenerated = regenerated;
        }
        reads_at_end.push(real.read_count());
        completed.push(task.class_ids.clone());
        if config.regime == Regime::Ewc {
            records.push(consolidate(&gan, t, &task.class_ids, config)?);
        }
        if let Some(dir) = &config.out_dir {
            let path = dir.join(format!("task_{t}.ckpt"));
            save_checkpoint(&path, &gan, &records, &completed)?;
            checkpoints.push(path);
        }
        log.extend(task_log);
        log::info!(
            "task {t} {:?} done: {} steps, {:.1}s",
            task.class_ids,
            log.tasks.last().map_or(0, |s| s.steps),
            log.tasks.last().map_or(0.0, |s| s.wall_ms / 1e3)
        );
    }
    if let Some(dir) = &config.out_dir {
        log.write_steps_jsonl(dir.join("run_log.jsonl"))?;
        log.write_tasks_jsonl(dir.join("tasks.jsonl"))?;
    }
    let data_reads = reads_at_end
        .into_iter()
        .zip(&task_data)
        .map(|(at_end, ds)| (at_end, ds.read_count()))
        .collect();
    Ok(RunOutcome {
        gan,
        records,
        log,
        completed_tasks: completed,
        data_reads,
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(regime: Regime) -> RunConfig {
        let mut c = RunConfig::synthetic(vec![vec![0], vec![1]], 3);
        c.regime = regime;
        c.gan.hidden = 16;
        c.gan.z_dim = 2;
        c.synthetic.samples_per_class = 64;
        c.fisher_samples = 32;
        for t in &mut c.tasks {
            t.epochs = 2;
            t.batch_size = 16;
        }
        c
    }

    #[test]
    fn regime_parsing() {
        assert_eq!("EWC".parse::<Regime>().unwrap(), Regime::Ewc);
        assert!("adam".parse::<Regime>().is_err());
        assert_eq!(Regime::Replay.to_string(), "replay");
    }

    #[test]
    fn ewc_without_records_matches_naive() {
        let naive = quick(Regime::Naive);
        let ewc = quick(Regime::Ewc);
        let pool = naive.load_pool().unwrap();
        let data = pool.filter_classes(&[0]);
        let g1 = naive.init_gan().unwrap();
        let g2 = ewc.init_gan().unwrap();
        let l1 = train_task(&g1, 0, &naive.tasks[0], &data, &[], &naive, &mut ()).unwrap();
        let l2 = train_task(&g2, 0, &ewc.tasks[0], &data, &[], &ewc, &mut ()).unwrap();
        assert_eq!(g1.generator_params().flatten(), g2.generator_params().flatten());
        assert_eq!(
            l1.steps.iter().map(|s| s.g_loss.to_bits()).collect::<Vec<_>>(),
            l2.steps.iter().map(|s| s.g_loss.to_bits()).collect::<Vec<_>>()
        );
        assert!(l1.steps.iter().all(|s| s.d_loss.is_finite() && s.g_loss.is_finite()));
    }

    #[test]
    fn unseen_class_rows_stay_at_init() {
        for regime in [Regime::Naive, Regime::Ewc, Regime::Replay] {
            let cfg = quick(regime);
            let init = cfg.init_gan().unwrap();
            let out = run_sequence(&cfg).unwrap();
            assert_eq!(
                out.gan.conditional_input_weights(2).unwrap(),
                init.conditional_input_weights(2).unwrap(),
                "{regime}"
            );
            assert_ne!(
                out.gan.conditional_input_weights(0).unwrap(),
                init.conditional_input_weights(0).unwrap()
            );
        }
    }

    #[test]
    fn consolidation_records_are_deterministic() {
        let cfg = quick(Regime::Ewc);
        let gan = cfg.init_gan().unwrap();
        let a = consolidate(&gan, 0, &[0], &cfg).unwrap();
        let b = consolidate(&gan, 0, &[0], &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.theta_star.len(), cfg.gan.generator_param_count());
        assert_eq!(a.fisher_diag.len(), cfg.gan.generator_param_count());
    }

    #[test]
    fn replay_training_set_grows() {
        let mut cfg = quick(Regime::Replay);
        cfg.tasks.push(TaskSpec::new(vec![2], 2, 16));
        let out = run_sequence(&cfg).unwrap();
        let sizes: Vec<usize> = out.log.tasks.iter().map(|t| t.dataset_size).collect();
        assert_eq!(sizes, vec![64, 128, 192]);
        let regen: Vec<usize> = out.log.tasks.iter().map(|t| t.examples_regenerated).collect();
        assert_eq!(regen, vec![0, 64, 128]);
    }

    #[test]
    fn replay_baseline_requires_replay_regime() {
        assert!(replay_baseline(&quick(Regime::Naive)).is_err());
    }

    #[test]
    fn invalid_tasks_rejected() {
        let mut cfg = quick(Regime::Naive);
        cfg.tasks[0].class_ids = vec![7];
        assert!(matches!(run_sequence(&cfg), Err(Error::Capacity { class: 7, .. })));
        let mut cfg = quick(Regime::Naive);
        cfg.tasks[0].class_ids.clear();
        assert!(run_sequence(&cfg).is_err());
    }
}
