//! Images, drift traces, retention metrics and the auxiliary classifier.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SyntheticTaskSpec};
use crate::error::{Error, Result};
use crate::nets::{one_hot_batch, CondGan, Mlp, MlpSpec};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::RngStream;
use crate::tensor::Tensor;
use crate::trainer::StepObserver;

/// `(0, 1) -> byte` via `round(v * 255)`, clamping out-of-range input.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn from_unit(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidDims(format!(
                "{} values for a {width}x{height} image",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels: values.iter().map(|&v| quantize(v)).collect(),
        })
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Copies `tile` with its top-left corner at `(x, y)`.
    pub fn blit(&mut self, tile: &GrayImage, x: usize, y: usize) {
        for row in 0..tile.height {
            let dst = (y + row) * self.width + x;
            let src = row * tile.width;
            self.pixels[dst..dst + tile.width].copy_from_slice(&tile.pixels[src..src + tile.width]);
        }
    }

    /// Binary PGM (`P5`).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_pgm())?;
        Ok(())
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = BufWriter::new(fs::File::create(path)?);
        let mut enc = png::Encoder::new(file, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(std::io::Error::other)?;
        writer
            .write_image_data(&self.pixels)
            .map_err(std::io::Error::other)?;
        Ok(())
    }
}

/// Side length of a square image with `data_dim` pixels.
pub fn image_side(data_dim: usize) -> Result<usize> {
    let side = (data_dim as f64).sqrt().round() as usize;
    if side * side != data_dim {
        return Err(Error::InvalidDims(format!("{data_dim} outputs do not form a square image")));
    }
    Ok(side)
}

/// One column per class, one row per noise vector. Every cell of a row
/// shares the same `z`.
pub fn sample_grid(gan: &CondGan, classes: &[usize], n_rows: usize, rng: &mut RngStream) -> Result<GrayImage> {
    let spec = gan.spec();
    let side = image_side(spec.data_dim)?;
    if classes.is_empty() || n_rows == 0 {
        return Err(Error::InvalidArgument("grid needs at least one class and one row".into()));
    }
    let y = one_hot_batch(classes, spec.classes)?;
    let mut grid = GrayImage::new(classes.len() * side, n_rows * side);
    for r in 0..n_rows {
        let z = gan.sample_noise(1, rng).to_vec();
        let zs: Vec<f64> = z.iter().copied().cycle().take(z.len() * classes.len()).collect();
        let x = gan.gen_forward(&Tensor::from_vec(classes.len(), spec.z_dim, zs)?, &y)?;
        let data = x.data();
        for col in 0..classes.len() {
            let cell = &data[col * spec.data_dim..(col + 1) * spec.data_dim];
            grid.blit(&GrayImage::from_unit(side, side, cell)?, col * side, r * side);
        }
    }
    Ok(grid)
}

/// `G(z, class)` for a single noise vector, without recording a graph.
pub fn generate_one(gan: &CondGan, z: &[f64], class: usize) -> Result<Vec<f64>> {
    let spec = gan.spec();
    let z = Tensor::from_vec(1, spec.z_dim, z.to_vec())?;
    let y = one_hot_batch(&[class], spec.classes)?;
    let x = gan.gen_forward(&z, &y)?;
    Ok(x.to_vec())
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftPoint {
    pub step: usize,
    pub image: Vec<f64>,
    /// Raw L2 distance to the step-0 image.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftTrace {
    pub class_id: usize,
    pub z: Vec<f64>,
    pub points: Vec<DriftPoint>,
}

impl DriftTrace {
    pub fn final_distance(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.distance)
    }

    pub fn distances(&self) -> Vec<(usize, f64)> {
        self.points.iter().map(|p| (p.step, p.distance)).collect()
    }
}

/// Records `G(z, y)` for fixed `z` and each tracked class every `cadence`
/// steps of one task, plus the task's first and last step.
#[derive(Debug, Clone)]
pub struct DriftRecorder {
    task: usize,
    z: Vec<f64>,
    classes: Vec<usize>,
    cadence: usize,
    traces: Vec<DriftTrace>,
}

impl DriftRecorder {
    pub fn new(task: usize, z: Vec<f64>, classes: Vec<usize>, cadence: usize) -> Self {
        Self {
            task,
            z,
            classes,
            cadence: cadence.max(1),
            traces: Vec::new(),
        }
    }

    pub fn traces(&self) -> &[DriftTrace] {
        &self.traces
    }

    pub fn into_traces(self) -> Vec<DriftTrace> {
        self.traces
    }

    pub fn trace(&self, class_id: usize) -> Option<&DriftTrace> {
        self.traces.iter().find(|t| t.class_id == class_id)
    }

    fn record(&mut self, step: usize, gan: &CondGan) {
        for trace in &mut self.traces {
            if trace.points.last().is_some_and(|p| p.step == step) {
                continue;
            }
            let image = generate_one(gan, &self.z, trace.class_id).expect("validated at task start");
            let distance = trace.points.first().map_or(0.0, |p0| l2(&image, &p0.image));
            trace.points.push(DriftPoint { step, image, distance });
        }
    }
}

impl StepObserver for DriftRecorder {
    fn on_task_start(&mut self, task: usize, gan: &CondGan) {
        if task != self.task {
            return;
        }
        assert_eq!(self.z.len(), gan.spec().z_dim, "drift z has the wrong dimension");
        self.traces = self
            .classes
            .iter()
            .map(|&c| {
                assert!(c < gan.spec().classes, "drift class {c} exceeds capacity");
                DriftTrace {
                    class_id: c,
                    z: self.z.clone(),
                    points: Vec::new(),
                }
            })
            .collect();
        self.record(0, gan);
    }

    fn on_step(&mut self, task: usize, step: usize, gan: &CondGan) {
        if task == self.task && step % self.cadence == 0 {
            self.record(step, gan);
        }
    }

    fn on_task_end(&mut self, task: usize, steps: usize, gan: &CondGan) {
        if task == self.task {
            self.record(steps, gan);
        }
    }
}

/// Anything that can draw class-conditional points in the unit square.
pub trait ConditionalSampler {
    fn sample(&self, class: usize, n: usize, rng: &mut RngStream) -> Result<Vec<[f64; 2]>>;
}

impl ConditionalSampler for CondGan {
    fn sample(&self, class: usize, n: usize, rng: &mut RngStream) -> Result<Vec<[f64; 2]>> {
        if self.spec().data_dim != 2 {
            return Err(Error::InvalidDims(format!(
                "2-D sampler needs data_dim 2, model has {}",
                self.spec().data_dim
            )));
        }
        let y = one_hot_batch(&vec![class; n], self.spec().classes)?;
        let x = self.gen_forward(&self.sample_noise(n, rng), &y)?;
        let data = x.data();
        Ok(data.chunks_exact(2).map(|p| [p[0], p[1]]).collect())
    }
}

/// Exact samples from the mixture, squashed but not clipped.
pub struct MixtureOracle<'a>(pub &'a SyntheticTaskSpec);

impl ConditionalSampler for MixtureOracle<'_> {
    fn sample(&self, class: usize, n: usize, rng: &mut RngStream) -> Result<Vec<[f64; 2]>> {
        let c = self.0.classes.get(class).ok_or(Error::Capacity {
            class,
            capacity: self.0.classes.len(),
        })?;
        Ok((0..n)
            .map(|_| {
                let p = [rng.normal(c.mean[0], c.std), rng.normal(c.mean[1], c.std)];
                self.0.squash.forward(p)
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassFidelity {
    pub class: usize,
    /// `|sample mean - mu_c|` in the original plane.
    pub mean_gap: f64,
    /// `|sample std - sigma_c|`, averaged over both axes.
    pub std_gap: f64,
}

/// Moment gaps for every class of `spec`, `n_gen` samples each, measured
/// after undoing the squash.
pub fn retention_metrics_synthetic(
    sampler: &dyn ConditionalSampler,
    spec: &SyntheticTaskSpec,
    n_gen: usize,
    rng: &mut RngStream,
) -> Result<Vec<ClassFidelity>> {
    if n_gen < 2 {
        return Err(Error::InvalidArgument("n_gen must be >= 2".into()));
    }
    spec.classes
        .iter()
        .enumerate()
        .map(|(class, target)| {
            let pts: Vec<[f64; 2]> = sampler
                .sample(class, n_gen, rng)?
                .into_iter()
                .map(|u| spec.squash.inverse(u))
                .collect();
            let n = pts.len() as f64;
            let mut mean = [0.0; 2];
            for p in &pts {
                mean[0] += p[0] / n;
                mean[1] += p[1] / n;
            }
            let mut var = [0.0; 2];
            for p in &pts {
                for k in 0..2 {
                    var[k] += (p[k] - mean[k]).powi(2) / (n - 1.0);
                }
            }
            let mean_gap = ((mean[0] - target.mean[0]).powi(2) + (mean[1] - target.mean[1]).powi(2)).sqrt();
            let std_gap = ((var[0].sqrt() - target.std).abs() + (var[1].sqrt() - target.std).abs()) / 2.0;
            Ok(ClassFidelity { class, mean_gap, std_gap })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Random translation of up to this many pixels per training image.
    pub max_shift: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            epochs: 30,
            batch_size: 64,
            adam: AdamConfig {
                lr: 1e-3,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            max_shift: 2,
            seed: 17,
        }
    }
}

const CLASSIFIER_MAGIC: &[u8; 8] = b"EWCAUX1\0";

/// Two-layer MLP digit classifier with one sigmoid output per class,
/// trained one-vs-rest.
pub struct AuxClassifier {
    net: Mlp,
    side: usize,
}

fn shift_image(src: &[f64], side: usize, dx: isize, dy: isize, dst: &mut [f64]) {
    dst.fill(0.0);
    let s = side as isize;
    for y in 0..s {
        let sy = y - dy;
        if !(0..s).contains(&sy) {
            continue;
        }
        for x in 0..s {
            let sx = x - dx;
            if (0..s).contains(&sx) {
                dst[(y * s + x) as usize] = src[(sy * s + sx) as usize];
            }
        }
    }
}

impl AuxClassifier {
    pub fn train(data: &Dataset, classes: usize, config: &ClassifierConfig) -> Result<Self> {
        let dim = data.data_dim();
        let side = image_side(dim)?;
        let mut rng = RngStream::new(config.seed);
        let spec = MlpSpec {
            input_dim: dim,
            hidden_dims: vec![config.hidden],
            output_dim: classes,
        };
        let net = Mlp::new(spec, "cls", 0.05, &mut rng)?;
        let mut opt = AdamState::new(config.adam, net.params());
        let mut shifted = vec![0.0; dim];
        for _ in 0..config.epochs {
            for batch in data.minibatches(config.batch_size, classes, &mut rng)? {
                let mut x = batch.x.to_vec();
                if config.max_shift > 0 {
                    let m = config.max_shift as isize;
                    for row in x.chunks_exact_mut(dim) {
                        let dx = rng.index(2 * config.max_shift + 1) as isize - m;
                        let dy = rng.index(2 * config.max_shift + 1) as isize - m;
                        shift_image(row, side, dx, dy, &mut shifted);
                        row.copy_from_slice(&shifted);
                    }
                }
                let x = Tensor::from_vec(batch.labels.len(), dim, x)?;
                net.params().zero_grad();
                let logits = net.logits(&x)?;
                let t = &batch.y;
                let not_t = Tensor::full(t.rows(), t.cols(), 1.0).sub(t)?;
                let pos = t.mul(&logits.sigmoid().log())?;
                let neg = not_t.mul(&logits.neg().sigmoid().log())?;
                let loss = pos.add(&neg)?.mean_all()?.neg();
                loss.backward()?;
                opt.step(net.params())?;
            }
        }
        Ok(Self { net, side })
    }

    pub fn classes(&self) -> usize {
        self.net.spec().output_dim
    }

    pub fn predict(&self, images: &[f64]) -> Result<Vec<usize>> {
        let dim = self.side * self.side;
        if images.len() % dim != 0 {
            return Err(Error::InvalidDims(format!("{} values is not a multiple of {dim}", images.len())));
        }
        let mut out = Vec::with_capacity(images.len() / dim);
        for chunk in images.chunks(dim * 512) {
            let x = Tensor::from_vec(chunk.len() / dim, dim, chunk.to_vec())?;
            let logits = self.net.logits(&x)?;
            let k = logits.cols();
            out.extend(logits.data().chunks_exact(k).map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            }));
        }
        Ok(out)
    }

    /// Overall accuracy and per-class accuracy on labelled data.
    pub fn evaluate(&self, data: &Dataset) -> Result<(f64, Vec<(usize, f64)>)> {
        let mut feats = Vec::with_capacity(data.len() * data.data_dim());
        for i in 0..data.len() {
            feats.extend_from_slice(data.example(i).0);
        }
        let pred = self.predict(&feats)?;
        let labels = data.labels();
        let correct = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
        let per_class = data
            .class_counts()
            .into_iter()
            .map(|(c, n)| {
                let hit = pred.iter().zip(labels).filter(|(p, l)| **l == c && **p == c).count();
                (c, hit as f64 / n as f64)
            })
            .collect();
        Ok((correct as f64 / data.len().max(1) as f64, per_class))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let flat = self.net.params().flatten();
        let mut f = BufWriter::new(fs::File::create(path)?);
        f.write_all(CLASSIFIER_MAGIC)?;
        for v in [self.side * self.side, self.net.spec().hidden_dims[0], self.classes()] {
            f.write_all(&(v as u64).to_le_bytes())?;
        }
        for v in flat {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        let bad = || Error::InvalidArgument("not a classifier file".into());
        if bytes.len() < 32 || &bytes[..8] != CLASSIFIER_MAGIC {
            return Err(bad());
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize;
        let (dim, hidden, classes) = (word(0), word(1), word(2));
        let spec = MlpSpec {
            input_dim: dim,
            hidden_dims: vec![hidden],
            output_dim: classes,
        };
        let net = Mlp::new(spec, "cls", 0.0, &mut RngStream::new(0))?;
        let body = &bytes[32..];
        if body.len() != net.params().numel() * 8 {
            return Err(bad());
        }
        let flat: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        net.params().load_flat(&flat)?;
        Ok(Self {
            net,
            side: image_side(dim)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: usize,
    pub accuracy: f64,
    /// Fraction of samples assigned to each predicted class.
    pub confusion: Vec<f64>,
}

/// For each class, the fraction of `n_gen` samples `G(z, class)` that the
/// classifier labels as `class`.
pub fn retention_metrics_mnist(
    gan: &CondGan,
    classifier: &AuxClassifier,
    classes: &[usize],
    n_gen: usize,
    rng: &mut RngStream,
) -> Result<Vec<ClassAccuracy>> {
    if n_gen == 0 {
        return Err(Error::InvalidArgument("n_gen must be >= 1".into()));
    }
    let k = classifier.classes();
    classes
        .iter()
        .map(|&c| {
            let y = one_hot_batch(&vec![c; n_gen], gan.spec().classes)?;
            let x = gan.gen_forward(&gan.sample_noise(n_gen, rng), &y)?;
            let pred = classifier.predict(&x.data())?;
            let mut confusion = vec![0.0; k];
            for p in pred {
                confusion[p] += 1.0 / n_gen as f64;
            }
            Ok(ClassAccuracy {
                class: c,
                accuracy: confusion.get(c).copied().unwrap_or(0.0),
                confusion,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionEntry {
    pub class: usize,
    pub metric: String,
    pub value: f64,
}

/// Per-class fidelity of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub regime: String,
    pub lambda: f64,
    pub seed: u64,
    pub entries: Vec<RetentionEntry>,
    /// Classes reported on that no completed task trained.
    pub untrained: Vec<usize>,
}

pub const REPORT_HEADER: &str = "lambda,seed,regime,class,metric,value";

impl RetentionReport {
    pub fn new(regime: impl Into<String>, lambda: f64, seed: u64) -> Self {
        Self {
            regime: regime.into(),
            lambda,
            seed,
            entries: Vec::new(),
            untrained: Vec::new(),
        }
    }

    pub fn push(&mut self, class: usize, metric: &str, value: f64) {
        self.entries.push(RetentionEntry {
            class,
            metric: metric.to_string(),
            value,
        });
    }

    pub fn add_synthetic(&mut self, rows: &[ClassFidelity]) {
        for r in rows {
            self.push(r.class, "mean_gap", r.mean_gap);
            self.push(r.class, "std_gap", r.std_gap);
        }
    }

    pub fn add_mnist(&mut self, rows: &[ClassAccuracy]) {
        for r in rows {
            self.push(r.class, "accuracy", r.accuracy);
        }
    }

    /// Marks every reported class outside `trained` as untrained.
    pub fn flag_untrained(&mut self, trained: &[Vec<usize>]) {
        let seen: BTreeSet<usize> = trained.iter().flatten().copied().collect();
        let reported: BTreeSet<usize> = self.entries.iter().map(|e| e.class).collect();
        self.untrained = reported.difference(&seen).copied().collect();
    }

    pub fn value(&self, class: usize, metric: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.class == class && e.metric == metric)
            .map(|e| e.value)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::from)?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text).map_err(std::io::Error::from)?)
    }
}

/// CSV table with one row per (lambda, seed, class) for `metric`.
pub fn report_csv(reports: &[RetentionReport], metric: &str) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    let mut rows: Vec<(&RetentionReport, &RetentionEntry)> = reports
        .iter()
        .flat_map(|r| r.entries.iter().filter(|e| e.metric == metric).map(move |e| (r, e)))
        .collect();
    rows.sort_by(|a, b| {
        a.0.lambda
            .total_cmp(&b.0.lambda)
            .then(a.0.seed.cmp(&b.0.seed))
            .then(a.0.regime.cmp(&b.0.regime))
            .then(a.1.class.cmp(&b.1.class))
    });
    for (r, e) in rows {
        out.push_str(&format!("{},{},{},{},{},{}\n", r.lambda, r.seed, r.regime, e.class, e.metric, e.value));
    }
    out
}
