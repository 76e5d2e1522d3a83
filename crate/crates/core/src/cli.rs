//! Command-line front end: `run`, `sample`, `fisher-map`, `drift`, `report`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::load_checkpoint;
use crate::config::{parse_class_list, EvalSettings, ExperimentConfig};
use crate::data::{load_mnist, MnistSplit};
use crate::error::{Error, Result};
use crate::eval::{
    image_side, report_csv, retention_metrics_mnist, retention_metrics_synthetic, sample_grid, AuxClassifier,
    ClassifierConfig, DriftRecorder, GrayImage, RetentionReport,
};
use crate::objectives::estimate_class_saliency;
use crate::rng::RngStream;
use crate::trainer::{run_sequence_with, DataSource, Regime, RunOutcome};
use crate::CondGan;

#[derive(Debug, Parser)]
#[command(name = "ewc-gan", version, about = "Sequential conditional GAN training with consolidation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the task sequence described by a config file.
    Run(RunArgs),
    /// Render a sample grid (one column per class) from a checkpoint.
    Sample(SampleArgs),
    /// Write per-class Fisher saliency images for a checkpoint.
    FisherMap(FisherArgs),
    /// Train a config while tracing fixed-z samples during one task.
    Drift(DriftArgs),
    /// Collect retention reports from run directories into a CSV table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_parser = parse_regime)]
    pub regime: Option<Regime>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Overrides,
    /// Continue from a checkpoint written by an earlier run of this config.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_parser = parse_classes)]
    pub classes: ClassList,
    #[arg(long, default_value_t = 8)]
    pub rows: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; gets grid.pgm and grid.png.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FisherArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_parser = parse_classes)]
    pub classes: ClassList,
    #[arg(long, default_value_t = 512)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DriftArgs {
    #[command(flatten)]
    pub common: Overrides,
    /// Classes to trace.
    #[arg(long, value_parser = parse_classes)]
    pub classes: ClassList,
    /// Task index to trace; defaults to the last task.
    #[arg(long)]
    pub task: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub cadence: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories, each holding a retention.json.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Metric to tabulate: accuracy, mean_gap or std_gap.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_regime(s: &str) -> std::result::Result<Regime, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Comma-separated class ids, e.g. `1,2,3`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassList(pub Vec<usize>);

impl std::ops::Deref for ClassList {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

fn parse_classes(s: &str) -> std::result::Result<ClassList, String> {
    parse_class_list(s).map(ClassList)
}

pub fn run_cli<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::InvalidArgument(e.to_string())),
    };
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sample(a) => cmd_sample(a),
        Command::FisherMap(a) => cmd_fisher(a),
        Command::Drift(a) => cmd_drift(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn load_experiment(o: &Overrides) -> Result<ExperimentConfig> {
    let mut exp = ExperimentConfig::from_file(&o.config)?;
    if let Some(r) = o.regime {
        exp.run.regime = r;
    }
    if let Some(l) = o.lambda {
        exp.run.lambda = l;
    }
    if let Some(s) = o.seed {
        exp.run = exp.run.with_seed(s);
    }
    if let Some(out) = &o.out {
        exp.run.out_dir = Some(out.clone());
    }
    exp.run.validate()?;
    Ok(exp)
}

/// Loads the classifier at `settings.classifier`, or trains one on the
/// MNIST train split (saving it there when a path is given).
pub fn load_or_train_classifier(settings: &EvalSettings, mnist_dir: &Path) -> Result<AuxClassifier> {
    if let Some(path) = &settings.classifier {
        if path.exists() {
            return AuxClassifier::load(path);
        }
    }
    let train = load_mnist(mnist_dir, MnistSplit::Train)?;
    let config = ClassifierConfig {
        epochs: settings.classifier_epochs,
        ..ClassifierConfig::default()
    };
    let clf = AuxClassifier::train(&train, 10, &config)?;
    let test = load_mnist(mnist_dir, MnistSplit::Test)?;
    let (acc, _) = clf.evaluate(&test)?;
    eprintln!("classifier held-out accuracy {acc:.4}");
    if acc < 0.95 {
        log::warn!("classifier held-out accuracy {acc:.4} is below 0.95");
    }
    if let Some(path) = &settings.classifier {
        clf.save(path)?;
    }
    Ok(clf)
}

/// Scores every class of every completed task.
pub fn score_run(exp: &ExperimentConfig, outcome: &RunOutcome, classifier: Option<&AuxClassifier>) -> Result<RetentionReport> {
    let run = &exp.run;
    let seed = run.init_seed;
    let mut report = RetentionReport::new(run.regime.to_string(), run.lambda, seed);
    let mut rng = RngStream::new(run.noise_seed).substream(u64::MAX);
    let classes: Vec<usize> = {
        let mut c: Vec<usize> = outcome.completed_tasks.iter().flatten().copied().collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    match run.source {
        DataSource::Synthetic => {
            let rows = retention_metrics_synthetic(&outcome.gan, &run.synthetic, exp.eval.n_gen, &mut rng)?;
            let rows: Vec<_> = rows.into_iter().filter(|r| classes.contains(&r.class)).collect();
            report.add_synthetic(&rows);
        }
        DataSource::Mnist => {
            let clf = classifier.ok_or_else(|| Error::InvalidArgument("MNIST scoring needs a classifier".into()))?;
            report.add_mnist(&retention_metrics_mnist(&outcome.gan, clf, &classes, exp.eval.n_gen, &mut rng)?);
        }
    }
    report.flag_untrained(&outcome.completed_tasks);
    Ok(report)
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let exp = load_experiment(&a.common)?;
    let resume = a.checkpoint.as_ref().map(load_checkpoint).transpose()?;
    let outcome = run_sequence_with(&exp.run, resume, &mut ())?;
    let classifier = match exp.run.source {
        DataSource::Mnist => Some(load_or_train_classifier(&exp.eval, &exp.run.mnist_dir)?),
        DataSource::Synthetic => None,
    };
    let report = score_run(&exp, &outcome, classifier.as_ref())?;
    for e in &report.entries {
        println!("class {} {} {:.4}", e.class, e.metric, e.value);
    }
    if let Some(dir) = &exp.run.out_dir {
        report.write_json(dir.join("retention.json"))?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn write_image(img: &GrayImage, dir: &Path, stem: &str) -> Result<()> {
    img.write_pgm(dir.join(format!("{stem}.pgm")))?;
    img.write_png(dir.join(format!("{stem}.png")))
}

fn warn_untrained(completed: &[Vec<usize>], classes: &[usize]) {
    for c in classes {
        if !completed.iter().flatten().any(|t| t == c) {
            eprintln!("warning: class {c} is untrained in this checkpoint");
        }
    }
}

fn require_classes(classes: &[usize]) -> Result<()> {
    if classes.is_empty() {
        return Err(Error::InvalidArgument("--classes is required".into()));
    }
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    require_classes(&a.classes)?;
    let ck = load_checkpoint(&a.checkpoint)?;
    warn_untrained(&ck.completed_tasks, &a.classes);
    let grid = sample_grid(&ck.gan, &a.classes, a.rows, &mut RngStream::new(a.seed))?;
    fs::create_dir_all(&a.out)?;
    write_image(&grid, &a.out, "grid")?;
    println!("wrote {}x{} grid to {}", grid.width, grid.height, a.out.display());
    Ok(())
}

fn cmd_fisher(a: FisherArgs) -> Result<()> {
    require_classes(&a.classes)?;
    let ck = load_checkpoint(&a.checkpoint)?;
    warn_untrained(&ck.completed_tasks, &a.classes);
    let side = image_side(ck.gan.spec().data_dim)?;
    let maps = estimate_class_saliency(&ck.gan, &a.classes, a.samples, &mut RngStream::new(a.seed))?;
    fs::create_dir_all(&a.out)?;
    for (c, map) in maps {
        write_image(&GrayImage::from_unit(side, side, &map)?, &a.out, &format!("fisher_{c}"))?;
    }
    println!("wrote {} saliency maps to {}", a.classes.len(), a.out.display());
    Ok(())
}

fn cmd_drift(a: DriftArgs) -> Result<()> {
    require_classes(&a.classes)?;
    let exp = load_experiment(&a.common)?;
    let out = exp
        .run
        .out_dir
        .clone()
        .ok_or_else(|| Error::InvalidArgument("drift needs --out or out_dir".into()))?;
    let task = a.task.unwrap_or(exp.run.tasks.len().saturating_sub(1));
    if task >= exp.run.tasks.len() {
        return Err(Error::InvalidArgument(format!("task {task} out of range")));
    }
    for &c in a.classes.iter() {
        if c >= exp.run.gan.classes {
            return Err(Error::Capacity {
                class: c,
                capacity: exp.run.gan.classes,
            });
        }
    }
    let z = CondGan::init(exp.run.gan, &mut RngStream::new(0))?
        .sample_noise(1, &mut RngStream::new(exp.run.noise_seed).substream(u64::MAX - 1))
        .to_vec();
    let mut rec = DriftRecorder::new(task, z, a.classes.0.clone(), a.cadence);
    run_sequence_with(&exp.run, None, &mut rec)?;
    let mut csv = String::from("class,step,distance\n");
    for t in rec.traces() {
        for p in &t.points {
            csv.push_str(&format!("{},{},{}\n", t.class_id, p.step, p.distance));
        }
        if let (Ok(side), Some(last)) = (image_side(exp.run.gan.data_dim), t.points.last()) {
            write_image(&GrayImage::from_unit(side, side, &last.image)?, &out, &format!("drift_{}_final", t.class_id))?;
        }
        println!("class {} final drift {:.4}", t.class_id, t.final_distance());
    }
    fs::write(out.join("drift.csv"), csv)?;
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let reports: Vec<Result<RetentionReport>> = std::thread::scope(|s| {
        let handles: Vec<_> = a
            .runs
            .iter()
            .map(|dir| s.spawn(move || RetentionReport::read_json(dir.join("retention.json"))))
            .collect();
        handles.into_iter().map(|h| h.join().expect("report reader panicked")).collect()
    });
    let reports: Vec<RetentionReport> = reports.into_iter().collect::<Result<_>>()?;
    let metric = a.metric.unwrap_or_else(|| {
        if reports.iter().any(|r| r.entries.iter().any(|e| e.metric == "accuracy")) {
            "accuracy".into()
        } else {
            "mean_gap".into()
        }
    });
    for r in &reports {
        if !r.untrained.is_empty() {
            eprintln!(
                "warning: run regime={} lambda={} seed={} reports untrained classes {:?}",
                r.regime, r.lambda, r.seed, r.untrained
            );
        }
    }
    let csv = report_csv(&reports, &metric);
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&a.out, &csv)?;
    println!("wrote {} rows to {}", csv.lines().count() - 1, a.out.display());
    Ok(())
}
