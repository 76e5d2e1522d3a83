//! Flat `key = value` run configuration files.
//!
//! ```text
//! # two tasks on MNIST
//! source = mnist
//! tasks = 1,2; 3
//! regime = ewc
//! lambda = 1000
//! epochs = 20
//! ```
//!
//! Unknown keys are rejected. Keys left out take the defaults of
//! [`RunConfig::mnist`] or [`RunConfig::synthetic`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::data::SyntheticTaskSpec;
use crate::trainer::{DataSource, Regime, RunConfig, TaskSpec};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config not found: {0}")]
    NotFound(PathBuf),
    #[error("config line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("config key {key:?}: {msg}")]
    Value { key: String, msg: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("config key {0:?} is required")]
    Missing(&'static str),
}

type Result<T> = std::result::Result<T, ConfigError>;

/// Settings used after training to score the run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub n_gen: usize,
    /// Auxiliary classifier weights; trained and saved here if missing.
    pub classifier: Option<PathBuf>,
    pub classifier_epochs: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            n_gen: 1000,
            classifier: None,
            classifier_epochs: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub eval: EvalSettings,
}

const KEYS: &[&str] = &[
    "source",
    "tasks",
    "regime",
    "lambda",
    "epochs",
    "task_epochs",
    "batch_size",
    "fisher_samples",
    "fisher_workers",
    "seed",
    "init_seed",
    "data_seed",
    "noise_seed",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "z_dim",
    "hidden",
    "classes",
    "init_std",
    "d_steps",
    "replay_per_class",
    "log_every",
    "out_dir",
    "mnist_dir",
    "train_per_class",
    "synthetic_classes",
    "synthetic_radius",
    "synthetic_std",
    "synthetic_samples",
    "n_gen",
    "classifier",
    "classifier_epochs",
];

/// Splits text into key/value pairs. Later duplicates win.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            msg: format!("expected `key = value`, got {line:?}"),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                msg: "empty key".into(),
            });
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        msg: e.to_string(),
    })
}

/// `"1,2; 3"` becomes `[[1, 2], [3]]`.
pub fn parse_tasks(v: &str) -> Result<Vec<Vec<usize>>> {
    v.split(';')
        .map(|t| parse_class_list(t).map_err(|msg| ConfigError::Value { key: "tasks".into(), msg }))
        .collect()
}

pub fn parse_class_list(v: &str) -> std::result::Result<Vec<usize>, String> {
    let classes: Vec<usize> = v
        .split(',')
        .map(|c| c.trim().parse::<usize>().map_err(|e| format!("{c:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if classes.is_empty() {
        return Err("empty class list".into());
    }
    Ok(classes)
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|_| ConfigError::NotFound(path.to_path_buf()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_pairs(text)?;
        if let Some(k) = kv.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey(k.clone()));
        }
        let get = |k: &str| kv.get(k).map(String::as_str);
        let value_err = |key: &str, e: crate::Error| ConfigError::Value {
            key: key.into(),
            msg: e.to_string(),
        };

        let source: DataSource = get("source")
            .unwrap_or("mnist")
            .parse()
            .map_err(|e| value_err("source", e))?;
        let tasks = parse_tasks(get("tasks").ok_or(ConfigError::Missing("tasks"))?)?;
        let mut run = match source {
            DataSource::Mnist => RunConfig::mnist(tasks, "data/mnist"),
            DataSource::Synthetic => {
                let k = get("synthetic_classes").map(|v| num("synthetic_classes", v)).transpose()?;
                let k = k.unwrap_or_else(|| {
                    run_classes(&kv).unwrap_or(10)
                });
                RunConfig::synthetic(tasks, k)
            }
        };

        if let Some(v) = get("regime") {
            run.regime = v.parse::<Regime>().map_err(|e| value_err("regime", e))?;
        }
        if let Some(v) = get("lambda") {
            run.lambda = num("lambda", v)?;
        }
        if let Some(v) = get("epochs") {
            let e: usize = num("epochs", v)?;
            run.tasks.iter_mut().for_each(|t| t.epochs = e);
        }
        if let Some(v) = get("task_epochs") {
            let list: Vec<usize> = v
                .split(',')
                .map(|e| num("task_epochs", e.trim()))
                .collect::<Result<_>>()?;
            if list.len() != run.tasks.len() {
                return Err(ConfigError::Value {
                    key: "task_epochs".into(),
                    msg: format!("{} entries for {} tasks", list.len(), run.tasks.len()),
                });
            }
            for (t, e) in run.tasks.iter_mut().zip(list) {
                t.epochs = e;
            }
        }
        if let Some(v) = get("batch_size") {
            let b: usize = num("batch_size", v)?;
            run.tasks.iter_mut().for_each(|t| t.batch_size = b);
        }
        if let Some(v) = get("seed") {
            run = run.with_seed(num("seed", v)?);
        }
        macro_rules! set {
            ($($key:literal => $field:expr),* $(,)?) => {
                $(if let Some(v) = get($key) {
                    $field = num($key, v)?;
                })*
            };
        }
        set! {
            "init_seed" => run.init_seed,
            "data_seed" => run.data_seed,
            "noise_seed" => run.noise_seed,
            "fisher_samples" => run.fisher_samples,
            "fisher_workers" => run.fisher_workers,
            "lr" => run.adam.lr,
            "beta1" => run.adam.beta1,
            "beta2" => run.adam.beta2,
            "eps" => run.adam.eps,
            "z_dim" => run.gan.z_dim,
            "hidden" => run.gan.hidden,
            "classes" => run.gan.classes,
            "init_std" => run.gan.init_std,
            "d_steps" => run.d_steps,
            "log_every" => run.log_every,
        }
        if let Some(v) = get("replay_per_class") {
            run.replay_per_class = Some(num("replay_per_class", v)?);
        }
        if let Some(v) = get("train_per_class") {
            run.train_per_class = Some(num("train_per_class", v)?);
        }
        if let Some(v) = get("out_dir") {
            run.out_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = get("mnist_dir") {
            run.mnist_dir = PathBuf::from(v);
        }
        if source == DataSource::Synthetic {
            let k = run.synthetic.classes.len();
            let radius = get("synthetic_radius").map(|v| num("synthetic_radius", v)).transpose()?.unwrap_or(2.0);
            let std = get("synthetic_std").map(|v| num("synthetic_std", v)).transpose()?.unwrap_or(0.2);
            let n = get("synthetic_samples")
                .map(|v| num("synthetic_samples", v))
                .transpose()?
                .unwrap_or(run.synthetic.samples_per_class);
            run.synthetic = SyntheticTaskSpec::ring(k, radius, std, n);
        }

        let mut eval = EvalSettings::default();
        set! {
            "n_gen" => eval.n_gen,
            "classifier_epochs" => eval.classifier_epochs,
        }
        if let Some(v) = get("classifier") {
            eval.classifier = Some(PathBuf::from(v));
        }
        Ok(Self { run, eval })
    }
}

fn run_classes(kv: &BTreeMap<String, String>) -> Option<usize> {
    kv.get("classes").and_then(|v| v.parse().ok())
}

impl TaskSpec {
    /// Comma-separated class ids, as written in config files.
    pub fn classes_text(&self) -> String {
        self.class_ids
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines() {
        let kv = parse_pairs("# header\n\na = 1  # trailing\n b=two \n").unwrap();
        assert_eq!(kv["a"], "1");
        assert_eq!(kv["b"], "two");
        assert!(matches!(parse_pairs("novalue\n"), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn full_mnist_config() {
        let cfg = ExperimentConfig::parse(
            "tasks = 1,2; 3\nregime = ewc\nlambda = 500\nepochs = 4\nbatch_size = 32\nseed = 9\nmnist_dir = /tmp/m\n",
        )
        .unwrap();
        let run = cfg.run;
        assert_eq!(run.tasks.len(), 2);
        assert_eq!(run.tasks[0].class_ids, vec![1, 2]);
        assert_eq!(run.tasks[1].epochs, 4);
        assert_eq!(run.tasks[1].batch_size, 32);
        assert_eq!(run.regime, Regime::Ewc);
        assert_eq!(run.lambda, 500.0);
        assert_eq!(run.gan.data_dim, 784);
        assert_eq!(run.mnist_dir, PathBuf::from("/tmp/m"));
        assert_eq!(run.init_seed, 27);
    }

    #[test]
    fn synthetic_config() {
        let cfg = ExperimentConfig::parse(
            "source = synthetic\ntasks = 0;1\nclasses = 4\nsynthetic_std = 0.1\ntask_epochs = 3,5\n",
        )
        .unwrap();
        assert_eq!(cfg.run.synthetic.classes.len(), 4);
        assert_eq!(cfg.run.gan.classes, 4);
        assert_eq!(cfg.run.synthetic.classes[0].std, 0.1);
        assert_eq!(cfg.run.tasks[1].epochs, 5);
        cfg.run.validate().unwrap();
    }

    #[test]
    fn bad_input_names_the_problem() {
        assert!(matches!(ExperimentConfig::parse("regime = ewc\n"), Err(ConfigError::Missing("tasks"))));
        assert!(matches!(
            ExperimentConfig::parse("tasks = 1\nfoo = 2\n"),
            Err(ConfigError::UnknownKey(k)) if k == "foo"
        ));
        let err = ExperimentConfig::parse("tasks = 1\nregime = sgd\n").unwrap_err();
        assert!(err.to_string().contains("regime"));
        let err = ExperimentConfig::from_file("/nonexistent/run.cfg").unwrap_err();
        assert!(err.to_string().contains("config not found"));
    }
}
