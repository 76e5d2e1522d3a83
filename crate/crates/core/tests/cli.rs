use std::path::Path;
use std::process::{Command, Output};

use ewc_gan::checkpoint::save_checkpoint;
use ewc_gan::{CondGan, GanSpec, RngStream};

const BIN: &str = env!("CARGO_BIN_EXE_ewc-gan");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.cfg");
    std::fs::write(
        &path,
        format!(
            "# tiny synthetic run\nsource = synthetic\nsynthetic_classes = 4\ntasks = 0; 1\n\
             epochs = 2\nbatch_size = 32\nhidden = 16\nz_dim = 4\nsynthetic_samples = 64\n\
             fisher_samples = 16\nn_gen = 256\n{extra}"
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn missing_config_is_reported() {
    let out = run(&["run", "--config", "/definitely/not/here.cfg"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config not found"));
}

#[test]
fn bad_arguments_fail_with_message() {
    let out = run(&["run", "--config", "x.cfg", "--regime", "bogus"]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "frobnicate = 3\n");
    let out = run(&["run", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("frobnicate"));
}

#[test]
fn help_succeeds() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("fisher-map"));
}

#[test]
fn report_has_one_row_per_lambda_seed_class() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "regime = ewc\n");
    let mut runs = Vec::new();
    for lambda in ["100", "1000", "5000"] {
        for seed in ["0", "1"] {
            let out_dir = dir.path().join(format!("l{lambda}_s{seed}"));
            let out = run(&["run", "--config", &cfg, "--lambda", lambda, "--seed", seed, "--out", out_dir.to_str().unwrap()]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            runs.push(out_dir.to_str().unwrap().to_owned());
        }
    }
    let csv = dir.path().join("report.csv");
    let mut args = vec!["report", "--out", csv.to_str().unwrap()];
    args.extend(runs.iter().map(String::as_str));
    assert!(run(&args).status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda,seed,regime,class,metric,value"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3 * 2 * 2);
    assert!(rows.iter().all(|r| r.split(',').nth(4) == Some("mean_gap")));
}

fn square_checkpoint(dir: &Path) -> String {
    let spec = GanSpec {
        z_dim: 3,
        data_dim: 16,
        hidden: 8,
        classes: 4,
        init_std: 0.1,
    };
    let gan = CondGan::init(spec, &mut RngStream::new(0)).unwrap();
    let path = dir.join("square.ckpt");
    save_checkpoint(&path, &gan, &[], &[vec![0, 1]]).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn sample_grid_is_reproducible_and_flags_untrained_classes() {
    let dir = tempfile::tempdir().unwrap();
    let ck = square_checkpoint(dir.path());
    let grid = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = run(&["sample", "--checkpoint", &ck, "--classes", "0,3", "--rows", "3", "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stderr).contains("class 3 is untrained"));
        assert!(out_dir.join("grid.png").exists());
        std::fs::read(out_dir.join("grid.pgm")).unwrap()
    };
    let pgm = grid("a");
    let header = "P5\n8 12\n255\n";
    assert!(pgm.starts_with(header.as_bytes()), "{:?}", &pgm[..12]);
    assert_eq!(pgm.len(), header.len() + 8 * 12);
    assert_eq!(grid("b"), pgm);
}

#[test]
fn fisher_map_writes_one_image_per_class() {
    let dir = tempfile::tempdir().unwrap();
    let ck = square_checkpoint(dir.path());
    let out_dir = dir.path().join("fisher");
    let out = run(&["fisher-map", "--checkpoint", &ck, "--classes", "0,1", "--samples", "8", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for c in [0, 1] {
        let pgm = std::fs::read(out_dir.join(format!("fisher_{c}.pgm"))).unwrap();
        assert_eq!(pgm.len(), "P5\n4 4\n255\n".len() + 16);
    }
}

#[test]
fn image_commands_reject_non_image_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("run");
    assert!(run(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]).status.success());
    let ck = out_dir.join("task_1.ckpt");
    for cmd in ["sample", "fisher-map"] {
        let out = run(&[cmd, "--checkpoint", ck.to_str().unwrap(), "--classes", "0", "--out", dir.path().join(cmd).to_str().unwrap()]);
        assert!(!out.status.success());
        assert!(String::from_utf8_lossy(&out.stderr).contains("square image"), "{cmd}");
    }
    let out = run(&["sample", "--checkpoint", "/no/such.ckpt", "--classes", "0", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn drift_writes_nonnegative_trace_starting_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("drift");
    let out = run(&["drift", "--config", &cfg, "--classes", "0", "--cadence", "2", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("drift.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() > 2);
    assert_eq!(rows[0][2], 0.0);
    assert!(rows.iter().all(|r| r[2] >= 0.0));
}
