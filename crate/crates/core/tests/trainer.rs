use ewc_gan::checkpoint::load_checkpoint;
use ewc_gan::trainer::{replay_baseline, run_sequence, run_sequence_with, Regime, RunConfig, RunOutcome};

fn small(regime: Regime) -> RunConfig {
    let mut c = RunConfig::synthetic(vec![vec![0], vec![1], vec![2, 3]], 4).with_seed(2);
    c.regime = regime;
    c.lambda = if regime == Regime::Ewc { 50.0 } else { 0.0 };
    c.gan.hidden = 24;
    c.gan.z_dim = 4;
    c.synthetic.samples_per_class = 96;
    c.fisher_samples = 48;
    c.d_steps = 2;
    for t in &mut c.tasks {
        t.epochs = 3;
        t.batch_size = 32;
    }
    c
}

fn state(o: &RunOutcome) -> Vec<u64> {
    o.gan
        .generator_params()
        .flatten()
        .into_iter()
        .chain(o.gan.discriminator_params().flatten())
        .map(f64::to_bits)
        .collect()
}

#[test]
fn runs_are_deterministic() {
    for regime in [Regime::Naive, Regime::Ewc, Regime::Replay] {
        let a = run_sequence(&small(regime)).unwrap();
        let b = run_sequence(&small(regime)).unwrap();
        assert_eq!(state(&a), state(&b), "{regime}");
        assert_eq!(a.records, b.records);
    }
    let other = run_sequence(&small(Regime::Ewc).with_seed(3)).unwrap();
    assert_ne!(state(&other), state(&run_sequence(&small(Regime::Ewc)).unwrap()));
}

#[test]
fn fisher_workers_do_not_change_the_run_beyond_rounding() {
    let one = run_sequence(&small(Regime::Ewc)).unwrap();
    let mut cfg = small(Regime::Ewc);
    cfg.fisher_workers = 3;
    let three = run_sequence(&cfg).unwrap();
    for (a, b) in one.records.iter().zip(&three.records) {
        for (x, y) in a.fisher_diag.iter().zip(b.fisher_diag.iter()) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-12));
        }
    }
}

#[test]
fn earlier_task_data_is_never_read_again() {
    for regime in [Regime::Naive, Regime::Ewc, Regime::Replay] {
        let out = run_sequence(&small(regime)).unwrap();
        assert_eq!(out.data_reads.len(), 3);
        for (t, (at_end, at_run_end)) in out.data_reads.iter().enumerate() {
            assert!(*at_end > 0);
            assert_eq!(at_end, at_run_end, "{regime} task {t}");
        }
    }
}

#[test]
fn ewc_keeps_one_record_per_task() {
    let out = run_sequence(&small(Regime::Ewc)).unwrap();
    assert_eq!(out.records.len(), 3);
    assert_eq!(out.records[2].class_ids, vec![2, 3]);
    assert!(run_sequence(&small(Regime::Naive)).unwrap().records.is_empty());
}

#[test]
fn resume_from_every_checkpoint_matches() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Regime::Ewc);
    cfg.out_dir = Some(dir.path().to_path_buf());
    let full = run_sequence(&cfg).unwrap();
    assert!(dir.path().join("run_log.jsonl").exists());
    assert_eq!(std::fs::read_to_string(dir.path().join("tasks.jsonl")).unwrap().lines().count(), 3);
    cfg.out_dir = None;
    for ck in &full.checkpoints[..2] {
        let resumed = run_sequence_with(&cfg, Some(load_checkpoint(ck).unwrap()), &mut ()).unwrap();
        assert_eq!(state(&resumed), state(&full));
        assert_eq!(resumed.records, full.records);
    }
    let last = load_checkpoint(&full.checkpoints[2]).unwrap();
    let noop = run_sequence_with(&cfg, Some(last), &mut ()).unwrap();
    assert_eq!(state(&noop), state(&full));
}

#[test]
fn resume_rejects_mismatched_history() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Regime::Ewc);
    cfg.out_dir = Some(dir.path().to_path_buf());
    let full = run_sequence(&cfg).unwrap();
    let mut other = small(Regime::Ewc);
    other.tasks.swap(0, 1);
    assert!(run_sequence_with(&other, Some(load_checkpoint(&full.checkpoints[0]).unwrap()), &mut ()).is_err());
    let mut wider = small(Regime::Ewc);
    wider.gan.hidden = 25;
    assert!(run_sequence_with(&wider, Some(load_checkpoint(&full.checkpoints[0]).unwrap()), &mut ()).is_err());
}

#[test]
fn replay_baseline_requires_replay_regime() {
    assert!(replay_baseline(&small(Regime::Ewc)).is_err());
    let out = replay_baseline(&small(Regime::Replay)).unwrap();
    let regen: Vec<usize> = out.log.tasks.iter().map(|t| t.examples_regenerated).collect();
    assert_eq!(regen, vec![0, 96, 2 * 96]);
}

#[test]
fn invalid_configs_rejected() {
    let mut c = small(Regime::Ewc);
    c.tasks[1].class_ids = vec![4];
    assert!(run_sequence(&c).is_err());
    let mut c = small(Regime::Ewc);
    c.tasks[0].batch_size = 0;
    assert!(run_sequence(&c).is_err());
    let mut c = small(Regime::Ewc);
    c.lambda = -1.0;
    assert!(run_sequence(&c).is_err());
}
