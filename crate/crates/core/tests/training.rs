use dropfilter_core::harness::{
    evaluate, load_splits, sweep_retain_rate, train_on, train_run, CHECKPOINT_FILE, METRICS_FILE, SUMMARY_FILE,
};
use dropfilter_core::{checkpoint, DropMethod, DropSpec, Model, TrainConfig};

fn synthetic() -> TrainConfig {
    TrainConfig::synthetic()
}

#[test]
fn one_epoch_gives_one_finite_row() {
    let mut cfg = synthetic();
    cfg.epochs = 1;
    let m = train_run(&cfg, 0).unwrap();
    assert_eq!(m.rows.len(), 1);
    assert!(m.rows[0].train_loss.is_finite());
    assert!(!m.failed());
}

#[test]
fn small_plain_net_learns_synthetic_classes() {
    let cfg = synthetic();
    let m = train_run(&cfg, 0).unwrap();
    assert_eq!(m.rows.len(), 5);
    let last = m.rows.last().unwrap();
    assert!(last.test_error < 0.1, "{:?}", m.rows);
    assert!(m.rows[0].train_loss > last.train_loss);
}

#[test]
fn same_seed_same_bytes() {
    let mut cfg = synthetic();
    cfg.epochs = 2;
    cfg.model.drop = DropSpec::new(DropMethod::DropFilter, 0.8);
    let a = train_run(&cfg, 7).unwrap();
    let b = train_run(&cfg, 7).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    let c = train_run(&cfg, 8).unwrap();
    assert_ne!(a.to_csv(), c.to_csv());
}

#[test]
fn bookkeeping_columns_follow_schedules() {
    let mut cfg = TrainConfig::from_toml_str(
        "profile = \"synthetic\"\n[train]\nepochs = 4\n[drop]\nmethod = \"dropfilter\"\nschedule = \"curriculum\"\n[optimizer]\nmilestones = [2]",
    )
    .unwrap();
    cfg.data.synthetic.train_per_class = 16;
    let m = train_run(&cfg, 1).unwrap();
    let lrs: Vec<f64> = m.rows.iter().map(|r| r.lr).collect();
    assert_eq!(lrs, vec![0.1, 0.1, 0.02, 0.02]);
    let rates: Vec<f64> = m.rows.iter().map(|r| r.retain_rate).collect();
    assert_eq!(rates[0], 1.0);
    assert_eq!(rates[3], 0.6);
    assert!(rates.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn evaluation_ignores_attached_drop() {
    let mut cfg = synthetic();
    cfg.epochs = 1;
    let splits = load_splits(&cfg).unwrap();
    let (_, model) = train_on(&cfg, &splits, 3).unwrap();
    let base = evaluate(&model, &splits.test, 32).unwrap();
    let logits = model.forward_eval(&splits.test.images).unwrap();
    for (method, rate) in [
        (DropMethod::Dropout, 0.5),
        (DropMethod::DropFilter, 0.5),
        (DropMethod::ScaleFilter, 0.6),
    ] {
        let mut m = model.clone();
        m.attach_drop(DropSpec::new(method, rate)).unwrap();
        assert_eq!(evaluate(&m, &splits.test, 32).unwrap(), base);
        assert!(m.forward_eval(&splits.test.images).unwrap().bitwise_eq(&logits));
    }
}

#[test]
fn run_directory_and_checkpoint_reload() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synthetic();
    cfg.epochs = 1;
    cfg.out_dir = Some(dir.path().to_path_buf());
    let m = train_run(&cfg, 2).unwrap();
    let csv = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(csv, m.to_csv());

    let splits = load_splits(&cfg).unwrap();
    let mut fresh = Model::build(&cfg.model, &mut dropfilter_core::Rng::new(99)).unwrap();
    checkpoint::load(&mut fresh, &dir.path().join(CHECKPOINT_FILE)).unwrap();
    let err = evaluate(&fresh, &splits.test, 32).unwrap();
    assert_eq!(err, m.final_test_error());

    let mut other = cfg.clone();
    other.model.width_factor = 2;
    let mut wrong = Model::build(&other.model, &mut dropfilter_core::Rng::new(0)).unwrap();
    assert!(checkpoint::load(&mut wrong, &dir.path().join(CHECKPOINT_FILE)).is_err());
}

#[test]
fn sweep_counts_runs_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synthetic();
    cfg.epochs = 1;
    cfg.data.synthetic.train_per_class = 16;
    cfg.model.drop = DropSpec::new(DropMethod::DropFilter, 0.9);
    let table = sweep_retain_rate(&cfg, &[0.8, 0.9, 1.0], &[0, 1], Some(dir.path())).unwrap();
    assert_eq!(table.cells.len(), 3);
    assert_eq!(table.cells.iter().map(|c| c.runs.len()).sum::<usize>(), 6);
    let summary = std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(dir.path().join("rate_0.8/seed_1").join(METRICS_FILE).is_file());
}

#[test]
fn rate_one_cell_is_the_baseline() {
    let mut cfg = synthetic();
    cfg.epochs = 1;
    cfg.data.synthetic.train_per_class = 16;
    let baseline = train_run(&cfg, 4).unwrap();
    for method in [DropMethod::DropFilter, DropMethod::ScaleFilter, DropMethod::Dropout] {
        cfg.model.drop = DropSpec::new(method, 0.5);
        let table = sweep_retain_rate(&cfg, &[1.0], &[4], None).unwrap();
        let cell = &table.cells[0].runs[0].rows[0];
        let base = &baseline.rows[0];
        // the logged rate is the operator's own identity value (q = 0 for scalefilter)
        assert_eq!(cell.retain_rate, method.identity_rate());
        assert_eq!(
            (cell.train_loss, cell.train_error, cell.test_error, cell.lr),
            (base.train_loss, base.train_error, base.test_error, base.lr),
            "{method}"
        );
    }
}
