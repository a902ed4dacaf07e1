//! Training loop, evaluation, retain-rate sweeps and CSV output.
//!
//! A run is a pure function of `(TrainConfig, seed)`: data shuffling,
//! augmentation, initialization and every drop mask draw from streams
//! derived from the seed, so metric files are byte-reproducible.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::checkpoint;
use crate::config::{DatasetKind, TrainConfig, DATA_DIR_ENV};
use crate::data::{
    augment, channel_means, load_cifar, normalize, normalize_in_place, restrict_classes, subset_sample,
    synthetic_dataset, Dataset,
};
use crate::error::{Error, Result};
use crate::layers::softmax_cross_entropy;
use crate::model::{ForwardCtx, Model};
use crate::regularize::{retention_schedule, DropMethod, RateSchedule};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

pub const METRICS_HEADER: &str = "epoch,train_loss,train_error,test_error,lr,retain_rate";
pub const SUMMARY_HEADER: &str = "rate,mean_test_error,std_test_error,runs,failed,std_defined";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const STATUS_FILE: &str = "status.txt";
pub const SUMMARY_FILE: &str = "summary.csv";

// Labels of the per-run random streams.
const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_AUGMENT: u64 = 3;
const STREAM_DROP: u64 = 4;

/// `printf("%g")` with 6 significant digits.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_error: f64,
    pub test_error: f64,
    pub lr: f64,
    pub retain_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub seed: u64,
    pub rows: Vec<EpochRow>,
    /// Epoch whose training loss went non-finite; the run stopped there.
    pub failed_at: Option<usize>,
}

impl RunMetrics {
    pub fn failed(&self) -> bool {
        self.failed_at.is_some()
    }

    /// Test error after the last completed epoch (NaN if none completed).
    pub fn final_test_error(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.test_error)
    }

    pub fn final_train_error(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.train_error)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch,
                fmt_g(r.train_loss),
                fmt_g(r.train_error),
                fmt_g(r.test_error),
                fmt_g(r.lr),
                fmt_g(r.retain_rate)
            );
        }
        out
    }

    pub fn status_line(&self) -> String {
        match self.failed_at {
            Some(e) => format!("failed at epoch {e}\n"),
            None => "ok\n".into(),
        }
    }
}

/// Training data in raw pixels plus the normalized test split.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
    pub means: Vec<f64>,
}

pub fn load_splits(cfg: &TrainConfig) -> Result<Splits> {
    let data = &cfg.data;
    let (train, test) = match data.dataset.cifar() {
        Some(kind) => {
            let (train, test) = load_cifar(&data.resolved_dir(), kind).map_err(|e| match e {
                Error::Data(msg) => Error::Data(format!("{msg} (set data.data_dir or {DATA_DIR_ENV})")),
                e => e,
            })?;
            match data.subset {
                Some(s) => {
                    let sub = subset_sample(&train, s.classes, s.per_class, &mut Rng::new(s.seed))?;
                    let test = restrict_classes(&test, &sub.classes)?;
                    (sub.data, test)
                }
                None => (train, test),
            }
        }
        None => {
            debug_assert_eq!(data.dataset, DatasetKind::Synthetic);
            let s = data.synthetic;
            let root = Rng::new(s.seed);
            let train = synthetic_dataset(s.classes, s.train_per_class, s.side, &mut root.derive(&[0]))?;
            let test = synthetic_dataset(s.classes, s.test_per_class, s.side, &mut root.derive(&[1]))?;
            (train, test)
        }
    };
    let means = channel_means(&train)?;
    let test = normalize(&test, &means)?;
    Ok(Splits { train, test, means })
}

/// Anything that maps a normalized batch to `(N, classes, 1, 1)` logits.
pub trait Classifier {
    fn logits(&self, x: &Tensor) -> Result<Tensor>;
}

impl Classifier for Model {
    fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_eval(x)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn count_errors(logits: &Tensor, labels: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|&(i, &l)| argmax(logits.sample(i)) != l)
        .count()
}

/// Top-1 error rate over a normalized dataset.
pub fn evaluate(model: &impl Classifier, ds: &Dataset, batch_size: usize) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let bs = batch_size.max(1);
    let indices: Vec<usize> = (0..ds.len()).collect();
    let mut wrong = 0;
    for chunk in indices.chunks(bs) {
        let batch = ds.select(chunk)?;
        wrong += count_errors(&model.logits(&batch.images)?, &batch.labels);
    }
    Ok(wrong as f64 / ds.len() as f64)
}

fn training_batch(cfg: &TrainConfig, splits: &Splits, idx: &[usize], root: &Rng, epoch: usize) -> Result<Tensor> {
    let s = splits.train.images.shape();
    let mut x = Tensor::new(Shape::new(idx.len(), s.c, s.h, s.w), 0.0)?;
    for (slot, &i) in idx.iter().enumerate() {
        let src = splits.train.images.sample(i);
        match cfg.data.augment {
            Some(policy) => {
                let img = Tensor::from_vec(Shape::new(1, s.c, s.h, s.w), src.to_vec())?;
                let mut rng = root.derive(&[STREAM_AUGMENT, epoch as u64, i as u64]);
                let out = augment(&img, &policy, &mut rng)?;
                x.sample_mut(slot).copy_from_slice(out.data());
            }
            None => x.sample_mut(slot).copy_from_slice(src),
        }
    }
    normalize_in_place(&mut x, &splits.means)?;
    Ok(x)
}

/// Trains one model on preloaded data. Returns the metrics and the final
/// model; nothing is written to disk.
pub fn train_on(cfg: &TrainConfig, splits: &Splits, seed: u64) -> Result<(RunMetrics, Model)> {
    cfg.validate()?;
    let root = Rng::new(seed);
    let mut model = Model::build(&cfg.model, &mut root.derive(&[STREAM_INIT]))?;
    let mut sgd = cfg.optimizer()?;
    let drop_rng = root.derive(&[STREAM_DROP]);
    let n = splits.train.len();
    if n == 0 {
        return Err(Error::Data("empty training set".into()));
    }
    let mut rows = Vec::with_capacity(cfg.epochs);
    let mut failed_at = None;

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_schedule.lr_at(epoch)?;
        sgd.set_lr(lr)?;
        let rate = retention_schedule(cfg.drop_spec(), epoch, cfg.epochs)?;
        let mut order: Vec<usize> = (0..n).collect();
        root.derive(&[STREAM_SHUFFLE, epoch as u64]).shuffle(&mut order);

        let (mut loss_sum, mut wrong) = (0.0, 0usize);
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = training_batch(cfg, splits, idx, &root, epoch)?;
            let labels: Vec<usize> = idx.iter().map(|&i| splits.train.labels[i]).collect();
            let ctx = ForwardCtx {
                rng: &drop_rng,
                epoch: epoch as u64,
                step: step as u64,
                rate,
            };
            let logits = model.forward_train(&x, &ctx)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                failed_at = Some(epoch);
                break;
            }
            loss_sum += loss * idx.len() as f64;
            wrong += count_errors(&logits, &labels);
            model.zero_grad();
            model.backward(&grad)?;
            sgd.step(&mut model.params_mut())?;
        }
        if failed_at.is_some() {
            break;
        }
        let test_error = evaluate(&model, &splits.test, cfg.batch_size)?;
        rows.push(EpochRow {
            epoch,
            train_loss: loss_sum / n as f64,
            train_error: wrong as f64 / n as f64,
            test_error,
            lr,
            retain_rate: rate,
        });
    }
    Ok((RunMetrics { seed, rows, failed_at }, model))
}

/// Writes `metrics.csv`, `status.txt` and `model.ckpt` into `dir`.
pub fn write_run(dir: &Path, metrics: &RunMetrics, model: &Model) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    };
    write(METRICS_FILE, metrics.to_csv())?;
    write(STATUS_FILE, metrics.status_line())?;
    checkpoint::save(model, &dir.join(CHECKPOINT_FILE))
}

/// Loads the data, trains, and writes the run to `cfg.out_dir` if set.
pub fn train_run(cfg: &TrainConfig, seed: u64) -> Result<RunMetrics> {
    let splits = load_splits(cfg)?;
    let (metrics, model) = train_on(cfg, &splits, seed)?;
    if let Some(dir) = &cfg.out_dir {
        write_run(dir, &metrics, &model)?;
    }
    Ok(metrics)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 with `std_defined == false` for a
    /// single run.
    pub std: f64,
    pub std_defined: bool,
    /// Runs that entered the statistics.
    pub runs: usize,
    /// Diverged runs, excluded from the statistics.
    pub failed: usize,
}

pub fn summarize(errors: &[f64], failed: usize) -> Summary {
    let k = errors.len();
    let mean = if k == 0 {
        f64::NAN
    } else {
        errors.iter().sum::<f64>() / k as f64
    };
    let (std, std_defined) = if k >= 2 {
        let ss: f64 = errors.iter().map(|e| (e - mean).powi(2)).sum();
        ((ss / (k - 1) as f64).sqrt(), true)
    } else {
        (0.0, false)
    };
    Summary {
        mean,
        std,
        std_defined,
        runs: k,
        failed,
    }
}

/// Mean and sample std of final test errors over the runs that finished.
pub fn aggregate_runs(runs: &[RunMetrics]) -> Summary {
    let ok: Vec<f64> = runs.iter().filter(|r| !r.failed()).map(|r| r.final_test_error()).collect();
    summarize(&ok, runs.len() - ok.len())
}

#[derive(Clone, Debug)]
pub struct SweepCell {
    pub rate: f64,
    pub runs: Vec<RunMetrics>,
    pub summary: Summary,
}

#[derive(Clone, Debug)]
pub struct SweepTable {
    pub method: DropMethod,
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        summary_csv(self.cells.iter().map(|c| (Some(c.rate), &c.summary)))
    }
}

fn summary_csv<'a>(rows: impl Iterator<Item = (Option<f64>, &'a Summary)>) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (rate, s) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            rate.map(fmt_g).unwrap_or_default(),
            fmt_g(s.mean),
            fmt_g(s.std),
            s.runs,
            s.failed,
            s.std_defined
        );
    }
    out
}

/// The config for one sweep cell. Rate 1 means "no data drop": for
/// scalefilter that is amplitude q = 0, for the others p = 1. Any other
/// rate is used literally (p, or q for scalefilter). The cell runs a
/// constant schedule at that rate.
pub fn cell_config(cfg: &TrainConfig, rate: f64) -> TrainConfig {
    let mut out = cfg.clone();
    let method = cfg.drop_spec().method;
    let effective = if rate == 1.0 { method.identity_rate() } else { rate };
    out.model.drop = cfg.drop_spec().with_rate(effective).with_schedule(RateSchedule::Constant);
    out
}

pub fn rate_dir_name(rate: f64) -> String {
    format!("rate_{}", fmt_g(rate))
}

/// Trains every `(rate, seed)` pair (in parallel) and summarizes each rate.
/// With `out` set, each run is written to `out/rate_<r>/seed_<s>/` and the
/// table to `out/summary.csv`.
pub fn sweep_retain_rate(cfg: &TrainConfig, rates: &[f64], seeds: &[u64], out: Option<&Path>) -> Result<SweepTable> {
    if rates.is_empty() || seeds.is_empty() {
        return Err(Error::Config("a sweep needs at least one rate and one seed".into()));
    }
    let cell_cfgs = rates
        .iter()
        .map(|&r| {
            let c = cell_config(cfg, r);
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let splits = load_splits(cfg)?;
    let jobs: Vec<(usize, u64)> = (0..rates.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let results = jobs
        .par_iter()
        .map(|&(i, seed)| -> Result<RunMetrics> {
            let (metrics, model) = train_on(&cell_cfgs[i], &splits, seed)?;
            if let Some(dir) = out {
                let run_dir = dir.join(rate_dir_name(rates[i])).join(format!("seed_{seed}"));
                write_run(&run_dir, &metrics, &model)?;
            }
            Ok(metrics)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut results = results.into_iter();
    let cells: Vec<SweepCell> = rates
        .iter()
        .map(|&rate| {
            let runs: Vec<RunMetrics> = results.by_ref().take(seeds.len()).collect();
            let summary = aggregate_runs(&runs);
            SweepCell { rate, runs, summary }
        })
        .collect();
    let table = SweepTable {
        method: cfg.drop_spec().method,
        cells,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(SUMMARY_FILE);
        fs::write(&path, table.to_csv()).map_err(|e| Error::io(path, e))?;
    }
    Ok(table)
}

/// Parses a metrics CSV written by [`RunMetrics::to_csv`].
pub fn parse_metrics_csv(text: &str) -> Result<Vec<EpochRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Format("metrics CSV header mismatch".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::Format(format!("bad metrics row `{line}`")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad number `{s}`")));
            Ok(EpochRow {
                epoch: f[0].parse().map_err(|_| Error::Format(format!("bad epoch `{}`", f[0])))?,
                train_loss: num(f[1])?,
                train_error: num(f[2])?,
                test_error: num(f[3])?,
                lr: num(f[4])?,
                retain_rate: num(f[5])?,
            })
        })
        .collect()
}

fn find_metrics(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_metrics(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == METRICS_FILE) {
            found.push(p);
        }
    }
    Ok(())
}

fn rate_of(path: &Path) -> Option<f64> {
    path.components()
        .filter_map(|c| c.as_os_str().to_str()?.strip_prefix("rate_")?.parse().ok())
        .next_back()
}

/// Summaries of every run directory below `dir`, grouped by the
/// `rate_<r>` directory they sit in (runs outside one form a single group
/// with an empty rate). A run counts as failed when its status file says so.
pub fn aggregate_dir(dir: &Path) -> Result<Vec<(Option<f64>, Summary)>> {
    let mut files = Vec::new();
    find_metrics(dir, &mut files)?;
    if files.is_empty() {
        return Err(Error::Data(format!("no {METRICS_FILE} under {}", dir.display())));
    }
    let mut groups: Vec<(Option<f64>, Vec<f64>, usize)> = Vec::new();
    for f in files {
        let run_dir = f.parent().expect("file has a parent");
        let rate = rate_of(run_dir.strip_prefix(dir).unwrap_or(run_dir));
        let status_path = run_dir.join(STATUS_FILE);
        let failed = fs::read_to_string(&status_path).is_ok_and(|s| s.starts_with("failed"));
        let text = fs::read_to_string(&f).map_err(|e| Error::io(&f, e))?;
        let rows = parse_metrics_csv(&text)?;
        let idx = match groups.iter().position(|g| g.0.map(f64::to_bits) == rate.map(f64::to_bits)) {
            Some(i) => i,
            None => {
                groups.push((rate, Vec::new(), 0));
                groups.len() - 1
            }
        };
        match (failed, rows.last()) {
            (false, Some(last)) => groups[idx].1.push(last.test_error),
            _ => groups[idx].2 += 1,
        }
    }
    groups.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    Ok(groups
        .into_iter()
        .map(|(rate, errs, failed)| (rate, summarize(&errs, failed)))
        .collect())
}

pub fn aggregate_csv(rows: &[(Option<f64>, Summary)]) -> String {
    summary_csv(rows.iter().map(|(r, s)| (*r, s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn g_formatting() {
        let cases = [
            (0.0, "0"),
            (0.1, "0.1"),
            (0.02, "0.02"),
            (0.0008, "0.0008"),
            (1.0, "1"),
            (std::f64::consts::LN_10, "2.30259"),
            (0.123456789, "0.123457"),
            (123456.7, "123457"),
            (1234567.0, "1.23457e+06"),
            (0.00001234, "1.234e-05"),
            (-0.5, "-0.5"),
            (1e-4, "0.0001"),
            (999999.5, "1e+06"),
            (f64::NAN, "nan"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g(x), want, "{x}");
        }
    }

    struct Constant(usize, usize);

    impl Classifier for Constant {
        fn logits(&self, x: &Tensor) -> Result<Tensor> {
            let n = x.shape().n;
            let mut t = Tensor::zeros((n, self.1, 1, 1));
            for i in 0..n {
                t.sample_mut(i)[self.0] = 1.0;
            }
            Ok(t)
        }
    }

    struct Lookup;

    impl Classifier for Lookup {
        // the single pixel holds the label
        fn logits(&self, x: &Tensor) -> Result<Tensor> {
            let n = x.shape().n;
            let mut t = Tensor::zeros((n, 10, 1, 1));
            for i in 0..n {
                t.sample_mut(i)[x.sample(i)[0] as usize] = 1.0;
            }
            Ok(t)
        }
    }

    fn balanced(n_per: usize) -> Dataset {
        let n = 10 * n_per;
        let labels: Vec<usize> = (0..n).map(|i| i % 10).collect();
        let images = Tensor::from_vec((n, 1, 1, 1), labels.iter().map(|&l| l as f64).collect()).unwrap();
        Dataset::new(images, labels, 10).unwrap()
    }

    #[test]
    fn evaluate_counts_misclassifications() {
        let ds = balanced(7);
        assert!((evaluate(&Constant(0, 10), &ds, 16).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(evaluate(&Lookup, &ds, 3).unwrap(), 0.0);
        let empty = ds.select(&[]).unwrap();
        assert!(matches!(evaluate(&Lookup, &empty, 3), Err(Error::Data(_))));
    }

    fn run(errors: &[f64]) -> Vec<RunMetrics> {
        errors
            .iter()
            .map(|&e| RunMetrics {
                seed: 0,
                rows: vec![EpochRow {
                    epoch: 0,
                    train_loss: 1.0,
                    train_error: 0.0,
                    test_error: e,
                    lr: 0.1,
                    retain_rate: 1.0,
                }],
                failed_at: None,
            })
            .collect()
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate_runs(&run(&[0.06, 0.06, 0.06]));
        assert!((s.mean - 0.06).abs() < 1e-15 && s.std < 1e-15 && s.std_defined);
        let s = aggregate_runs(&run(&[0.05, 0.07]));
        assert!((s.mean - 0.06).abs() < 1e-15);
        assert!((s.std - 0.02f64.sqrt() / 10.0).abs() < 1e-12);
        let s = aggregate_runs(&run(&[0.3]));
        assert_eq!((s.mean, s.std, s.std_defined), (0.3, 0.0, false));
    }

    #[test]
    fn failed_runs_are_excluded() {
        let mut runs = run(&[0.2, 0.4]);
        runs[1].failed_at = Some(3);
        let s = aggregate_runs(&runs);
        assert_eq!((s.mean, s.runs, s.failed), (0.2, 1, 1));
    }

    #[test]
    fn metrics_csv_round_trip() {
        let m = &run(&[0.25])[0];
        let csv = m.to_csv();
        assert_eq!(csv, format!("{METRICS_HEADER}\n0,1,0,0.25,0.1,1\n"));
        assert_eq!(parse_metrics_csv(&csv).unwrap(), m.rows);
        assert!(parse_metrics_csv("a,b\n").is_err());
    }

    #[test]
    fn cell_rate_mapping() {
        let mut cfg = TrainConfig::synthetic();
        cfg.model.drop = crate::regularize::DropSpec::new(DropMethod::ScaleFilter, 0.3);
        assert_eq!(cell_config(&cfg, 1.0).drop_spec().rate, 0.0);
        assert_eq!(cell_config(&cfg, 0.4).drop_spec().rate, 0.4);
        cfg.model.drop = crate::regularize::DropSpec::new(DropMethod::DropFilter, 0.3);
        assert_eq!(cell_config(&cfg, 1.0).drop_spec().rate, 1.0);
        assert!(cell_config(&cfg, 1.0).drop_spec().is_identity());
    }

    #[test]
    fn aggregate_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        let runs = run(&[0.05, 0.07, 0.5]);
        for (i, (r, m)) in [(0.9, &runs[0]), (0.9, &runs[1]), (1.0, &runs[2])].iter().enumerate() {
            let d = dir.path().join(rate_dir_name(*r)).join(format!("seed_{i}"));
            fs::create_dir_all(&d).unwrap();
            fs::write(d.join(METRICS_FILE), m.to_csv()).unwrap();
            fs::write(d.join(STATUS_FILE), m.status_line()).unwrap();
        }
        let rows = aggregate_dir(dir.path()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].0, Some(0.9));
        assert!((rows[0].1.mean - 0.06).abs() < 1e-12);
        assert_eq!(rows[1].1.runs, 1);
        let csv = aggregate_csv(&rows);
        assert!(csv.starts_with(SUMMARY_HEADER));
        assert!(csv.contains("\n0.9,0.06,0.0141421,2,0,true\n"));
        assert!(aggregate_dir(tempfile::tempdir().unwrap().path()).is_err());
    }

    proptest! {
        #[test]
        fn g_format_round_trips_to_six_digits(x in -1e9f64..1e9) {
            let back: f64 = fmt_g(x).parse().unwrap();
            prop_assert!((back - x).abs() <= 5e-6 * x.abs().max(1e-300));
        }
    }
}
