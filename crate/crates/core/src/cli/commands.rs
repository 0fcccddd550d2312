//! The experiment commands. Each writes `runs.csv` (one row per training
//! run), `summary.csv` (mean and 95% interval per group) and, for `train`
//! and `align`, `epochs_seed<k>.csv`.

use std::path::Path;
use std::time::Instant;

use crate::bp::train_bp_problem;
use crate::dataset::{load_dataset, random_split, sparse_split, Dataset, Split};
use crate::dfa::train_dfa_problem;
use crate::error::{Error, Result};
use crate::graph::{perturb, Attack};
use crate::numkit::{map_indexed, Exec, Rng};
use crate::training::{Problem, TrainResult};

use super::config::{Algo, ExperimentConfig, SplitMode};
use super::output::{epoch_table, fmt_f64, summarize, write_csv, Stats};

/// Independent random streams derived from one seed.
struct Streams {
    split: Rng,
    init: Rng,
    attack: Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let mut master = Rng::new(seed);
        Self {
            split: master.fork(),
            init: master.fork(),
            attack: master.fork(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// Values of the report's group columns.
    pub group: Vec<String>,
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_acc: Option<f64>,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub group_columns: Vec<&'static str>,
    pub runs: Vec<RunOutcome>,
    /// Test-accuracy statistics per group, in first-appearance order.
    pub summary: Vec<(Vec<String>, Stats)>,
}

impl Report {
    fn new(group_columns: Vec<&'static str>, runs: Vec<RunOutcome>) -> Self {
        let mut keys: Vec<Vec<String>> = Vec::new();
        for r in &runs {
            if !keys.contains(&r.group) {
                keys.push(r.group.clone());
            }
        }
        let summary = keys
            .into_iter()
            .map(|k| {
                let accs: Vec<f64> = runs.iter().filter(|r| r.group == k).map(|r| r.test_acc).collect();
                let stats = summarize(&accs);
                (k, stats)
            })
            .collect();
        Self {
            group_columns,
            runs,
            summary,
        }
    }

    /// Statistics of the group whose values equal `key`.
    pub fn stats(&self, key: &[&str]) -> Option<Stats> {
        self.summary
            .iter()
            .find(|(k, _)| k.iter().map(String::as_str).eq(key.iter().copied()))
            .map(|(_, s)| *s)
    }

    fn write(&self, out: &Path, provenance: &[String]) -> Result<()> {
        let mut header: Vec<String> = self.group_columns.iter().map(|s| s.to_string()).collect();
        header.extend(["seed", "best_epoch", "best_val_acc", "test_acc"].map(String::from));
        let rows: Vec<Vec<String>> = self
            .runs
            .iter()
            .map(|r| {
                let mut row = r.group.clone();
                row.push(r.seed.to_string());
                row.push(r.best_epoch.to_string());
                row.push(r.best_val_acc.map(fmt_f64).unwrap_or_default());
                row.push(fmt_f64(r.test_acc));
                row
            })
            .collect();
        write_csv(&out.join("runs.csv"), provenance, &header, &rows)?;

        let mut header: Vec<String> = self.group_columns.iter().map(|s| s.to_string()).collect();
        header.extend(["n", "mean_test_acc", "std", "ci95"].map(String::from));
        let rows: Vec<Vec<String>> = self
            .summary
            .iter()
            .map(|(k, s)| {
                let mut row = k.clone();
                row.push(s.n.to_string());
                row.push(fmt_f64(s.mean));
                row.push(fmt_f64(s.std));
                row.push(s.ci95.map(fmt_f64).unwrap_or_default());
                row
            })
            .collect();
        write_csv(&out.join("summary.csv"), provenance, &header, &rows)
    }
}

fn provenance(command: &str, cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let mut cells = vec![format!("command={command}")];
    cells.extend(cfg.provenance()?);
    Ok(cells)
}

pub fn load(cfg: &ExperimentConfig) -> Result<Dataset> {
    let ds = load_dataset(&cfg.data)?;
    Ok(if cfg.normalize_features {
        ds.row_normalized()
    } else {
        ds
    })
}

fn make_split(cfg: &ExperimentConfig, ds: &Dataset, rng: &mut Rng) -> Result<Split> {
    match cfg.split {
        SplitMode::Random602020 => random_split(ds.node_count(), (0.6, 0.2, 0.2), rng),
        SplitMode::Sparse20 => sparse_split(&ds.labels, cfg.per_class, cfg.val_size, rng),
    }
}

fn train(problem: &Problem, cfg: &ExperimentConfig, algo: Algo, record_alignment: bool, rng: &mut Rng) -> Result<TrainResult> {
    match algo {
        Algo::Bp => train_bp_problem(problem, &cfg.train_config_for(Algo::Bp), rng),
        Algo::Dfa => train_dfa_problem(problem, &cfg.dfa_config(record_alignment), rng).map(|(r, _)| r),
    }
}

fn outcome(group: Vec<String>, seed: u64, r: &TrainResult) -> Result<RunOutcome> {
    let test_acc = r
        .test_acc
        .ok_or_else(|| Error::Config("the split has no test nodes".into()))?;
    Ok(RunOutcome {
        group,
        seed,
        best_epoch: r.best_epoch,
        best_val_acc: r.best_val_acc,
        test_acc,
    })
}

/// Runs `f` for every job, in parallel when enabled, keeping job order.
fn run_jobs<J, F>(jobs: &[J], f: F) -> Result<Vec<RunOutcome>>
where
    J: Sync,
    F: Fn(&J) -> Result<RunOutcome> + Send + Sync,
{
    map_indexed(Exec::default(), jobs.len(), |i| f(&jobs[i]))
        .into_iter()
        .collect()
}

fn log_run(label: &str, seed: u64, start: Instant, r: &RunOutcome) {
    log::info!(
        "{label} seed {seed}: test {:.4} (epoch {}) in {:.1}s",
        r.test_acc,
        r.best_epoch,
        start.elapsed().as_secs_f64()
    );
}

fn train_like(command: &'static str, cfg: &ExperimentConfig, record_alignment: bool) -> Result<Report> {
    cfg.validate()?;
    let ds = load(cfg)?;
    let prov = provenance(command, cfg)?;
    let runs = run_jobs(&cfg.seeds, |&seed| {
        let start = Instant::now();
        let mut st = Streams::new(seed);
        let split = make_split(cfg, &ds, &mut st.split)?;
        let problem = Problem::new(&ds, &split)?;
        let result = train(&problem, cfg, cfg.algo, record_alignment, &mut st.init)?;
        let (header, rows) = epoch_table(&result.records);
        write_csv(&cfg.out.join(format!("epochs_seed{seed}.csv")), &prov, &header, &rows)?;
        let o = outcome(vec![cfg.algo.name().into()], seed, &result)?;
        log_run(command, seed, start, &o);
        Ok(o)
    })?;
    let report = Report::new(vec!["algo"], runs);
    report.write(&cfg.out, &prov)?;
    Ok(report)
}

/// Trains `cfg.algo` once per seed.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Report> {
    train_like("train", cfg, false)
}

/// DFA training with per-epoch alignment angles and layer criteria.
pub fn cmd_align(cfg: &ExperimentConfig) -> Result<Report> {
    if cfg.algo != Algo::Dfa {
        return Err(Error::Config("align requires algo=dfa".into()));
    }
    train_like("align", cfg, true)
}

/// The three DFA variants: labeled errors only, with pseudo errors, and with
/// pseudo errors plus the node filter.
pub const ABLATION_VARIANTS: [(&str, bool, bool); 3] =
    [("base", false, false), ("eg", true, false), ("eg_nf", true, true)];

pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<Report> {
    if cfg.algo != Algo::Dfa {
        return Err(Error::Config("ablate requires algo=dfa".into()));
    }
    cfg.validate()?;
    let ds = load(cfg)?;
    let jobs: Vec<(u64, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| (0..ABLATION_VARIANTS.len()).map(move |v| (s, v)))
        .collect();
    let runs = run_jobs(&jobs, |&(seed, v)| {
        let start = Instant::now();
        let (name, eg, nf) = ABLATION_VARIANTS[v];
        let mut variant = cfg.clone();
        variant.error_generator = eg;
        variant.node_filter = nf;
        let mut st = Streams::new(seed);
        let split = make_split(cfg, &ds, &mut st.split)?;
        let problem = Problem::new(&ds, &split)?;
        let result = train(&problem, &variant, Algo::Dfa, false, &mut st.init)?;
        let o = outcome(vec![name.into()], seed, &result)?;
        log_run(name, seed, start, &o);
        Ok(o)
    })?;
    let report = Report::new(vec!["variant"], runs);
    report.write(&cfg.out, &provenance("ablate", cfg)?)?;
    Ok(report)
}

/// Trains BP and DFA on randomly perturbed graphs. Rate 0 (the clean graph)
/// is always included once per seed.
pub fn cmd_attack(cfg: &ExperimentConfig) -> Result<Report> {
    if cfg.split != SplitMode::Sparse20 {
        return Err(Error::Config("attack requires split=sparse20".into()));
    }
    cfg.validate()?;
    let ds = load(cfg)?;
    let kinds: Vec<Attack> = cfg.attack.map_or_else(|| Attack::ALL.to_vec(), |k| vec![k]);
    let mut cells: Vec<(Option<Attack>, f64)> = vec![(None, 0.0)];
    for &k in &kinds {
        cells.extend(cfg.rates.iter().filter(|&&r| r > 0.0).map(|&r| (Some(k), r)));
    }
    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        for &(kind, rate) in &cells {
            for algo in [Algo::Bp, Algo::Dfa] {
                jobs.push((seed, kind, rate, algo));
            }
        }
    }
    let runs = run_jobs(&jobs, |&(seed, kind, rate, algo)| {
        let start = Instant::now();
        let mut st = Streams::new(seed);
        let split = make_split(cfg, &ds, &mut st.split)?;
        let attacked = match kind {
            Some(k) => ds.with_graph(perturb(&ds.graph, k, rate, &mut st.attack)?)?,
            None => ds.clone(),
        };
        let problem = Problem::new(&attacked, &split)?;
        let result = train(&problem, cfg, algo, false, &mut st.init)?;
        let kind_name = kind.map_or("none", Attack::name);
        let o = outcome(vec![kind_name.into(), fmt_f64(rate), algo.name().into()], seed, &result)?;
        log_run(&format!("{kind_name} {rate} {}", algo.name()), seed, start, &o);
        Ok(o)
    })?;
    let report = Report::new(vec!["attack", "rate", "algo"], runs);
    report.write(&cfg.out, &provenance("attack", cfg)?)?;
    Ok(report)
}

/// Trains BP and DFA at each depth in `cfg.depths`.
pub fn cmd_depth(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let ds = load(cfg)?;
    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        for &depth in &cfg.depths {
            for algo in [Algo::Bp, Algo::Dfa] {
                jobs.push((seed, depth, algo));
            }
        }
    }
    let runs = run_jobs(&jobs, |&(seed, depth, algo)| {
        let start = Instant::now();
        let mut at_depth = cfg.clone();
        at_depth.layers = depth;
        at_depth.validate()?;
        let mut st = Streams::new(seed);
        let split = make_split(cfg, &ds, &mut st.split)?;
        let problem = Problem::new(&ds, &split)?;
        let result = train(&problem, &at_depth, algo, false, &mut st.init)?;
        let o = outcome(vec![depth.to_string(), algo.name().into()], seed, &result)?;
        log_run(&format!("depth {depth} {}", algo.name()), seed, start, &o);
        Ok(o)
    })?;
    let report = Report::new(vec!["layers", "algo"], runs);
    report.write(&cfg.out, &provenance("depth", cfg)?)?;
    Ok(report)
}
