use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dfagnn::cli::{
    cmd_ablate, cmd_align, cmd_attack, cmd_depth, cmd_train, Algo, ConfigPatch, ExperimentConfig,
    Report, SplitMode,
};
use dfagnn::graph::Attack;
use dfagnn::training::FreezeSchedule;
use dfagnn::{Error, Result};

#[derive(Parser)]
#[command(name = "dfagnn", version, about = "Train GCNs with backpropagation or direct feedback alignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm over several seeds.
    Train(Opts),
    /// Compare the DFA variants with and without pseudo errors and the node filter.
    Ablate(Opts),
    /// Train BP and DFA on randomly attacked graphs.
    Attack(Opts),
    /// Train BP and DFA at several depths.
    Depth(Opts),
    /// Record alignment angles during DFA training.
    Align(Opts),
}

#[derive(Args)]
struct Opts {
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    algo: Option<Algo>,
    /// JSON file with configuration fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use seeds 0..N.
    #[arg(long)]
    seed_count: Option<u64>,
    /// Explicit comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Learning rate for BP runs, when it should differ from --lr.
    #[arg(long)]
    bp_lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    error_generator: Option<bool>,
    #[arg(long)]
    node_filter: Option<bool>,
    #[arg(long)]
    modulate: Option<bool>,
    #[arg(long)]
    split: Option<SplitMode>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    val_size: Option<usize>,
    #[arg(long)]
    attack: Option<Attack>,
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    /// Freeze schedule as JSON, e.g. '[{"start":0,"frozen":[2]}]'.
    #[arg(long)]
    freeze: Option<String>,
    #[arg(long)]
    normalize_features: Option<bool>,
}

impl Opts {
    fn patch(&self) -> Result<ConfigPatch> {
        let freeze = match &self.freeze {
            Some(text) => Some(
                serde_json::from_str::<FreezeSchedule>(text)
                    .map_err(|e| Error::Config(format!("--freeze: {e}")))?,
            ),
            None => None,
        };
        let seeds = match (&self.seeds, self.seed_count) {
            (Some(s), _) => Some(s.clone()),
            (None, Some(n)) => Some((0..n).collect()),
            (None, None) => None,
        };
        Ok(ConfigPatch {
            data: self.data.clone(),
            algo: self.algo,
            layers: self.layers,
            hidden: self.hidden,
            lr: self.lr,
            bp_lr: self.bp_lr,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            alpha: self.alpha,
            iterations: self.iterations,
            epsilon: self.epsilon,
            error_generator: self.error_generator,
            node_filter: self.node_filter,
            modulate: self.modulate,
            seeds,
            split: self.split,
            per_class: self.per_class,
            val_size: self.val_size,
            attack: self.attack,
            rates: self.rates.clone(),
            depths: self.depths.clone(),
            freeze,
            normalize_features: self.normalize_features,
            out: self.out.clone(),
        })
    }

    /// Dataset defaults, then command defaults, then the config file, then
    /// flags.
    fn resolve(&self, attack_command: bool) -> Result<ExperimentConfig> {
        let file = match &self.config {
            Some(p) => ConfigPatch::load(p)?,
            None => ConfigPatch::default(),
        };
        let cli = self.patch()?;
        let data = cli
            .data
            .clone()
            .or_else(|| file.data.clone())
            .ok_or_else(|| Error::Config("no dataset given; pass --data DIR".into()))?;
        let mut cfg = ExperimentConfig::for_dataset(&data);
        if attack_command {
            cfg.split = SplitMode::Sparse20;
            cfg.seeds = (0..5).collect();
        }
        cfg.apply(file);
        cfg.apply(cli);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<Report> {
    match cli.command {
        Command::Train(o) => cmd_train(&o.resolve(false)?),
        Command::Ablate(o) => cmd_ablate(&o.resolve(false)?),
        Command::Attack(o) => cmd_attack(&o.resolve(true)?),
        Command::Depth(o) => cmd_depth(&o.resolve(false)?),
        Command::Align(o) => cmd_align(&o.resolve(false)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(report) => {
            for (key, s) in &report.summary {
                let ci = s.ci95.map_or(String::new(), |c| format!(" ± {:.2}", 100.0 * c));
                println!("{}: {:.2}{ci} (n={})", key.join(" "), 100.0 * s.mean, s.n);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
