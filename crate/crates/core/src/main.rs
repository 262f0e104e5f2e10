use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use gnnevo::evolution::Strategy;
use gnnevo::genome::Task;
use gnnevo::harness::{self, EvaluatorKind, HarnessError, RunConfig, Toggle};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "gnnevo", version, about = "Evolutionary architecture search for graph neural networks")]
struct Cli {
    /// Master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parallel evaluations
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// One evaluation at a time; makes history logs reproducible byte for byte
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an architecture search
    Search {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for history.jsonl, timing.jsonl and result.json
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate one genome
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        genome: PathBuf,
        /// Write the trained parameters here
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Tune the training hyperparameters of one genome
    Tune {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        genome: PathBuf,
        /// Output directory for trials.jsonl
        #[arg(long)]
        out: PathBuf,
    },
    /// Running-best curves of several strategies over several seeds
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated strategies
        #[arg(long, value_delimiter = ',', value_parser = parse_enum::<Strategy>, default_value = "evolution,random")]
        strategies: Vec<Strategy>,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a history log
    Report {
        history: PathBuf,
        /// Also write the report here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the configured SBM fixture as a dataset bundle
    GenerateSbm {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the resolved configuration as TOML
    ShowConfig {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted override, e.g. --set hyperparams.lr=0.005 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long, value_parser = parse_enum::<Strategy>)]
    strategy: Option<Strategy>,
    #[arg(long, value_parser = parse_enum::<Toggle>)]
    tuning: Option<Toggle>,
    #[arg(long, value_parser = parse_enum::<EvaluatorKind>)]
    evaluator: Option<EvaluatorKind>,
    #[arg(long)]
    population_size: Option<usize>,
    #[arg(long)]
    sample_size: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    max_layers: Option<usize>,
    #[arg(long)]
    param_cap: Option<usize>,
    /// Dataset bundle directory
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_parser = parse_enum::<Task>)]
    task: Option<Task>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_trials: Option<usize>,
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

impl ConfigArgs {
    fn resolve(&self, cli: &Cli) -> Result<RunConfig, HarnessError> {
        let mut cfg = RunConfig::load(self.config.as_deref(), &self.sets)?;
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$($field).+ = v.into(); })*
            };
        }
        set!(
            strategy => strategy,
            tuning => tuning,
            evaluator => evaluator,
            population_size => population_size,
            budget => budget,
            max_layers => max_layers,
            param_cap => param_cap,
            lr => hyperparams.lr,
            weight_decay => hyperparams.weight_decay,
            dropout => hyperparams.dropout,
            max_epochs => hyperparams.max_epochs,
            patience => hyperparams.patience,
            max_trials => tuner.max_trials,
        );
        if self.sample_size.is_some() {
            cfg.sample_size = self.sample_size;
        }
        if self.dataset.is_some() {
            cfg.dataset = self.dataset.clone();
        }
        if self.task.is_some() {
            cfg.task = self.task;
        }
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        if let Some(w) = cli.workers {
            cfg.workers = w;
        }
        if cli.sequential {
            cfg.workers = 1;
        }
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Search { config, out } => print_json(&harness::cmd_search(&config.resolve(cli)?, out)?),
        Command::Train {
            config,
            genome,
            model_out,
        } => print_json(&harness::cmd_train(&config.resolve(cli)?, genome, model_out.as_deref())?),
        Command::Tune { config, genome, out } => print_json(&harness::cmd_tune(&config.resolve(cli)?, genome, out)?),
        Command::Compare {
            config,
            strategies,
            seeds,
            out,
        } => print_json(&harness::cmd_compare(&config.resolve(cli)?, strategies, *seeds, out)?),
        Command::Report { history, out } => {
            let doc = harness::cmd_report(history)?;
            if let Some(path) = out {
                let text = serde_json::to_string_pretty(&doc)? + "\n";
                std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            }
            print_json(&doc)
        }
        Command::GenerateSbm { config, out } => print_json(&harness::cmd_generate_sbm(&config.resolve(cli)?, out)?),
        Command::ShowConfig { config } => {
            let cfg = config.resolve(cli)?;
            cfg.validate()?;
            match write!(std::io::stdout().lock(), "{}", cfg.to_toml()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = err.downcast_ref::<HarnessError>().map_or("error", HarnessError::kind);
            let line = serde_json::json!({ "error": { "kind": kind, "message": format!("{err:#}") } });
            eprintln!("{line}");
            ExitCode::from(if kind == "config" { 2 } else { 1 })
        }
    }
}
