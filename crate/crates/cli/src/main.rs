mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use procattn::explain::CellIndexing;
use procattn::metrics::F1Average;
use procattn::prestudy::{JsdScope, Pairing};
use procattn::transformer::AttentionMode;

use config::{LogFormat, Method, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "procattn",
    version,
    about = "Attention-based explanations for next-activity prediction"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    log: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<LogFormat>,
    #[arg(long, global = true)]
    case_col: Option<String>,
    #[arg(long, global = true)]
    activity_col: Option<String>,
    #[arg(long, global = true)]
    time_col: Option<String>,
    #[arg(long, global = true)]
    lifecycle_col: Option<String>,
    /// Keep only events whose activity starts with this text.
    #[arg(long, global = true)]
    activity_prefix: Option<String>,
    /// Keep only events with this lifecycle transition.
    #[arg(long, global = true)]
    lifecycle: Option<String>,
    /// Model checkpoint to write (train) or read (everything else).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// File with one comma-separated prefix per line.
    #[arg(long, global = true)]
    prefixes: Option<PathBuf>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    train_frac: Option<f64>,
    /// Worker threads; 1 keeps every output reproducible.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    heads: Option<usize>,
    #[arg(long, global = true)]
    d_k: Option<usize>,
    #[arg(long, global = true)]
    ff_dim: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    max_len: Option<usize>,
    #[arg(long, global = true)]
    pad_dropout: Option<f64>,
    #[arg(long, global = true, value_parser = parse_attention_mode)]
    attention_mode: Option<AttentionMode>,
    #[arg(long, global = true)]
    delta_sim: Option<f64>,
    #[arg(long, global = true)]
    delta_attr: Option<f64>,
    #[arg(long, global = true)]
    delta_pred: Option<f64>,
    #[arg(long, global = true)]
    delta_edge: Option<f64>,
    #[arg(long, global = true)]
    sim_eps: Option<f64>,
    #[arg(long, global = true)]
    n_mods: Option<usize>,
    #[arg(long, global = true)]
    subset_cap: Option<usize>,
    #[arg(long, global = true)]
    sample_frac: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Print log statistics.
    Stats,
    /// Generate a synthetic log from a process tree.
    Synth {
        /// Process tree, e.g. "seq(A, xor(B, C), D)".
        #[arg(long)]
        tree: Option<String>,
        /// Specification file with `tree = ...` and optional `redo_prob = ...`.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        traces: Option<usize>,
        #[arg(long)]
        redo_prob: Option<f64>,
    },
    /// Train a model on the training split and score it on the test split.
    Train,
    /// Run one of the pre-study experiments.
    Prestudy {
        #[command(subcommand)]
        which: Experiment,
    },
    /// Build an explanation graph.
    Explain {
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Keep shortcut edges in the backward explainer.
        #[arg(long)]
        no_prune: bool,
        #[arg(long, value_parser = parse_cell_indexing)]
        cell_indexing: Option<CellIndexing>,
    },
    /// Score an explainer with the five explanation metrics.
    Evaluate {
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long, value_parser = parse_average)]
        average: Option<F1Average>,
        #[arg(long)]
        no_prune: bool,
    },
    /// Export the attention matrices of one prefix.
    Heatmap {
        /// Comma-separated activity labels.
        #[arg(long)]
        prefix: Option<String>,
    },
}

#[derive(Subcommand, Clone, Copy)]
enum Experiment {
    /// Learned versus frozen-uniform attention.
    Exp1 {
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long, value_parser = parse_pairing)]
        pairing: Option<Pairing>,
        #[arg(long, value_parser = parse_scope)]
        scope: Option<JsdScope>,
    },
    /// Masked input versus masked attention.
    Exp2,
}

fn parse_kebab<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

fn parse_attention_mode(s: &str) -> Result<AttentionMode, String> {
    parse_kebab(s)
}

fn parse_cell_indexing(s: &str) -> Result<CellIndexing, String> {
    parse_kebab(s)
}

fn parse_average(s: &str) -> Result<F1Average, String> {
    parse_kebab(s)
}

fn parse_pairing(s: &str) -> Result<Pairing, String> {
    parse_kebab(s)
}

fn parse_scope(s: &str) -> Result<JsdScope, String> {
    parse_kebab(s)
}

fn set<T>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if c.log.is_some() {
        cfg.log = c.log.clone();
    }
    if c.format.is_some() {
        cfg.format = c.format;
    }
    set(&mut cfg.case_col, c.case_col.clone());
    set(&mut cfg.activity_col, c.activity_col.clone());
    set(&mut cfg.time_col, c.time_col.clone());
    if c.lifecycle_col.is_some() {
        cfg.lifecycle_col = c.lifecycle_col.clone();
    }
    if c.activity_prefix.is_some() {
        cfg.activity_prefix = c.activity_prefix.clone();
    }
    if c.lifecycle.is_some() {
        cfg.lifecycle = c.lifecycle.clone();
    }
    if c.model.is_some() {
        cfg.model = c.model.clone();
    }
    if c.prefixes.is_some() {
        cfg.prefixes = c.prefixes.clone();
    }
    set(&mut cfg.out_dir, c.out_dir.clone());
    set(&mut cfg.seed, c.seed);
    set(&mut cfg.train_frac, c.train_frac);
    set(&mut cfg.threads, c.threads);
    let t = &mut cfg.transformer;
    set(&mut t.epochs, c.epochs);
    set(&mut t.heads, c.heads);
    set(&mut t.d_k, c.d_k);
    set(&mut t.ff_dim, c.ff_dim);
    set(&mut t.batch_size, c.batch_size);
    set(&mut t.learning_rate, c.learning_rate);
    set(&mut t.max_len, c.max_len);
    set(&mut t.pad_dropout, c.pad_dropout);
    set(&mut t.attention_mode, c.attention_mode);
    t.seed = cfg.seed;
    let th = &mut cfg.thresholds;
    set(&mut th.delta_sim, c.delta_sim);
    set(&mut th.delta_attr, c.delta_attr);
    set(&mut th.delta_pred, c.delta_pred);
    if c.delta_edge.is_some() {
        th.delta_edge = c.delta_edge;
    }
    set(&mut th.sim_eps, c.sim_eps);
    set(&mut cfg.explain.n_mods, c.n_mods);
    set(&mut cfg.explain.subset_cap, c.subset_cap);
    set(&mut cfg.evaluate.sample_frac, c.sample_frac);
    match &cli.command {
        Command::Synth {
            tree,
            spec,
            traces,
            redo_prob,
        } => {
            if tree.is_some() {
                cfg.synth.tree = tree.clone();
            }
            if spec.is_some() {
                cfg.synth.spec = spec.clone();
            }
            set(&mut cfg.synth.traces, *traces);
            if redo_prob.is_some() {
                cfg.synth.redo_prob = *redo_prob;
            }
        }
        Command::Prestudy {
            which:
                Experiment::Exp1 {
                    repeats,
                    pairing,
                    scope,
                },
        } => {
            set(&mut cfg.prestudy.repeats, *repeats);
            set(&mut cfg.prestudy.pairing, *pairing);
            set(&mut cfg.prestudy.scope, *scope);
        }
        Command::Explain {
            method,
            no_prune,
            cell_indexing,
        } => {
            set(&mut cfg.explain.method, *method);
            set(&mut cfg.explain.cell_indexing, *cell_indexing);
            if *no_prune {
                cfg.explain.prune = false;
            }
        }
        Command::Evaluate {
            method,
            average,
            no_prune,
        } => {
            set(&mut cfg.explain.method, *method);
            set(&mut cfg.evaluate.average, *average);
            if *no_prune {
                cfg.explain.prune = false;
            }
        }
        Command::Heatmap { prefix: Some(prefix) } => cfg.heatmap_prefix = Some(prefix.clone()),
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.max(1))
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    match cli.command {
        Command::Stats => commands::stats(&cfg),
        Command::Synth { .. } => commands::synth(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Prestudy {
            which: Experiment::Exp1 { .. },
        } => commands::exp1(&cfg),
        Command::Prestudy {
            which: Experiment::Exp2,
        } => commands::exp2(&cfg),
        Command::Explain { .. } => commands::explain(&cfg),
        Command::Evaluate { .. } => commands::evaluate(&cfg),
        Command::Heatmap { .. } => commands::heatmap(&cfg),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
