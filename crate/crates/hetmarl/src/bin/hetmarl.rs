//! Thin command-line front end. All real work lives in the library's
//! harness module; this file only parses flags, maps them onto the flat
//! config vocabulary, and translates errors into exit codes:
//! 0 success, 1 usage or configuration error, 2 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use hetmarl::error::{Error, Result};
use hetmarl::harness::{
    emit_plot, parse_config, run_baseline, run_eval, run_gradcheck, run_train,
    DEFAULT_SMOOTHING, GRADCHECK_TOLERANCE,
};
use hetmarl::trainer::TrainConfig;

#[derive(Parser)]
#[command(
    name = "hetmarl",
    version,
    about = "Heterogeneous multi-agent Q-learning on a desk-scale skirmish"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write metrics, checkpoints, and a manifest
    Train(TrainArgs),
    /// Evaluate a saved checkpoint greedily
    Eval(EvalArgs),
    /// Evaluate the uniform-random policy under the same schema
    Baseline(BaselineArgs),
    /// Render SVG learning curves from a metrics file
    Plot(PlotArgs),
    /// Audit analytic gradients against central differences
    Gradcheck(GradcheckArgs),
}

/// Every key of the flat config vocabulary as an explicit typed flag.
/// Booleans take a literal value (`--trr true`) so a config file and a
/// command line read the same way. Flags win over file keys.
#[derive(Args)]
struct ConfigArgs {
    /// Flat JSON config file; flags override its keys
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    total_steps: Option<usize>,
    #[arg(long)]
    target_update_interval: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    l2_coef: Option<f64>,
    #[arg(long)]
    trr_coef: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon_max: Option<f64>,
    #[arg(long)]
    epsilon_min: Option<f64>,
    #[arg(long)]
    per_alpha: Option<f64>,
    #[arg(long)]
    per_beta: Option<f64>,
    #[arg(long)]
    anneal_beta: Option<bool>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    buffer_capacity: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    trr: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    /// Message-passing stack: "rgcn" or "gat"
    #[arg(long)]
    comms: Option<String>,
    #[arg(long)]
    bases: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    frf: Option<bool>,
    #[arg(long)]
    fac: Option<bool>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    step_limit: Option<u32>,
    #[arg(long)]
    obs_radius: Option<f64>,
    #[arg(long)]
    allies_ranged: Option<usize>,
    #[arg(long)]
    allies_melee: Option<usize>,
    #[arg(long)]
    enemies_ranged: Option<usize>,
    #[arg(long)]
    enemies_melee: Option<usize>,
}

fn put(out: &mut Vec<(String, Value)>, key: &str, value: Option<Value>) {
    if let Some(v) = value {
        out.push((key.to_string(), v));
    }
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(String, Value)> {
        let mut o = Vec::new();
        put(&mut o, "total_steps", self.total_steps.map(Value::from));
        put(
            &mut o,
            "target_update_interval",
            self.target_update_interval.map(Value::from),
        );
        put(&mut o, "lr", self.lr.map(Value::from));
        put(&mut o, "l2_coef", self.l2_coef.map(Value::from));
        put(&mut o, "trr_coef", self.trr_coef.map(Value::from));
        put(&mut o, "gamma", self.gamma.map(Value::from));
        put(&mut o, "epsilon_max", self.epsilon_max.map(Value::from));
        put(&mut o, "epsilon_min", self.epsilon_min.map(Value::from));
        put(&mut o, "per_alpha", self.per_alpha.map(Value::from));
        put(&mut o, "per_beta", self.per_beta.map(Value::from));
        put(&mut o, "anneal_beta", self.anneal_beta.map(Value::from));
        put(&mut o, "batch_size", self.batch_size.map(Value::from));
        put(&mut o, "buffer_capacity", self.buffer_capacity.map(Value::from));
        put(&mut o, "warmup", self.warmup.map(Value::from));
        put(&mut o, "trr", self.trr.map(Value::from));
        put(&mut o, "seed", self.seed.map(Value::from));
        put(&mut o, "comms", self.comms.as_deref().map(Value::from));
        put(&mut o, "bases", self.bases.map(Value::from));
        put(&mut o, "heads", self.heads.map(Value::from));
        put(&mut o, "frf", self.frf.map(Value::from));
        put(&mut o, "fac", self.fac.map(Value::from));
        put(&mut o, "width", self.width.map(Value::from));
        put(&mut o, "height", self.height.map(Value::from));
        put(&mut o, "step_limit", self.step_limit.map(Value::from));
        put(&mut o, "obs_radius", self.obs_radius.map(Value::from));
        put(&mut o, "allies_ranged", self.allies_ranged.map(Value::from));
        put(&mut o, "allies_melee", self.allies_melee.map(Value::from));
        put(&mut o, "enemies_ranged", self.enemies_ranged.map(Value::from));
        put(&mut o, "enemies_melee", self.enemies_melee.map(Value::from));
        o
    }

    fn resolve(&self) -> Result<TrainConfig> {
        parse_config(self.config.as_deref(), &self.overrides(), env_seed()?)
    }
}

/// `HETMARL_SEED` is the weakest seed source: any `seed` key from a file or
/// flag wins. An unreadable value is a configuration error.
fn env_seed() -> Result<Option<u64>> {
    match std::env::var("HETMARL_SEED") {
        Ok(s) => s.trim().parse::<u64>().map(Some).map_err(|_| {
            Error::Config(format!(
                "HETMARL_SEED must be a non-negative integer, got \"{s}\""
            ))
        }),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::Config(format!("HETMARL_SEED is not readable: {e}"))),
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Run directory for run_manifest.json, metrics.csv, and checkpoints
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Parameters to load; the config must describe the same architecture
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    /// Directory for eval.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    /// Directory for eval.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// metrics.csv or eval.csv to read
    #[arg(long)]
    metrics: PathBuf,
    /// SVG file to write
    #[arg(long, default_value = "plots/curves.svg")]
    out: PathBuf,
    /// Exponential smoothing factor in [0, 1)
    #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
    smoothing: f64,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    seed: Option<u64>,
}

fn cmd_train(args: &TrainArgs) -> Result<ExitCode> {
    let cfg = args.config.resolve()?;
    let report = run_train(&cfg, &args.out, true)?;
    println!(
        "trained {} steps: {} episodes, {} optimizer steps, {} target syncs",
        report.env_steps, report.episodes, report.optimizer_steps, report.target_syncs
    );
    println!("wrote {}", args.out.join("metrics.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: &EvalArgs) -> Result<ExitCode> {
    let cfg = args.config.resolve()?;
    let report = run_eval(&cfg, &args.checkpoint, args.episodes, cfg.seed, &args.out)?;
    println!(
        "{} episodes: mean steps {:.2}, mean agent reward {:.4}",
        report.episodes, report.mean_steps, report.mean_reward
    );
    println!("wrote {}", args.out.join("eval.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_baseline(args: &BaselineArgs) -> Result<ExitCode> {
    let cfg = args.config.resolve()?;
    let report = run_baseline(&cfg, args.episodes, cfg.seed, &args.out)?;
    println!(
        "random policy over {} episodes: mean steps {:.2}, mean agent reward {:.4}",
        report.episodes, report.mean_steps, report.mean_reward
    );
    println!("wrote {}", args.out.join("eval.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_plot(args: &PlotArgs) -> Result<ExitCode> {
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    emit_plot(&args.metrics, &args.out, args.smoothing)?;
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<ExitCode> {
    let seed = match args.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let suites = run_gradcheck(seed)?;
    let mut worst = 0.0f64;
    for s in &suites {
        println!(
            "{:<10} max rel err {:.3e} over {} elements (worst: {})",
            s.name, s.max_rel_err, s.elements_checked, s.worst_param
        );
        worst = worst.max(s.max_rel_err);
    }
    if worst > GRADCHECK_TOLERANCE {
        eprintln!("gradient audit failed: {worst:.3e} exceeds {GRADCHECK_TOLERANCE:.0e}");
        return Ok(ExitCode::from(2));
    }
    println!("all suites within {GRADCHECK_TOLERANCE:.0e}");
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors; true usage mistakes
            // exit 1 to stay distinct from runtime failures.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Json(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
