use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use aoi_uav::baselines::{reinforce_train, GreedyPolicy};
use aoi_uav::drl::train;
use aoi_uav::env::{write_trace_csv, Environment, Policy};
use aoi_uav::harness::{run_experiment, Experiment, ExperimentSpec, HarnessError, PolicyKind};
use aoi_uav::scenario::{load_config, ScenarioConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aoi-uav-sim", version, about = "AoI-driven UAV sensing and transmission simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV.
    Run(RunArgs),
    /// Play one episode of a policy and write the per-frame trace.
    Trace(TraceArgs),
}

#[derive(Args)]
struct Common {
    /// Flat `key: value` config file; absent keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cap each allocation term at the UAV's remaining data.
    #[arg(long)]
    cap_objective: bool,
    /// Soft target update rate.
    #[arg(long)]
    nu: Option<f64>,
    /// Training episodes.
    #[arg(long)]
    episodes: Option<usize>,
    /// Frames per episode.
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    experiment: String,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated policies: ddpg, greedy, reinforce.
    #[arg(long, value_delimiter = ',')]
    policy: Vec<String>,
    /// Comma-separated UAV counts for compare_policies.
    #[arg(long, value_delimiter = ',')]
    uav_counts: Vec<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long, default_value = "greedy")]
    policy: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

fn build_config(c: &Common) -> Result<ScenarioConfig, HarnessError> {
    let mut cfg = match &c.config {
        Some(path) => load_config(path)?,
        None => ScenarioConfig::default(),
    };
    if c.cap_objective {
        cfg.cap_objective = true;
    }
    if let Some(nu) = c.nu {
        cfg.nu = nu;
    }
    if let Some(e) = c.episodes {
        cfg.n_epi = e;
    }
    if let Some(f) = c.frames {
        cfg.n_f = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<(), HarnessError> {
    let experiment: Experiment = args.experiment.parse()?;
    let config = build_config(&args.common)?;
    let mut spec = ExperimentSpec::new(experiment, config, args.seeds, args.out);
    if !args.policy.is_empty() {
        spec.policies = args
            .policy
            .iter()
            .map(|p| p.parse())
            .collect::<Result<_, _>>()?;
    }
    if !args.uav_counts.is_empty() {
        spec.uav_counts = args.uav_counts;
    }
    for path in run_experiment(&spec)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn trace(args: TraceArgs) -> Result<(), HarnessError> {
    let config = build_config(&args.common)?;
    let kind: PolicyKind = args.policy.parse()?;
    let mut env = Environment::new(&config, args.seed)?;
    let mut policy: Box<dyn FnMut(&mut Environment) -> Result<(), HarnessError>> = match kind {
        PolicyKind::Greedy => {
            let mut p = GreedyPolicy::new(&config);
            Box::new(move |env| play(env, &mut p))
        }
        PolicyKind::Ddpg => {
            let mut p = train(&mut env, args.seed)?.policy(&config);
            Box::new(move |env| play(env, &mut p))
        }
        PolicyKind::Reinforce => {
            let mut p = reinforce_train(&mut env, args.seed)?.policy(&config);
            Box::new(move |env| play(env, &mut p))
        }
    };
    env.reset();
    env.record_trace();
    policy(&mut env)?;
    let rows = env.take_trace();
    let file = File::create(&args.out).map_err(|source| HarnessError::Io {
        path: args.out.clone(),
        source,
    })?;
    write_trace_csv(&rows, BufWriter::new(file))?;
    println!("{}", args.out.display());
    Ok(())
}

fn play(env: &mut Environment, policy: &mut impl Policy) -> Result<(), HarnessError> {
    for _ in 0..env.config().n_f {
        let actions = env.actions_from(policy);
        env.step(&actions)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Trace(a) => trace(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::from(2)
        }
    }
}
