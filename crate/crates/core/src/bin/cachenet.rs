use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cachenet::experiment::{self, write_bundle, Bundle, ExperimentConfig, Format};
use cachenet::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cachenet",
    version,
    about = "TTL cache network analysis, optimization and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to the config's `output` or `out/<command>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for simulations and the online controller.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Requests per simulation replication and online run.
    #[arg(long, global = true)]
    horizon: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Map a timer field to hit probabilities or back.
    Analyze,
    /// Solve the centralized program.
    Solve,
    /// Run the online primal controller.
    Online,
    /// Run the distributed primal-dual algorithm.
    PrimalDual,
    /// Simulate the optimized TTL caches or an eviction baseline.
    Simulate,
    /// Compare eviction baselines with optimized MCDP.
    Compare,
    /// Rebuild one figure bundle.
    Reproduce {
        #[arg(value_parser = experiment::FIGURES)]
        figure: String,
    },
}

impl Command {
    fn name(&self) -> String {
        match self {
            Command::Analyze => "analyze".into(),
            Command::Solve => "solve".into(),
            Command::Online => "online".into(),
            Command::PrimalDual => "primal-dual".into(),
            Command::Simulate => "simulate".into(),
            Command::Compare => "compare".into(),
            Command::Reproduce { figure } => figure.clone(),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match (&cli.config, &cli.command) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Command::Reproduce { figure }) => experiment::preset(figure)?,
        (None, _) => return Err(Error::Config("--config is required".into())),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(n) = cli.horizon {
        cfg.set_horizon(n);
    }
    let bundle: Bundle = match &cli.command {
        Command::Analyze => experiment::analyze(&cfg)?,
        Command::Solve => experiment::solve_cmd(&cfg)?,
        Command::Online => experiment::online(&cfg)?,
        Command::PrimalDual => experiment::primal_dual(&cfg)?,
        Command::Simulate => experiment::simulate(&cfg)?,
        Command::Compare => experiment::compare(&cfg)?,
        Command::Reproduce { figure } => experiment::reproduce(figure, &cfg)?,
    };
    let dir = cli
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cli.command.name()));
    let files = write_bundle(&dir, &bundle, &cfg.header(), cli.format)?;
    println!("{}", serde_json::to_string_pretty(&bundle.summary)?);
    for f in files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CACHENET_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
