use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rentsim::config::{fixture_config_toml, RunConfig};
use rentsim::pipeline::{self, Inputs};
use rentsim_core::scenario::{accuracy_by_distance, read_pairs};
use rentsim_core::synthcity;

#[derive(Parser)]
#[command(name = "rentsim", version, about = "Residence choice simulator for renter households")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the base pipeline (and the config's scenario, if any).
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a scenario against the config's base run and write the diff.
    Scenario {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Print the accuracy-by-distance curve for (actual, simulated) zone pairs.
    Validate {
        #[arg(long)]
        pairs: PathBuf,
        /// run config naming the world the zone ids refer to
        #[arg(long, default_value = "run.toml")]
        config: PathBuf,
        /// comma separated band edges in km, ascending from 0
        #[arg(long, value_delimiter = ',', default_value = "0,1,2.5,5,10,20")]
        edges: Vec<f64>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Generate the synthetic city fixture.
    Synthcity {
        #[arg(long, default_value_t = 60)]
        zones: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run_pipeline(config: &RunConfig) -> anyhow::Result<()> {
    let artifact = pipeline::execute(config)?;
    let m = &artifact.manifest;
    let state = if artifact.fresh { "written" } else { "already present" };
    println!("run {} {state}: {}", artifact.run_id, artifact.dir.display());
    println!("agents {}, unhoused {}", m.n_agents, m.unhoused);
    if let Some(u) = m.scenario_unhoused {
        println!("scenario {:?}: unhoused {u}", m.scenario.as_deref().unwrap_or(""));
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate { config } => run_pipeline(&RunConfig::load(&config)?),
        Command::Scenario { config, scenario } => {
            let cfg = RunConfig::load(&config)?.with_scenario(Some(scenario));
            run_pipeline(&cfg)
        }
        Command::Validate { pairs, config, edges } => {
            let cfg = RunConfig::load(&config)?.with_scenario(None);
            let inputs = Inputs::load(&cfg)?;
            let pairs = read_pairs(&pairs)?;
            let curve = accuracy_by_distance(&pairs, &inputs.world, &edges)?;
            println!("edge_km,share");
            for (e, s) in edges.iter().zip(curve) {
                println!("{e},{s}");
            }
            Ok(())
        }
        Command::Serve { config, addr } => {
            let cfg = RunConfig::load(&config)?;
            let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
            rt.block_on(rentsim::service::serve(&cfg, addr))
        }
        Command::Synthcity { zones, seed, out } => {
            if zones == 0 {
                bail!("--zones must be > 0");
            }
            let city = synthcity::generate(zones, seed)?;
            synthcity::write(&city, &out)?;
            let cfg = out.join("run.toml");
            std::fs::write(&cfg, fixture_config_toml(None)).with_context(|| cfg.display().to_string())?;
            println!("wrote {} zones to {}", city.world.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
