//! Helpers around `tune`: synthetic inputs, trace comparison and a
//! simulator served over the controller protocol.

use std::net::TcpListener;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use knobtune::config_space::ConfigSpace;
use knobtune::executor::{serve_simulator, SimModel};
use knobtune::synthetic::{synthetic_space, synthetic_workload};
use knobtune::trace::{compare_runs, load_trace, Speedup};
use knobtune::workload::load_workload;

#[derive(Debug, Parser)]
#[command(name = "tune-tools", version, about = "Utilities for knob tuning sessions")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic `space.json` and `workload.json`.
    GenSynthetic {
        #[arg(long, default_value_t = 12)]
        knobs: usize,
        #[arg(long, default_value_t = 60)]
        queries: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare trace A against reference trace B.
    Compare { a: PathBuf, b: PathBuf },
    /// Answer controller requests from a seeded simulator.
    ServeSim {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        workload: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Exit after this many connections.
        #[arg(long)]
        connections: Option<usize>,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KNOBTUNE_LOG", "info")).init();
    match Args::parse().command {
        Command::GenSynthetic {
            knobs,
            queries,
            seed,
            out,
        } => {
            std::fs::create_dir_all(&out)?;
            let space = synthetic_space(knobs, seed);
            let workload = synthetic_workload(queries, seed);
            std::fs::write(out.join("space.json"), space.to_json_string())?;
            std::fs::write(
                out.join("workload.json"),
                serde_json::to_string_pretty(&workload.to_entries())?,
            )?;
            println!("wrote {} and {}", out.join("space.json").display(), out.join("workload.json").display());
        }
        Command::Compare { a, b } => {
            let ta = load_trace(&a).with_context(|| format!("reading {}", a.display()))?;
            let tb = load_trace(&b).with_context(|| format!("reading {}", b.display()))?;
            let c = compare_runs(&ta, &tb)?;
            let speedup = match c.time_to_optimal_speedup {
                Speedup::Reached(s) => format!("{s:.3}x"),
                Speedup::NotReached => "not reached".to_string(),
            };
            println!("final_improvement_pct={:.3}", 100.0 * c.final_improvement);
            println!("time_to_optimal_speedup={speedup}");
        }
        Command::ServeSim {
            space,
            workload,
            seed,
            listen,
            connections,
        } => {
            let space = ConfigSpace::load(&space)?;
            let workload = load_workload(&workload)?;
            let model = SimModel::generate(&workload, &space, seed);
            let listener = TcpListener::bind(&listen).with_context(|| format!("binding {listen}"))?;
            log::info!("serving simulator seed {seed} on {}", listener.local_addr()?);
            serve_simulator(listener, &model, &workload, connections)?;
        }
    }
    Ok(())
}
