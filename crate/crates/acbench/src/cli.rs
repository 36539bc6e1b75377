use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_structures, RunConfig};
use crate::error::{AppError, AppResult};
use crate::simulate;
use crate::stages::{self, Context, SweepRequest};

#[derive(Debug, Parser)]
#[command(name = "acbench", version, about = "Peer benchmarking of room air-conditioner energy performance")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for stage artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Comma-separated candidate structures, e.g. `lr-normal,svr-gkn`.
    #[arg(long, global = true)]
    pub structures: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract and filter operation segments.
    Ingest,
    /// Select, fit and residual-model a structure per room.
    Model,
    /// Group rooms by area and preferred set point.
    Cluster,
    /// Derive uniform conditions per cluster.
    Conditions,
    /// Stochastic benchmark scores.
    Score,
    /// Predict EPI over a grid of one factor.
    Sweep {
        #[arg(long)]
        factor: Option<String>,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Comma-separated room ids.
        #[arg(long, value_delimiter = ',')]
        rooms: Option<Vec<String>>,
    },
    /// Generate a synthetic fleet with known efficiencies.
    Simulate {
        /// Fleet description (TOML).
        #[arg(long)]
        fleet: PathBuf,
        /// Directory for the generated input files.
        #[arg(long, default_value = ".")]
        dir: PathBuf,
    },
    /// Every stage from ingest to report.
    Run,
    /// Summary tables.
    Report,
}

impl Global {
    pub fn config(&self) -> AppResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(s) = &self.structures {
            cfg.structures = parse_structures(s)?;
        }
        Ok(cfg)
    }
}

pub fn execute(cli: &Cli) -> AppResult<()> {
    if let Command::Simulate { fleet, dir } = &cli.command {
        let f = simulate::cmd_simulate(fleet, cli.global.seed, dir)?;
        println!("simulated {} rooms, {} segments into {}", f.rooms.len(), f.segments.len(), dir.display());
        return Ok(());
    }
    let ctx = Context::new(cli.global.config()?)?;
    match &cli.command {
        Command::Ingest => {
            let r = stages::cmd_ingest(&ctx)?;
            println!("kept {} rooms, {} segments", r.rooms_kept.len(), r.segments_kept);
        }
        Command::Model => {
            let m = stages::cmd_model(&ctx)?;
            for a in m.selection.adoption.iter().filter(|a| a.rooms > 0) {
                println!("{}: {} rooms", a.structure, a.rooms);
            }
        }
        Command::Cluster => {
            let c = stages::cmd_cluster(&ctx)?;
            println!("k = {}, silhouette {:.4}", c.clustering.k, c.clustering.silhouette);
        }
        Command::Conditions => {
            let c = stages::cmd_conditions(&ctx)?;
            println!("uniform conditions for {} clusters", c.len());
        }
        Command::Score => {
            let s = stages::cmd_score(&ctx)?;
            println!("scored {} rooms", s.reports.len());
        }
        Command::Sweep { factor, grid, rooms } => {
            let req = SweepRequest { factor: factor.clone(), grid: grid.clone(), rooms: rooms.clone() };
            let rows = stages::cmd_sweep(&ctx, &req)?;
            println!("wrote {} sweep points", rows.len());
        }
        Command::Run => stages::cmd_run(&ctx)?,
        Command::Report => crate::report::cmd_report(&ctx)?,
        Command::Simulate { .. } => unreachable!(),
    }
    Ok(())
}

/// Parse, run and map errors to a JSON line on stderr and an exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &AppError) -> i32 {
    eprintln!("{}", e.to_json());
    e.exit_code()
}
