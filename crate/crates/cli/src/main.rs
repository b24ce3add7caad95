mod config;
mod run;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand as ClapSubcommand};
use serde_json::json;

use config::{RunConfig, Subcommand};
use run::Failure;

/// Environment variable capping the worker count.
const MAX_WORKERS_VAR: &str = "REFLECTVOL_MAX_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "reflectvol", version = reflectvol::VERSION, about = "Reflected stochastic volatility experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides output.directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Replaces every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(ClapSubcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Monte Carlo estimates of a path statistic over the eps list.
    Simulate,
    /// Rate function value and minimizer.
    Rate,
    /// Monte Carlo option prices over the eps list.
    Price,
    /// Compare the Monte Carlo decay with the variational rate.
    LdpCheck,
    /// Exact-property suites.
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Rate => "rate",
            Command::Price => "price",
            Command::LdpCheck => "ldp-check",
            Command::Selftest => "selftest",
        }
    }

    fn resolved(self) -> Option<Subcommand> {
        match self {
            Command::Simulate => Some(Subcommand::Simulate),
            Command::Rate => Some(Subcommand::Rate),
            Command::Price => Some(Subcommand::Price),
            Command::LdpCheck => Some(Subcommand::LdpCheck),
            Command::Selftest => None,
        }
    }
}

fn workers(requested: Option<usize>) -> Result<usize, Failure> {
    let mut n = match requested {
        Some(0) => return Err(Failure::Validation("--workers must be positive".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    if let Ok(cap) = std::env::var(MAX_WORKERS_VAR) {
        let cap: usize = cap
            .parse()
            .ok()
            .filter(|c| *c > 0)
            .ok_or_else(|| Failure::Validation(format!("{MAX_WORKERS_VAR} must be a positive integer")))?;
        n = n.min(cap);
    }
    Ok(n)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let start = Instant::now();
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let n_workers = workers(cli.workers)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n_workers)
        .build_global()
        .map_err(|e| Failure::Validation(format!("thread pool: {e}")))?;

    let loaded = cli.config.as_ref().map(|p| config::load(p));
    let mut cfg: Option<RunConfig> = loaded.as_ref().and_then(|l| l.as_ref().ok().cloned());
    if let (Some(c), Some(seed)) = (cfg.as_mut(), cli.seed) {
        c.override_seed(seed);
    }
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.as_ref().map(|c| c.output.directory.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Some(c) = cfg.as_mut() {
        c.output.directory = dir.clone();
    }
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Validation(format!("{}: {e}", dir.display())))?;

    let mut resolved = None;
    let result = (|| {
        if let Some(Err(e)) = &loaded {
            return Err(Failure::Validation(e.clone()));
        }
        let Some(cmd) = cli.command.resolved() else {
            let seed = cli.seed.or(cfg.as_ref().and_then(|c| c.mc.as_ref().map(|m| m.seed))).unwrap_or(0x5eed);
            let (body, ok) = selftest::run(seed);
            let file = run::write_json(&dir, "selftest.json", &body)?;
            return if ok { Ok(vec![file]) } else { Err(Failure::Numerical("selftest failed".into())) };
        };
        let c = cfg.as_ref().ok_or_else(|| Failure::Validation("--config is required".into()))?;
        let r = resolved.insert(c.resolve(cmd).map_err(Failure::Validation)?);
        match cmd {
            Subcommand::Simulate => run::simulate(r, &dir),
            Subcommand::Rate => run::rate(r, &dir),
            Subcommand::Price => run::price(r, &dir),
            Subcommand::LdpCheck => run::ldp_check(r, &dir),
        }
    })();

    let seed = cfg.as_ref().and_then(|c| c.mc.as_ref().map(|m| m.seed)).or(cli.seed);
    let resolved: Option<&config::Resolved> = resolved.as_ref();
    let manifest = json!({
        "subcommand": cli.command.name(),
        "version": reflectvol::VERSION,
        "config": cfg,
        "seed": seed,
        "optimizer": resolved.map(|r| &r.optimizer),
        "grid": resolved.map(|r| json!({ "T": r.grid.horizon(), "n_steps": r.grid.n_steps() })),
        "workers": n_workers,
        "outputs": result.as_ref().ok(),
        "status": result.as_ref().map(|_| 0).unwrap_or_else(|f| f.exit_code()),
        "error": result.as_ref().err().map(|f| f.message().to_string()),
        "started_unix_s": started,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    run::write_json(&dir, "manifest.json", &manifest)?;
    result.map(|_| ())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
