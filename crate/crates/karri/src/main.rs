//! Command line front end: loads an instance, runs the simulation and
//! writes `events.csv` and `stats.csv` into the output directory.
//!
//! Usage errors (unknown flags, missing required flags, malformed flag
//! values, invalid parameter combinations) exit with status 2; instance
//! data errors exit with status 1.

use std::path::PathBuf;
use std::process;

use anyhow::Result;
use clap::Parser;

use karri::config::{parse_rat, Config, DalsStrategy, PalsStrategy, Rat};
use karri::instance::{
    apply_config_file, build_fleet, load_network, load_requests, load_vehicles, parse_dals,
    parse_on_off, parse_pals,
};
use karri::sim::{run_simulation, write_events_csv, write_stats_csv, Mode, SimOptions};
use karri::units::Time;

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "karri" => Ok(Mode::Karri),
        "oracle" => Ok(Mode::Oracle),
        "both" => Ok(Mode::Both),
        _ => Err(format!("expected karri, oracle or both, got '{s}'")),
    }
}

#[derive(Parser)]
#[command(name = "karri", version, about = "Dynamic taxi-sharing dispatcher with walking legs")]
struct Cli {
    /// Road network CSV (tail,head,mode,travel_time_ds)
    #[arg(long, value_name = "FILE")]
    network: PathBuf,

    /// Fleet CSV (initial_location,service_start_ds,service_end_ds,capacity)
    #[arg(long, value_name = "FILE")]
    vehicles: PathBuf,

    /// Request CSV (origin,destination,t_req_ds)
    #[arg(long, value_name = "FILE")]
    requests: PathBuf,

    /// key=value configuration file, applied before the flags below
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Maximum walking time to a meeting point, in deciseconds
    #[arg(long)]
    rho: Option<Time>,

    /// Trip time weight in the cost function
    #[arg(long, value_parser = parse_rat)]
    tau: Option<Rat>,

    /// Walking time weight in the cost function
    #[arg(long, value_parser = parse_rat)]
    omega: Option<Rat>,

    /// Trip deadline factor (deadline = alpha * direct + beta)
    #[arg(long, value_parser = parse_rat)]
    alpha: Option<Rat>,

    /// Trip deadline offset in deciseconds
    #[arg(long)]
    beta: Option<Time>,

    /// Soft wait limit in deciseconds
    #[arg(long)]
    max_wait: Option<Time>,

    /// Weight of wait time beyond the soft limit
    #[arg(long)]
    gamma_wait: Option<String>,

    /// Weight of trip time beyond the deadline
    #[arg(long)]
    gamma_trip: Option<String>,

    /// Batch width of the elliptic bucket searches
    #[arg(long)]
    k_elliptic: Option<usize>,

    /// Batch width of the pickup-dropoff table searches
    #[arg(long)]
    k_pd: Option<usize>,

    /// Batch width of the last-stop bucket searches
    #[arg(long)]
    k_laststop: Option<usize>,

    /// Which dispatcher's cost lands in the cost column
    #[arg(long, value_parser = parse_mode, default_value = "karri")]
    mode: Mode,

    /// Search strategy for pickups after the last stop
    #[arg(long, value_parser = parse_pals)]
    pals: Option<PalsStrategy>,

    /// Search strategy for dropoffs after the last stop
    #[arg(long, value_parser = parse_dals)]
    dals: Option<DalsStrategy>,

    /// Keep bucket entries sorted for early scan termination
    #[arg(long, value_name = "on|off", value_parser = parse_on_off)]
    sorted_buckets: Option<bool>,

    /// Random seed recorded with the run
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for events.csv and stats.csv
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

fn usage_error(msg: &str) -> ! {
    eprintln!("error: {msg}");
    eprintln!("For more information, try '--help'.");
    process::exit(2);
}

fn build_config(cli: &Cli) -> Config {
    let mut cfg = Config::default();
    if let Some(p) = &cli.config {
        if let Err(e) = apply_config_file(&mut cfg, p) {
            eprintln!("error: {e:#}");
            process::exit(1);
        }
    }
    let rat = |s: &Option<String>, what: &str| {
        s.as_deref().map(|x| parse_rat(x).unwrap_or_else(|e| usage_error(&format!("--{what}: {e}"))))
    };
    cfg.rho = cli.rho.unwrap_or(cfg.rho);
    cfg.tau = cli.tau.unwrap_or(cfg.tau);
    cfg.omega = cli.omega.unwrap_or(cfg.omega);
    cfg.alpha = cli.alpha.unwrap_or(cfg.alpha);
    cfg.beta = cli.beta.unwrap_or(cfg.beta);
    cfg.max_wait = cli.max_wait.unwrap_or(cfg.max_wait);
    cfg.gamma_wait = rat(&cli.gamma_wait, "gamma-wait").unwrap_or(cfg.gamma_wait);
    cfg.gamma_trip = rat(&cli.gamma_trip, "gamma-trip").unwrap_or(cfg.gamma_trip);
    cfg.k_elliptic = cli.k_elliptic.unwrap_or(cfg.k_elliptic);
    cfg.k_pd = cli.k_pd.unwrap_or(cfg.k_pd);
    cfg.k_laststop = cli.k_laststop.unwrap_or(cfg.k_laststop);
    cfg.pals = cli.pals.unwrap_or(cfg.pals);
    cfg.dals = cli.dals.unwrap_or(cfg.dals);
    cfg.pruning.sorted_buckets = cli.sorted_buckets.unwrap_or(cfg.pruning.sorted_buckets);
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    if let Err(e) = cfg.validate() {
        usage_error(&e);
    }
    cfg
}

fn run(cli: &Cli, cfg: &Config) -> Result<()> {
    let spec = load_network(&cli.network)?;
    let net = spec.build();
    let vehicles = load_vehicles(&cli.vehicles, spec.num_vertices)?;
    let (requests, were_sorted) = load_requests(&cli.requests, spec.num_vertices)?;
    if !were_sorted {
        eprintln!(
            "warning: {} is not sorted by request time; requests were reordered",
            cli.requests.display()
        );
    }

    let opts = SimOptions { mode: cli.mode, coherence_every: None };
    let out = run_simulation(net, build_fleet(&vehicles), &requests, cfg, &opts);

    std::fs::create_dir_all(&cli.out)?;
    write_events_csv(&cli.out.join("events.csv"), &out.requests, &out.legs)?;
    write_stats_csv(&cli.out.join("stats.csv"), &out.stats)?;

    let s = &out.stats;
    println!(
        "{} served, {} walked, {} unserved; avg wait {:.1} ds, avg trip {:.1} ds, \
         total operation {} ds",
        s.riders_served,
        s.riders_walked,
        s.riders_unserved,
        s.avg_wait(),
        s.avg_trip(),
        s.total_op_time()
    );
    if out.mismatches > 0 {
        eprintln!("warning: dispatcher and reference disagreed on {} requests", out.mismatches);
    }
    println!("wrote {} and {}", cli.out.join("events.csv").display(), cli.out.join("stats.csv").display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let cfg = build_config(&cli);
    if let Err(e) = run(&cli, &cfg) {
        eprintln!("error: {e:#}");
        process::exit(1);
    }
}
