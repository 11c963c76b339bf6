use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::Rng;

use ehcollab::harness::{
    build_topology, draw_placement, output, parse_schemes, run_experiment, run_sweep, SimConfig,
};
use ehcollab::model::{Source, TrialStreams};
use ehcollab::offline::{solve_offline_with, SolveOptions};
use ehcollab::policy::{components, consensus_trace};
use ehcollab::Result;

#[derive(Parser)]
#[command(version, about = "Collaborative tracking with energy-harvesting sensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (`key = value` lines); defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated subset of offline,online,greedy-stat,greedy-csi.
    #[arg(long)]
    schemes: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the offline design and print W*, f(W*) and the steady-state error.
    Offline(Common),
    /// Run the Monte Carlo experiment and write mse.csv and energy.csv.
    Simulate(Common),
    /// Run a parameter sweep and write sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Grid such as `eta:0.01,1`; overrides the config file.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Print a max-consensus run on the configured topology.
    ConsensusDemo(Common),
}

fn load(common: &Common) -> Result<SimConfig> {
    let mut cfg = match &common.config {
        Some(path) => SimConfig::from_file(path)?,
        None => SimConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    if let Some(list) = &common.schemes {
        cfg.schemes = parse_schemes(list)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn offline(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let stats = cfg.statistics()?;
    let topo = Arc::new(build_topology(&cfg, &draw_placement(&cfg))?);
    let opts = SolveOptions {
        normalization: cfg.normalization,
        ..SolveOptions::default()
    };
    let sol = solve_offline_with(&stats, &topo, &opts)?;
    println!("topology ({} weights):\n{topo:?}", topo.len());
    println!("W* =\n{:.6}", sol.scheme.matrix());
    println!("f(W*) = {}", sol.f_value);
    println!("relaxation bound = {}", sol.relaxation_bound);
    println!("rank ratio = {:e}", sol.rank_ratio);
    println!("steady-state prediction error = {}", sol.p_inf);
    println!("steady-state filtered error = {}", sol.filtered_p_inf(&stats));
    println!(
        "expected costs = {:?}",
        sol.expected_costs.iter().map(|v| (v * 1e6).round() / 1e6).collect::<Vec<_>>()
    );
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("offline.txt"), sol.to_artifact())?;
    }
    Ok(())
}

fn simulate(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let res = run_experiment(&cfg)?;
    println!("topology has {} weights; {} trials ({} failed)", res.topology.len(), res.trials, res.failed_trials);
    println!("{:<12} {:>12} {:>12} {:>12} {:>10}", "scheme", "mse(k_max)", "ci_lo", "ci_hi", "overdraws");
    for (kind, s) in &res.schemes {
        let last = s.mse[res.k_max - 1];
        println!(
            "{:<12} {:>12.6} {:>12.6} {:>12.6} {:>10}",
            kind.name(),
            last.mean,
            last.ci_lo(),
            last.ci_hi(),
            s.overdraws
        );
    }
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    output::write_experiment(&dir, &res)?;
    println!("wrote {}", dir.join("mse.csv").display());
    Ok(())
}

fn sweep(common: &Common, grid: Option<&str>) -> Result<()> {
    let mut cfg = load(common)?;
    if let Some(g) = grid {
        cfg.sweep = Some(g.parse()?);
    }
    let res = run_sweep(&cfg)?;
    let k = cfg.k_max;
    for (value, point) in &res.points {
        let line: Vec<String> = point
            .schemes
            .iter()
            .map(|(kind, s)| format!("{}={:.6}", kind.name(), s.mse[k - 1].mean))
            .collect();
        println!("{} = {value}: {}", res.param.name(), line.join(" "));
    }
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    output::write_sweep_file(&dir, &res)?;
    println!("wrote {}", dir.join("sweep.csv").display());
    Ok(())
}

fn consensus_demo(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let topo = build_topology(&cfg, &draw_placement(&cfg))?;
    let mut streams = TrialStreams::new(cfg.seed, 0);
    let rng = streams.get(Source::Harvest);
    let local = DVector::from_fn(cfg.n, |_, _| rng.random_range(0.05..1.0));
    println!("components: {}", components(&topo));
    for (round, values) in consensus_trace(&local, &topo, cfg.n).iter().enumerate() {
        let v: Vec<String> = values.iter().map(|b| format!("{b:.4}")).collect();
        println!("round {round:>2}: {}", v.join(" "));
    }
    println!("centralized min: {:.4}", local.min());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Offline(c) => offline(c),
        Command::Simulate(c) => simulate(c),
        Command::Sweep { common, grid } => sweep(common, grid.as_deref()),
        Command::ConsensusDemo(c) => consensus_demo(c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
