use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cnlab::harness::{enumerate_conditions, run_baseline, run_grid, Algorithm, RunConfig};

#[derive(Parser)]
#[command(name = "cnlab", version, about = "GMM and DBSCAN robustness to measurement error")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit both algorithms to the error-free baseline and print a summary.
    Baseline {
        #[arg(long, env = "CNLAB_SEED", default_value_t = 1)]
        seed: u64,
        /// Fixed DBSCAN radius instead of the k-distance elbow.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Run the simulation grid and write the report files.
    Run(RunArgs),
    /// Print the 36 grid conditions with their indices.
    ListConditions,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, env = "CNLAB_SEED", default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 50)]
    boots: usize,
    #[arg(long, value_delimiter = ',', default_value = "gmm,dbscan", value_parser = parse_algorithm)]
    algos: Vec<Algorithm>,
    /// `all` or a comma-separated list of condition indices.
    #[arg(long, default_value = "all")]
    conditions: String,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    merge_cutoff: f64,
    #[arg(long, default_value_t = 0.7)]
    stability_threshold: f64,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "gmm" => Ok(Algorithm::Gmm),
        "dbscan" => Ok(Algorithm::Dbscan),
        other => Err(format!("unknown algorithm `{other}` (expected gmm or dbscan)")),
    }
}

fn parse_conditions(s: &str) -> Result<Option<Vec<usize>>, String> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(None);
    }
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad condition index `{t}`: {e}")))
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
}

fn baseline(seed: u64, eps: Option<f64>) -> cnlab::Result<()> {
    let config = RunConfig {
        master_seed: seed,
        eps_override: eps,
        ..RunConfig::default()
    };
    let b = run_baseline(&config)?;
    println!("seed {seed}: n = {}, d = {}", b.dataset.len(), b.dataset.dim());
    if let Some(g) = &b.gmm {
        println!(
            "GMM: K = {}, BIC = {:.3}, merged clusters = {}, ARI vs truth = {:.3}",
            g.model.k(),
            g.model.bic(),
            g.merge.n_merged_clusters,
            g.ari_vs_truth
        );
        for (k, c) in g.model.components().iter().enumerate() {
            let mean: Vec<String> = c.mean().iter().map(|v| format!("{v:.2}")).collect();
            println!("  component {k}: weight {:.3}, mean ({})", c.weight(), mean.join(", "));
        }
    }
    if let Some(d) = &b.dbscan {
        println!(
            "DBSCAN: eps = {:.4}, min_points = {}, clusters = {}, noise = {}, ARI vs truth = {:.3}",
            d.params.eps,
            d.params.min_points,
            d.labels.n_clusters(),
            d.labels.noise_count(),
            d.ari_vs_truth
        );
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<ExitCode, String> {
    let config = RunConfig {
        master_seed: args.seed,
        replications: args.reps,
        stability_bootstraps: args.boots,
        algorithms: args.algos,
        merge_cutoff: args.merge_cutoff,
        stability_threshold: args.stability_threshold,
        eps_override: args.eps,
        conditions: parse_conditions(&args.conditions)?,
        output_directory: args.out,
        worker_count: args.workers,
        ..RunConfig::default()
    };
    let (_, outcome) = run_grid(&config).map_err(|e| e.to_string())?;
    println!(
        "wrote {} condition(s) x {} replication(s) to {}",
        outcome.reports.len(),
        config.replications,
        config.output_directory.display()
    );
    let failing = outcome.failing_conditions();
    if failing.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for c in failing {
            eprintln!("more than 10% of replications failed in condition {c}");
        }
        Ok(ExitCode::FAILURE)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Baseline { seed, eps } => baseline(seed, eps).map(|_| ExitCode::SUCCESS).map_err(|e| e.to_string()),
        Command::Run(args) => run(args),
        Command::ListConditions => {
            for c in enumerate_conditions() {
                println!("{}\t{}\t{}\t{}\t{}", c.index, c.type_name(), c.vars_name(), c.magnitude_name(), c.rate);
            }
            Ok(ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
