//! `pdsr` command-line frontend.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data or pipeline error,
//! 4 unknown user, 5 exhaustive search cap exceeded, 6 oracle bound violated.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdsr_core::eval::pipeline::{
    oracle_check, prepare, recommend_user, write_oracle_csv, write_split_csv, OracleSettings,
};
use pdsr_core::eval::{load_dataset, run_pipeline, split_platforms, sweep, write_metrics_csv, CellOutcome, ConfigMap, EvalConfig};
use pdsr_core::recommend::DEFAULT_ORACLE_CAP;
use pdsr_core::PdsrError;
use serde_json::json;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_UNKNOWN_USER: u8 = 4;
const EXIT_CAP: u8 = 5;
const EXIT_ORACLE: u8 = 6;

#[derive(Parser, Debug)]
#[command(name = "pdsr", version, about = "Privacy-preserving diversified service recommendation")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Master seed
    #[arg(long, env = "PDSR_SEED", global = true)]
    seed: Option<u64>,

    /// Write outputs into this directory instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for repetitions and sweep cells
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Partition users into platforms and draw holdouts
    Split,
    /// Build the similarity graph and print it as TSV
    Graph,
    /// Recommend services to one user
    Recommend {
        #[arg(long)]
        user: u64,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        xi: Option<f64>,
    },
    /// Run the repeated evaluation for a single parameter setting
    Evaluate,
    /// Run the evaluation over a parameter grid
    Sweep,
    /// Compare greedy against the exhaustive optimum on small pools
    Oracle {
        #[arg(long, default_value_t = 12)]
        max_candidates: usize,
        #[arg(long, default_value_t = 200)]
        instances: usize,
        /// Draw K in 1..=4 and lambda, xi in [0, 0.5] per instance
        #[arg(long)]
        randomize: bool,
        /// Largest number of subsets the exhaustive search may enumerate
        #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
        cap: u128,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<PdsrError> for Failure {
    fn from(e: PdsrError) -> Self {
        let code = match e {
            PdsrError::Config(_) => EXIT_CONFIG,
            PdsrError::UnknownUser(_) => EXIT_UNKNOWN_USER,
            PdsrError::TooLarge { .. } => EXIT_CAP,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        PdsrError::from(e).into()
    }
}

fn config_failure(message: String) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message,
    }
}

fn load_config(global: &GlobalArgs, extra: &[(&str, String)]) -> Result<EvalConfig, Failure> {
    let mut map = match &global.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| config_failure(format!("cannot read config {}: {e}", path.display())))?;
            ConfigMap::parse(&text)?
        }
        None => ConfigMap::default(),
    };
    for pair in &global.overrides {
        map.set_pair(pair)?;
    }
    if let Some(seed) = global.seed {
        map.set("seed", &seed.to_string())?;
    }
    for (key, value) in extra {
        map.set(key, value)?;
    }
    Ok(EvalConfig::from_map(&map)?)
}

/// Destination for one named output: a file under `--out`, or stdout.
fn sink(global: &GlobalArgs, name: &str) -> Result<Box<dyn Write>, Failure> {
    match &global.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Ok(Box::new(io::BufWriter::new(fs::File::create(dir.join(name))?)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

/// Side output (JSON summaries): a file under `--out`, or one line on stderr.
fn write_side(global: &GlobalArgs, name: &str, value: &serde_json::Value) -> Result<(), Failure> {
    match &global.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), serde_json::to_string_pretty(value).expect("serializable") + "\n")?;
        }
        None => eprintln!("{value}"),
    }
    Ok(())
}

fn first_failure(outcomes: &[CellOutcome]) -> Option<Failure> {
    outcomes
        .iter()
        .find_map(|o| o.result.as_ref().err())
        .map(|e| Failure::from(e.duplicate()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let global = &cli.global;
    if let Some(n) = global.threads {
        if n == 0 {
            return Err(config_failure("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_failure(e.to_string()))?;
    }

    match &cli.command {
        Command::Split => {
            let cfg = load_config(global, &[])?;
            let data = load_dataset(&cfg)?;
            let split = split_platforms(&data, &cfg.split_spec(pdsr_core::eval::pipeline::repetition_seed(cfg.seed, 0)))?;
            write_split_csv(&split, sink(global, "split.csv")?)?;
        }
        Command::Graph => {
            let cfg = load_config(global, &[])?;
            let cell = cfg.single_cell()?;
            let data = load_dataset(&cfg)?;
            let prepared = prepare(&cfg, &data, &cell.h_counts, cell.t, 0)?;
            let g = &prepared.graph;
            g.write_tsv(sink(global, "graph.tsv")?, cell.t, prepared.seed)?;
            eprintln!(
                "vertices={} edges={} mean_degree={:.4} messages_audited={}",
                g.n_vertices(),
                g.edge_count(),
                g.mean_degree(),
                prepared.messages_audited
            );
        }
        Command::Recommend { user, k, lambda, xi } => {
            let mut extra = Vec::new();
            if let Some(k) = k {
                extra.push(("k", k.to_string()));
            }
            if let Some(l) = lambda {
                extra.push(("lambda", l.to_string()));
            }
            if let Some(x) = xi {
                extra.push(("xi", x.to_string()));
            }
            let cfg = load_config(global, &extra)?;
            let cell = cfg.single_cell()?;
            let data = load_dataset(&cfg)?;
            let (rec, prepared) = recommend_user(&cfg, &data, &cell, *user, cfg.k)?;
            rec.list.write_csv(sink(global, "recommendations.csv")?)?;
            let summary = json!({
                "user_id": rec.user_id,
                "platform": rec.platform,
                "K": cfg.k,
                "lambda": cell.lambda,
                "xi": cell.xi,
                "H": cell.h_counts,
                "T": cell.t,
                "seed": cfg.seed,
                "repetition_seed": prepared.seed,
                "candidates": rec.candidates,
                "returned": rec.list.services.len(),
                "truncated": rec.list.truncated,
            });
            write_side(global, "summary.json", &summary)?;
        }
        Command::Evaluate => {
            let cfg = load_config(global, &[])?;
            let cell = cfg.single_cell()?;
            let data = load_dataset(&cfg)?;
            let report = run_pipeline(&cfg, &data)?;
            if global.out.is_some() {
                write_side(global, "report.json", &serde_json::to_value(&report).expect("serializable"))?;
            }
            let outcome = CellOutcome {
                cell,
                result: Ok(report),
            };
            write_metrics_csv(&cfg, std::slice::from_ref(&outcome), sink(global, "metrics.csv")?)?;
        }
        Command::Sweep => {
            let cfg = load_config(global, &[])?;
            let data = load_dataset(&cfg)?;
            let outcomes = sweep(&cfg, &data);
            write_metrics_csv(&cfg, &outcomes, sink(global, "sweep.csv")?)?;
            if let Some(f) = first_failure(&outcomes) {
                return Err(f);
            }
        }
        Command::Oracle {
            max_candidates,
            instances,
            randomize,
            cap,
        } => {
            let cfg = load_config(global, &[])?;
            let cell = cfg.single_cell()?;
            let data = load_dataset(&cfg)?;
            let settings = OracleSettings {
                instances: *instances,
                max_candidates: *max_candidates,
                randomize: *randomize,
                cap: *cap,
            };
            let rows = oracle_check(&cfg, &data, &cell, &settings)?;
            write_oracle_csv(&rows, sink(global, "oracle.csv")?)?;
            let violations = rows.iter().filter(|r| r.ratio < 0.5 - 1e-9).count();
            let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
            eprintln!("instances={} violations={violations} min_ratio={min_ratio}", rows.len());
            if violations > 0 {
                return Err(Failure {
                    code: EXIT_ORACLE,
                    message: format!("{violations} instances fell below half the optimum"),
                });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
