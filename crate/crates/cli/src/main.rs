use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use stochmatch_core::clustering::{
    cluster_distribution, clustered_expectation, refine, solve_clustered, DEFAULT_IE_DEPTH,
};
use stochmatch_core::experiment::{run_experiment, ExperimentConfig};
use stochmatch_core::greedy::{greedy_diversified, greedy_pairwise};
use stochmatch_core::{
    evaluate_exact, generate_instance, parse_allocation, parse_instance, solve_exact, Allocation,
    Bound, Error, GeneratorParams, ProbabilityMode, ProblemInstance, RefineOptions, SeedOrder,
    SeedSelect,
};

#[derive(Parser)]
#[command(
    name = "stochmatch",
    version,
    about = "Stochastic contract matching solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance as JSON.
    Generate {
        /// Number of buy types.
        #[arg(long)]
        q: usize,
        /// Number of sell types.
        #[arg(long)]
        k: usize,
        /// Probability that a buy/sell pair is compatible.
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find an allocation and report its value.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum)]
        method: SolveMethod,
        #[arg(long, default_value_t = 30)]
        max_clusters: usize,
        #[command(flatten)]
        prob: ProbArgs,
        #[arg(long, value_enum, default_value_t = Toggle::On)]
        reorder: Toggle,
        #[arg(long, value_enum, default_value_t = SelectArg::Heuristic)]
        seed_select: SelectArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the full report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Value a given allocation.
    Evaluate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        allocation: PathBuf,
        #[arg(long, value_enum, default_value_t = EvalMethod::Exact)]
        method: EvalMethod,
        /// JSON list of seed bit strings; defaults to all-alive then all-failed.
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[command(flatten)]
        prob: ProbArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a JSON experiment config and write CSV.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct ProbArgs {
    /// How cluster weights are computed.
    #[arg(long, value_enum, default_value_t = ProbArg::Exact)]
    prob: ProbArg,
    #[arg(long, default_value_t = DEFAULT_IE_DEPTH)]
    ie_depth: usize,
    #[arg(long, default_value_t = 100_000)]
    mc_samples: usize,
}

impl ProbArgs {
    fn mode(&self) -> ProbabilityMode {
        match self.prob {
            ProbArg::Exact => ProbabilityMode::Exact,
            ProbArg::Ie => ProbabilityMode::InclusionExclusion {
                depth: self.ie_depth,
            },
            ProbArg::Mc => ProbabilityMode::MonteCarlo {
                samples: self.mc_samples,
            },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMethod {
    Exact,
    Pairwise,
    Diversified,
    ClusterLower,
    ClusterUpper,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMethod {
    Exact,
    ClusterLower,
    ClusterUpper,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbArg {
    Exact,
    Ie,
    Mc,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectArg {
    Heuristic,
    Random,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::EnumerationLimit { .. } | Error::SubsetLimit { .. } => 3,
        Error::NoSplittableCluster | Error::LpConstruction(_) | Error::Solver(_) => 4,
        _ => 2,
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Generate {
            q,
            k,
            density,
            seed,
            out,
        } => {
            let instance = generate_instance(&GeneratorParams::new(q, k, density), seed)?;
            fs::write(&out, instance.to_json())?;
            println!(
                "wrote {} buys, {} sells, {} edges to {}",
                q,
                k,
                instance.edges().len(),
                out.display()
            );
        }
        Command::Solve {
            instance,
            method,
            max_clusters,
            prob,
            reorder,
            seed_select,
            seed,
            out,
        } => {
            let instance = read_instance(&instance)?;
            let options = RefineOptions {
                max_clusters,
                prob_mode: prob.mode(),
                seed_select: match seed_select {
                    SelectArg::Heuristic => SeedSelect::Heuristic,
                    SelectArg::Random => SeedSelect::Random,
                },
                reorder: reorder == Toggle::On,
                rng_seed: seed,
                ..RefineOptions::default()
            };
            let doc = solve(&instance, method, &options)?;
            println!("value: {}", fmt_value(&doc["value"]));
            println!("bound: {}", doc["bound_kind"].as_str().unwrap_or("exact"));
            println!("allocation: {}", doc["allocation"]);
            if let Some(c) = doc.get("clusters") {
                println!("clusters: {c}");
            }
            if let Some(out) = out {
                fs::write(
                    out,
                    serde_json::to_string_pretty(&doc).expect("json values serialize"),
                )?;
            }
        }
        Command::Evaluate {
            instance,
            allocation,
            method,
            seeds,
            prob,
            seed,
        } => {
            let instance = read_instance(&instance)?;
            let alloc = parse_allocation(&fs::read_to_string(&allocation)?)?;
            alloc.validate(&instance)?;
            let value = match method {
                EvalMethod::Exact => evaluate_exact(&instance, &alloc)?,
                EvalMethod::ClusterLower | EvalMethod::ClusterUpper => {
                    let bound = if matches!(method, EvalMethod::ClusterLower) {
                        Bound::Lower
                    } else {
                        Bound::Upper
                    };
                    let order = match seeds {
                        Some(path) => read_seeds(&path)?,
                        None => SeedOrder::endpoints(instance.num_buys()),
                    };
                    let dist = cluster_distribution(&instance, &order, bound, prob.mode(), seed)?;
                    clustered_expectation(&instance, &alloc, &order, &dist)?
                }
            };
            println!("value: {value:.9}");
        }
        Command::Experiment { config, out } => {
            let config = ExperimentConfig::load(&config)?;
            let out = out
                .or_else(|| config.output.clone())
                .ok_or_else(|| Error::Validation {
                    path: "output".into(),
                    message: "pass --out or set `output` in the config".into(),
                })?;
            let report = run_experiment(&config)?;
            report.write_csv(&out)?;
            println!("wrote {} rows to {}", report.rows.len(), out.display());
            if !report.failures.is_empty() {
                for f in &report.failures {
                    eprintln!("failed: trial {} {}: {}", f.trial, f.variant, f.message);
                }
                return Ok(ExitCode::from(4));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_instance(path: &Path) -> Result<ProblemInstance, Error> {
    parse_instance(&fs::read_to_string(path)?)
}

fn read_seeds(path: &Path) -> Result<SeedOrder, Error> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Syntax(e.to_string()))
}

fn fmt_value(v: &Value) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.9}"),
        None => "n/a".into(),
    }
}

fn solve(
    instance: &ProblemInstance,
    method: SolveMethod,
    options: &RefineOptions,
) -> Result<Value, Error> {
    let greedy = |alloc: Allocation| -> Result<Value, Error> {
        // Greedy is mostly useful where exact evaluation is out of reach, so
        // the allocation is still reported when it cannot be valued.
        let value = match evaluate_exact(instance, &alloc) {
            Ok(v) => Some(v),
            Err(e @ Error::EnumerationLimit { .. }) => {
                eprintln!("warning: {e}; value not computed");
                None
            }
            Err(e) => return Err(e),
        };
        Ok(json!({ "value": value, "bound_kind": "exact", "allocation": alloc }))
    };
    match method {
        SolveMethod::Exact => {
            let report = solve_exact(instance)?;
            Ok(json!({
                "value": report.objective_value,
                "bound_kind": report.bound_kind,
                "allocation": report.allocation,
                "report": report,
            }))
        }
        SolveMethod::Pairwise => greedy(greedy_pairwise(instance)),
        SolveMethod::Diversified => greedy(greedy_diversified(instance)?),
        SolveMethod::ClusterLower | SolveMethod::ClusterUpper => {
            let trace = refine(instance, options)?;
            let last = trace.last();
            let bound = match method {
                SolveMethod::ClusterLower => Bound::Lower,
                _ => Bound::Upper,
            };
            // Re-solve the final seed order so the report carries the full
            // LP detail for the requested side.
            let dist = cluster_distribution(
                instance,
                &last.seeds,
                bound,
                options.prob_mode,
                options.rng_seed,
            )?;
            let report = solve_clustered(instance, &last.seeds, &dist, bound)?;
            let curve: Vec<Value> = trace
                .steps
                .iter()
                .map(|s| json!({ "clusters": s.cluster_count, "lower": s.lower }))
                .collect();
            Ok(json!({
                "value": report.objective_value,
                "bound_kind": report.bound_kind,
                "allocation": report.allocation,
                "clusters": last.cluster_count,
                "seeds": last.seeds,
                "curve": curve,
                "report": report,
            }))
        }
    }
}
