use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cidetect::config::{ExperimentConfig, GraphSpec};
use cidetect::harness::{self, ReproduceOptions, RunOptions, Setup};
use cidetect::network::{min_consensus_rounds, spectrum, Graph};
use cidetect::{selftest, Error, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "cidetect", version, about = "Distributed composite hypothesis testing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Output directory.
    #[arg(long, default_value = "out")]
    output: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Exit with status 3 when a bound is vacuous for the configuration.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Dotted-key override, e.g. `--set schedule.a=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment from a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate threshold ranges and exponent bounds for a config.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        /// Write JSON here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        strict: bool,
    },
    /// Run a canned experiment: nl_vib or l_vic.
    Reproduce {
        name: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Spectral summary of a graph.
    GraphInfo {
        /// Experiment config whose graph is described.
        #[arg(long, conflicts_with = "edge_list")]
        config: Option<PathBuf>,
        /// Edge-list file.
        #[arg(long)]
        edge_list: Option<PathBuf>,
    },
    /// Run the built-in consistency checks.
    Selftest,
}

fn apply_run_args(mut cfg: ExperimentConfig, run: &RunArgs) -> Result<ExperimentConfig> {
    if let Some(s) = run.seed {
        cfg.seed = s;
    }
    if let Some(t) = run.trials {
        cfg.trials = t;
    }
    if let Some(s) = run.stride {
        cfg.stride = s;
    }
    if let Some(h) = run.horizon {
        cfg.horizon = h;
    }
    cfg.with_overrides(&run.set)
}

fn run_options(run: &RunArgs, base: Option<&Path>) -> RunOptions {
    RunOptions { threads: run.threads, strict: run.strict, base_dir: base.map(Path::to_path_buf) }
}

fn summary(res: &harness::ExperimentResult, dir: &Path) {
    println!("wrote {}", dir.display());
    for w in &res.warnings {
        eprintln!("warning: {w}");
    }
    if let (Some(name), Some(rate)) = (&res.comparison.bound_name, res.comparison.bound_rate) {
        println!("bound {name} = {rate:.6}");
    }
    for a in &res.comparison.agents {
        match &a.empirical {
            Some(e) => println!("agent {}: slope {:.6} +- {:.6}", a.agent, e.slope, e.std_error),
            None => println!("agent {}: no fit ({})", a.agent, a.fit_error.as_deref().unwrap_or("")),
        }
    }
}

fn graph_info(g: &Graph) -> Result<serde_json::Value> {
    let s = spectrum(g);
    let connected = s.is_connected();
    let mut v = json!({
        "n": g.n_agents(),
        "edges": g.edges().len(),
        "connected": connected,
        "lambda2": s.lambda2(),
        "lambda_max": s.lambda_max(),
    });
    if connected {
        let w = cidetect::network::make_weights(&s)?;
        v["delta"] = json!(w.delta);
        v["r"] = json!(w.r);
        if w.r > 0.0 {
            v["k_min"] = json!(min_consensus_rounds(g.n_agents(), w.r)?);
        }
    }
    Ok(v)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, run } => {
            let cfg = apply_run_args(ExperimentConfig::load(&config)?, &run)?;
            if run.dump_config {
                println!("{}", cfg.to_json());
                return Ok(());
            }
            let res = harness::run_experiment(&cfg, &run_options(&run, config.parent()))?;
            harness::write_outputs(&res, &run.output)?;
            summary(&res, &run.output);
        }
        Command::Bounds { config, output, set, strict } => {
            let cfg = ExperimentConfig::load(&config)?.with_overrides(&set)?;
            let setup = Setup::new(&cfg, config.parent())?;
            let (bounds, rate, flags) = harness::compute_bounds(&cfg, &setup)?;
            let v = json!({
                "algorithm": cfg.algorithm,
                "hypothesis": cfg.hypothesis,
                "eta": cfg.eta,
                "rate": rate.map(|(name, value)| json!({ "name": name, "value": value })),
                "flags": flags,
                "bounds": bounds,
            });
            let text = serde_json::to_string_pretty(&v)? + "\n";
            match output {
                Some(p) => std::fs::write(p, text)?,
                None => print!("{text}"),
            }
            if strict && !flags.is_empty() {
                return Err(Error::Infeasible(flags.join("; ")));
            }
        }
        Command::Reproduce { name, run } => {
            if run.dump_config {
                let cfg = apply_run_args(ExperimentConfig::preset(&name)?, &run)?;
                println!("{}", cfg.to_json());
                return Ok(());
            }
            let ro = ReproduceOptions {
                trials: run.trials,
                seed: run.seed,
                horizon: run.horizon,
                stride: run.stride,
                overrides: run.set.clone(),
            };
            let res = harness::reproduce(&name, &ro, &run_options(&run, None))?;
            harness::write_outputs(&res, &run.output)?;
            summary(&res, &run.output);
        }
        Command::GraphInfo { config, edge_list } => {
            let g = match (config, edge_list) {
                (Some(c), None) => ExperimentConfig::load(&c)?.graph.build(c.parent())?,
                (None, Some(e)) => GraphSpec::EdgeList { path: e.display().to_string() }.build(None)?,
                _ => return Err(Error::InvalidInput("give --config or --edge-list".into())),
            };
            println!("{}", serde_json::to_string_pretty(&graph_info(&g)?)?);
        }
        Command::Selftest => {
            let results = selftest::run_all();
            let failed = results.iter().filter(|r| r.outcome.is_err()).count();
            for r in &results {
                match &r.outcome {
                    Ok(()) => println!("PASS {}", r.name),
                    Err(e) => println!("FAIL {}: {e}", r.name),
                }
            }
            if failed > 0 {
                return Err(Error::ContractViolation(format!("{failed} self-test check(s) failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("ERROR USAGE: {}", msg.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR {}: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
