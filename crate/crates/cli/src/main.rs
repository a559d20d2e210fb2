use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use meu_cli::experiment::{first_choice_policy, pomdp_seeds as pomdp_seeds_of};
use meu_cli::{report, run_experiment, Cell, ExperimentConfig, Format};
use meu_core::families::{generate, Family};
use meu_core::formulation::{assemble, embed_policy, rounding_heuristic, Variant};
use meu_core::id::{self, log10_policy_count};
use meu_core::inference::{brute_force_meu_capped, default_sweep_order, spu};
use meu_core::model::LinearModel;
use meu_core::rjt::{auto_order, build_rjt, build_rjt_seeded, build_soluble_rjt};
use meu_core::solve::{extract_policy, roundtrip_external, solve_milp_with, MilpOptions};
use meu_core::Policy;
use serde_json::json;

#[derive(Parser)]
#[command(name = "meu", about = "Maximum expected utility on influence diagrams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderKind {
    /// Decisions first among the current leaves.
    Auto,
    /// Reverse relevance order; soluble diagrams only.
    Soluble,
    /// Plain topological order.
    Topological,
}

#[derive(Clone, Copy, ValueEnum)]
enum StartKind {
    Uniform,
    First,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random instance of a family.
    Generate {
        #[arg(long)]
        family: Family,
        #[arg(long, default_value_t = 2)]
        omega_s: usize,
        #[arg(long, default_value_t = 2)]
        omega_a: usize,
        #[arg(long, default_value_t = 2)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the rooted junction tree of an instance.
    Rjt {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = OrderKind::Auto)]
        order: OrderKind,
        #[arg(long)]
        dot: bool,
    },
    /// Single policy updates.
    Spu {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = StartKind::Uniform)]
        start: StartKind,
        #[arg(long, default_value_t = 100)]
        max_sweeps: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Exhaustive search over deterministic policies.
    Oracle {
        instance: PathBuf,
        #[arg(long, default_value_t = 1e7)]
        cap: f64,
    },
    /// Write the MILP of an instance in LP format.
    Model {
        instance: PathBuf,
        #[arg(long, default_value = "qperpb")]
        variant: Variant,
        #[arg(long)]
        lp: PathBuf,
        /// Leave the decision variables continuous.
        #[arg(long)]
        relax: bool,
    },
    /// Solve an instance, or with `--lp` read `<lp file> <solution file>`.
    Solve {
        #[arg(num_args = 1..=2, required = true)]
        paths: Vec<PathBuf>,
        #[arg(long, default_value = "qperpb")]
        variant: Variant,
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// External solver, run as `<cmd> <lp file> <solution file>`.
        #[arg(long)]
        solver_cmd: Option<String>,
        /// Solve an LP file and write `name value` lines to the solution file.
        #[arg(long)]
        lp: bool,
        /// Seed the tree with s_{t-1}, a_{t-1}, s_t for each a_t (limited-memory POMDPs).
        #[arg(long)]
        pomdp_seeds: bool,
    },
    /// Run seeds x variants and save the cells as JSON.
    Experiment {
        /// TOML file with the experiment keys; flags below are ignored when given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "chess")]
        family: Family,
        #[arg(long, default_value_t = 2)]
        omega_s: usize,
        #[arg(long, default_value_t = 2)]
        omega_a: usize,
        #[arg(long, default_value_t = 2)]
        horizon: usize,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "qbar1,qbarb,qperp1,qperpb")]
        variants: Vec<Variant>,
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also print the table in this format.
        #[arg(long)]
        format: Option<Format>,
    },
    /// Summarize experiment cells.
    Report {
        results: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: Format,
    },
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(path: &Path) -> Result<(meu_core::InfluenceDiagram, meu_core::Parametrization)> {
    id::load(path).with_context(|| format!("loading {}", path.display()))
}

fn policy_report(value: f64, policy: &Policy, diagram: &meu_core::InfluenceDiagram, iterations: usize, started: Instant) -> String {
    let out = json!({
        "value": value,
        "policy": policy.to_json(diagram),
        "iterations": iterations,
        "wall_time_ms": started.elapsed().as_secs_f64() * 1e3,
    });
    format!("{}\n", serde_json::to_string_pretty(&out).expect("json"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { family, omega_s, omega_a, horizon, seed, output } => {
            if omega_s < 1 || omega_a < 1 || horizon < 1 {
                bail!("omega_s, omega_a and horizon must be at least 1");
            }
            let (d, p) = generate(family, omega_s, omega_a, horizon, seed);
            eprintln!("deterministic policies: 1e{:.2}", log10_policy_count(&d, &p));
            write_or_print(output.as_deref(), &(id::to_json(&d, &p) + "\n"))
        }
        Command::Rjt { instance, order, dot } => {
            let (d, _) = load(&instance)?;
            let rjt = match order {
                OrderKind::Auto => build_rjt(&d, &auto_order(&d)?)?,
                OrderKind::Soluble => build_soluble_rjt(&d)?,
                OrderKind::Topological => build_rjt(&d, &d.graph.topological_sort()?)?,
            };
            if dot {
                print!("{}", rjt.to_dot(&d));
            } else {
                for line in rjt.notation(&d) {
                    println!("{line}");
                }
            }
            Ok(())
        }
        Command::Spu { instance, start, max_sweeps, tol } => {
            let (d, p) = load(&instance)?;
            let t = Instant::now();
            let rjt = meu_core::rjt::build_rjt_auto(&d)?;
            let init = match start {
                StartKind::Uniform => Policy::uniform(&d, &p),
                StartKind::First => first_choice_policy(&d, &p)?,
            };
            let s = spu(&d, &p, &rjt, &init, &default_sweep_order(&d), max_sweeps, tol)?;
            print!("{}", policy_report(s.value, &s.policy, &d, s.sweeps, t));
            Ok(())
        }
        Command::Oracle { instance, cap } => {
            let (d, p) = load(&instance)?;
            let t = Instant::now();
            let (policy, value) = brute_force_meu_capped(&d, &p, cap)?;
            let count = meu_core::id::deterministic_policy_count(&d, &p);
            print!("{}", policy_report(value, &policy, &d, count as usize, t));
            Ok(())
        }
        Command::Model { instance, variant, lp, relax } => {
            let (d, p) = load(&instance)?;
            let rjt = meu_core::rjt::build_rjt_auto(&d)?;
            let m = assemble(&d, &p, &rjt, variant, !relax)?;
            std::fs::write(&lp, m.to_lp_string()).with_context(|| format!("writing {}", lp.display()))?;
            eprintln!("{} variables, {} constraints", m.vars.len(), m.constraints.len());
            Ok(())
        }
        Command::Solve { paths, variant, time_limit, threads, solver_cmd, lp, pomdp_seeds } => {
            let time_limit = time_limit.map(Duration::from_secs_f64);
            if lp {
                let [lp, sol] = paths.as_slice() else { bail!("--lp expects <lp file> <solution file>") };
                let text = std::fs::read_to_string(lp).with_context(|| format!("reading {}", lp.display()))?;
                let m = LinearModel::from_lp_string(&text)?;
                let r = solve_milp_with(&m, MilpOptions { time_limit, threads, ..Default::default() })?;
                let header = format!("# status {:?} objective {} bound {}\n", r.status, r.value, r.bound);
                return std::fs::write(sol, header + &m.solution_string(&r.x)).with_context(|| format!("writing {}", sol.display()));
            }
            let [instance] = paths.as_slice() else { bail!("expected one instance file") };
            let (d, p) = load(instance)?;
            let t = Instant::now();
            let rjt = if pomdp_seeds { build_rjt_seeded(&d, &auto_order(&d)?, &pomdp_seeds_of(&d))? } else { build_rjt(&d, &auto_order(&d)?)? };
            let m = assemble(&d, &p, &rjt, variant, true)?;
            let r = match solver_cmd {
                Some(cmd) => roundtrip_external(&m, &cmd)?,
                None => {
                    let s = spu(&d, &p, &rjt, &first_choice_policy(&d, &p)?, &default_sweep_order(&d), 100, 1e-9)?;
                    let warm = embed_policy(&m, &d, &p, &rjt, &s.policy)?;
                    let h = rounding_heuristic(&m, &d, &p, &rjt);
                    solve_milp_with(&m, MilpOptions { warm: Some(warm), time_limit, threads, heuristic: Some(&h) })?
                }
            };
            let policy = extract_policy(&d, &p, &m, &r.x)?;
            let out = json!({
                "status": r.status,
                "value": r.value,
                "bound": r.bound,
                "nodes": r.nodes,
                "max_violation": r.max_violation,
                "policy": policy.to_json(&d),
                "wall_time_ms": t.elapsed().as_secs_f64() * 1e3,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
        Command::Experiment {
            config,
            family,
            omega_s,
            omega_a,
            horizon,
            seeds,
            first_seed,
            variants,
            time_limit,
            output,
            format,
        } => {
            let cfg = match config {
                Some(path) => ExperimentConfig::from_toml(&std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?)?,
                None => ExperimentConfig {
                    family,
                    omega_s,
                    omega_a,
                    horizon,
                    seeds,
                    first_seed,
                    variants,
                    time_limit,
                    threads: 1,
                    output: output.as_ref().map(|p| p.display().to_string()),
                },
            };
            cfg.validate()?;
            let (d, p) = generate(cfg.family, cfg.omega_s, cfg.omega_a, cfg.horizon, cfg.first_seed);
            eprintln!("deterministic policies per instance: 1e{:.2}", log10_policy_count(&d, &p));
            let cells = run_experiment(&cfg)?;
            for c in cells.iter().filter(|c| c.error.is_some()) {
                eprintln!("seed {} {}: {}", c.seed, c.variant.name(), c.error.as_deref().unwrap_or_default());
            }
            let text = serde_json::to_string_pretty(&cells)? + "\n";
            write_or_print(cfg.output.as_deref().map(Path::new), &text)?;
            if let Some(f) = format {
                eprint!("{}", report(&cells, f));
            }
            Ok(())
        }
        Command::Report { results, format } => {
            let text = std::fs::read_to_string(&results).with_context(|| format!("reading {}", results.display()))?;
            let cells: Vec<Cell> = serde_json::from_str(&text)?;
            print!("{}", report(&cells, format));
            Ok(())
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
