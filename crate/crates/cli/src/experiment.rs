use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use anyhow::{bail, Result};
use meu_core::families::{generate, Family};
use meu_core::formulation::{assemble, embed_policy, rounding_heuristic, Variant};
use meu_core::id::{log10_policy_count, prune_irrelevant};
use meu_core::inference::{default_sweep_order, spu};
use meu_core::rjt::{auto_order, build_rjt_auto, build_rjt_seeded};
use meu_core::solve::{solve_lp, solve_milp_with, MilpOptions};
use meu_core::{InfluenceDiagram, Parametrization, Policy, RootedJunctionTree, SolveStatus, VertexId};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    pub omega_s: usize,
    pub omega_a: usize,
    pub horizon: usize,
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    #[serde(default)]
    pub first_seed: u64,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    /// Seconds per MILP solve.
    #[serde(default)]
    pub time_limit: Option<f64>,
    /// Threads inside each MILP solve; cells already run in parallel.
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default)]
    pub output: Option<String>,
}

fn default_seeds() -> u64 {
    10
}

fn default_variants() -> Vec<Variant> {
    Variant::ALL.to_vec()
}

fn default_threads() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega_s < 1 || self.omega_a < 1 || self.horizon < 1 {
            bail!("omega_s, omega_a and horizon must be at least 1");
        }
        if self.time_limit.is_some_and(|t| t.is_nan() || t < 0.0) {
            bail!("time_limit must be non-negative");
        }
        Ok(())
    }
}

/// One seed and variant of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub family: Family,
    pub omega_s: usize,
    pub omega_a: usize,
    pub horizon: usize,
    pub seed: u64,
    pub variant: Variant,
    /// log10 of the number of deterministic policies.
    pub log10_policies: f64,
    pub status: Option<SolveStatus>,
    pub error: Option<String>,
    pub root_lp: f64,
    pub best_int: f64,
    pub bound: f64,
    pub spu_value: f64,
    pub nodes: usize,
    pub time: f64,
}

impl Cell {
    /// (root LP - best integer) / |best integer|, in percent.
    pub fn int_gap(&self) -> f64 {
        relative(self.root_lp - self.best_int, self.best_int)
    }

    /// (bound - best integer) / |best integer|, in percent.
    pub fn final_gap(&self) -> f64 {
        relative(self.bound - self.best_int, self.best_int)
    }

    /// (best integer - SPU value) / |best integer|, in percent.
    pub fn spu_gap(&self) -> f64 {
        relative(self.best_int - self.spu_value, self.best_int)
    }
}

fn relative(diff: f64, base: f64) -> f64 {
    if base == 0.0 {
        if diff.abs() <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        100.0 * diff / base.abs()
    }
}

/// Seeds s_{t-1}, a_{t-1}, s_t for every decision a_t of a limited-memory POMDP.
pub fn pomdp_seeds(id: &InfluenceDiagram) -> BTreeMap<VertexId, Vec<VertexId>> {
    let mut seeds = BTreeMap::new();
    for t in 2.. {
        let (Some(a), Some(s), Some(prev_s), Some(prev_a)) = (
            id.vertex_by_label(&format!("a{t}")),
            id.vertex_by_label(&format!("s{t}")),
            id.vertex_by_label(&format!("s{}", t - 1)),
            id.vertex_by_label(&format!("a{}", t - 1)),
        ) else {
            break;
        };
        seeds.insert(a, vec![prev_s, prev_a, s]);
    }
    if let (Some(a), Some(s)) = (id.vertex_by_label("a1"), id.vertex_by_label("s1")) {
        seeds.insert(a, vec![s]);
    }
    seeds
}

pub fn experiment_rjt(family: Family, variant: Variant, id: &InfluenceDiagram) -> meu_core::Result<RootedJunctionTree> {
    if family == Family::PomdpLm && variant.has_cuts() {
        build_rjt_seeded(id, &auto_order(id)?, &pomdp_seeds(id))
    } else {
        build_rjt_auto(id)
    }
}

/// Deterministic start for SPU: first state of every decision.
pub fn first_choice_policy(id: &InfluenceDiagram, p: &Parametrization) -> meu_core::Result<Policy> {
    let choices = id
        .decisions()
        .into_iter()
        .map(|v| {
            let rows: usize = id.graph.parents(v).iter().map(|&u| p.cards[u]).product();
            (v, vec![0; rows])
        })
        .collect();
    Policy::from_choices(id, p, &choices)
}

fn run_cell(cfg: &ExperimentConfig, seed: u64, variant: Variant) -> Cell {
    let (id, p) = generate(cfg.family, cfg.omega_s, cfg.omega_a, cfg.horizon, seed);
    let mut cell = Cell {
        family: cfg.family,
        omega_s: cfg.omega_s,
        omega_a: cfg.omega_a,
        horizon: cfg.horizon,
        seed,
        variant,
        log10_policies: log10_policy_count(&id, &p),
        status: None,
        error: None,
        root_lp: f64::NAN,
        best_int: f64::NAN,
        bound: f64::NAN,
        spu_value: f64::NAN,
        nodes: 0,
        time: 0.0,
    };
    let (id, p) = prune_irrelevant(&id, &p);
    let start = Instant::now();
    let outcome = (|| -> meu_core::Result<()> {
        let rjt = experiment_rjt(cfg.family, variant, &id)?;
        let s = spu(&id, &p, &rjt, &first_choice_policy(&id, &p)?, &default_sweep_order(&id), 100, 1e-9)?;
        cell.spu_value = s.value;
        let model = assemble(&id, &p, &rjt, variant, true)?;
        cell.root_lp = solve_lp(&model)?.value;
        let warm = embed_policy(&model, &id, &p, &rjt, &s.policy)?;
        let h = rounding_heuristic(&model, &id, &p, &rjt);
        let opts = MilpOptions {
            warm: Some(warm),
            time_limit: cfg.time_limit.map(Duration::from_secs_f64),
            threads: cfg.threads,
            heuristic: Some(&h),
        };
        let r = solve_milp_with(&model, opts)?;
        cell.status = Some(r.status);
        cell.best_int = r.value;
        cell.bound = r.bound;
        cell.nodes = r.nodes;
        Ok(())
    })();
    cell.time = start.elapsed().as_secs_f64();
    if let Err(e) = outcome {
        cell.error = Some(e.to_string());
    }
    cell
}

/// Every seed and variant, run in parallel and returned in config order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    cfg.validate()?;
    let jobs: Vec<(u64, Variant)> = (cfg.first_seed..cfg.first_seed + cfg.seeds)
        .flat_map(|s| cfg.variants.iter().map(move |&v| (s, v)))
        .collect();
    Ok(jobs.par_iter().map(|&(s, v)| run_cell(cfg, s, v)).collect())
}
