//! LP solving, branch-and-bound over binary variables, and the external
//! solver round trip through LP and solution files.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::{Duration, Instant};

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::formulation::delta_name;
use crate::id::{CondTable, InfluenceDiagram, Parametrization, Policy};
use crate::model::{LinearModel, Sense};
use crate::table::decode;

/// Violation allowed on returned assignments.
pub const FEAS_TOL: f64 = 1e-6;
const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Optimal,
    TimeLimit,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub value: f64,
    pub x: Vec<f64>,
    pub bound: f64,
    /// Branch-and-bound nodes solved after the root.
    pub nodes: usize,
    pub wall_time: Duration,
    pub max_violation: f64,
}

struct Lp {
    problem: Problem,
    vars: Vec<microlp::Variable>,
}

fn build_lp(model: &LinearModel, deadline: Option<Instant>) -> Result<Lp> {
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let mut obj = vec![0.0; model.vars.len()];
    for &(i, c) in &model.objective {
        obj[i] += c;
    }
    let vars: Vec<microlp::Variable> =
        model.vars.iter().zip(&obj).map(|(v, &c)| problem.add_var(c, (v.lb, v.ub))).collect();
    for c in &model.constraints {
        if c.terms.is_empty() {
            let ok = match c.sense {
                Sense::Le => 0.0 <= c.rhs + FEAS_TOL,
                Sense::Ge => 0.0 >= c.rhs - FEAS_TOL,
                Sense::Eq => c.rhs.abs() <= FEAS_TOL,
            };
            if !ok {
                return Err(Error::Infeasible);
            }
            continue;
        }
        let op = match c.sense {
            Sense::Le => ComparisonOp::Le,
            Sense::Ge => ComparisonOp::Ge,
            Sense::Eq => ComparisonOp::Eq,
        };
        let expr: Vec<(microlp::Variable, f64)> = c.terms.iter().map(|&(i, a)| (vars[i], a)).collect();
        problem.add_constraint(expr.as_slice(), op, c.rhs);
    }
    if let Some(d) = deadline {
        problem.set_time_limit(d.saturating_duration_since(Instant::now()).max(Duration::from_millis(1)));
    }
    Ok(Lp { problem, vars })
}

fn map_err(e: microlp::Error) -> Error {
    match e {
        microlp::Error::Infeasible => Error::Infeasible,
        microlp::Error::Unbounded => Error::Unbounded,
        other => Error::Solver(other.to_string()),
    }
}

fn values(sol: &microlp::Solution, vars: &[microlp::Variable]) -> Vec<f64> {
    vars.iter().map(|&v| sol.var_value_raw(v)).collect()
}

fn outcome_solution(o: SolveOutcome) -> Result<microlp::Solution> {
    match o {
        SolveOutcome::Solution(s) => Ok(s),
        SolveOutcome::Interrupted(_) => Err(Error::TimeLimit),
    }
}

/// Optimal vertex of the continuous relaxation (binary flags ignored).
pub fn solve_lp(model: &LinearModel) -> Result<SolveResult> {
    solve_lp_until(model, None)
}

pub fn solve_lp_until(model: &LinearModel, deadline: Option<Instant>) -> Result<SolveResult> {
    let start = Instant::now();
    let lp = build_lp(model, deadline)?;
    let sol = outcome_solution(lp.problem.solve().map_err(map_err)?)?;
    let x = values(&sol, &lp.vars);
    let value = model.objective_value(&x);
    Ok(SolveResult {
        status: SolveStatus::Optimal,
        value,
        bound: value,
        nodes: 0,
        wall_time: start.elapsed(),
        max_violation: model.max_violation(&x),
        x,
    })
}

/// Maps a node LP solution to a candidate assignment.
pub type Heuristic<'h> = dyn Fn(&[f64]) -> Option<Vec<f64>> + Sync + 'h;

/// Open nodes evaluated per step, processed in heap order afterwards.
const BATCH: usize = 4;

#[derive(Default)]
pub struct MilpOptions<'a> {
    pub warm: Option<Vec<f64>>,
    pub time_limit: Option<Duration>,
    /// Worker threads for node evaluation; the search itself does not depend on it.
    pub threads: usize,
    /// Maps a node LP solution to a candidate assignment (checked before use).
    pub heuristic: Option<&'a Heuristic<'a>>,
}

struct Node {
    bound: f64,
    index: usize,
    fixings: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound).then_with(|| other.index.cmp(&self.index))
    }
}

enum NodeLp {
    Solved(f64, Vec<f64>),
    Infeasible,
    OutOfTime,
}

fn is_integral(model: &LinearModel, x: &[f64]) -> bool {
    model.vars.iter().zip(x).all(|(v, &xi)| !v.binary || (xi - xi.round()).abs() <= INT_TOL)
}

fn snap_binaries(model: &LinearModel, x: &mut [f64]) {
    for (v, xi) in model.vars.iter().zip(x.iter_mut()) {
        if v.binary {
            *xi = xi.round();
        }
    }
}

/// Best-first branch-and-bound without a primal heuristic.
pub fn solve_milp(model: &LinearModel, warm: Option<Vec<f64>>, time_limit: Option<Duration>) -> Result<SolveResult> {
    solve_milp_with(model, MilpOptions { warm, time_limit, threads: 1, heuristic: None })
}

/// Best-first branch-and-bound on the binary variables. Nodes are ordered by
/// LP bound (ties by creation index); the branching variable is the most
/// fractional binary (ties by registration order).
pub fn solve_milp_with(model: &LinearModel, opts: MilpOptions<'_>) -> Result<SolveResult> {
    let start = Instant::now();
    let deadline = opts.time_limit.map(|t| start + t);
    let lp = build_lp(model, deadline)?;
    let tol = |v: f64| 1e-7 * v.abs().max(1.0);

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let offer = |cand: Vec<f64>, inc: &mut Option<(f64, Vec<f64>)>| {
        let mut cand = cand;
        if cand.len() != model.vars.len() || !is_integral(model, &cand) {
            return;
        }
        snap_binaries(model, &mut cand);
        if model.max_violation(&cand) > FEAS_TOL {
            return;
        }
        let v = model.objective_value(&cand);
        if inc.as_ref().is_none_or(|(best, _)| v > *best) {
            *inc = Some((v, cand));
        }
    };
    if let Some(w) = opts.warm.clone() {
        offer(w, &mut incumbent);
    }
    let root = match lp.problem.solve().map_err(map_err)? {
        SolveOutcome::Solution(s) => s,
        SolveOutcome::Interrupted(_) => {
            let (value, x) = incumbent.ok_or(Error::TimeLimit)?;
            return Ok(SolveResult {
                status: SolveStatus::TimeLimit,
                value,
                max_violation: model.max_violation(&x),
                x,
                bound: f64::INFINITY,
                nodes: 0,
                wall_time: start.elapsed(),
            });
        }
    };

    let solve_node = |fixings: &[(usize, f64)]| -> Result<NodeLp> {
        let mut sol = root.clone();
        for &(i, val) in fixings {
            match sol.fix_var(lp.vars[i], val) {
                Ok(SolveOutcome::Solution(s)) => sol = s,
                Ok(SolveOutcome::Interrupted(_)) => return Ok(NodeLp::OutOfTime),
                Err(microlp::Error::Infeasible) => return Ok(NodeLp::Infeasible),
                Err(e) => return Err(map_err(e)),
            }
        }
        let x = values(&sol, &lp.vars);
        Ok(NodeLp::Solved(model.objective_value(&x), x))
    };

    let root_x = values(&root, &lp.vars);
    let root_value = model.objective_value(&root_x);
    let mut heap = BinaryHeap::new();
    let mut created = 0usize;
    let mut nodes = 0usize;
    let mut pruned_bound = f64::NEG_INFINITY;
    let mut pending: Vec<(Node, NodeLp)> =
        vec![(Node { bound: root_value, index: 0, fixings: Vec::new() }, NodeLp::Solved(root_value, root_x))];
    created += 1;
    let pool = if opts.threads > 1 {
        Some(rayon::ThreadPoolBuilder::new().num_threads(opts.threads).build().map_err(|e| Error::Solver(e.to_string()))?)
    } else {
        None
    };
    let mut timed_out = false;

    loop {
        for (node, res) in pending.drain(..) {
            let (value, x) = match res {
                NodeLp::Solved(v, x) => (v, x),
                NodeLp::Infeasible => continue,
                NodeLp::OutOfTime => {
                    timed_out = true;
                    heap.push(node);
                    continue;
                }
            };
            if let Some(h) = opts.heuristic {
                if let Some(c) = h(&x) {
                    offer(c, &mut incumbent);
                }
            }
            if is_integral(model, &x) {
                offer(x.clone(), &mut incumbent);
            }
            let best = incumbent.as_ref().map(|(v, _)| *v);
            if let Some(b) = best {
                if value <= b + tol(b) {
                    pruned_bound = pruned_bound.max(value);
                    continue;
                }
            }
            if is_integral(model, &x) {
                continue;
            }
            let branch = model
                .vars
                .iter()
                .enumerate()
                .filter(|(i, v)| v.binary && (x[*i] - x[*i].round()).abs() > INT_TOL)
                .min_by(|a, b| {
                    let fa = (x[a.0] - 0.5).abs();
                    let fb = (x[b.0] - 0.5).abs();
                    fa.total_cmp(&fb).then(a.0.cmp(&b.0))
                })
                .map(|(i, _)| i)
                .expect("fractional binary exists");
            for val in [1.0, 0.0] {
                let mut f = node.fixings.clone();
                f.push((branch, val));
                heap.push(Node { bound: value, index: created, fixings: f });
                created += 1;
            }
        }
        // Max-heap: once the best open bound cannot beat the incumbent, none can.
        if let Some((b, _)) = &incumbent {
            if heap.peek().is_some_and(|n| n.bound <= b + tol(*b)) {
                for m in heap.drain() {
                    pruned_bound = pruned_bound.max(m.bound);
                }
            }
        }
        if heap.is_empty() || timed_out || deadline.is_some_and(|d| Instant::now() >= d) {
            timed_out |= !heap.is_empty();
            break;
        }
        let batch: Vec<Node> = (0..BATCH).filter_map(|_| heap.pop()).collect();
        let results: Vec<Result<NodeLp>> = match &pool {
            Some(pool) => pool.install(|| batch.par_iter().map(|n| solve_node(&n.fixings)).collect()),
            None => batch.iter().map(|n| solve_node(&n.fixings)).collect(),
        };
        nodes += batch.len();
        for (n, r) in batch.into_iter().zip(results) {
            pending.push((n, r?));
        }
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::NEG_INFINITY, f64::max);
    let wall_time = start.elapsed();
    match incumbent {
        Some((value, x)) => {
            let bound = if timed_out { open_bound.max(value) } else { pruned_bound.max(value).min(value + tol(value)) };
            Ok(SolveResult {
                status: if timed_out { SolveStatus::TimeLimit } else { SolveStatus::Optimal },
                value,
                max_violation: model.max_violation(&x),
                x,
                bound,
                nodes,
                wall_time,
            })
        }
        None if timed_out => Err(Error::TimeLimit),
        None => Err(Error::Infeasible),
    }
}

/// Writes the model to an LP file, runs `solver_command <lp> <solution>` and
/// reads back the `name value` solution file.
pub fn roundtrip_external(model: &LinearModel, solver_command: &str) -> Result<SolveResult> {
    let start = Instant::now();
    let dir = tempfile::tempdir()?;
    let lp_path = dir.path().join("model.lp");
    let sol_path = dir.path().join("model.sol");
    std::fs::write(&lp_path, model.to_lp_string())?;
    let mut parts = solver_command.split_whitespace();
    let program = parts.next().ok_or_else(|| Error::SolverProcessFailed("empty solver command".into()))?;
    let output = std::process::Command::new(program)
        .args(parts)
        .arg(&lp_path)
        .arg(&sol_path)
        .output()
        .map_err(|e| Error::SolverProcessFailed(format!("{program}: {e}")))?;
    if !output.status.success() {
        return Err(Error::SolverProcessFailed(format!(
            "{program} exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    let text = std::fs::read_to_string(&sol_path)
        .map_err(|e| Error::SolverProcessFailed(format!("no solution file: {e}")))?;
    let x = model.parse_solution(&text)?;
    let max_violation = model.max_violation(&x);
    if max_violation > FEAS_TOL {
        return Err(Error::SolverProcessFailed(format!("returned assignment violates the model by {max_violation:e}")));
    }
    let value = model.objective_value(&x);
    Ok(SolveResult { status: SolveStatus::Optimal, value, bound: value, nodes: 0, wall_time: start.elapsed(), max_violation, x })
}

/// Reads the decision variables of an integral solution into a deterministic policy.
pub fn extract_policy(id: &InfluenceDiagram, p: &Parametrization, model: &LinearModel, x: &[f64]) -> Result<Policy> {
    let mut tables = BTreeMap::new();
    for v in id.decisions() {
        let pa = id.graph.parents(v).to_vec();
        let pc = p.parent_cards(&id.graph, v);
        let rows: usize = pc.iter().product();
        let mut choices = Vec::with_capacity(rows);
        for r in 0..rows {
            let xpa = decode(r, &pc);
            let mut chosen = None;
            for xv in 0..p.cards[v] {
                let name = delta_name(id, v, &xpa, xv);
                let i = model.var_index(&name).ok_or_else(|| Error::InvalidInstance(format!("model has no {name}")))?;
                let val = x[i];
                if (val - 1.0).abs() <= INT_TOL {
                    if chosen.is_some() {
                        return Err(Error::FractionalSolution(name));
                    }
                    chosen = Some(xv);
                } else if val.abs() > INT_TOL {
                    return Err(Error::FractionalSolution(name));
                }
            }
            choices.push(chosen.ok_or_else(|| Error::FractionalSolution(delta_name(id, v, &xpa, 0)))?);
        }
        tables.insert(v, CondTable::deterministic(pa, pc, p.cards[v], &choices));
    }
    Ok(Policy { tables })
}
