//! Exact policy evaluation by a forward pass over a rooted junction tree,
//! single policy updates and exhaustive policy search.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::VertexId;
use crate::id::{free_split, relevance_order, CondTable, FreeSplit, InfluenceDiagram, Parametrization, Policy};
use crate::rjt::{build_rjt_auto, RootedJunctionTree};
use crate::table::{projection_map, Table};

pub const DEFAULT_POLICY_CAP: f64 = 1e7;

/// Cluster moments `mu_{C_v}` and residual moments `mu_{D(v)}`, indexed like
/// the clusters of the tree they were computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentVector {
    pub clusters: Vec<Table>,
    pub residuals: Vec<Table>,
}

impl MomentVector {
    pub fn of_vertex<'a>(&'a self, rjt: &RootedJunctionTree, v: VertexId) -> &'a Table {
        &self.clusters[rjt.cluster_of(v)]
    }

    pub fn residual_of<'a>(&'a self, rjt: &RootedJunctionTree, v: VertexId) -> &'a Table {
        &self.residuals[rjt.cluster_of(v)]
    }

    /// Marginal of the root clique of `v` onto `v`.
    pub fn marginal(&self, rjt: &RootedJunctionTree, v: VertexId) -> Vec<f64> {
        self.of_vertex(rjt, v).marginalize_onto(&[v]).data
    }
}

fn cluster_cards(p: &Parametrization, scope: &[VertexId]) -> Vec<usize> {
    scope.iter().map(|&v| p.cards[v]).collect()
}

/// Multiplies a residual table by the factor of the offspring vertex,
/// producing a table over the whole cluster (sorted scope).
fn extend_by_factor(p: &Parametrization, cluster: &[VertexId], v: VertexId, residual: &Table, factor: &CondTable) -> Table {
    let cards = cluster_cards(p, cluster);
    let res_map = projection_map(cluster, &cards, &residual.scope);
    let row_map = projection_map(cluster, &cards, &factor.parents);
    let v_map = projection_map(cluster, &cards, &[v]);
    let data = (0..res_map.len())
        .map(|i| residual.data[res_map[i]] * factor.values[row_map[i] * factor.card + v_map[i]])
        .collect();
    Table { scope: cluster.to_vec(), cards, data }
}

fn factor_of<'a>(id: &InfluenceDiagram, p: &'a Parametrization, policy: &'a Policy, v: VertexId) -> Result<&'a CondTable> {
    if id.is_decision(v) {
        policy.get(v)
    } else {
        Ok(p.cpt(v))
    }
}

/// Forward pass without checking that the decision rows are distributions.
fn forward(id: &InfluenceDiagram, p: &Parametrization, rjt: &RootedJunctionTree, policy: &Policy) -> Result<MomentVector> {
    let m = rjt.len();
    let mut clusters: Vec<Option<Table>> = vec![None; m];
    let mut residuals: Vec<Option<Table>> = vec![None; m];
    for c in rjt.topological_clusters() {
        let v = rjt.offspring_vertex(c);
        let res_scope: Vec<VertexId> = rjt.clusters[c].iter().copied().filter(|&w| w != v).collect();
        let residual = match rjt.parent[c] {
            Some(pc) => clusters[pc].as_ref().expect("parent first").marginalize_onto(&res_scope),
            None => {
                let cards = cluster_cards(p, &res_scope);
                Table::filled(res_scope.clone(), cards, 1.0)
            }
        };
        let f = factor_of(id, p, policy, v)?;
        clusters[c] = Some(extend_by_factor(p, &rjt.clusters[c], v, &residual, f));
        residuals[c] = Some(residual);
    }
    Ok(MomentVector {
        clusters: clusters.into_iter().map(Option::unwrap).collect(),
        residuals: residuals.into_iter().map(Option::unwrap).collect(),
    })
}

/// Exact cluster marginals of the distribution induced by `policy`.
/// The tree must be offspring-normalized.
pub fn policy_moments(id: &InfluenceDiagram, p: &Parametrization, rjt: &RootedJunctionTree, policy: &Policy) -> Result<MomentVector> {
    policy.check(id, p)?;
    forward(id, p, rjt, policy)
}

fn utility_of_moments(id: &InfluenceDiagram, p: &Parametrization, rjt: &RootedJunctionTree, mu: &MomentVector) -> f64 {
    id.utilities()
        .into_iter()
        .map(|v| mu.marginal(rjt, v).iter().zip(p.reward(v)).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

pub fn expected_utility(id: &InfluenceDiagram, p: &Parametrization, rjt: &RootedJunctionTree, policy: &Policy) -> Result<f64> {
    let mu = policy_moments(id, p, rjt, policy)?;
    Ok(utility_of_moments(id, p, rjt, &mu))
}

/// Free/blanket split of the root clique of a decision together with the
/// conditional of the free part given the blanket, laid out over the cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct BlanketConditional {
    pub split: FreeSplit,
    pub table: Table,
}

/// `p(x_B | x_M)` on the root clique of decision `v`, from uniform-policy
/// moments. `None` when the free part is empty.
pub fn conditional_b_given_m(
    id: &InfluenceDiagram,
    p: &Parametrization,
    rjt: &RootedJunctionTree,
    v: VertexId,
) -> Result<Option<BlanketConditional>> {
    if !id.is_decision(v) {
        return Err(Error::NotDecisionVertex(v));
    }
    let split = free_split(id, &rjt.clusters[rjt.cluster_of(v)]);
    if split.free.is_empty() {
        return Ok(None);
    }
    let mu = forward(id, p, rjt, &Policy::uniform(id, p))?;
    Ok(Some(blanket_conditional(mu.of_vertex(rjt, v), split)))
}

pub(crate) fn blanket_conditional(mu_c: &Table, split: FreeSplit) -> BlanketConditional {
    let mu_m = mu_c.marginalize_onto(&split.blanket);
    let map = mu_c.projection(&split.blanket);
    let data = mu_c
        .data
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let d = mu_m.data[map[i]];
            if d > 0.0 {
                x / d
            } else {
                0.0
            }
        })
        .collect();
    BlanketConditional { split, table: Table { scope: mu_c.scope.clone(), cards: mu_c.cards.clone(), data } }
}

/// Coefficients `c(x_fa)` such that the expected utility equals
/// `sum c(x_fa) delta_v(x_v | x_pa)` with the other decisions fixed.
/// Returned in the layout of the decision table (rows over parents).
pub fn decision_coefficients(
    id: &InfluenceDiagram,
    p: &Parametrization,
    rjt: &RootedJunctionTree,
    policy: &Policy,
    v: VertexId,
) -> Result<CondTable> {
    if !id.is_decision(v) {
        return Err(Error::NotDecisionVertex(v));
    }
    policy.check(id, p)?;
    let base = policy.get(v)?.clone();
    let mut probe = policy.clone();
    let mut coef = base.clone();
    for k in 0..base.values.len() {
        let t = probe.tables.get_mut(&v).unwrap();
        t.values.iter_mut().for_each(|x| *x = 0.0);
        t.values[k] = 1.0;
        let mu = forward(id, p, rjt, &probe)?;
        coef.values[k] = utility_of_moments(id, p, rjt, &mu);
    }
    Ok(coef)
}

/// Deterministic best response of decision `v`; ties go to the smallest state.
pub fn best_response(
    id: &InfluenceDiagram,
    p: &Parametrization,
    rjt: &RootedJunctionTree,
    policy: &Policy,
    v: VertexId,
) -> Result<CondTable> {
    let coef = decision_coefficients(id, p, rjt, policy, v)?;
    let choices: Vec<usize> = (0..coef.rows())
        .map(|r| {
            let row = coef.row(r);
            let mut best = 0;
            for (j, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    Ok(CondTable::deterministic(coef.parents, coef.parent_cards, coef.card, &choices))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpuOutcome {
    pub policy: Policy,
    pub value: f64,
    /// Number of sweeps performed.
    pub sweeps: usize,
    /// Values after each accepted update, starting with the initial value.
    pub trace: Vec<f64>,
}

/// Reverse relevance order when soluble, else reverse topological order of decisions.
pub fn default_sweep_order(id: &InfluenceDiagram) -> Vec<VertexId> {
    let mut order = match relevance_order(id) {
        Ok(o) => o,
        Err(_) => {
            let topo = id.graph.topological_sort().expect("acyclic");
            topo.into_iter().filter(|&v| id.is_decision(v)).collect()
        }
    };
    order.reverse();
    order
}

/// Single policy updates: replace one decision rule at a time by a best
/// response, keeping it only when the value increases by more than `tol`.
pub fn spu(
    id: &InfluenceDiagram,
    p: &Parametrization,
    rjt: &RootedJunctionTree,
    start: &Policy,
    sweep_order: &[VertexId],
    max_sweeps: usize,
    tol: f64,
) -> Result<SpuOutcome> {
    let mut policy = start.clone();
    let mut value = expected_utility(id, p, rjt, &policy)?;
    let mut trace = vec![value];
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut improved = false;
        for &v in sweep_order {
            let br = best_response(id, p, rjt, &policy, v)?;
            let mut candidate = policy.clone();
            candidate.tables.insert(v, br);
            let cand_value = expected_utility(id, p, rjt, &candidate)?;
            if cand_value > value + tol {
                policy = candidate;
                value = cand_value;
                trace.push(value);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    Ok(SpuOutcome { policy, value, sweeps, trace })
}

/// Decisions and their rows, in the order used to enumerate deterministic policies.
struct PolicySpace {
    decisions: Vec<(VertexId, Vec<VertexId>, Vec<usize>, usize)>,
    radices: Vec<usize>,
}

impl PolicySpace {
    fn new(id: &InfluenceDiagram, p: &Parametrization) -> Self {
        let mut decisions = Vec::new();
        let mut radices = Vec::new();
        for v in id.decisions() {
            let pa = id.graph.parents(v).to_vec();
            let pc = p.parent_cards(&id.graph, v);
            let rows: usize = pc.iter().product();
            radices.extend(std::iter::repeat_n(p.cards[v], rows));
            decisions.push((v, pa, pc, p.cards[v]));
        }
        PolicySpace { decisions, radices }
    }

    /// Policy number `index` in lexicographic order of the choice sequence.
    fn policy(&self, mut index: u64) -> Policy {
        let mut digits = vec![0usize; self.radices.len()];
        for i in (0..self.radices.len()).rev() {
            digits[i] = (index % self.radices[i] as u64) as usize;
            index /= self.radices[i] as u64;
        }
        let mut tables = std::collections::BTreeMap::new();
        let mut k = 0;
        for (v, pa, pc, card) in &self.decisions {
            let rows: usize = pc.iter().product();
            tables.insert(*v, CondTable::deterministic(pa.clone(), pc.clone(), *card, &digits[k..k + rows]));
            k += rows;
        }
        Policy { tables }
    }
}

/// Best deterministic policy by enumeration; ties go to the lexicographically
/// smallest choice sequence (decisions by id, rows in table order).
pub fn brute_force_meu(id: &InfluenceDiagram, p: &Parametrization) -> Result<(Policy, f64)> {
    brute_force_meu_capped(id, p, DEFAULT_POLICY_CAP)
}

pub fn brute_force_meu_capped(id: &InfluenceDiagram, p: &Parametrization, cap: f64) -> Result<(Policy, f64)> {
    let count = crate::id::deterministic_policy_count(id, p);
    if count > cap {
        return Err(Error::TooManyPolicies { count, cap });
    }
    let rjt = build_rjt_auto(id)?;
    let space = PolicySpace::new(id, p);
    let total = count.round() as u64;
    let (best_index, best_value) = (0..total)
        .into_par_iter()
        .map(|i| {
            let pol = space.policy(i);
            let mu = forward(id, p, &rjt, &pol).expect("complete policy");
            (i, utility_of_moments(id, p, &rjt, &mu))
        })
        .reduce(
            || (u64::MAX, f64::NEG_INFINITY),
            |a, b| {
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    Ok((space.policy(best_index), best_value))
}

/// Rebuilds the joint distribution (over all vertices, row-major in id order)
/// from cluster moments using the quotients `mu_fa / mu_pa`.
pub fn joint_from_moments(id: &InfluenceDiagram, p: &Parametrization, rjt: &RootedJunctionTree, mu: &MomentVector) -> Vec<f64> {
    let n = id.len();
    let all: Vec<VertexId> = (0..n).collect();
    let mut joint = Table::filled(all.clone(), p.cards.clone(), 1.0);
    for v in 0..n {
        let c = mu.of_vertex(rjt, v);
        let fa = id.graph.family(v);
        let pa = id.graph.parents(v).to_vec();
        let mfa = c.marginalize_onto(&fa);
        let mpa = c.marginalize_onto(&pa);
        let fa_map = projection_map(&all, &p.cards, &fa);
        let pa_map = projection_map(&all, &p.cards, &pa);
        for i in 0..joint.data.len() {
            let d = mpa.data[pa_map[i]];
            joint.data[i] *= if d > 0.0 { mfa.data[fa_map[i]] / d } else { 0.0 };
        }
    }
    joint.data
}
