//! Linear and mixed-integer formulations over the moments of a rooted
//! junction tree.
//!
//! Variable names: `mu[v][x..]` for the root clique of `v` (states in
//! increasing vertex id order), `mud[v][x..]` for its residual,
//! `delta[v][xpa..][xv]` for decision rules and `mv[v][x]` for utility
//! marginals. `v` is the vertex label.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::graph::VertexId;
use crate::id::{free_split_in, augment, CondTable, InfluenceDiagram, Parametrization, Policy};
use crate::inference::{blanket_conditional, policy_moments, MomentVector};
use crate::model::{ConstraintBlock, LinearModel, Sense};
use crate::rjt::RootedJunctionTree;
use crate::table::{decode, projection_map, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Qbar1,
    Qbarb,
    Qperp1,
    Qperpb,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Qbar1, Variant::Qbarb, Variant::Qperp1, Variant::Qperpb];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Qbar1 => "qbar1",
            Variant::Qbarb => "qbarb",
            Variant::Qperp1 => "qperp1",
            Variant::Qperpb => "qperpb",
        }
    }

    pub fn has_cuts(self) -> bool {
        matches!(self, Variant::Qperp1 | Variant::Qperpb)
    }

    pub fn has_bounds(self) -> bool {
        matches!(self, Variant::Qbarb | Variant::Qperpb)
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown variant {s}"))
    }
}

fn states(x: &[usize]) -> String {
    x.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

pub fn mu_name(id: &InfluenceDiagram, v: VertexId, x: &[usize]) -> String {
    format!("mu[{}][{}]", id.label(v), states(x))
}

pub fn mud_name(id: &InfluenceDiagram, v: VertexId, x: &[usize]) -> String {
    format!("mud[{}][{}]", id.label(v), states(x))
}

pub fn delta_name(id: &InfluenceDiagram, v: VertexId, xpa: &[usize], xv: usize) -> String {
    format!("delta[{}][{}][{}]", id.label(v), states(xpa), xv)
}

pub fn marginal_name(id: &InfluenceDiagram, v: VertexId, xv: usize) -> String {
    format!("mv[{}][{}]", id.label(v), xv)
}

fn cards_of(p: &Parametrization, scope: &[VertexId]) -> Vec<usize> {
    scope.iter().map(|&v| p.cards[v]).collect()
}

/// Per-cluster names of the moment variables, in table order.
struct ClusterNames {
    mu: Vec<String>,
    mud: Vec<String>,
    scope: Vec<VertexId>,
    res_scope: Vec<VertexId>,
}

fn cluster_names(id: &InfluenceDiagram, p: &Parametrization, rjt: &RootedJunctionTree, c: usize) -> ClusterNames {
    let v = rjt.offspring_vertex(c);
    let scope = rjt.clusters[c].clone();
    let res_scope: Vec<VertexId> = scope.iter().copied().filter(|&w| w != v).collect();
    let cards = cards_of(p, &scope);
    let rcards = cards_of(p, &res_scope);
    let mu = (0..cards.iter().product()).map(|i| mu_name(id, v, &decode(i, &cards))).collect();
    let mud = (0..rcards.iter().product()).map(|i| mud_name(id, v, &decode(i, &rcards))).collect();
    ClusterNames { mu, mud, scope, res_scope }
}

/// Normalization, consistency along tree arcs and residual marginalization.
pub fn local_polytope_constraints(id: &InfluenceDiagram, p: &Parametrization, rjt: &RootedJunctionTree) -> ConstraintBlock {
    let mut b = ConstraintBlock::default();
    let names: Vec<ClusterNames> = (0..rjt.len()).map(|c| cluster_names(id, p, rjt, c)).collect();
    for (c, cn) in names.iter().enumerate() {
        let v = rjt.offspring_vertex(c);
        let label = id.label(v);
        for n in &cn.mu {
            b.var(n.clone(), 0.0, 1.0);
        }
        for n in &cn.mud {
            b.var(n.clone(), 0.0, 1.0);
        }
        b.row(format!("norm[{label}]"), cn.mu.iter().map(|n| (n.clone(), 1.0)).collect(), Sense::Eq, 1.0);
        let cards = cards_of(p, &cn.scope);
        let map = projection_map(&cn.scope, &cards, &cn.res_scope);
        let mut groups: Vec<Vec<(String, f64)>> = cn.mud.iter().map(|n| vec![(n.clone(), -1.0)]).collect();
        for (i, &y) in map.iter().enumerate() {
            groups[y].push((cn.mu[i].clone(), 1.0));
        }
        for (y, terms) in groups.into_iter().enumerate() {
            b.row(format!("marg[{label}][{y}]"), terms, Sense::Eq, 0.0);
        }
        if let Some(pc) = rjt.parent[c] {
            let pn = &names[pc];
            let pmap = projection_map(&pn.scope, &cards_of(p, &pn.scope), &cn.res_scope);
            let mut groups: Vec<Vec<(String, f64)>> = cn.mud.iter().map(|n| vec![(n.clone(), -1.0)]).collect();
            for (i, &y) in pmap.iter().enumerate() {
                groups[y].push((pn.mu[i].clone(), 1.0));
            }
            for (y, terms) in groups.into_iter().enumerate() {
                b.row(format!("cons[{label}][{y}]"), terms, Sense::Eq, 0.0);
            }
        }
    }
    b
}

/// `mu_{C_v} = mu_{D(v)} p_{v|pa(v)}` for chance and utility vertices.
pub fn pbar_constraints(id: &InfluenceDiagram, p: &Parametrization, rjt: &RootedJunctionTree) -> ConstraintBlock {
    let mut b = ConstraintBlock::default();
    for c in 0..rjt.len() {
        let v = rjt.offspring_vertex(c);
        if id.is_decision(v) {
            continue;
        }
        let cn = cluster_names(id, p, rjt, c);
        let cards = cards_of(p, &cn.scope);
        let res_map = projection_map(&cn.scope, &cards, &cn.res_scope);
        let cpt = p.cpt(v);
        let row_map = projection_map(&cn.scope, &cards, &cpt.parents);
        let v_map = projection_map(&cn.scope, &cards, &[v]);
        for i in 0..cn.mu.len() {
            let prob = cpt.get(row_map[i], v_map[i]);
            b.row(
                format!("pbar[{}][{i}]", id.label(v)),
                vec![(cn.mu[i].clone(), 1.0), (cn.mud[res_map[i]].clone(), -prob)],
                Sense::Eq,
                0.0,
            );
        }
    }
    b
}

/// `mu_{C_v} = p_{B|M} sum_{x_B} mu_{C_v}` for each decision whose root clique has a free part.
pub fn valid_cut_constraints(id: &InfluenceDiagram, p: &Parametrization, rjt: &RootedJunctionTree) -> Result<ConstraintBlock> {
    let mut b = ConstraintBlock::default();
    let aug = augment(id);
    let uniform = policy_moments(id, p, rjt, &Policy::uniform(id, p))?;
    for v in id.decisions() {
        let c = rjt.cluster_of(v);
        let split = free_split_in(&aug, &rjt.clusters[c]);
        if split.free.is_empty() {
            continue;
        }
        let cond = blanket_conditional(&uniform.clusters[c], split);
        let cn = cluster_names(id, p, rjt, c);
        let cards = cards_of(p, &cn.scope);
        let m_map = projection_map(&cn.scope, &cards, &cond.split.blanket);
        let mut by_blanket: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &m) in m_map.iter().enumerate() {
            by_blanket.entry(m).or_default().push(i);
        }
        for i in 0..cn.mu.len() {
            let q = cond.table.data[i];
            let mut terms = vec![(cn.mu[i].clone(), 1.0)];
            for &j in &by_blanket[&m_map[i]] {
                terms.push((cn.mu[j].clone(), -q));
            }
            b.row(format!("cut[{}][{i}]", id.label(v)), terms, Sense::Eq, 0.0);
        }
    }
    Ok(b)
}

/// Upper bounds on cluster moments valid for every policy (`cluster`,
/// indexed like the tree) and the derived bounds on decision residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundVector {
    pub cluster: Vec<Table>,
    pub residual: BTreeMap<VertexId, Table>,
}

/// Second-order bound recursion over the tree: each cluster bound is obtained
/// from the grandparent bound times the chance factors of the parent and
/// cluster offspring, maximizing over the parent offspring when it is a
/// decision that is summed out.
pub fn mccormick_bounds(id: &InfluenceDiagram, p: &Parametrization, rjt: &RootedJunctionTree) -> BoundVector {
    let m = rjt.len();
    let mut bt: Vec<Option<Table>> = vec![None; m];
    for k in rjt.topological_clusters() {
        let ck = rjt.clusters[k].clone();
        let wk = rjt.offspring_vertex(k);
        let table = match rjt.parent[k] {
            None => {
                let mut t = Table::filled(ck.clone(), cards_of(p, &ck), 1.0);
                if !id.is_decision(wk) {
                    t = multiply_factor(&t, p.cpt(wk), wk);
                }
                t
            }
            Some(j) => {
                let wj = rjt.offspring_vertex(j);
                let (ci, bi) = match rjt.parent[j] {
                    Some(i) => (rjt.clusters[i].clone(), bt[i].clone().expect("grandparent first")),
                    None => (Vec::new(), Table::filled(Vec::new(), Vec::new(), 1.0)),
                };
                let mut s: Vec<VertexId> = ci.iter().chain(&rjt.clusters[j]).chain(&ck).copied().collect();
                s.sort_unstable();
                s.dedup();
                let s_cards = cards_of(p, &s);
                let bmap = projection_map(&s, &s_cards, &ci);
                let mut g = Table { scope: s.clone(), cards: s_cards, data: bmap.iter().map(|&i| bi.data[i]).collect() };
                if !id.is_decision(wj) {
                    g = multiply_factor(&g, p.cpt(wj), wj);
                }
                if !id.is_decision(wk) {
                    g = multiply_factor(&g, p.cpt(wk), wk);
                }
                if id.is_decision(wj) && !ck.contains(&wj) {
                    let mut keep: Vec<VertexId> = ck.iter().chain(&id.graph.family(wj)).copied().collect();
                    keep.sort_unstable();
                    keep.dedup();
                    g.marginalize_onto(&keep).max_out(wj).marginalize_onto(&ck)
                } else {
                    g.marginalize_onto(&ck)
                }
            }
        };
        let mut table = table;
        table.data.iter_mut().for_each(|x| *x = x.min(1.0));
        bt[k] = Some(table);
    }
    let cluster: Vec<Table> = bt.into_iter().map(Option::unwrap).collect();
    let residual = id
        .decisions()
        .into_iter()
        .map(|v| (v, cluster[rjt.cluster_of(v)].max_out(v)))
        .collect();
    BoundVector { cluster, residual }
}

fn multiply_factor(t: &Table, f: &CondTable, v: VertexId) -> Table {
    let row_map = t.projection(&f.parents);
    let v_map = t.projection(&[v]);
    let data = t.data.iter().enumerate().map(|(i, &x)| x * f.get(row_map[i], v_map[i])).collect();
    Table { scope: t.scope.clone(), cards: t.cards.clone(), data }
}

/// Declares the decision variables of `v`.
fn delta_vars(id: &InfluenceDiagram, p: &Parametrization, v: VertexId) -> Vec<Vec<String>> {
    let pc = p.parent_cards(&id.graph, v);
    (0..pc.iter().product())
        .map(|r| {
            let xpa = decode(r, &pc);
            (0..p.cards[v]).map(|xv| delta_name(id, v, &xpa, xv)).collect()
        })
        .collect()
}

/// The two McCormick inequalities per assignment of the root clique of
/// decision `v`, with `bound` a table over its residual.
pub fn mccormick_constraints(
    id: &InfluenceDiagram,
    p: &Parametrization,
    rjt: &RootedJunctionTree,
    v: VertexId,
    bound: &Table,
) -> Result<ConstraintBlock> {
    if !id.is_decision(v) {
        return Err(Error::NotDecisionVertex(v));
    }
    let mut b = ConstraintBlock::default();
    let c = rjt.cluster_of(v);
    let cn = cluster_names(id, p, rjt, c);
    let deltas = delta_vars(id, p, v);
    for row in &deltas {
        for n in row {
            b.var(n.clone(), 0.0, 1.0);
        }
    }
    let cards = cards_of(p, &cn.scope);
    let res_map = projection_map(&cn.scope, &cards, &cn.res_scope);
    let bound_map = projection_map(&cn.res_scope, &cards_of(p, &cn.res_scope), &bound.scope);
    let row_map = projection_map(&cn.scope, &cards, id.graph.parents(v));
    let v_map = projection_map(&cn.scope, &cards, &[v]);
    let label = id.label(v);
    for i in 0..cn.mu.len() {
        let y = res_map[i];
        let bval = bound.data[bound_map[y]];
        let d = deltas[row_map[i]][v_map[i]].clone();
        b.row(
            format!("mcl[{label}][{i}]"),
            vec![(cn.mu[i].clone(), 1.0), (cn.mud[y].clone(), -1.0), (d.clone(), -bval)],
            Sense::Ge,
            -bval,
        );
        b.row(format!("mcu[{label}][{i}]"), vec![(cn.mu[i].clone(), 1.0), (d, -bval)], Sense::Le, 0.0);
    }
    Ok(b)
}

/// `sum_{x_v} delta(x_v | x_pa) = 1` for every row of decision `v`.
pub fn policy_row_constraints(id: &InfluenceDiagram, p: &Parametrization, v: VertexId) -> ConstraintBlock {
    let mut b = ConstraintBlock::default();
    for (r, row) in delta_vars(id, p, v).into_iter().enumerate() {
        for n in &row {
            b.var(n.clone(), 0.0, 1.0);
        }
        b.row(format!("drow[{}][{r}]", id.label(v)), row.into_iter().map(|n| (n, 1.0)).collect(), Sense::Eq, 1.0);
    }
    b
}

/// Utility marginal variables, their definitions and the objective terms.
fn objective_block(id: &InfluenceDiagram, p: &Parametrization, rjt: &RootedJunctionTree) -> (ConstraintBlock, Vec<(String, f64)>) {
    let mut b = ConstraintBlock::default();
    let mut obj = Vec::new();
    for v in id.utilities() {
        let c = rjt.cluster_of(v);
        let cn = cluster_names(id, p, rjt, c);
        let map = projection_map(&cn.scope, &cards_of(p, &cn.scope), &[v]);
        let names: Vec<String> = (0..p.cards[v]).map(|x| marginal_name(id, v, x)).collect();
        let mut groups: Vec<Vec<(String, f64)>> = names.iter().map(|n| vec![(n.clone(), -1.0)]).collect();
        for (i, &x) in map.iter().enumerate() {
            groups[x].push((cn.mu[i].clone(), 1.0));
        }
        for (x, n) in names.iter().enumerate() {
            b.var(n.clone(), 0.0, 1.0);
            obj.push((n.clone(), p.reward(v)[x]));
        }
        for (x, terms) in groups.into_iter().enumerate() {
            b.row(format!("mvdef[{}][{x}]", id.label(v)), terms, Sense::Eq, 0.0);
        }
    }
    (b, obj)
}

fn finish(model: &mut LinearModel, id: &InfluenceDiagram, p: &Parametrization, rjt: &RootedJunctionTree) -> Result<()> {
    let (ob, obj) = objective_block(id, p, rjt);
    model.add_block(&ob)?;
    let terms = obj.into_iter().map(|(n, c)| (model.var_index(&n).expect("declared"), c)).collect();
    model.set_objective(terms);
    Ok(())
}

/// Moment-only relaxation: local polytope with chance factors, plus the
/// independence cuts when `cuts` is set.
pub fn polytope_model(id: &InfluenceDiagram, p: &Parametrization, rjt: &RootedJunctionTree, cuts: bool) -> Result<LinearModel> {
    let mut m = LinearModel::new();
    m.add_block(&local_polytope_constraints(id, p, rjt))?;
    m.add_block(&pbar_constraints(id, p, rjt))?;
    if cuts {
        m.add_block(&valid_cut_constraints(id, p, rjt)?)?;
    }
    finish(&mut m, id, p, rjt)?;
    Ok(m)
}

/// One of the four formulations; `integral` marks the decision variables binary.
pub fn assemble(
    id: &InfluenceDiagram,
    p: &Parametrization,
    rjt: &RootedJunctionTree,
    variant: Variant,
    integral: bool,
) -> Result<LinearModel> {
    let mut m = LinearModel::new();
    m.add_block(&local_polytope_constraints(id, p, rjt))?;
    m.add_block(&pbar_constraints(id, p, rjt))?;
    if variant.has_cuts() {
        m.add_block(&valid_cut_constraints(id, p, rjt)?)?;
    }
    let bounds = variant.has_bounds().then(|| mccormick_bounds(id, p, rjt));
    for v in id.decisions() {
        let res = rjt.residual(v);
        let bound = match &bounds {
            Some(b) => b.residual[&v].clone(),
            None => Table::filled(res.clone(), cards_of(p, &res), 1.0),
        };
        m.add_block(&mccormick_constraints(id, p, rjt, v, &bound)?)?;
        m.add_block(&policy_row_constraints(id, p, v))?;
    }
    if integral {
        for i in 0..m.vars.len() {
            if m.vars[i].name.starts_with("delta[") {
                m.set_binary(i, true);
            }
        }
    }
    finish(&mut m, id, p, rjt)?;
    Ok(m)
}

/// Named values of the moment, marginal and (if given) decision variables.
pub fn named_values(
    id: &InfluenceDiagram,
    p: &Parametrization,
    rjt: &RootedJunctionTree,
    mu: &MomentVector,
    policy: Option<&Policy>,
) -> HashMap<String, f64> {
    let mut out = HashMap::new();
    for c in 0..rjt.len() {
        let cn = cluster_names(id, p, rjt, c);
        for (n, &x) in cn.mu.iter().zip(&mu.clusters[c].data) {
            out.insert(n.clone(), x);
        }
        for (n, &x) in cn.mud.iter().zip(&mu.residuals[c].data) {
            out.insert(n.clone(), x);
        }
    }
    for v in id.utilities() {
        for (x, val) in mu.marginal(rjt, v).into_iter().enumerate() {
            out.insert(marginal_name(id, v, x), val);
        }
    }
    if let Some(pol) = policy {
        for (&v, t) in &pol.tables {
            for r in 0..t.rows() {
                let xpa = t.parent_states(r);
                for xv in 0..t.card {
                    out.insert(delta_name(id, v, &xpa, xv), t.get(r, xv));
                }
            }
        }
    }
    out
}

/// Full assignment of `model` induced by a policy.
pub fn embed_policy(
    model: &LinearModel,
    id: &InfluenceDiagram,
    p: &Parametrization,
    rjt: &RootedJunctionTree,
    policy: &Policy,
) -> Result<Vec<f64>> {
    let mu = policy_moments(id, p, rjt, policy)?;
    let values = named_values(id, p, rjt, &mu, Some(policy));
    model
        .vars
        .iter()
        .map(|v| values.get(&v.name).copied().ok_or_else(|| Error::InvalidInstance(format!("no value for {}", v.name))))
        .collect()
}

/// Reads the cluster moments out of a model assignment.
pub fn moments_from_assignment(
    model: &LinearModel,
    x: &[f64],
    id: &InfluenceDiagram,
    p: &Parametrization,
    rjt: &RootedJunctionTree,
) -> Result<MomentVector> {
    let get = |n: &String| -> Result<f64> {
        model.var_index(n).map(|i| x[i]).ok_or_else(|| Error::InvalidInstance(format!("model has no {n}")))
    };
    let mut clusters = Vec::new();
    let mut residuals = Vec::new();
    for c in 0..rjt.len() {
        let cn = cluster_names(id, p, rjt, c);
        let data = cn.mu.iter().map(get).collect::<Result<Vec<_>>>()?;
        let rdata = cn.mud.iter().map(get).collect::<Result<Vec<_>>>()?;
        clusters.push(Table { cards: cards_of(p, &cn.scope), scope: cn.scope, data });
        residuals.push(Table { cards: cards_of(p, &cn.res_scope), scope: cn.res_scope, data: rdata });
    }
    Ok(MomentVector { clusters, residuals })
}

/// Decision rules `mu_fa / mu_pa` read off the moments (uniform rows where `mu_pa = 0`).
pub fn quotient_policy(id: &InfluenceDiagram, p: &Parametrization, rjt: &RootedJunctionTree, mu: &MomentVector) -> Policy {
    let mut tables = BTreeMap::new();
    for v in id.decisions() {
        let pa = id.graph.parents(v).to_vec();
        let pc = p.parent_cards(&id.graph, v);
        let mut fa = pa.clone();
        fa.push(v);
        let t = mu.of_vertex(rjt, v).marginalize_onto(&fa);
        let card = p.cards[v];
        let mut values = vec![0.0; t.data.len()];
        for r in 0..t.data.len() / card {
            let row = &t.data[r * card..(r + 1) * card];
            let s: f64 = row.iter().sum();
            for xv in 0..card {
                values[r * card + xv] = if s > 0.0 { row[xv] / s } else { 1.0 / card as f64 };
            }
        }
        tables.insert(v, CondTable::new(pa, pc, card, values));
    }
    Policy { tables }
}

/// Deterministic rounding of [`quotient_policy`]: each row takes its largest
/// entry (smallest state on ties).
pub fn rounded_policy(id: &InfluenceDiagram, p: &Parametrization, rjt: &RootedJunctionTree, mu: &MomentVector) -> Policy {
    let q = quotient_policy(id, p, rjt, mu);
    let tables = q
        .tables
        .into_iter()
        .map(|(v, t)| {
            let choices: Vec<usize> = (0..t.rows())
                .map(|r| {
                    let row = t.row(r);
                    (0..row.len()).fold(0, |b, j| if row[j] > row[b] + 1e-12 { j } else { b })
                })
                .collect();
            (v, CondTable::deterministic(t.parents, t.parent_cards, t.card, &choices))
        })
        .collect();
    Policy { tables }
}

/// Primal heuristic for branch-and-bound: round the policy suggested by the
/// moments of an LP solution and embed its exact moments.
pub fn rounding_heuristic<'a>(
    model: &'a LinearModel,
    id: &'a InfluenceDiagram,
    p: &'a Parametrization,
    rjt: &'a RootedJunctionTree,
) -> impl Fn(&[f64]) -> Option<Vec<f64>> + Sync + 'a {
    move |x: &[f64]| {
        let mu = moments_from_assignment(model, x, id, p, rjt).ok()?;
        let pol = rounded_policy(id, p, rjt, &mu);
        embed_policy(model, id, p, rjt, &pol).ok()
    }
}

/// Diagrams obtained by giving each decision the rest of its root clique
/// (first) or the blanket part of it (second) as extra parents.
pub fn soluble_relaxation_graphs(id: &InfluenceDiagram, rjt: &RootedJunctionTree) -> Result<(InfluenceDiagram, InfluenceDiagram)> {
    let aug = augment(id);
    let mut bar = Vec::new();
    let mut perp = Vec::new();
    for v in id.decisions() {
        let cv = &rjt.clusters[rjt.cluster_of(v)];
        let fa = id.graph.family(v);
        for &u in cv {
            if !fa.contains(&u) {
                bar.push((u, v));
            }
        }
        for u in free_split_in(&aug, cv).blanket {
            if !fa.contains(&u) {
                perp.push((u, v));
            }
        }
    }
    Ok((id.with_extra_arcs(&bar)?, id.with_extra_arcs(&perp)?))
}
