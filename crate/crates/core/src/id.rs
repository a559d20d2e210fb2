//! Influence diagrams, their parametrization, policies and the
//! separation queries built on the augmented graph.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DiGraph, VertexId};
use crate::table::{decode, encode};

const ROW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Chance,
    Decision,
    Utility,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceDiagram {
    pub graph: DiGraph,
    pub kinds: Vec<VertexKind>,
    pub labels: Vec<String>,
}

impl InfluenceDiagram {
    /// Builds and checks the structural invariants (acyclic, utilities are sinks, labels usable).
    pub fn new(graph: DiGraph, kinds: Vec<VertexKind>, labels: Vec<String>) -> Result<Self> {
        let id = InfluenceDiagram { graph, kinds, labels };
        id.check()?;
        Ok(id)
    }

    fn check(&self) -> Result<()> {
        let n = self.graph.len();
        if self.kinds.len() != n || self.labels.len() != n {
            return Err(Error::InvalidInstance("kind/label count mismatch".into()));
        }
        if !self.graph.is_acyclic() {
            return Err(Error::CyclicGraph);
        }
        let mut seen = BTreeSet::new();
        for v in 0..n {
            let l = &self.labels[v];
            if l.is_empty() || l.chars().any(|c| c.is_whitespace() || "[]:,".contains(c)) {
                return Err(Error::InvalidInstance(format!("bad label {l:?}")));
            }
            if !seen.insert(l.clone()) {
                return Err(Error::InvalidInstance(format!("duplicate label {l}")));
            }
            if self.kinds[v] == VertexKind::Utility && !self.graph.children(v).is_empty() {
                return Err(Error::InvalidInstance(format!("utility vertex {l} has children")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    pub fn kind(&self, v: VertexId) -> VertexKind {
        self.kinds[v]
    }

    pub fn label(&self, v: VertexId) -> &str {
        &self.labels[v]
    }

    pub fn vertex_by_label(&self, label: &str) -> Option<VertexId> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn decisions(&self) -> Vec<VertexId> {
        self.of_kind(VertexKind::Decision)
    }

    pub fn utilities(&self) -> Vec<VertexId> {
        self.of_kind(VertexKind::Utility)
    }

    fn of_kind(&self, k: VertexKind) -> Vec<VertexId> {
        (0..self.len()).filter(|&v| self.kinds[v] == k).collect()
    }

    pub fn is_decision(&self, v: VertexId) -> bool {
        self.kinds[v] == VertexKind::Decision
    }

    /// Same vertices and kinds with extra arcs added.
    pub fn with_extra_arcs(&self, arcs: &[(VertexId, VertexId)]) -> Result<Self> {
        let mut g = self.graph.clone();
        for &(u, v) in arcs {
            g.add_arc(u, v);
        }
        InfluenceDiagram::new(g, self.kinds.clone(), self.labels.clone())
    }
}

/// Conditional table of one vertex given its parents. Rows follow the
/// parents in increasing id order (row-major), columns the vertex states.
#[derive(Debug, Clone, PartialEq)]
pub struct CondTable {
    pub parents: Vec<VertexId>,
    pub parent_cards: Vec<usize>,
    pub card: usize,
    pub values: Vec<f64>,
}

impl CondTable {
    pub fn new(parents: Vec<VertexId>, parent_cards: Vec<usize>, card: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), parent_cards.iter().product::<usize>() * card);
        CondTable { parents, parent_cards, card, values }
    }

    pub fn uniform(parents: Vec<VertexId>, parent_cards: Vec<usize>, card: usize) -> Self {
        let rows: usize = parent_cards.iter().product();
        CondTable::new(parents, parent_cards, card, vec![1.0 / card as f64; rows * card])
    }

    /// Each row a Dirac on `choice[row]`.
    pub fn deterministic(parents: Vec<VertexId>, parent_cards: Vec<usize>, card: usize, choice: &[usize]) -> Self {
        let rows: usize = parent_cards.iter().product();
        assert_eq!(choice.len(), rows);
        let mut values = vec![0.0; rows * card];
        for (r, &c) in choice.iter().enumerate() {
            values[r * card + c] = 1.0;
        }
        CondTable::new(parents, parent_cards, card, values)
    }

    pub fn rows(&self) -> usize {
        self.parent_cards.iter().product()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.card..(r + 1) * self.card]
    }

    pub fn get(&self, row: usize, x: usize) -> f64 {
        self.values[row * self.card + x]
    }

    pub fn row_index(&self, parent_states: &[usize]) -> usize {
        encode(parent_states, &self.parent_cards)
    }

    pub fn parent_states(&self, row: usize) -> Vec<usize> {
        decode(row, &self.parent_cards)
    }

    /// Row choices when every row is a Dirac (within `tol`).
    pub fn dirac_choices(&self, tol: f64) -> Option<Vec<usize>> {
        (0..self.rows())
            .map(|r| {
                let row = self.row(r);
                let k = row.iter().position(|&x| (x - 1.0).abs() <= tol)?;
                row.iter()
                    .enumerate()
                    .all(|(j, &x)| j == k || x.abs() <= tol)
                    .then_some(k)
            })
            .collect()
    }

    fn check_rows(&self) -> std::result::Result<(), String> {
        for r in 0..self.rows() {
            let row = self.row(r);
            if row.iter().any(|&x| !x.is_finite() || x < 0.0) {
                return Err(format!("row {r} has a negative or non-finite entry"));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(format!("row {r} sums to {s}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parametrization {
    pub cards: Vec<usize>,
    /// Indexed by vertex; present for chance and utility vertices.
    pub cpts: Vec<Option<CondTable>>,
    /// Indexed by vertex; present for utility vertices.
    pub rewards: Vec<Option<Vec<f64>>>,
}

impl Parametrization {
    pub fn cpt(&self, v: VertexId) -> &CondTable {
        self.cpts[v].as_ref().expect("vertex has no CPT")
    }

    pub fn reward(&self, v: VertexId) -> &[f64] {
        self.rewards[v].as_ref().expect("vertex has no reward")
    }

    pub fn parent_cards(&self, g: &DiGraph, v: VertexId) -> Vec<usize> {
        g.parents(v).iter().map(|&u| self.cards[u]).collect()
    }

    /// Checks the parametrization against the diagram.
    pub fn validate(&self, id: &InfluenceDiagram) -> Result<()> {
        let n = id.len();
        let bad = |m: String| Err(Error::InvalidInstance(m));
        if self.cards.len() != n || self.cpts.len() != n || self.rewards.len() != n {
            return bad("parametrization size mismatch".into());
        }
        for v in 0..n {
            let l = id.label(v);
            if self.cards[v] == 0 {
                return bad(format!("{l}: empty state space"));
            }
            match (id.kind(v), &self.cpts[v]) {
                (VertexKind::Decision, Some(_)) => return bad(format!("{l}: decision with CPT")),
                (VertexKind::Decision, None) => {}
                (_, None) => return bad(format!("{l}: missing CPT")),
                (_, Some(t)) => {
                    if t.parents != id.graph.parents(v)
                        || t.parent_cards != self.parent_cards(&id.graph, v)
                        || t.card != self.cards[v]
                    {
                        return bad(format!("{l}: CPT shape mismatch"));
                    }
                    t.check_rows().or_else(|m| bad(format!("{l}: {m}")))?;
                }
            }
            match (id.kind(v), &self.rewards[v]) {
                (VertexKind::Utility, None) => return bad(format!("{l}: missing reward")),
                (VertexKind::Utility, Some(r)) if r.len() != self.cards[v] => {
                    return bad(format!("{l}: reward length mismatch"))
                }
                (VertexKind::Utility, Some(r)) if r.iter().any(|x| !x.is_finite()) => {
                    return bad(format!("{l}: non-finite reward"))
                }
                (VertexKind::Utility, _) | (_, None) => {}
                (_, Some(_)) => return bad(format!("{l}: reward on non-utility vertex")),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub tables: BTreeMap<VertexId, CondTable>,
}

impl Policy {
    pub fn uniform(id: &InfluenceDiagram, p: &Parametrization) -> Self {
        let tables = id
            .decisions()
            .into_iter()
            .map(|v| {
                let pa = id.graph.parents(v).to_vec();
                let pc = p.parent_cards(&id.graph, v);
                (v, CondTable::uniform(pa, pc, p.cards[v]))
            })
            .collect();
        Policy { tables }
    }

    /// Deterministic policy from per-decision row choices.
    pub fn from_choices(id: &InfluenceDiagram, p: &Parametrization, choices: &BTreeMap<VertexId, Vec<usize>>) -> Result<Self> {
        let mut tables = BTreeMap::new();
        for v in id.decisions() {
            let c = choices.get(&v).ok_or(Error::IncompletePolicy(v))?;
            let pc = p.parent_cards(&id.graph, v);
            if c.len() != pc.iter().product::<usize>() || c.iter().any(|&x| x >= p.cards[v]) {
                return Err(Error::IncompletePolicy(v));
            }
            tables.insert(v, CondTable::deterministic(id.graph.parents(v).to_vec(), pc, p.cards[v], c));
        }
        Ok(Policy { tables })
    }

    pub fn is_deterministic(&self) -> bool {
        self.tables.values().all(|t| t.dirac_choices(0.0).is_some())
    }

    /// Checks that every decision has a well-shaped table with distribution rows.
    pub fn check(&self, id: &InfluenceDiagram, p: &Parametrization) -> Result<()> {
        for v in id.decisions() {
            let t = self.tables.get(&v).ok_or(Error::IncompletePolicy(v))?;
            if t.parents != id.graph.parents(v)
                || t.parent_cards != p.parent_cards(&id.graph, v)
                || t.card != p.cards[v]
                || t.check_rows().is_err()
            {
                return Err(Error::IncompletePolicy(v));
            }
        }
        Ok(())
    }

    pub fn get(&self, v: VertexId) -> Result<&CondTable> {
        self.tables.get(&v).ok_or(Error::IncompletePolicy(v))
    }

    /// JSON object keyed by decision label with row choices (deterministic) or full rows.
    pub fn to_json(&self, id: &InfluenceDiagram) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (&v, t) in &self.tables {
            let value = match t.dirac_choices(1e-9) {
                Some(c) => serde_json::json!(c),
                None => serde_json::json!((0..t.rows()).map(|r| t.row(r).to_vec()).collect::<Vec<_>>()),
            };
            map.insert(id.label(v).to_string(), value);
        }
        serde_json::Value::Object(map)
    }
}

/// Number of deterministic policies, as a float since it overflows quickly.
pub fn deterministic_policy_count(id: &InfluenceDiagram, p: &Parametrization) -> f64 {
    id.decisions()
        .into_iter()
        .map(|v| {
            let rows: f64 = id.graph.parents(v).iter().map(|&u| p.cards[u] as f64).product();
            (p.cards[v] as f64).powf(rows)
        })
        .product()
}

/// log10 of the number of deterministic policies.
pub fn log10_policy_count(id: &InfluenceDiagram, p: &Parametrization) -> f64 {
    id.decisions()
        .into_iter()
        .map(|v| {
            let rows: f64 = id.graph.parents(v).iter().map(|&u| p.cards[u] as f64).product();
            rows * (p.cards[v] as f64).log10()
        })
        .sum()
}

// ---------------------------------------------------------------- JSON IO

#[derive(Debug, Serialize, Deserialize)]
struct VertexRecord {
    id: i64,
    label: String,
    kind: VertexKind,
    card: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    vertices: Vec<VertexRecord>,
    arcs: Vec<[i64; 2]>,
    cpts: BTreeMap<String, Vec<f64>>,
    rewards: BTreeMap<String, Vec<f64>>,
}

/// Parses the instance format. Vertex ids may be any distinct integers;
/// internally they are renumbered by increasing id.
pub fn from_json(text: &str) -> Result<(InfluenceDiagram, Parametrization)> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| Error::ParseError(e.to_string()))?;
    let mut ids: Vec<i64> = file.vertices.iter().map(|r| r.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInstance("duplicate vertex id".into()));
    }
    let index = |x: i64| ids.binary_search(&x).map_err(|_| Error::InvalidInstance(format!("unknown vertex id {x}")));
    let n = ids.len();
    let mut kinds = vec![VertexKind::Chance; n];
    let mut labels = vec![String::new(); n];
    let mut cards = vec![0; n];
    for r in &file.vertices {
        let v = index(r.id)?;
        kinds[v] = r.kind;
        labels[v] = r.label.clone();
        cards[v] = r.card;
    }
    let mut g = DiGraph::new(n);
    for a in &file.arcs {
        let (u, v) = (index(a[0])?, index(a[1])?);
        if u == v {
            return Err(Error::InvalidInstance("self loop".into()));
        }
        g.add_arc(u, v);
    }
    let id = InfluenceDiagram::new(g, kinds, labels)?;
    let key_vertex = |k: &String| -> Result<VertexId> {
        let raw: i64 = k.parse().map_err(|_| Error::ParseError(format!("bad vertex key {k}")))?;
        index(raw)
    };
    let mut cpts = vec![None; n];
    for (k, values) in &file.cpts {
        let v = key_vertex(k)?;
        let pc: Vec<usize> = id.graph.parents(v).iter().map(|&u| cards[u]).collect();
        if values.len() != pc.iter().product::<usize>() * cards[v] {
            return Err(Error::InvalidInstance(format!("{}: CPT has wrong length", id.label(v))));
        }
        cpts[v] = Some(CondTable::new(id.graph.parents(v).to_vec(), pc, cards[v], values.clone()));
    }
    let mut rewards = vec![None; n];
    for (k, values) in &file.rewards {
        rewards[key_vertex(k)?] = Some(values.clone());
    }
    let p = Parametrization { cards, cpts, rewards };
    p.validate(&id)?;
    Ok((id, p))
}

pub fn to_json(id: &InfluenceDiagram, p: &Parametrization) -> String {
    let file = InstanceFile {
        vertices: (0..id.len())
            .map(|v| VertexRecord { id: v as i64, label: id.labels[v].clone(), kind: id.kinds[v], card: p.cards[v] })
            .collect(),
        arcs: id.graph.arcs().into_iter().map(|(u, v)| [u as i64, v as i64]).collect(),
        cpts: (0..id.len())
            .filter_map(|v| p.cpts[v].as_ref().map(|t| (v.to_string(), t.values.clone())))
            .collect(),
        rewards: (0..id.len())
            .filter_map(|v| p.rewards[v].as_ref().map(|r| (v.to_string(), r.clone())))
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("serializable")
}

pub fn load(path: &std::path::Path) -> Result<(InfluenceDiagram, Parametrization)> {
    from_json(&std::fs::read_to_string(path)?)
}

pub fn save(path: &std::path::Path, id: &InfluenceDiagram, p: &Parametrization) -> Result<()> {
    std::fs::write(path, to_json(id, p))?;
    Ok(())
}

// ------------------------------------------------------------ structure

/// Restriction to the utility vertices and their ancestors. Also returns the
/// kept original ids (the new id of `kept[i]` is `i`).
pub fn prune_irrelevant_with_map(id: &InfluenceDiagram, p: &Parametrization) -> (InfluenceDiagram, Parametrization, Vec<VertexId>) {
    let kept: Vec<VertexId> = id.graph.ancestral_closure(&id.utilities()).into_iter().collect();
    let mut new_index = vec![usize::MAX; id.len()];
    for (i, &v) in kept.iter().enumerate() {
        new_index[v] = i;
    }
    let mut g = DiGraph::new(kept.len());
    for (u, v) in id.graph.arcs() {
        if new_index[u] != usize::MAX && new_index[v] != usize::MAX {
            g.add_arc(new_index[u], new_index[v]);
        }
    }
    let kinds = kept.iter().map(|&v| id.kinds[v]).collect();
    let labels = kept.iter().map(|&v| id.labels[v].clone()).collect();
    let cpts = kept
        .iter()
        .map(|&v| {
            p.cpts[v].as_ref().map(|t| CondTable {
                parents: t.parents.iter().map(|&u| new_index[u]).collect(),
                ..t.clone()
            })
        })
        .collect();
    let new_p = Parametrization {
        cards: kept.iter().map(|&v| p.cards[v]).collect(),
        cpts,
        rewards: kept.iter().map(|&v| p.rewards[v].clone()).collect(),
    };
    let new_id = InfluenceDiagram { graph: g, kinds, labels };
    (new_id, new_p, kept)
}

pub fn prune_irrelevant(id: &InfluenceDiagram, p: &Parametrization) -> (InfluenceDiagram, Parametrization) {
    let (i, q, _) = prune_irrelevant_with_map(id, p);
    (i, q)
}

/// The graph with one extra parentless vertex per decision pointing to it.
#[derive(Debug, Clone)]
pub struct AugmentedGraph {
    pub graph: DiGraph,
    /// `theta[k]` is the extra vertex attached to `decisions[k]`.
    pub decisions: Vec<VertexId>,
    pub theta: Vec<VertexId>,
}

impl AugmentedGraph {
    pub fn theta_of(&self, v: VertexId) -> Option<VertexId> {
        self.decisions.iter().position(|&d| d == v).map(|k| self.theta[k])
    }
}

pub fn augment(id: &InfluenceDiagram) -> AugmentedGraph {
    let n = id.len();
    let decisions = id.decisions();
    let mut g = DiGraph::new(n + decisions.len());
    for (u, v) in id.graph.arcs() {
        g.add_arc(u, v);
    }
    let theta: Vec<VertexId> = (0..decisions.len()).map(|k| n + k).collect();
    for (k, &d) in decisions.iter().enumerate() {
        g.add_arc(theta[k], d);
    }
    AugmentedGraph { graph: g, decisions, theta }
}

/// Decision `u` is s-reachable from decision `v`.
pub fn s_reachable(id: &InfluenceDiagram, u: VertexId, v: VertexId) -> Result<bool> {
    s_reachable_in(id, &augment(id), u, v)
}

fn s_reachable_in(id: &InfluenceDiagram, aug: &AugmentedGraph, u: VertexId, v: VertexId) -> Result<bool> {
    for w in [u, v] {
        if w >= id.len() || !id.is_decision(w) {
            return Err(Error::NotDecisionVertex(w));
        }
    }
    let theta_u = aug.theta_of(u).expect("decision has theta");
    let dsc: Vec<VertexId> = id.graph.descendants(v).into_iter().collect();
    if dsc.is_empty() {
        return Ok(false);
    }
    let fa = id.graph.family(v);
    Ok(!aug.graph.d_separated(&[theta_u], &dsc, &fa)?)
}

/// Graph over all vertices of the diagram whose arcs `(v, u)` say that `u`
/// is s-reachable from `v`; non-decision vertices stay isolated.
pub fn relevance_graph(id: &InfluenceDiagram) -> DiGraph {
    let aug = augment(id);
    let decisions = id.decisions();
    let mut h = DiGraph::new(id.len());
    for &v in &decisions {
        for &u in &decisions {
            if u != v && s_reachable_in(id, &aug, u, v).expect("decisions") {
                h.add_arc(v, u);
            }
        }
    }
    h
}

pub fn is_soluble(id: &InfluenceDiagram) -> bool {
    relevance_graph(id).is_acyclic()
}

/// Decisions in a topological order of the relevance graph (smallest id first).
pub fn relevance_order(id: &InfluenceDiagram) -> Result<Vec<VertexId>> {
    let h = relevance_graph(id);
    let order = h.topological_sort().map_err(|_| Error::NotSoluble)?;
    Ok(order.into_iter().filter(|&v| id.is_decision(v)).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreeSplit {
    pub cluster: Vec<VertexId>,
    pub free: Vec<VertexId>,
    pub blanket: Vec<VertexId>,
}

/// Splits `cluster` into the vertices independent of every decision
/// intervention given the rest of the cluster, and the remainder.
pub fn free_split(id: &InfluenceDiagram, cluster: &[VertexId]) -> FreeSplit {
    free_split_in(&augment(id), cluster)
}

pub fn free_split_in(aug: &AugmentedGraph, cluster: &[VertexId]) -> FreeSplit {
    let mut c = cluster.to_vec();
    c.sort_unstable();
    c.dedup();
    let mut free = Vec::new();
    let mut blanket = Vec::new();
    for &v in &c {
        let rest: Vec<VertexId> = c.iter().copied().filter(|&w| w != v).collect();
        let sep = aug.theta.is_empty() || aug.graph.d_separated(&[v], &aug.theta, &rest).expect("disjoint");
        if sep {
            free.push(v);
        } else {
            blanket.push(v);
        }
    }
    FreeSplit { cluster: c, free, blanket }
}
