//! Rooted junction trees: construction from a topological order, the
//! online-order and soluble variants, seeded clusters, normalization and
//! validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::{DiGraph, VertexId};
use crate::id::{relevance_order, InfluenceDiagram};

#[derive(Debug, Clone, PartialEq)]
pub struct RootedJunctionTree {
    /// Sorted vertex sets. Parents always precede their children.
    pub clusters: Vec<Vec<VertexId>>,
    pub parent: Vec<Option<usize>>,
    /// Topological order of the diagram the tree was built with.
    pub order: Vec<VertexId>,
    root_clique: Vec<Option<usize>>,
}

impl RootedJunctionTree {
    /// Assembles a tree from raw parts; `clusters` may be in any order as long
    /// as `parent` describes a forest.
    pub fn from_parts(n_vertices: usize, clusters: Vec<Vec<VertexId>>, parent: Vec<Option<usize>>, order: Vec<VertexId>) -> Self {
        let clusters: Vec<Vec<VertexId>> = clusters
            .into_iter()
            .map(|mut c| {
                c.sort_unstable();
                c.dedup();
                c
            })
            .collect();
        let mut rjt = RootedJunctionTree { clusters, parent, order, root_clique: Vec::new() };
        rjt.root_clique = rjt.compute_root_cliques(n_vertices);
        rjt
    }

    fn depth(&self, c: usize) -> Option<usize> {
        let mut d = 0;
        let mut cur = c;
        while let Some(p) = self.parent[cur] {
            if p >= self.clusters.len() || d > self.clusters.len() {
                return None;
            }
            cur = p;
            d += 1;
        }
        Some(d)
    }

    fn compute_root_cliques(&self, n: usize) -> Vec<Option<usize>> {
        let depths: Vec<usize> = (0..self.clusters.len()).map(|c| self.depth(c).unwrap_or(usize::MAX)).collect();
        let mut best: Vec<Option<usize>> = vec![None; n];
        for (c, cl) in self.clusters.iter().enumerate() {
            for &v in cl {
                if v >= n {
                    continue;
                }
                match best[v] {
                    Some(b) if depths[b] <= depths[c] => {}
                    _ => best[v] = Some(c),
                }
            }
        }
        best
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Index of the root clique C_v.
    pub fn cluster_of(&self, v: VertexId) -> usize {
        self.root_clique[v].expect("vertex not covered by the tree")
    }

    pub fn root_clique(&self, v: VertexId) -> Option<usize> {
        self.root_clique.get(v).copied().flatten()
    }

    pub fn cluster(&self, c: usize) -> &[VertexId] {
        &self.clusters[c]
    }

    /// C_v \ {v}.
    pub fn residual(&self, v: VertexId) -> Vec<VertexId> {
        self.clusters[self.cluster_of(v)].iter().copied().filter(|&w| w != v).collect()
    }

    /// Vertices whose root clique is `c`, sorted by id.
    pub fn offspring(&self, c: usize) -> Vec<VertexId> {
        self.clusters[c].iter().copied().filter(|&v| self.root_clique[v] == Some(c)).collect()
    }

    /// The single offspring of a normalized cluster.
    pub fn offspring_vertex(&self, c: usize) -> VertexId {
        let o = self.offspring(c);
        assert_eq!(o.len(), 1, "cluster {c} is not offspring-normalized");
        o[0]
    }

    pub fn children(&self, c: usize) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.parent[k] == Some(c)).collect()
    }

    pub fn is_normalized(&self) -> bool {
        (0..self.len()).all(|c| self.offspring(c).len() == 1)
    }

    /// Cluster indices with every parent before its children.
    pub fn topological_clusters(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by_key(|&c| (self.depth(c).unwrap_or(usize::MAX), c));
        idx
    }

    /// `a` is an ancestor of `b` in the cluster tree (or equal).
    pub fn reaches(&self, a: usize, b: usize) -> bool {
        let mut cur = Some(b);
        let mut steps = 0;
        while let Some(c) = cur {
            if c == a {
                return true;
            }
            steps += 1;
            if steps > self.len() {
                return false;
            }
            cur = self.parent[c];
        }
        false
    }

    /// One line per cluster in residual-offspring notation, e.g. `s1 o1 u1 - a1`.
    pub fn notation(&self, id: &InfluenceDiagram) -> Vec<String> {
        (0..self.len()).map(|c| self.cluster_label(id, c)).collect()
    }

    fn cluster_label(&self, id: &InfluenceDiagram, c: usize) -> String {
        let off = self.offspring(c);
        let res: Vec<&str> = self.clusters[c].iter().filter(|v| !off.contains(v)).map(|&v| id.label(v)).collect();
        let off: Vec<&str> = off.iter().map(|&v| id.label(v)).collect();
        if res.is_empty() {
            off.join(" ")
        } else {
            format!("{} - {}", res.join(" "), off.join(" "))
        }
    }

    pub fn to_dot(&self, id: &InfluenceDiagram) -> String {
        let mut s = String::from("digraph rjt {\n  node [shape=box];\n");
        for c in 0..self.len() {
            let _ = writeln!(s, "  c{c} [label=\"{}\"];", self.cluster_label(id, c));
        }
        for c in 0..self.len() {
            if let Some(p) = self.parent[c] {
                let _ = writeln!(s, "  c{p} -> c{c};");
            }
        }
        s.push_str("}\n");
        s
    }
}

// ------------------------------------------------------------- builders

/// Builds the tree for a given topological order.
pub fn build_rjt(id: &InfluenceDiagram, order: &[VertexId]) -> Result<RootedJunctionTree> {
    build_rjt_seeded(id, order, &BTreeMap::new())
}

/// Like [`build_rjt`], with extra vertices forced into selected clusters.
/// Seeds of `v` must come strictly before `v` in `order`.
pub fn build_rjt_seeded(
    id: &InfluenceDiagram,
    order: &[VertexId],
    seeds: &BTreeMap<VertexId, Vec<VertexId>>,
) -> Result<RootedJunctionTree> {
    build_on_graph(&id.graph, order, seeds)
}

fn build_on_graph(g: &DiGraph, order: &[VertexId], seeds: &BTreeMap<VertexId, Vec<VertexId>>) -> Result<RootedJunctionTree> {
    let pos = g.check_topological(order)?;
    for (&v, s) in seeds {
        if v >= g.len() {
            return Err(Error::InvalidSeed(v));
        }
        if s.iter().any(|&u| u >= g.len() || pos[u] >= pos[v]) {
            return Err(Error::InvalidSeed(v));
        }
    }
    let n = g.len();
    let mut residual: Vec<BTreeSet<VertexId>> = vec![BTreeSet::new(); n];
    let mut tree_children: Vec<Vec<VertexId>> = vec![Vec::new(); n];
    let mut clusters = vec![Vec::new(); n];
    let mut parent = vec![None; n];
    for k in (0..n).rev() {
        let v = order[k];
        let mut c: BTreeSet<VertexId> = g.family(v).into_iter().collect();
        if let Some(s) = seeds.get(&v) {
            c.extend(s.iter().copied());
        }
        for &w in &tree_children[v] {
            c.extend(residual[w].iter().copied());
        }
        c.remove(&v);
        if let Some(&u) = c.iter().max_by_key(|&&u| pos[u]) {
            tree_children[u].push(v);
            parent[k] = Some(pos[u]);
        }
        residual[v] = c.clone();
        c.insert(v);
        clusters[k] = c.into_iter().collect();
    }
    Ok(RootedJunctionTree::from_parts(n, clusters, parent, order.to_vec()))
}

/// Reverse topological order computed online, eliminating decisions first
/// among available leaves and breaking ties by smallest id.
pub fn auto_order(id: &InfluenceDiagram) -> Result<Vec<VertexId>> {
    let g = &id.graph;
    let mut remaining: Vec<usize> = g.vertices().map(|v| g.children(v).len()).collect();
    let mut leaves: BTreeSet<VertexId> = g.vertices().filter(|&v| remaining[v] == 0).collect();
    let mut rev = Vec::with_capacity(g.len());
    while !leaves.is_empty() {
        let v = leaves.iter().copied().find(|&v| id.is_decision(v)).unwrap_or_else(|| *leaves.first().unwrap());
        leaves.remove(&v);
        rev.push(v);
        for &u in g.parents(v) {
            remaining[u] -= 1;
            if remaining[u] == 0 {
                leaves.insert(u);
            }
        }
    }
    if rev.len() != g.len() {
        return Err(Error::CyclicGraph);
    }
    rev.reverse();
    Ok(rev)
}

pub fn build_rjt_auto(id: &InfluenceDiagram) -> Result<RootedJunctionTree> {
    let order = auto_order(id)?;
    build_rjt(id, &order)
}

/// Tree whose decision clusters have blankets inside the decision families;
/// requires an acyclic relevance graph.
pub fn build_soluble_rjt(id: &InfluenceDiagram) -> Result<RootedJunctionTree> {
    let order = soluble_order(id)?;
    build_rjt(id, &order)
}

/// The topological order used by [`build_soluble_rjt`].
pub fn soluble_order(id: &InfluenceDiagram) -> Result<Vec<VertexId>> {
    let dec_order = relevance_order(id)?;
    let mut g1 = id.graph.clone();
    for i in 0..dec_order.len() {
        for j in i + 1..dec_order.len() {
            g1.add_arc(dec_order[i], dec_order[j]);
        }
    }
    if !g1.is_acyclic() {
        return Err(Error::NotSoluble);
    }
    let mut g2 = g1.clone();
    for &v in &dec_order {
        let dsc = g1.descendants(v);
        for u in id.graph.vertices() {
            if !id.is_decision(u) && u != v && !dsc.contains(&u) {
                g2.add_arc(u, v);
            }
        }
    }
    g2.topological_sort().map_err(|_| Error::NotSoluble)
}

/// Splits clusters with several offspring into chains so that every cluster
/// has exactly one offspring; clusters without offspring are dropped.
pub fn normalize_offspring(rjt: &RootedJunctionTree) -> RootedJunctionTree {
    let n = rjt.root_clique.len();
    let mut pos = vec![usize::MAX; n];
    for (i, &v) in rjt.order.iter().enumerate() {
        pos[v] = i;
    }
    let mut clusters: Vec<Vec<VertexId>> = Vec::new();
    let mut parent: Vec<Option<usize>> = Vec::new();
    // Index of the full copy of each old cluster in the new tree.
    let mut full: Vec<Option<usize>> = vec![None; rjt.len()];
    for c in rjt.topological_clusters() {
        let attach = rjt.parent[c].and_then(|p| full[p]);
        let mut off = rjt.offspring(c);
        off.sort_by_key(|&v| (pos.get(v).copied().unwrap_or(usize::MAX), v));
        if off.is_empty() {
            full[c] = attach;
            continue;
        }
        let mut prev = attach;
        for i in 0..off.len() {
            let drop: BTreeSet<VertexId> = off[i + 1..].iter().copied().collect();
            let cl: Vec<VertexId> = rjt.clusters[c].iter().copied().filter(|v| !drop.contains(v)).collect();
            clusters.push(cl);
            parent.push(prev);
            prev = Some(clusters.len() - 1);
        }
        full[c] = prev;
    }
    RootedJunctionTree::from_parts(n, clusters, parent, rjt.order.clone())
}

// ----------------------------------------------------------- validation

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NotForest,
    MissingVertex,
    RunningIntersection,
    FamilyNotCovered,
    OffspringNotSingleton,
    ResidualNotInParent,
    OrderViolation,
    NotMinimal,
    InclusionMismatch,
}

impl ViolationKind {
    /// Minimality-type properties hold for builder output without seeds only.
    pub fn is_minimality(self) -> bool {
        matches!(self, ViolationKind::NotMinimal | ViolationKind::InclusionMismatch)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

/// Checks all tree invariants. Minimality checks run only on offspring-normalized
/// trees whose order is a valid topological order.
pub fn validate_rjt(id: &InfluenceDiagram, rjt: &RootedJunctionTree) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |kind, detail: String| out.push(Violation { kind, detail });
    let n = id.len();
    let m = rjt.len();
    if rjt.parent.len() != m || (0..m).any(|c| rjt.depth(c).is_none()) {
        push(ViolationKind::NotForest, "parent pointers do not form a forest".into());
        return out;
    }
    for c in 0..m {
        if rjt.clusters[c].iter().any(|&v| v >= n) {
            push(ViolationKind::MissingVertex, format!("cluster {c} has an unknown vertex"));
            return out;
        }
    }
    let mut covered = true;
    for v in 0..n {
        if rjt.root_clique(v).is_none() {
            push(ViolationKind::MissingVertex, format!("{} is in no cluster", id.label(v)));
            covered = false;
            continue;
        }
        let tops = (0..m)
            .filter(|&c| rjt.clusters[c].contains(&v))
            .filter(|&c| rjt.parent[c].is_none_or(|p| !rjt.clusters[p].contains(&v)))
            .count();
        if tops != 1 {
            push(ViolationKind::RunningIntersection, format!("clusters containing {} are not connected", id.label(v)));
        }
        let cv = &rjt.clusters[rjt.cluster_of(v)];
        if id.graph.family(v).iter().any(|u| !cv.contains(u)) {
            push(ViolationKind::FamilyNotCovered, format!("fa({}) not in its root clique", id.label(v)));
        }
    }
    if !covered {
        return out;
    }
    let mut normalized = true;
    for c in 0..m {
        let off = rjt.offspring(c);
        if off.len() != 1 {
            normalized = false;
            push(ViolationKind::OffspringNotSingleton, format!("cluster {c} has {} offspring", off.len()));
        }
    }
    if !normalized {
        return out;
    }
    for c in 0..m {
        let v = rjt.offspring_vertex(c);
        if let Some(p) = rjt.parent[c] {
            if rjt.residual(v).iter().any(|u| !rjt.clusters[p].contains(u)) {
                push(ViolationKind::ResidualNotInParent, format!("residual of {} not in parent", id.label(v)));
            }
        }
    }
    let pos = match id.graph.check_topological(&rjt.order) {
        Ok(p) => p,
        Err(e) => {
            push(ViolationKind::OrderViolation, e.to_string());
            return out;
        }
    };
    for c in 0..m {
        let v = rjt.offspring_vertex(c);
        if rjt.clusters[c].iter().any(|&u| pos[u] > pos[v]) {
            push(ViolationKind::OrderViolation, format!("cluster of {} holds a later vertex", id.label(v)));
        }
        if let Some(p) = rjt.parent[c] {
            if pos[rjt.offspring_vertex(p)] > pos[v] {
                push(ViolationKind::OrderViolation, format!("parent of cluster {} comes later", id.label(v)));
            }
        }
    }
    check_minimality(id, rjt, &pos, &mut out);
    out
}

fn check_minimality(id: &InfluenceDiagram, rjt: &RootedJunctionTree, pos: &[usize], out: &mut Vec<Violation>) {
    let g = &id.graph;
    let n = id.len();
    for v in 0..n {
        let cv = rjt.cluster_of(v);
        // Trail component of v among vertices not before v.
        let mut t = vec![false; n];
        t[v] = true;
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            for &y in g.parents(x).iter().chain(g.children(x)) {
                if !t[y] && pos[y] >= pos[v] {
                    t[y] = true;
                    stack.push(y);
                }
            }
        }
        for (w, &trail) in t.iter().enumerate() {
            let below = rjt.reaches(cv, rjt.cluster_of(w));
            if trail != below {
                out.push(Violation {
                    kind: ViolationKind::InclusionMismatch,
                    detail: format!("trail set of {} vs subtree disagree at {}", id.label(v), id.label(w)),
                });
            }
        }
        for u in 0..n {
            if pos[u] >= pos[v] {
                continue;
            }
            let lhs = g.children(u).iter().any(|&c| t[c]);
            let rhs = rjt.clusters[cv].contains(&u);
            if lhs != rhs {
                out.push(Violation {
                    kind: ViolationKind::InclusionMismatch,
                    detail: format!("membership of {} in cluster of {}", id.label(u), id.label(v)),
                });
            }
        }
        for &u in &rjt.clusters[cv] {
            if u == v {
                continue;
            }
            let used = (0..n).any(|w| g.family(w).contains(&u) && rjt.reaches(cv, rjt.cluster_of(w)));
            if !used || !rjt.reaches(rjt.cluster_of(u), cv) {
                out.push(Violation {
                    kind: ViolationKind::NotMinimal,
                    detail: format!("{} is not needed in the cluster of {}", id.label(u), id.label(v)),
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::id::VertexKind;

    fn chain(n: usize) -> InfluenceDiagram {
        let arcs: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        let mut kinds = vec![VertexKind::Chance; n];
        kinds[n - 1] = VertexKind::Utility;
        InfluenceDiagram::new(DiGraph::from_arcs(n, &arcs), kinds, (0..n).map(|i| format!("x{i}")).collect()).unwrap()
    }

    #[test]
    fn single_vertex() {
        let id = InfluenceDiagram::new(DiGraph::new(1), vec![VertexKind::Utility], vec!["v".into()]).unwrap();
        let t = build_rjt(&id, &[0]).unwrap();
        assert_eq!(t.clusters, vec![vec![0]]);
        assert!(validate_rjt(&id, &t).is_empty());
    }

    #[test]
    fn rejects_non_topological_order() {
        let id = chain(3);
        assert!(matches!(build_rjt(&id, &[1, 0, 2]), Err(Error::NotTopological(_))));
    }

    #[test]
    fn whole_set_cluster_is_flagged_then_normalized() {
        let id = chain(4);
        let t = RootedJunctionTree::from_parts(4, vec![vec![0, 1, 2, 3]], vec![None], vec![0, 1, 2, 3]);
        let v = validate_rjt(&id, &t);
        assert!(v.iter().any(|x| x.kind == ViolationKind::OffspringNotSingleton));
        let nt = normalize_offspring(&t);
        assert_eq!(nt.len(), 4);
        assert!(validate_rjt(&id, &nt).iter().all(|x| x.kind.is_minimality()));
    }

    #[test]
    fn broken_running_intersection_is_flagged() {
        let id = chain(3);
        let t = RootedJunctionTree::from_parts(3, vec![vec![0], vec![1], vec![0, 1, 2]], vec![None, Some(0), Some(1)], vec![0, 1, 2]);
        let v = validate_rjt(&id, &t);
        assert!(v.iter().any(|x| x.kind == ViolationKind::RunningIntersection || x.kind == ViolationKind::FamilyNotCovered));
    }
}
