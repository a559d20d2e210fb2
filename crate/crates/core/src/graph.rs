//! Directed graphs over dense vertex ids with the usual ancestry and
//! d-separation queries.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};

pub type VertexId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DiGraph {
    parents: Vec<Vec<VertexId>>,
    children: Vec<Vec<VertexId>>,
}

impl DiGraph {
    pub fn new(n: usize) -> Self {
        DiGraph { parents: vec![Vec::new(); n], children: vec![Vec::new(); n] }
    }

    pub fn from_arcs(n: usize, arcs: &[(VertexId, VertexId)]) -> Self {
        let mut g = DiGraph::new(n);
        for &(u, v) in arcs {
            g.add_arc(u, v);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn vertices(&self) -> std::ops::Range<VertexId> {
        0..self.len()
    }

    /// Adds `u -> v`. Duplicates and self loops are ignored.
    pub fn add_arc(&mut self, u: VertexId, v: VertexId) {
        assert!(u < self.len() && v < self.len(), "arc ({u},{v}) out of range");
        if u == v {
            return;
        }
        if let Err(pos) = self.children[u].binary_search(&v) {
            self.children[u].insert(pos, v);
            let ppos = self.parents[v].binary_search(&u).unwrap_err();
            self.parents[v].insert(ppos, u);
        }
    }

    pub fn has_arc(&self, u: VertexId, v: VertexId) -> bool {
        self.children[u].binary_search(&v).is_ok()
    }

    pub fn parents(&self, v: VertexId) -> &[VertexId] {
        &self.parents[v]
    }

    pub fn children(&self, v: VertexId) -> &[VertexId] {
        &self.children[v]
    }

    /// Parents plus the vertex itself, sorted.
    pub fn family(&self, v: VertexId) -> Vec<VertexId> {
        let mut f = self.parents[v].clone();
        let pos = f.binary_search(&v).unwrap_err();
        f.insert(pos, v);
        f
    }

    pub fn arcs(&self) -> Vec<(VertexId, VertexId)> {
        let mut out = Vec::new();
        for u in self.vertices() {
            for &v in &self.children[u] {
                out.push((u, v));
            }
        }
        out
    }

    pub fn arc_count(&self) -> usize {
        self.children.iter().map(Vec::len).sum()
    }

    /// Kahn's algorithm, always taking the smallest available id.
    pub fn topological_sort(&self) -> Result<Vec<VertexId>> {
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<VertexId> =
            self.vertices().filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &w in &self.children[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.insert(w);
                }
            }
        }
        if order.len() != self.len() {
            return Err(Error::CyclicGraph);
        }
        Ok(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_sort().is_ok()
    }

    /// Checks that `order` is a permutation of the vertices compatible with every arc.
    pub fn check_topological(&self, order: &[VertexId]) -> Result<Vec<usize>> {
        if order.len() != self.len() {
            return Err(Error::NotTopological(format!(
                "order has {} entries for {} vertices",
                order.len(),
                self.len()
            )));
        }
        let mut pos = vec![usize::MAX; self.len()];
        for (i, &v) in order.iter().enumerate() {
            if v >= self.len() || pos[v] != usize::MAX {
                return Err(Error::NotTopological(format!("vertex {v} invalid or repeated")));
            }
            pos[v] = i;
        }
        for (u, v) in self.arcs() {
            if pos[u] > pos[v] {
                return Err(Error::NotTopological(format!("arc ({u},{v}) goes backwards")));
            }
        }
        Ok(pos)
    }

    fn reach(&self, start: &[VertexId], up: bool) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<VertexId> = start.to_vec();
        while let Some(v) = stack.pop() {
            let next = if up { &self.parents[v] } else { &self.children[v] };
            for &w in next {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// Strict ancestors of `v`.
    pub fn ancestors(&self, v: VertexId) -> BTreeSet<VertexId> {
        let seen = self.reach(&[v], true);
        self.vertices().filter(|&w| seen[w]).collect()
    }

    /// Strict descendants of `v`.
    pub fn descendants(&self, v: VertexId) -> BTreeSet<VertexId> {
        let seen = self.reach(&[v], false);
        self.vertices().filter(|&w| seen[w]).collect()
    }

    /// The set together with all its ancestors.
    pub fn ancestral_closure(&self, set: &[VertexId]) -> BTreeSet<VertexId> {
        let seen = self.reach(set, true);
        self.vertices().filter(|&w| seen[w] || set.contains(&w)).collect()
    }

    /// Bayes-ball reachability: vertices with an active trail from `x` given `z`.
    pub fn reachable_given(&self, x: &[VertexId], z: &[VertexId]) -> Vec<bool> {
        let n = self.len();
        let mut in_z = vec![false; n];
        for &v in z {
            in_z[v] = true;
        }
        // Vertices that are in z or have a descendant in z.
        let anc_z = {
            let mut a = self.reach(z, true);
            for &v in z {
                a[v] = true;
            }
            a
        };
        // visited[v][0]: arrived from a child (moving up), [1]: from a parent.
        let mut visited = vec![[false; 2]; n];
        let mut reachable = vec![false; n];
        let mut queue: VecDeque<(VertexId, usize)> = x.iter().map(|&v| (v, 0)).collect();
        while let Some((v, dir)) = queue.pop_front() {
            if visited[v][dir] {
                continue;
            }
            visited[v][dir] = true;
            if !in_z[v] {
                reachable[v] = true;
            }
            if dir == 0 {
                if !in_z[v] {
                    for &p in &self.parents[v] {
                        queue.push_back((p, 0));
                    }
                    for &c in &self.children[v] {
                        queue.push_back((c, 1));
                    }
                }
            } else {
                if !in_z[v] {
                    for &c in &self.children[v] {
                        queue.push_back((c, 1));
                    }
                }
                if anc_z[v] {
                    for &p in &self.parents[v] {
                        queue.push_back((p, 0));
                    }
                }
            }
        }
        reachable
    }

    /// `x` and `y` are d-separated given `z`. The three sets must be disjoint.
    pub fn d_separated(&self, x: &[VertexId], y: &[VertexId], z: &[VertexId]) -> Result<bool> {
        let mut mark = vec![0u8; self.len()];
        for (k, set) in [x, y, z].iter().enumerate() {
            for &v in set.iter() {
                if v >= self.len() {
                    return Err(Error::InvalidInstance(format!("vertex {v} out of range")));
                }
                if mark[v] != 0 && mark[v] != k as u8 + 1 {
                    return Err(Error::OverlappingSets);
                }
                mark[v] = k as u8 + 1;
            }
        }
        let r = self.reachable_given(x, z);
        Ok(!y.iter().any(|&v| r[v]))
    }
}
