//! Instance generators: the MDP, limited-memory POMDP and chess families,
//! a perfect-recall POMDP and random diagrams for testing.
//!
//! Randomness comes from ChaCha8 seeded with `seed`; the CPT of vertex `v`
//! is drawn from stream `v` and its reward vector from stream `v + 2^32`,
//! entries in row-major order, each as a uniform double in [0,1).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{DiGraph, VertexId};
use crate::id::{CondTable, InfluenceDiagram, Parametrization, VertexKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Mdp,
    PomdpLm,
    Chess,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Mdp => "mdp",
            Family::PomdpLm => "pomdp_lm",
            Family::Chess => "chess",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mdp" => Ok(Family::Mdp),
            "pomdp_lm" | "pomdp" => Ok(Family::PomdpLm),
            "chess" => Ok(Family::Chess),
            _ => Err(format!("unknown family {s}")),
        }
    }
}

/// Incremental diagram construction.
#[derive(Debug, Default, Clone)]
pub struct Builder {
    labels: Vec<String>,
    kinds: Vec<VertexKind>,
    cards: Vec<usize>,
    arcs: Vec<(VertexId, VertexId)>,
}

impl Builder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vertex(&mut self, label: impl Into<String>, kind: VertexKind, card: usize) -> VertexId {
        self.labels.push(label.into());
        self.kinds.push(kind);
        self.cards.push(card);
        self.labels.len() - 1
    }

    pub fn arc(&mut self, u: VertexId, v: VertexId) {
        self.arcs.push((u, v));
    }

    pub fn diagram(&self) -> InfluenceDiagram {
        let g = DiGraph::from_arcs(self.labels.len(), &self.arcs);
        InfluenceDiagram::new(g, self.kinds.clone(), self.labels.clone()).expect("generated diagram is valid")
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    /// Diagram with random CPTs and rewards uniform on [0, 10].
    pub fn build(&self, seed: u64) -> (InfluenceDiagram, Parametrization) {
        let id = self.diagram();
        let p = random_parametrization(&id, &self.cards, seed);
        (id, p)
    }
}

pub fn random_parametrization(id: &InfluenceDiagram, cards: &[usize], seed: u64) -> Parametrization {
    let n = id.len();
    let mut cpts = vec![None; n];
    let mut rewards = vec![None; n];
    for v in 0..n {
        if id.is_decision(v) {
            continue;
        }
        let parents = id.graph.parents(v).to_vec();
        let pc: Vec<usize> = parents.iter().map(|&u| cards[u]).collect();
        let rows: usize = pc.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(v as u64);
        let mut values = Vec::with_capacity(rows * cards[v]);
        for _ in 0..rows {
            let row: Vec<f64> = (0..cards[v]).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                values.extend(row.iter().map(|x| x / s));
            } else {
                values.extend(std::iter::repeat_n(1.0 / cards[v] as f64, cards[v]));
            }
        }
        cpts[v] = Some(CondTable::new(parents, pc, cards[v], values));
        if id.kind(v) == VertexKind::Utility {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((v as u64) | (1 << 32));
            rewards[v] = Some((0..cards[v]).map(|_| 10.0 * rng.gen::<f64>()).collect());
        }
    }
    Parametrization { cards: cards.to_vec(), cpts, rewards }
}

/// Family graph with the cardinalities of the experiments: `omega_a` on the
/// families of decisions, `omega_s` elsewhere.
pub fn family_builder(family: Family, omega_s: usize, omega_a: usize, horizon: usize) -> Builder {
    match family {
        Family::Mdp => mdp_builder(omega_s, omega_a, horizon),
        Family::PomdpLm => pomdp_builder(omega_s, omega_a, horizon),
        Family::Chess => chess_builder(omega_s, omega_a, horizon),
    }
}

pub fn generate(family: Family, omega_s: usize, omega_a: usize, horizon: usize, seed: u64) -> (InfluenceDiagram, Parametrization) {
    family_builder(family, omega_s, omega_a, horizon).build(seed)
}

fn mdp_builder(ws: usize, wa: usize, t_max: usize) -> Builder {
    use VertexKind::*;
    let mut b = Builder::new();
    let mut s = b.vertex("s1", Chance, wa);
    for t in 1..=t_max {
        let a = b.vertex(format!("a{t}"), Decision, wa);
        let next_card = if t == t_max { ws } else { wa };
        let s2 = b.vertex(format!("s{}", t + 1), Chance, next_card);
        let r = b.vertex(format!("r{t}"), Utility, ws);
        b.arc(s, a);
        b.arc(s, s2);
        b.arc(a, s2);
        b.arc(s, r);
        b.arc(a, r);
        b.arc(s2, r);
        s = s2;
    }
    b
}

fn pomdp_builder(ws: usize, wa: usize, t_max: usize) -> Builder {
    use VertexKind::*;
    let mut b = Builder::new();
    let mut s = b.vertex("s1", Chance, ws);
    for t in 1..=t_max {
        let o = b.vertex(format!("o{t}"), Chance, wa);
        let a = b.vertex(format!("a{t}"), Decision, wa);
        let c = b.vertex(format!("c{t}"), Utility, ws);
        let s2 = b.vertex(format!("s{}", t + 1), Chance, ws);
        b.arc(s, o);
        b.arc(o, a);
        b.arc(s, c);
        b.arc(a, c);
        b.arc(s, s2);
        b.arc(a, s2);
        s = s2;
    }
    let o = b.vertex(format!("o{}", t_max + 1), Chance, ws);
    b.arc(s, o);
    b
}

fn chess_builder(ws: usize, wa: usize, t_max: usize) -> Builder {
    use VertexKind::*;
    let mut b = Builder::new();
    let mut s = b.vertex("s1", Chance, ws);
    for t in 1..=t_max {
        let o = b.vertex(format!("o{t}"), Chance, ws);
        let u = b.vertex(format!("u{t}"), Chance, wa);
        let a = b.vertex(format!("a{t}"), Decision, wa);
        let v = b.vertex(format!("v{t}"), Chance, ws);
        let r = b.vertex(format!("r{t}"), Utility, ws);
        let s2 = b.vertex(format!("s{}", t + 1), Chance, ws);
        b.arc(s, o);
        b.arc(o, u);
        b.arc(u, a);
        b.arc(o, v);
        b.arc(a, v);
        b.arc(v, r);
        b.arc(s, s2);
        b.arc(v, s2);
        s = s2;
    }
    b
}

/// POMDP where each decision sees every past observation and decision.
pub fn pomdp_perfect_recall(card: usize, horizon: usize, seed: u64) -> (InfluenceDiagram, Parametrization) {
    use VertexKind::*;
    let mut b = Builder::new();
    let mut s = b.vertex("s1", Chance, card);
    let mut seen: Vec<VertexId> = Vec::new();
    for t in 1..=horizon {
        let o = b.vertex(format!("o{t}"), Chance, card);
        let a = b.vertex(format!("a{t}"), Decision, card);
        let c = b.vertex(format!("c{t}"), Utility, card);
        b.arc(s, o);
        seen.push(o);
        for &w in &seen {
            b.arc(w, a);
        }
        seen.push(a);
        b.arc(s, c);
        b.arc(a, c);
        if t < horizon {
            let s2 = b.vertex(format!("s{}", t + 1), Chance, card);
            b.arc(s, s2);
            b.arc(a, s2);
            s = s2;
        }
    }
    b.build(seed)
}

/// Random diagram on `n` vertices: arcs forward in id order with probability
/// `density`, sinks become utilities, a few other vertices decisions.
/// Cardinalities are drawn from 1..=max_card.
pub fn random_id(n: usize, density: f64, max_card: usize, seed: u64) -> (InfluenceDiagram, Parametrization) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut arcs = Vec::new();
    for v in 1..n {
        for u in 0..v {
            if rng.gen::<f64>() < density {
                arcs.push((u, v));
            }
        }
    }
    let g = DiGraph::from_arcs(n, &arcs);
    let mut kinds = vec![VertexKind::Chance; n];
    for (v, kind) in kinds.iter_mut().enumerate() {
        if g.children(v).is_empty() {
            *kind = VertexKind::Utility;
        } else if rng.gen::<f64>() < 0.3 {
            *kind = VertexKind::Decision;
        }
    }
    let cards: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=max_card.max(1))).collect();
    let labels = (0..n).map(|v| format!("x{v}")).collect();
    let id = InfluenceDiagram::new(g, kinds, labels).expect("forward arcs are acyclic");
    let p = random_parametrization(&id, &cards, seed);
    (id, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chess_one_stage_shape() {
        let (id, _) = generate(Family::Chess, 3, 2, 1, 0);
        let labels: Vec<&str> = (0..id.len()).map(|v| id.label(v)).collect();
        assert_eq!(labels, ["s1", "o1", "u1", "a1", "v1", "r1", "s2"]);
        assert_eq!(id.graph.arc_count(), 8);
    }

    #[test]
    fn same_seed_same_instance() {
        let a = generate(Family::PomdpLm, 3, 2, 3, 7);
        let b = generate(Family::PomdpLm, 3, 2, 3, 7);
        assert_eq!(crate::id::to_json(&a.0, &a.1), crate::id::to_json(&b.0, &b.1));
        let c = generate(Family::PomdpLm, 3, 2, 3, 8);
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn generated_instances_validate() {
        for f in [Family::Mdp, Family::PomdpLm, Family::Chess] {
            let (id, p) = generate(f, 3, 2, 3, 1);
            p.validate(&id).unwrap();
        }
    }
}
