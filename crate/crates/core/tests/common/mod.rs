#![allow(dead_code)]

use std::collections::BTreeMap;

use meu_core::families::{random_parametrization, Builder};
use meu_core::id::{CondTable, InfluenceDiagram, Parametrization, Policy, VertexKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Full joint distribution over all vertices, first vertex slowest. Built by
/// multiplying every factor at every complete assignment.
pub fn joint(id: &InfluenceDiagram, p: &Parametrization, policy: &Policy) -> Vec<f64> {
    let n = id.len();
    let size: usize = p.cards.iter().product();
    let mut out = vec![0.0; size];
    let mut x = vec![0usize; n];
    for (idx, slot) in out.iter_mut().enumerate() {
        let mut rest = idx;
        for v in (0..n).rev() {
            x[v] = rest % p.cards[v];
            rest /= p.cards[v];
        }
        let mut prob = 1.0;
        for v in 0..n {
            let t = if id.is_decision(v) { &policy.tables[&v] } else { p.cpt(v) };
            let mut row = 0;
            for (&u, &c) in t.parents.iter().zip(&t.parent_cards) {
                row = row * c + x[u];
            }
            prob *= t.values[row * t.card + x[v]];
            if prob == 0.0 {
                break;
            }
        }
        *slot = prob;
    }
    out
}

/// Marginal of a joint onto `scope`, last scope variable fastest.
pub fn joint_marginal(cards: &[usize], joint: &[f64], scope: &[usize]) -> Vec<f64> {
    let size: usize = scope.iter().map(|&v| cards[v]).product();
    let mut out = vec![0.0; size];
    for (idx, &pr) in joint.iter().enumerate() {
        let mut rest = idx;
        let mut x = vec![0usize; cards.len()];
        for v in (0..cards.len()).rev() {
            x[v] = rest % cards[v];
            rest /= cards[v];
        }
        let mut k = 0;
        for &v in scope {
            k = k * cards[v] + x[v];
        }
        out[k] += pr;
    }
    out
}

pub fn joint_expected_utility(id: &InfluenceDiagram, p: &Parametrization, policy: &Policy) -> f64 {
    let j = joint(id, p, policy);
    id.utilities()
        .into_iter()
        .map(|u| joint_marginal(&p.cards, &j, &[u]).iter().zip(p.reward(u)).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

/// Every deterministic policy, enumerated by nested counters.
pub fn all_deterministic_policies(id: &InfluenceDiagram, p: &Parametrization) -> Vec<Policy> {
    let decisions = id.decisions();
    let slots: Vec<(usize, usize)> = decisions
        .iter()
        .flat_map(|&v| {
            let rows: usize = id.graph.parents(v).iter().map(|&u| p.cards[u]).product();
            (0..rows).map(move |r| (v, r))
        })
        .collect();
    let mut digits = vec![0usize; slots.len()];
    let mut out = Vec::new();
    loop {
        let mut choices: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (&(v, _), &d) in slots.iter().zip(&digits) {
            choices.entry(v).or_default().push(d);
        }
        for &v in &decisions {
            choices.entry(v).or_default();
        }
        out.push(Policy::from_choices(id, p, &choices).unwrap());
        let mut i = slots.len();
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < p.cards[slots[i].0] {
                break;
            }
            digits[i] = 0;
        }
    }
}

/// Exhaustive MEU through joint enumeration.
pub fn oracle_meu(id: &InfluenceDiagram, p: &Parametrization) -> f64 {
    all_deterministic_policies(id, p)
        .iter()
        .map(|pol| joint_expected_utility(id, p, pol))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn random_policy(id: &InfluenceDiagram, p: &Parametrization, rng: &mut ChaCha8Rng, deterministic: bool) -> Policy {
    let mut tables = BTreeMap::new();
    for v in id.decisions() {
        let pa = id.graph.parents(v).to_vec();
        let pc: Vec<usize> = pa.iter().map(|&u| p.cards[u]).collect();
        let rows: usize = pc.iter().product();
        let card = p.cards[v];
        let t = if deterministic {
            let choices: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..card)).collect();
            CondTable::deterministic(pa, pc, card, &choices)
        } else {
            let mut values = Vec::new();
            for _ in 0..rows {
                let w: Vec<f64> = (0..card).map(|_| rng.gen::<f64>()).collect();
                let z: f64 = w.iter().sum();
                values.extend(w.iter().map(|x| x / z));
            }
            CondTable::new(pa, pc, card, values)
        };
        tables.insert(v, t);
    }
    Policy { tables }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Decisions a and b, chance u and v, utility w:
/// a -> u -> v -> b -> w with a -> w and u -> w.
pub fn two_decision_chain(card_a: usize, card_u: usize, card_v: usize, card_b: usize, seed: u64) -> (InfluenceDiagram, Parametrization) {
    let mut b = Builder::new();
    let a = b.vertex("a", VertexKind::Decision, card_a);
    let u = b.vertex("u", VertexKind::Chance, card_u);
    let v = b.vertex("v", VertexKind::Chance, card_v);
    let d = b.vertex("b", VertexKind::Decision, card_b);
    let w = b.vertex("w", VertexKind::Utility, 3);
    for (x, y) in [(a, u), (u, v), (v, d), (d, w), (a, w), (u, w)] {
        b.arc(x, y);
    }
    b.build(seed)
}

/// Two binary decisions without information and a utility paying 2 when
/// both pick 1, 1 when both pick 0, nothing otherwise.
pub fn coordination_game() -> (InfluenceDiagram, Parametrization) {
    let mut b = Builder::new();
    let a = b.vertex("a", VertexKind::Decision, 2);
    let c = b.vertex("b", VertexKind::Decision, 2);
    let r = b.vertex("r", VertexKind::Utility, 3);
    b.arc(a, r);
    b.arc(c, r);
    let id = b.diagram();
    let mut p = random_parametrization(&id, b.cards(), 0);
    // r = 0 on (0,0), 1 on (1,1), 2 otherwise.
    let values = vec![1., 0., 0., 0., 0., 1., 0., 0., 1., 0., 1., 0.];
    p.cpts[r] = Some(CondTable::new(vec![a, c], vec![2, 2], 3, values));
    p.rewards[r] = Some(vec![1.0, 2.0, 0.0]);
    (id, p)
}
