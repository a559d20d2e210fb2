//! Finite-horizon MDPs with an explicit state-action-state LP.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{LinearModel, Sense};

/// Decisions are taken at stages `1..=horizon`; stage `t` moves the state to `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatMdp {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    /// `p(s' | s, a)` at `[(s * actions + a) * states + s']`.
    pub transition: Vec<f64>,
    /// `r(s, a, s')`, same layout as `transition`.
    pub reward: Vec<f64>,
    pub initial: Vec<f64>,
}

/// `policy[t][s]` is the action at stage `t + 1` in state `s`.
pub type MdpPolicy = Vec<Vec<usize>>;

impl FlatMdp {
    fn at(&self, s: usize, a: usize, s2: usize) -> usize {
        (s * self.actions + a) * self.states + s2
    }

    pub fn p(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[self.at(s, a, s2)]
    }

    pub fn r(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.reward[self.at(s, a, s2)]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.states * self.actions * self.states;
        if self.states == 0 || self.actions == 0 || self.transition.len() != n || self.reward.len() != n {
            return Err(Error::InvalidInstance("mdp table sizes do not match".into()));
        }
        if self.initial.len() != self.states || (self.initial.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInstance("initial distribution must sum to one".into()));
        }
        for s in 0..self.states {
            for a in 0..self.actions {
                let row: f64 = (0..self.states).map(|s2| self.p(s, a, s2)).sum();
                if (row - 1.0).abs() > 1e-9 || (0..self.states).any(|s2| self.p(s, a, s2) < 0.0) {
                    return Err(Error::InvalidInstance(format!("transition row ({s},{a}) is not a distribution")));
                }
            }
        }
        Ok(())
    }

    fn q_value(&self, s: usize, a: usize, next: &[f64]) -> f64 {
        (0..self.states).map(|s2| self.p(s, a, s2) * (self.r(s, a, s2) + next[s2])).sum()
    }
}

/// Optimal value and policy by dynamic programming (smallest action on ties).
pub fn backward_induction(mdp: &FlatMdp) -> (f64, MdpPolicy) {
    let mut value = vec![0.0; mdp.states];
    let mut policy = vec![vec![0; mdp.states]; mdp.horizon];
    for t in (0..mdp.horizon).rev() {
        let mut next = vec![0.0; mdp.states];
        for s in 0..mdp.states {
            let mut best = f64::NEG_INFINITY;
            for a in 0..mdp.actions {
                let q = mdp.q_value(s, a, &value);
                if q > best {
                    best = q;
                    policy[t][s] = a;
                }
            }
            next[s] = best;
        }
        value = next;
    }
    (dot(&mdp.initial, &value), policy)
}

pub fn evaluate_policy(mdp: &FlatMdp, policy: &MdpPolicy) -> f64 {
    let mut value = vec![0.0; mdp.states];
    for t in (0..mdp.horizon).rev() {
        value = (0..mdp.states).map(|s| mdp.q_value(s, policy[t][s], &value)).collect();
    }
    dot(&mdp.initial, &value)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn state_name(t: usize, s: usize) -> String {
    format!("ms[{t},{s}]")
}

pub fn state_action_name(t: usize, s: usize, a: usize) -> String {
    format!("msa[{t},{s},{a}]")
}

pub fn transition_name(t: usize, s: usize, a: usize, s2: usize) -> String {
    format!("msas[{t},{s},{a},{s2}]")
}

/// State, state-action and transition moments per stage with the dynamics,
/// initial, consistency and normalization rows, and variables in `[0, 1]`.
/// Each state moment also equals the sum of its state-action moments, which
/// ties the actions to the state distribution.
pub fn mdp_lp(mdp: &FlatMdp) -> LinearModel {
    let mut m = LinearModel::new();
    let (ns, na, h) = (mdp.states, mdp.actions, mdp.horizon);
    for t in 1..=h + 1 {
        for s in 0..ns {
            m.add_var(&state_name(t, s), 0.0, 1.0, false);
        }
    }
    for t in 1..=h {
        for s in 0..ns {
            for a in 0..na {
                m.add_var(&state_action_name(t, s, a), 0.0, 1.0, false);
                for s2 in 0..ns {
                    m.add_var(&transition_name(t, s, a, s2), 0.0, 1.0, false);
                }
            }
        }
    }
    let ix = |m: &LinearModel, n: String| m.var_index(&n).expect("declared above");
    let mut objective = Vec::new();
    for t in 1..=h {
        for s in 0..ns {
            for a in 0..na {
                let sa = ix(&m, state_action_name(t, s, a));
                for s2 in 0..ns {
                    let sas = ix(&m, transition_name(t, s, a, s2));
                    m.add_constraint(
                        &format!("dyn[{t},{s},{a},{s2}]"),
                        vec![(sas, 1.0), (sa, -mdp.p(s, a, s2))],
                        Sense::Eq,
                        0.0,
                    );
                    objective.push((sas, mdp.r(s, a, s2)));
                }
            }
            let mut link = vec![(ix(&m, state_name(t, s)), -1.0)];
            link.extend((0..na).map(|a| (ix(&m, state_action_name(t, s, a)), 1.0)));
            m.add_constraint(&format!("link[{t},{s}]"), link, Sense::Eq, 0.0);
        }
        for s2 in 0..ns {
            let mut terms = vec![(ix(&m, state_name(t + 1, s2)), -1.0)];
            for s in 0..ns {
                for a in 0..na {
                    terms.push((ix(&m, transition_name(t, s, a, s2)), 1.0));
                }
            }
            m.add_constraint(&format!("cons[{t},{s2}]"), terms, Sense::Eq, 0.0);
        }
    }
    for (s, &p0) in mdp.initial.iter().enumerate() {
        m.add_constraint(&format!("init[{s}]"), vec![(ix(&m, state_name(1, s)), 1.0)], Sense::Eq, p0);
    }
    for t in 1..=h + 1 {
        let terms = (0..ns).map(|s| (ix(&m, state_name(t, s)), 1.0)).collect();
        m.add_constraint(&format!("norm[{t}]"), terms, Sense::Eq, 1.0);
    }
    m.set_objective(objective);
    m
}

/// Largest state-action moment per stage and state (action 0 where the state is unreachable).
pub fn policy_from_lp(mdp: &FlatMdp, model: &LinearModel, x: &[f64]) -> MdpPolicy {
    (1..=mdp.horizon)
        .map(|t| {
            (0..mdp.states)
                .map(|s| {
                    let v = |a| x[model.var_index(&state_action_name(t, s, a)).unwrap()];
                    (0..mdp.actions).fold(0, |b, a| if v(a) > v(b) + 1e-12 { a } else { b })
                })
                .collect()
        })
        .collect()
}

pub fn random_mdp(states: usize, actions: usize, horizon: usize, seed: u64) -> FlatMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = states * actions * states;
    let mut transition = Vec::with_capacity(n);
    for _ in 0..states * actions {
        let w: Vec<f64> = (0..states).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let z: f64 = w.iter().sum();
        transition.extend(w.iter().map(|x| x / z));
    }
    let reward = (0..n).map(|_| rng.gen::<f64>() * 10.0).collect();
    let w: Vec<f64> = (0..states).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let z: f64 = w.iter().sum();
    FlatMdp { states, actions, horizon, transition, reward, initial: w.iter().map(|x| x / z).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_action_value_is_expected_reward() {
        let mdp = random_mdp(3, 1, 3, 4);
        let (v, pol) = backward_induction(&mdp);
        assert!((v - evaluate_policy(&mdp, &pol)).abs() < 1e-12);
        assert!(pol.iter().flatten().all(|&a| a == 0));
    }

    #[test]
    fn generated_instances_validate() {
        for seed in 0..5 {
            random_mdp(4, 3, 5, seed).validate().unwrap();
        }
    }
}
