use meu_core::families::{generate, Family};
use meu_core::id::prune_irrelevant;
use meu_core::rjt::build_rjt_auto;
use meu_core::{InfluenceDiagram, Parametrization, Policy, RootedJunctionTree};

/// Pruned instance with its tree and the uniform policy.
pub fn fixture(family: Family, omega_s: usize, omega_a: usize, horizon: usize) -> (InfluenceDiagram, Parametrization, RootedJunctionTree, Policy) {
    let (id, p) = generate(family, omega_s, omega_a, horizon, 0);
    let (id, p) = prune_irrelevant(&id, &p);
    let rjt = build_rjt_auto(&id).expect("generated diagrams are acyclic");
    let policy = Policy::uniform(&id, &p);
    (id, p, rjt, policy)
}
