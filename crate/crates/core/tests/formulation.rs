mod common;

use std::collections::BTreeMap;

use meu_core::families::{generate, pomdp_perfect_recall, random_id, Builder, Family};
use meu_core::formulation::*;
use meu_core::id::{prune_irrelevant, InfluenceDiagram, Parametrization, Policy, VertexKind};
use meu_core::inference::{brute_force_meu, policy_moments};
use meu_core::mdp::{backward_induction, evaluate_policy, mdp_lp, policy_from_lp, random_mdp, FlatMdp};
use meu_core::model::{LinearModel, Sense};
use meu_core::rjt::{auto_order, build_rjt_auto, build_rjt_seeded, build_soluble_rjt};
use meu_core::solve::{solve_lp, solve_milp};
use proptest::prelude::*;

fn small_instance() -> impl Strategy<Value = (InfluenceDiagram, Parametrization, u64)> {
    prop_oneof![
        (0u64..1000).prop_map(|s| { let (id, p) = generate(Family::Chess, 2, 2, 1, s); let (id, p) = prune_irrelevant(&id, &p); (id, p, s) }),
        (0u64..1000).prop_map(|s| { let (id, p) = generate(Family::PomdpLm, 2, 2, 2, s); let (id, p) = prune_irrelevant(&id, &p); (id, p, s) }),
        (0u64..1000).prop_map(|s| { let (id, p) = common::two_decision_chain(2, 2, 2, 2, s); (id, p, s) }),
        (5usize..=9, any::<u64>()).prop_map(|(n, s)| { let (id, p) = random_id(n, 0.35, 2, s); (id, p, s) }),
    ]
}

#[test]
fn single_binary_vertex_block() {
    let mut b = Builder::new();
    b.vertex("x", VertexKind::Chance, 2);
    let (id, p) = b.build(0);
    let rjt = build_rjt_auto(&id).unwrap();
    let block = local_polytope_constraints(&id, &p, &rjt);
    let mu: Vec<&String> = block.vars.iter().map(|v| &v.name).filter(|n| n.starts_with("mu[")).collect();
    assert_eq!(mu, ["mu[x][0]", "mu[x][1]"]);
    let norm: Vec<_> = block.rows.iter().filter(|r| r.0.starts_with("norm")).collect();
    assert_eq!(norm.len(), 1);
    assert!(block.rows.iter().all(|r| !r.0.starts_with("cons")));
}

#[test]
fn chess_consistency_row_count() {
    let (id, p) = generate(Family::Chess, 2, 2, 2, 0);
    let rjt = build_rjt_auto(&id).unwrap();
    let block = local_polytope_constraints(&id, &p, &rjt);
    let expected: usize = (0..rjt.len())
        .filter(|&c| rjt.parent[c].is_some())
        .map(|c| rjt.residual(rjt.offspring_vertex(c)).iter().map(|&w| p.cards[w]).product::<usize>())
        .sum();
    assert_eq!(block.rows.iter().filter(|r| r.0.starts_with("cons[")).count(), expected);
}

#[test]
fn chance_root_with_uniform_distribution() {
    let mut b = Builder::new();
    let x = b.vertex("x", VertexKind::Chance, 4);
    let (id, mut p) = b.build(0);
    p.cpts[x].as_mut().unwrap().values = vec![0.25; 4];
    let rjt = build_rjt_auto(&id).unwrap();
    let block = pbar_constraints(&id, &p, &rjt);
    for (_, terms, sense, rhs) in &block.rows {
        assert_eq!(*sense, Sense::Eq);
        assert_eq!(*rhs, 0.0);
        let coef: BTreeMap<&str, f64> = terms.iter().map(|(n, c)| (n.as_str(), *c)).collect();
        assert_eq!(coef["mud[x][]"], -0.25);
    }
    assert_eq!(block.rows.len(), 4);
}

#[test]
fn decision_clusters_without_free_part_give_no_cuts() {
    let (id, p) = generate(Family::Mdp, 2, 2, 3, 0);
    let (id, p) = prune_irrelevant(&id, &p);
    let rjt = build_soluble_rjt(&id).unwrap();
    assert!(valid_cut_constraints(&id, &p, &rjt).unwrap().is_empty());
}

#[test]
fn cuts_never_raise_the_seeded_pomdp_bound() {
    let (id0, _) = generate(Family::PomdpLm, 2, 2, 3, 0);
    let label = |l: &str| id0.vertex_by_label(l).unwrap();
    let mut seeds = BTreeMap::new();
    seeds.insert(label("a1"), vec![label("s1")]);
    for t in 2..=3 {
        let prev = t - 1;
        seeds.insert(label(&format!("a{t}")), vec![label(&format!("s{prev}")), label(&format!("a{prev}")), label(&format!("s{t}"))]);
    }
    let order = auto_order(&id0).unwrap();
    let rjt = build_rjt_seeded(&id0, &order, &seeds).unwrap();
    let mut strict = 0;
    for seed in 0..10 {
        let (id, p) = generate(Family::PomdpLm, 2, 2, 3, seed);
        let with = solve_lp(&polytope_model(&id, &p, &rjt, true).unwrap()).unwrap().value;
        let without = solve_lp(&polytope_model(&id, &p, &rjt, false).unwrap()).unwrap().value;
        assert!(with <= without + 1e-7);
        if with < without - 1e-7 {
            strict += 1;
        }
    }
    assert!(strict > 0);
}

#[test]
fn bounds_are_exact_without_decisions() {
    let (id, p) = random_id(8, 0.4, 3, 17);
    let kinds = id.kinds.iter().map(|k| if *k == VertexKind::Decision { VertexKind::Chance } else { *k }).collect();
    let id = InfluenceDiagram::new(id.graph.clone(), kinds, id.labels.clone()).unwrap();
    let p = meu_core::families::random_parametrization(&id, &p.cards, 17);
    let rjt = build_rjt_auto(&id).unwrap();
    let b = mccormick_bounds(&id, &p, &rjt);
    let mu = policy_moments(&id, &p, &rjt, &Policy::uniform(&id, &p)).unwrap();
    for c in 0..rjt.len() {
        assert!(b.cluster[c].max_abs_diff(&mu.clusters[c]) < 1e-12);
    }
}

#[test]
fn root_bound_is_the_chance_joint() {
    let (id, p) = generate(Family::Chess, 2, 2, 2, 5);
    let rjt = build_rjt_auto(&id).unwrap();
    let b = mccormick_bounds(&id, &p, &rjt);
    let s1 = id.vertex_by_label("s1").unwrap();
    let o1 = id.vertex_by_label("o1").unwrap();
    let c = rjt.cluster_of(o1);
    for (i, &x) in b.cluster[c].data.iter().enumerate() {
        let a = b.cluster[c].assignment(i);
        assert!((x - p.cpt(s1).values[a[0]] * p.cpt(o1).get(a[0], a[1])).abs() < 1e-15);
    }
}

#[test]
fn bound_sums_match_residual_definition() {
    let (id, p) = generate(Family::Chess, 2, 2, 2, 1);
    let rjt = build_rjt_auto(&id).unwrap();
    let b = mccormick_bounds(&id, &p, &rjt);
    for c in &b.cluster {
        assert!(c.data.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }
    for v in id.decisions() {
        let cb = &b.cluster[rjt.cluster_of(v)];
        assert_eq!(b.residual[&v], cb.max_out(v));
    }
}

#[test]
fn mccormick_rows_pin_cluster_to_decision() {
    let (id, p) = generate(Family::Chess, 2, 2, 2, 2);
    let (id, p) = prune_irrelevant(&id, &p);
    let rjt = build_rjt_auto(&id).unwrap();
    let m = assemble(&id, &p, &rjt, Variant::Qperpb, true).unwrap();
    let r = solve_milp(&m, None, None).unwrap();
    let mu = moments_from_assignment(&m, &r.x, &id, &p, &rjt).unwrap();
    let get = |n: &str| r.x[m.var_index(n).unwrap()];
    for v in id.decisions() {
        let c = mu.of_vertex(&rjt, v);
        let res = mu.residual_of(&rjt, v);
        let pa = id.graph.parents(v);
        for i in 0..c.len() {
            let a = c.assignment(i);
            let pick = |vs: &[usize]| -> Vec<usize> { vs.iter().map(|w| a[c.position(*w).unwrap()]).collect() };
            let d = get(&delta_name(&id, v, &pick(pa), a[c.position(v).unwrap()]));
            let y = res.index_of(&pick(&res.scope));
            assert!((c.data[i] - d * res.data[y]).abs() < 1e-7);
        }
    }
}

#[test]
fn lp_text_round_trip_preserves_the_model() {
    let (id, p) = generate(Family::Chess, 2, 2, 1, 0);
    let rjt = build_rjt_auto(&id).unwrap();
    let m = assemble(&id, &p, &rjt, Variant::Qperpb, true).unwrap();
    let text = m.to_lp_string();
    assert!(text.starts_with("Maximize"));
    assert!(text.contains("Subject To") && text.contains("Bounds") && text.contains("Binaries") && text.trim_end().ends_with("End"));
    assert!(text.contains("delta[a1][0][1]"));
    let back = LinearModel::from_lp_string(&text).unwrap();
    assert_eq!(back.to_lp_string(), text);
    assert!((solve_lp(&back).unwrap().value - solve_lp(&m).unwrap().value).abs() < 1e-9);
}

#[test]
fn chess_relaxation_arcs() {
    let (id, p) = generate(Family::Chess, 2, 2, 2, 0);
    let (id, _) = prune_irrelevant(&id, &p);
    let rjt = build_rjt_auto(&id).unwrap();
    let (bar, perp) = soluble_relaxation_graphs(&id, &rjt).unwrap();
    let l = |s: &str| id.vertex_by_label(s).unwrap();
    assert!(bar.graph.has_arc(l("o1"), l("a1")) && bar.graph.has_arc(l("s1"), l("a1")));
    assert!(!perp.graph.has_arc(l("o1"), l("a1")) && !perp.graph.has_arc(l("s1"), l("a1")));
    for (u, w) in id.graph.arcs() {
        assert!(perp.graph.has_arc(u, w));
    }
    for (u, w) in perp.graph.arcs() {
        assert!(bar.graph.has_arc(u, w));
    }
}

#[test]
fn soluble_diagram_is_its_own_relaxation() {
    for (id, p) in [prune_pair(generate(Family::Mdp, 2, 2, 3, 0)), prune_pair(pomdp_perfect_recall(2, 2, 0))] {
        let _ = p;
        let rjt = build_soluble_rjt(&id).unwrap();
        let (_, perp) = soluble_relaxation_graphs(&id, &rjt).unwrap();
        assert_eq!(perp.graph, id.graph);
    }
}

fn prune_pair((id, p): (InfluenceDiagram, Parametrization)) -> (InfluenceDiagram, Parametrization) {
    prune_irrelevant(&id, &p)
}

#[test]
fn soluble_mdp_lp_is_exact() {
    let (id, p) = generate(Family::Mdp, 2, 2, 3, 4);
    let (id, p) = prune_irrelevant(&id, &p);
    let rjt = build_soluble_rjt(&id).unwrap();
    let lp = solve_lp(&assemble(&id, &p, &rjt, Variant::Qbar1, false).unwrap()).unwrap();
    assert!((lp.value - brute_force_meu(&id, &p).unwrap().1).abs() < 1e-7);
}

#[test]
fn deterministic_two_state_mdp_lp() {
    // Action 0 stays, action 1 switches; being in state 1 after a move pays 1.
    let mut transition = vec![0.0; 8];
    let mut reward = vec![0.0; 8];
    for s in 0..2 {
        for a in 0..2 {
            let next = if a == 0 { s } else { 1 - s };
            transition[(s * 2 + a) * 2 + next] = 1.0;
            reward[(s * 2 + a) * 2 + 1] = 1.0;
        }
    }
    let mdp = FlatMdp { states: 2, actions: 2, horizon: 3, transition, reward, initial: vec![1.0, 0.0] };
    mdp.validate().unwrap();
    let (dp, pol) = backward_induction(&mdp);
    assert_eq!(dp, 3.0);
    assert_eq!(evaluate_policy(&mdp, &pol), 3.0);
    let m = mdp_lp(&mdp);
    let lp = solve_lp(&m).unwrap();
    assert!((lp.value - 3.0).abs() < 1e-9);
    assert_eq!(evaluate_policy(&mdp, &policy_from_lp(&mdp, &m, &lp.x)), 3.0);
}

#[test]
fn single_action_mdp_lp_is_the_expected_reward() {
    let mdp = random_mdp(3, 1, 4, 2);
    let lp = solve_lp(&mdp_lp(&mdp)).unwrap();
    assert!((lp.value - backward_induction(&mdp).0).abs() < 1e-9);
}

#[test]
fn random_mdp_lp_policies_re_evaluate() {
    for seed in 0..20 {
        let mdp = random_mdp(3, 2, 3, seed);
        let m = mdp_lp(&mdp);
        let lp = solve_lp(&m).unwrap();
        let dp = backward_induction(&mdp).0;
        assert!((lp.value - dp).abs() < 1e-9);
        assert!((evaluate_policy(&mdp, &policy_from_lp(&mdp, &m, &lp.x)) - dp).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn policy_moments_are_feasible_everywhere((id, p, seed) in small_instance()) {
        let rjt = build_rjt_auto(&id).unwrap();
        let mut rng = common::rng(seed);
        for v in Variant::ALL {
            let m = assemble(&id, &p, &rjt, v, true).unwrap();
            for _ in 0..3 {
                let pol = common::random_policy(&id, &p, &mut rng, true);
                let x = embed_policy(&m, &id, &p, &rjt, &pol).unwrap();
                prop_assert!(m.max_violation(&x) < 1e-9, "{}", v.name());
                let eu = meu_core::inference::expected_utility(&id, &p, &rjt, &pol).unwrap();
                prop_assert!((m.objective_value(&x) - eu).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn relaxations_are_ordered((id, p, _seed) in small_instance()) {
        let rjt = build_rjt_auto(&id).unwrap();
        let lp = |v: Variant| solve_lp(&assemble(&id, &p, &rjt, v, false).unwrap()).unwrap().value;
        let (q1, qb, p1, pb) = (lp(Variant::Qbar1), lp(Variant::Qbarb), lp(Variant::Qperp1), lp(Variant::Qperpb));
        let tol = 1e-7 * q1.abs().max(1.0);
        prop_assert!(pb <= p1 + tol && p1 <= q1 + tol);
        prop_assert!(pb <= qb + tol && qb <= q1 + tol);
    }

    #[test]
    fn polytopes_match_relaxed_diagrams((id, p, _seed) in small_instance()) {
        let rjt = build_rjt_auto(&id).unwrap();
        let (bar, perp) = soluble_relaxation_graphs(&id, &rjt).unwrap();
        for (cuts, g) in [(false, bar), (true, perp)] {
            prop_assume!(meu_core::id::deterministic_policy_count(&g, &p) <= 1e5);
            let lp = solve_lp(&polytope_model(&id, &p, &rjt, cuts).unwrap()).unwrap().value;
            let (_, relaxed) = brute_force_meu(&g, &p).unwrap();
            prop_assert!((lp - relaxed).abs() <= 1e-7 * relaxed.abs().max(1.0), "cuts={cuts}: {lp} vs {relaxed}");
        }
    }

    #[test]
    fn bounds_dominate_sampled_moments((id, p, seed) in small_instance()) {
        let rjt = build_rjt_auto(&id).unwrap();
        let b = mccormick_bounds(&id, &p, &rjt);
        let mut rng = common::rng(seed);
        for i in 0..20 {
            let pol = common::random_policy(&id, &p, &mut rng, i % 2 == 0);
            let mu = policy_moments(&id, &p, &rjt, &pol).unwrap();
            for c in 0..rjt.len() {
                for (x, bx) in mu.clusters[c].data.iter().zip(&b.cluster[c].data) {
                    prop_assert!(*x <= bx + 1e-12);
                }
            }
        }
    }
}
