mod common;

use std::collections::{BTreeMap, BTreeSet};

use meu_core::families::{generate, random_id, Builder, Family};
use meu_core::id::{free_split, is_soluble, prune_irrelevant, InfluenceDiagram, VertexKind};
use meu_core::rjt::*;
use meu_core::{Error, RootedJunctionTree};
use proptest::prelude::*;

fn labelled(id: &InfluenceDiagram, rjt: &RootedJunctionTree) -> BTreeSet<BTreeSet<String>> {
    rjt.clusters.iter().map(|c| c.iter().map(|&v| id.label(v).to_string()).collect()).collect()
}

fn set(labels: &[&str]) -> BTreeSet<String> {
    labels.iter().map(|s| s.to_string()).collect()
}

fn v(id: &InfluenceDiagram, label: &str) -> usize {
    id.vertex_by_label(label).unwrap()
}

/// Random linear extension of the graph, drawn with a seeded priority.
fn shuffled_order(id: &InfluenceDiagram, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut rng = common::rng(seed);
    let mut indeg: Vec<usize> = (0..id.len()).map(|v| id.graph.parents(v).len()).collect();
    let mut ready: Vec<usize> = (0..id.len()).filter(|&v| indeg[v] == 0).collect();
    let mut out = Vec::new();
    while !ready.is_empty() {
        ready.shuffle(&mut rng);
        let v = ready.pop().unwrap();
        out.push(v);
        for &w in id.graph.children(v) {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.push(w);
            }
        }
    }
    out
}

#[test]
fn chess_stage_clusters_for_any_order() {
    let (id, _) = generate(Family::Chess, 2, 2, 2, 0);
    let expected = [
        set(&["s1"]),
        set(&["s1", "o1"]),
        set(&["s1", "o1", "u1"]),
        set(&["s1", "o1", "u1", "a1"]),
        set(&["s1", "o1", "a1", "v1"]),
        set(&["v1", "r1"]),
        set(&["s1", "v1", "s2"]),
    ];
    let mut orders = vec![auto_order(&id).unwrap(), id.graph.topological_sort().unwrap()];
    orders.extend((0..5).map(|s| shuffled_order(&id, s)));
    for order in orders {
        let rjt = build_rjt(&id, &order).unwrap();
        let got = labelled(&id, &rjt);
        for c in &expected {
            assert!(got.contains(c), "missing {c:?} for order {order:?}");
        }
        assert!(validate_rjt(&id, &rjt).is_empty());
    }
}

#[test]
fn small_graph_example() {
    let mut b = Builder::new();
    let names = ["s", "t", "u", "v", "w", "x", "y", "z"];
    let ids: Vec<usize> = names.iter().map(|n| b.vertex(*n, VertexKind::Chance, 2)).collect();
    let arc = |a: usize, c: usize| (ids[a], ids[c]);
    for (p, c) in [arc(0, 2), arc(1, 3), arc(3, 4), arc(3, 5), arc(2, 4), arc(2, 5), arc(4, 6), arc(5, 7)] {
        b.arc(p, c);
    }
    let id = b.diagram();
    let rjt = build_rjt(&id, &ids).unwrap();
    let notation: BTreeSet<String> = rjt.notation(&id).into_iter().collect();
    let expected: BTreeSet<String> =
        ["s", "s - t", "s t - u", "t u - v", "u v - w", "u v - x", "w - y", "x - z"].iter().map(|s| s.to_string()).collect();
    assert_eq!(notation, expected);
    // Arcs: each cluster hangs below the cluster of its latest residual vertex.
    let parent_label = |label: &str| {
        let c = rjt.cluster_of(v(&id, label));
        rjt.parent[c].map(|p| id.label(rjt.offspring_vertex(p)).to_string())
    };
    assert_eq!(parent_label("s"), None);
    assert_eq!(parent_label("u").as_deref(), Some("t"));
    assert_eq!(parent_label("w").as_deref(), Some("v"));
    assert_eq!(parent_label("x").as_deref(), Some("v"));
    assert_eq!(parent_label("z").as_deref(), Some("x"));
    assert!(validate_rjt(&id, &rjt).is_empty());
}

#[test]
fn seeded_pomdp_clusters() {
    let (id, _) = generate(Family::PomdpLm, 2, 2, 2, 0);
    let mut seeds = BTreeMap::new();
    seeds.insert(v(&id, "a1"), vec![v(&id, "s1")]);
    seeds.insert(v(&id, "a2"), vec![v(&id, "s1"), v(&id, "a1"), v(&id, "s2")]);
    let order = auto_order(&id).unwrap();
    let rjt = build_rjt_seeded(&id, &order, &seeds).unwrap();
    let got = labelled(&id, &rjt);
    for c in [
        set(&["s1"]),
        set(&["s1", "o1"]),
        set(&["s1", "o1", "a1"]),
        set(&["s1", "a1", "c1"]),
        set(&["s1", "a1", "s2"]),
        set(&["s1", "a1", "s2", "o2"]),
        set(&["s1", "a1", "s2", "o2", "a2"]),
    ] {
        assert!(got.contains(&c), "missing {c:?} in {got:?}");
    }
    let violations = validate_rjt(&id, &rjt);
    assert!(violations.iter().all(|v| v.kind.is_minimality()), "{violations:?}");
    let a2 = v(&id, "a2");
    let split = free_split(&id, rjt.cluster(rjt.cluster_of(a2)));
    assert_eq!(split.free, vec![v(&id, "s2")]);
}

#[test]
fn empty_seeds_match_plain_builder() {
    let (id, _) = generate(Family::Chess, 2, 2, 2, 3);
    let order = auto_order(&id).unwrap();
    assert_eq!(build_rjt_seeded(&id, &order, &BTreeMap::new()).unwrap(), build_rjt(&id, &order).unwrap());
}

#[test]
fn seed_after_vertex_is_rejected() {
    let (id, _) = generate(Family::PomdpLm, 2, 2, 2, 0);
    let order = auto_order(&id).unwrap();
    let mut seeds = BTreeMap::new();
    seeds.insert(v(&id, "a1"), vec![v(&id, "s2")]);
    assert!(matches!(build_rjt_seeded(&id, &order, &seeds), Err(Error::InvalidSeed(_))));
}

#[test]
fn mdp_clusters_stay_small() {
    let (id, p) = generate(Family::Mdp, 3, 2, 4, 1);
    let (id, _) = prune_irrelevant(&id, &p);
    let rjt = build_rjt_auto(&id).unwrap();
    for w in 0..id.len() {
        let c = rjt.cluster(rjt.cluster_of(w));
        if id.kind(w) == VertexKind::Utility {
            assert_eq!(c, id.graph.family(w).as_slice());
        } else {
            assert!(c.len() <= 3, "{c:?}");
        }
    }
    assert!(validate_rjt(&id, &rjt).is_empty());
}

#[test]
fn soluble_builder_blankets_inside_families() {
    for t in 2..=4 {
        let (id, p) = generate(Family::Mdp, 2, 2, t, 0);
        let (id, _) = prune_irrelevant(&id, &p);
        assert!(is_soluble(&id));
        let rjt = build_soluble_rjt(&id).unwrap();
        assert!(validate_rjt(&id, &rjt).is_empty());
        for d in id.decisions() {
            let split = free_split(&id, rjt.cluster(rjt.cluster_of(d)));
            let fa = id.graph.family(d);
            assert!(split.blanket.iter().all(|u| fa.contains(u)), "blanket {:?} outside family of {d}", split.blanket);
        }
    }
}

#[test]
fn non_soluble_diagram_rejected_by_soluble_builder() {
    let (id, p) = generate(Family::Chess, 2, 2, 2, 0);
    let (id, _) = prune_irrelevant(&id, &p);
    assert!(!is_soluble(&id));
    assert!(matches!(build_soluble_rjt(&id), Err(Error::NotSoluble)));
}

#[test]
fn whole_vertex_set_as_one_cluster() {
    let (id, _) = common::two_decision_chain(2, 2, 2, 2, 0);
    let all: Vec<usize> = (0..id.len()).collect();
    let single = RootedJunctionTree::from_parts(id.len(), vec![all], vec![None], (0..id.len()).collect());
    let violations = validate_rjt(&id, &single);
    assert!(violations.iter().any(|v| v.kind == ViolationKind::OffspringNotSingleton));
    let chain = normalize_offspring(&single);
    assert_eq!(chain.len(), id.len());
    assert!(chain.is_normalized());
    assert!(validate_rjt(&id, &chain).iter().all(|v| v.kind.is_minimality()));
}

#[test]
fn normalizing_a_normalized_tree_is_identity() {
    let (id, _) = generate(Family::PomdpLm, 2, 2, 3, 0);
    let rjt = build_rjt_auto(&id).unwrap();
    let again = normalize_offspring(&rjt);
    let shape = |t: &RootedJunctionTree| -> BTreeMap<usize, (Vec<usize>, Option<usize>)> {
        (0..id.len())
            .map(|w| {
                let c = t.cluster_of(w);
                (w, (t.cluster(c).to_vec(), t.parent[c].map(|p| t.offspring_vertex(p))))
            })
            .collect()
    };
    assert_eq!(again.len(), rjt.len());
    assert_eq!(shape(&again), shape(&rjt));
}

#[test]
fn cyclic_order_rejected() {
    let (id, _) = generate(Family::Mdp, 2, 2, 2, 0);
    let mut order = auto_order(&id).unwrap();
    order.reverse();
    assert!(matches!(build_rjt(&id, &order), Err(Error::NotTopological(_))));
}

fn dag() -> impl Strategy<Value = (InfluenceDiagram, u64)> {
    (2usize..=10, 0.1f64..0.6, any::<u64>()).prop_map(|(n, density, seed)| (random_id(n, density, 2, seed).0, seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn builder_output_is_valid((id, seed) in dag()) {
        let order = shuffled_order(&id, seed);
        let rjt = build_rjt(&id, &order).unwrap();
        prop_assert!(validate_rjt(&id, &rjt).is_empty());
        prop_assert!(rjt.is_normalized());
    }

    #[test]
    fn clusters_only_hold_earlier_vertices((id, seed) in dag()) {
        let order = shuffled_order(&id, seed);
        let pos: Vec<usize> = { let mut p = vec![0; id.len()]; for (i, &v) in order.iter().enumerate() { p[v] = i; } p };
        let rjt = build_rjt(&id, &order).unwrap();
        for w in 0..id.len() {
            for &u in rjt.cluster(rjt.cluster_of(w)) {
                prop_assert!(pos[u] <= pos[w]);
            }
            if let Some(par) = rjt.parent[rjt.cluster_of(w)] {
                prop_assert!(pos[rjt.offspring_vertex(par)] < pos[w]);
            }
        }
    }

    #[test]
    fn paths_lift_to_the_tree((id, _seed) in dag()) {
        let rjt = build_rjt_auto(&id).unwrap();
        for u in 0..id.len() {
            for w in id.graph.descendants(u) {
                prop_assert!(rjt.reaches(rjt.cluster_of(u), rjt.cluster_of(w)), "{u} -> {w}");
            }
        }
    }

    #[test]
    fn seeds_only_grow_clusters((id, seed) in dag()) {
        let order = shuffled_order(&id, seed);
        let mut rng = common::rng(seed);
        let mut seeds = BTreeMap::new();
        for k in 1..order.len() {
            use rand::Rng;
            if rng.gen_bool(0.3) {
                let j = rng.gen_range(0..k);
                seeds.insert(order[k], vec![order[j]]);
            }
        }
        let plain = build_rjt(&id, &order).unwrap();
        let seeded = build_rjt_seeded(&id, &order, &seeds).unwrap();
        prop_assert!(validate_rjt(&id, &seeded).iter().all(|v| v.kind.is_minimality()));
        for w in 0..id.len() {
            let big = seeded.cluster(seeded.cluster_of(w));
            prop_assert!(plain.cluster(plain.cluster_of(w)).iter().all(|u| big.contains(u)));
        }
    }
}
