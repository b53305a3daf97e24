use std::collections::BTreeMap;

use gdtn_core::stochastic_dag::{
    empirical_distribution, total_variation, transform, DurationDist, DurationTable, StochasticDag,
};
use gdtn_core::twin_graph::{Asset, AssetKind, Relation, TwinFidelity, TwinGraph};
use proptest::prelude::*;

/// Random all-discrete DAG: up to 6 nodes, up to 3 support points each,
/// edges only from lower to higher index.
fn discrete_dag() -> impl Strategy<Value = StochasticDag> {
    (1usize..=6)
        .prop_flat_map(|n| {
            let points = prop::collection::vec(prop::collection::vec((0u32..8, 1u32..5), 1..=3), n);
            let edges = prop::collection::vec(prop::bool::weighted(0.4), n * (n - 1) / 2);
            (Just(n), points, edges)
        })
        .prop_map(|(n, points, edges)| {
            let nodes = points.into_iter().enumerate().map(|(i, pts)| {
                let total: u32 = pts.iter().map(|p| p.1).sum();
                let dist = DurationDist::Discrete {
                    points: pts
                        .iter()
                        .map(|&(v, w)| (f64::from(v) * 0.5, f64::from(w) / f64::from(total)))
                        .collect(),
                };
                (format!("n{i}"), dist)
            });
            let mut pairs = Vec::new();
            let mut k = 0;
            for a in 0..n {
                for b in a + 1..n {
                    if edges[k] {
                        pairs.push((format!("n{a}"), format!("n{b}")));
                    }
                    k += 1;
                }
            }
            StochasticDag::new(nodes, pairs).unwrap()
        })
}

/// Longest path by enumerating every path from every node.
fn longest_path(dag: &StochasticDag, durations: &BTreeMap<String, f64>) -> f64 {
    fn from(dag: &StochasticDag, node: &str, d: &BTreeMap<String, f64>) -> f64 {
        let tail = dag
            .edges()
            .filter(|(b, _)| b == node)
            .map(|(_, a)| from(dag, a, d))
            .fold(0.0, f64::max);
        d[node] + tail
    }
    dag.nodes()
        .map(|(id, _)| from(dag, id, durations))
        .fold(0.0, f64::max)
}

/// Exact distribution via recursive enumeration and path enumeration, keyed
/// on values rounded to 1e-9.
fn oracle(dag: &StochasticDag) -> BTreeMap<i64, f64> {
    let nodes: Vec<(String, Vec<(f64, f64)>)> = dag
        .nodes()
        .map(|(id, d)| (id.clone(), d.support().unwrap()))
        .collect();
    let mut out = BTreeMap::new();
    fn go(
        i: usize,
        nodes: &[(String, Vec<(f64, f64)>)],
        chosen: &mut BTreeMap<String, f64>,
        prob: f64,
        dag: &StochasticDag,
        out: &mut BTreeMap<i64, f64>,
    ) {
        if i == nodes.len() {
            let key = (longest_path(dag, chosen) * 1e9).round() as i64;
            *out.entry(key).or_insert(0.0) += prob;
            return;
        }
        for &(v, p) in &nodes[i].1 {
            chosen.insert(nodes[i].0.clone(), v);
            go(i + 1, nodes, chosen, prob * p, dag, out);
        }
    }
    go(0, &nodes, &mut BTreeMap::new(), 1.0, dag, &mut out);
    out.retain(|_, p| *p > 0.0);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_matches_path_enumeration_oracle(dag in discrete_dag()) {
        let exact = dag.completion_exact().unwrap();
        let expected = oracle(&dag);
        prop_assert_eq!(exact.len(), expected.len());
        for ((v, p), (k, q)) in exact.iter().zip(&expected) {
            prop_assert_eq!((v * 1e9).round() as i64, *k);
            prop_assert!((p - q).abs() < 1e-12);
        }
        let total: f64 = exact.iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn samples_lie_in_exact_support(dag in discrete_dag(), seed in any::<u64>()) {
        let exact = dag.completion_exact().unwrap();
        for x in dag.completion_samples(seed, 0..200) {
            prop_assert!(exact.iter().any(|(v, _)| (v - x).abs() < 1e-9), "{} not in support", x);
        }
    }

    #[test]
    fn replications_are_independent_of_batching(dag in discrete_dag(), seed in any::<u64>(), cut in 0u64..300) {
        let whole = dag.completion_samples(seed, 0..300);
        let mut parts = dag.completion_samples(seed, 0..cut);
        parts.extend(dag.completion_samples(seed, cut..300));
        prop_assert_eq!(whole, parts);
    }

    #[test]
    fn descriptor_round_trips(dag in discrete_dag()) {
        let text = dag.export();
        let back = StochasticDag::parse(&text).unwrap();
        prop_assert_eq!(back.export(), text);
        prop_assert_eq!(back, dag);
    }

    #[test]
    fn transform_keeps_one_node_per_twin(n in 1usize..8, attempts in prop::collection::vec((0usize..8, 0usize..8, 0usize..3), 0..20)) {
        let relations = [Relation::Contains, Relation::ConnectsTo, Relation::DependsOn];
        let mut g = TwinGraph::new();
        for i in 0..n {
            let id = format!("t{i}");
            g.add_asset(Asset::new(&id, AssetKind::Service).with_attr("d", 1.0 + i as f64)).unwrap();
            g.bind_twin(&id, TwinFidelity::Doppel, &[]).unwrap();
        }
        for (a, b, r) in attempts {
            let _ = g.link(&format!("t{}", a % n), &format!("t{}", b % n), relations[r]);
        }
        let dag = transform(&g, "d", &DurationTable::default()).unwrap();
        prop_assert_eq!(dag.node_count(), g.twin_count());
        let precedences = g.edges().filter(|e| e.relation.is_precedence()).map(|e| (e.parent.clone(), e.child.clone())).collect::<std::collections::BTreeSet<_>>();
        prop_assert_eq!(dag.edge_count(), precedences.len());
    }
}

#[test]
fn monte_carlo_converges_to_exact_on_random_dags() {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;
    let mut runner = TestRunner::deterministic();
    for _ in 0..10 {
        let dag = discrete_dag().new_tree(&mut runner).unwrap().current();
        let exact = dag.completion_exact().unwrap();
        let mc = empirical_distribution(&dag.completion_samples(17, 0..50_000));
        let tv = total_variation(&mc, &exact);
        assert!(tv < 0.02, "tv {tv}");
    }
}
