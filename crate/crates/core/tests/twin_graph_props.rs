use std::collections::BTreeSet;

use gdtn_core::twin_graph::{
    Aggregator, Asset, AssetKind, Relation, SynthesisRule, TwinFidelity, TwinGraph,
};
use proptest::prelude::*;

const RELATIONS: [Relation; 3] = [
    Relation::Contains,
    Relation::ConnectsTo,
    Relation::DependsOn,
];

/// Builds a graph from arbitrary link attempts; `link` rejects the ones that
/// would close a cycle.
fn build(n: usize, attempts: &[(usize, usize, usize)]) -> TwinGraph {
    let mut g = TwinGraph::new();
    for i in 0..n {
        let id = format!("t{i}");
        g.add_asset(Asset::new(&id, AssetKind::NetworkElement).with_attr("v", i as i64 + 1))
            .unwrap();
        g.bind_twin(&id, TwinFidelity::Doppel, &[]).unwrap();
    }
    for &(a, b, r) in attempts {
        let _ = g.link(
            &format!("t{}", a % n),
            &format!("t{}", b % n),
            RELATIONS[r % 3],
        );
    }
    g
}

fn ids(g: &TwinGraph) -> Vec<String> {
    g.twins().map(|t| t.id.clone()).collect()
}

/// Transitive closure by repeated squaring of the adjacency relation.
fn closure(g: &TwinGraph) -> BTreeSet<(String, String)> {
    let mut reach: BTreeSet<(String, String)> = g
        .edges()
        .map(|e| (e.parent.clone(), e.child.clone()))
        .collect();
    loop {
        let extra: Vec<(String, String)> = reach
            .iter()
            .flat_map(|(a, b)| {
                reach
                    .iter()
                    .filter(move |(c, _)| c == b)
                    .map(move |(_, d)| (a.clone(), d.clone()))
            })
            .filter(|p| !reach.contains(p))
            .collect();
        if extra.is_empty() {
            return reach;
        }
        reach.extend(extra);
    }
}

fn graph_strategy() -> impl Strategy<Value = TwinGraph> {
    (
        1usize..9,
        prop::collection::vec((0usize..9, 0usize..9, 0usize..3), 0..24),
    )
        .prop_map(|(n, attempts)| build(n, &attempts))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn linking_never_breaks_acyclicity(g in graph_strategy()) {
        prop_assert!(g.validate().is_empty());
        prop_assert_eq!(g.bottom_up_order().len(), g.twin_count());
        let closure = closure(&g);
        prop_assert!(closure.iter().all(|(a, b)| a != b));
    }

    #[test]
    fn tiers_are_one_above_the_highest_child(g in graph_strategy()) {
        for id in ids(&g) {
            let children = g.children_of(&id);
            let expected = children
                .iter()
                .map(|c| g.twin(c).unwrap().tier() + 1)
                .max()
                .unwrap_or(0);
            prop_assert_eq!(g.twin(&id).unwrap().tier(), expected);
        }
    }

    #[test]
    fn abstraction_preserves_reachability_among_kept_twins(g in graph_strategy(), floor in 0u32..4) {
        let view = g.abstract_view(floor);
        prop_assert!(view.validate().is_empty());
        prop_assert!(view.twin_count() >= 1);
        let kept = ids(&view);
        let original = closure(&g);
        let contracted = closure(&view);
        for a in &kept {
            for b in &kept {
                let pair = (a.clone(), b.clone());
                prop_assert_eq!(original.contains(&pair), contracted.contains(&pair), "{:?}", pair);
            }
        }
    }

    #[test]
    fn synthesis_is_idempotent(g in graph_strategy()) {
        let rules = [
            SynthesisRule::new("total", Aggregator::Sum, "v"),
            SynthesisRule::new("peak", Aggregator::Max, "v"),
        ];
        let mut once = g.clone();
        once.synthesize(&rules).unwrap();
        let mut twice = once.clone();
        twice.synthesize(&rules).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn documents_round_trip_byte_identically(g in graph_strategy()) {
        let text = g.to_document();
        let back = TwinGraph::from_document(&text).unwrap();
        prop_assert_eq!(back.to_document(), text);
        prop_assert_eq!(back, g);
    }
}

proptest! {
    #[test]
    fn float_attributes_survive_documents(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        let mut g = TwinGraph::new();
        g.add_asset(Asset::new("a", AssetKind::IndustrialAsset).with_attr("x", x)).unwrap();
        g.bind_twin("a", TwinFidelity::Doppel, &[]).unwrap();
        let text = g.to_document();
        let back = TwinGraph::from_document(&text).unwrap();
        prop_assert_eq!(back.to_document(), text);
        prop_assert_eq!(back, g);
    }
}
