//! Randomized invariants: format round-trips, confluence of the
//! consistency pass, degree-implementation agreement, coverage laws,
//! component partitions, tree-projection sandwiches, width monotonicity,
//! degree-bound soundness, and pipeline/oracle agreement.

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use sharpcq_core::corpus;
use sharpcq_core::counting::{
    count, enforce_pairwise_consistency, enforce_pairwise_consistency_with_order,
    standard_view_extension, RunConfig,
};
use sharpcq_core::decomp::{build_view_set, sharp_hypertree_width};
use sharpcq_core::hybrid::{bound, relation_degree, relation_degree_scan, restrict_chi, search_sharp_b};
use sharpcq_core::hypergraph::{is_acyclic, Hypergraph};
use sharpcq_core::oracle;
use sharpcq_core::parse::{format_facts, parse_facts, parse_query};
use sharpcq_core::relation::Relation;
use sharpcq_core::treeproj::{nf_tree_projection, SearchOptions};
use sharpcq_core::{Const, Var};

fn instance(seed: u64) -> corpus::CorpusInstance {
    corpus::generate(seed, 1).remove(0)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn query_and_facts_formats_round_trip(seed in any::<u64>()) {
        let inst = instance(seed);
        let reparsed = parse_query(&inst.query.to_string()).unwrap();
        prop_assert_eq!(&reparsed, &inst.query);
        let redb = parse_facts(&format_facts(&inst.db)).unwrap();
        prop_assert_eq!(&redb, &inst.db);
    }

    #[test]
    fn degree_groupings_and_scans_agree(
        rows in prop::collection::vec((0u8..5, 0u8..5, 0u8..5), 0..40),
        mask in 0u8..16,
    ) {
        let schema = vec![Var::new("A"), Var::new("B"), Var::new("C")];
        let rows: Vec<Vec<Const>> = rows
            .into_iter()
            .map(|(a, b, c)| {
                [a, b, c].iter().map(|x| Const::new(format!("c{x}"))).collect()
            })
            .collect();
        let r = Relation::new(schema, rows).unwrap();
        let mut f = BTreeSet::new();
        for (i, name) in ["A", "B", "C", "D"].iter().enumerate() {
            if mask & (1 << i) != 0 {
                f.insert(Var::new(*name));
            }
        }
        prop_assert_eq!(relation_degree(&r, &f), relation_degree_scan(&r, &f));
    }

    #[test]
    fn components_partition_the_non_selected_variables(seed in any::<u64>(), mask in any::<u16>()) {
        let inst = instance(seed);
        let h = Hypergraph::of_query(&inst.query);
        let nodes: Vec<Var> = h.nodes().iter().cloned().collect();
        let w: BTreeSet<Var> = nodes
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << (i % 16)) != 0)
            .map(|(_, v)| v.clone())
            .collect();
        let mut seen: BTreeSet<Var> = BTreeSet::new();
        for comp in h.w_components(&w) {
            prop_assert!(!comp.is_empty());
            for v in &comp {
                prop_assert!(!w.contains(v), "component variable {v} is selected");
                prop_assert!(seen.insert(v.clone()), "variable {v} in two components");
            }
        }
        let expected: BTreeSet<Var> = h.nodes().iter().filter(|v| !w.contains(v)).cloned().collect();
        prop_assert_eq!(seen, expected);
    }

    #[test]
    fn coverage_is_reflexive_and_chains_across_view_widths(seed in any::<u64>()) {
        let inst = instance(seed);
        let h1 = Hypergraph::of_query(&inst.query);
        prop_assert!(h1.covers(&h1));
        let k2 = inst.query.atoms.len().min(2);
        let k3 = inst.query.atoms.len().min(3);
        let h2 = build_view_set(&inst.query, k2).unwrap().hypergraph();
        let h3 = build_view_set(&inst.query, k3).unwrap().hypergraph();
        prop_assert!(h2.covers(&h1));
        prop_assert!(h3.covers(&h2));
        prop_assert!(h3.covers(&h1), "coverage must chain transitively");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn consistency_reaches_the_same_fixpoint_in_any_order(
        seed in any::<u64>(),
        shuffle in Just(()).prop_perturb(|(), mut rng| {
            // A permutation sampled from proptest's own rng.
            let mut order: Vec<usize> = (0..256).collect();
            for i in (1..order.len()).rev() {
                let j = (rng.next_u64() % (i as u64 + 1)) as usize;
                order.swap(i, j);
            }
            order
        }),
    ) {
        let inst = instance(seed);
        prop_assume!(inst.query.atoms.len() >= 2 && inst.query.atoms.len() <= 5);
        let k = inst.query.atoms.len().min(2);
        let vs = build_view_set(&inst.query, k).unwrap();
        let lvdb = standard_view_extension(&inst.query, &inst.db, &vs).unwrap();

        let n = lvdb.views.len();
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    pairs.push((i, j));
                }
            }
        }
        // Reorder the sweep by the sampled permutation.
        pairs.sort_by_key(|&(i, j)| shuffle[(i * n + j) % shuffle.len()]);

        let canonical = enforce_pairwise_consistency(lvdb.clone());
        let shuffled = enforce_pairwise_consistency_with_order(lvdb, &pairs);
        for (a, b) in canonical.views.iter().zip(&shuffled.views) {
            prop_assert_eq!(&a.name, &b.name);
            prop_assert_eq!(a.relation.rows(), b.relation.rows(), "view {}", a.name);
        }
    }

    #[test]
    fn tree_projections_are_sandwiched_and_acyclic(seed in any::<u64>()) {
        let inst = instance(seed);
        prop_assume!(inst.query.atoms.len() <= 5);
        let k = inst.query.atoms.len().min(2);
        let h1 = Hypergraph::of_query(&inst.query);
        let vs = build_view_set(&inst.query, k).unwrap();
        let h2 = vs.hypergraph();
        if let Some(nf) =
            nf_tree_projection(&h1, &h2, &SearchOptions::default(), |_| true).unwrap()
        {
            let ha = nf.hypergraph();
            prop_assert!(is_acyclic(&ha));
            prop_assert!(ha.covers(&h1), "every query edge fits in some bag");
            prop_assert!(h2.covers(&ha), "every bag fits in some view");
        }
    }

    #[test]
    fn sharp_width_is_stable_under_larger_budgets(seed in any::<u64>()) {
        let inst = instance(seed);
        prop_assume!(inst.query.atoms.len() <= 6);
        let narrow = sharp_hypertree_width(&inst.query, 2);
        let wide = sharp_hypertree_width(&inst.query, 3);
        if let (Ok(Some(a)), Ok(Some(b))) = (&narrow, &wide) {
            prop_assert_eq!(a.k, b.k, "the smallest width must not depend on the cap");
        }
        if let (Ok(Some(a)), Ok(None)) = (&narrow, &wide) {
            prop_assert!(false, "width {} found at kmax 2 but nothing at kmax 3", a.k);
        }
    }

    #[test]
    fn pipeline_and_oracle_agree(seed in any::<u64>()) {
        let inst = instance(seed);
        let rep = count(&inst.query, &inst.db, &RunConfig::default()).unwrap();
        let reference =
            oracle::brute_force_count(&inst.query, &inst.db, oracle::DEFAULT_STATE_CAP).unwrap();
        prop_assert_eq!(rep.count, reference);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn hybrid_degree_bounds_are_sound(seed in any::<u64>()) {
        let inst = instance(seed);
        prop_assume!(inst.query.atoms.len() <= 5);
        let k = inst.query.atoms.len().min(2);
        let found = match search_sharp_b(&inst.query, &inst.db, k, 8) {
            Ok(found) => found,
            // A truncated search certifies nothing to check here.
            Err(sharpcq_core::Error::SearchBudgetExceeded(_)) => None,
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        if let Some((hd, s_bar, b)) = found {
            let restricted = restrict_chi(&hd, &s_bar).unwrap();
            let profile = bound(&restricted, &inst.db, &inst.query.free_set()).unwrap();
            prop_assert!(
                profile.overall <= b,
                "reported bound {} exceeded by measured degree {}",
                b,
                profile.overall
            );
        }
    }
}
