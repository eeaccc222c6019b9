use std::collections::BTreeSet;

use proptest::prelude::*;

use sleepmst_core::graph::{diameter, gen_grc, gen_random_connected, gen_ring, mst_oracle, WeightedGraph};
use sleepmst_core::{run_algo, Algo, AlgoParams, RunConfig};

/// Exhaustive MST weight by trying every spanning subset (tiny graphs only).
fn brute_force_mst_weight(g: &WeightedGraph) -> u64 {
    let m = g.m();
    let need = g.n() - 1;
    let mut best = u64::MAX;
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != need {
            continue;
        }
        let mut parent: Vec<usize> = (0..g.n()).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            if p[x] != x {
                p[x] = find(p, p[x]);
            }
            p[x]
        }
        let mut ok = true;
        let mut w = 0;
        for (i, e) in g.edges().iter().enumerate() {
            if mask >> i & 1 == 1 {
                let (a, b) = (find(&mut parent, e.u), find(&mut parent, e.v));
                if a == b {
                    ok = false;
                    break;
                }
                parent[a] = b;
                w += e.w;
            }
        }
        if ok {
            best = best.min(w);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_graphs_are_valid_and_connected(n in 2usize..60, deg in 2.0f64..6.0, seed in any::<u64>()) {
        let g = gen_random_connected(n, deg, seed).unwrap();
        prop_assert!(g.validate().is_ok());
        prop_assert!(g.bfs_depths(0).iter().all(|d| d.is_some()));
        let weights: BTreeSet<u64> = g.edges().iter().map(|e| e.w).collect();
        prop_assert_eq!(weights.len(), g.m());
        let ids: BTreeSet<u64> = g.ids().iter().copied().collect();
        prop_assert_eq!(ids.len(), n);
        prop_assert!(g.ids().iter().all(|&id| id >= 1 && id <= g.id_space()));
    }

    #[test]
    fn ports_are_symmetric(n in 2usize..40, seed in any::<u64>()) {
        let g = gen_random_connected(n, 3.0, seed).unwrap();
        for v in 0..n {
            for (p, l) in g.ports(v).iter().enumerate() {
                let back = g.port_to(l.to, v).unwrap();
                prop_assert_eq!(g.ports(l.to)[back].to, v);
                prop_assert_eq!(g.ports(l.to)[back].edge, l.edge);
                prop_assert_eq!(l.rev, back);
                prop_assert_eq!(g.port_to(v, l.to), Some(p));
            }
        }
    }

    #[test]
    fn file_format_round_trips(n in 2usize..30, seed in any::<u64>()) {
        let g = gen_random_connected(n, 2.5, seed).unwrap();
        let back = WeightedGraph::read_from(g.to_text().as_bytes()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn oracle_is_a_minimum_spanning_tree(n in 2usize..8, seed in any::<u64>()) {
        let g = gen_random_connected(n, 2.5, seed).unwrap();
        prop_assume!(g.m() <= 16);
        let t = mst_oracle(&g);
        prop_assert!(t.is_spanning_tree(&g));
        prop_assert_eq!(t.total_weight(&g), brute_force_mst_weight(&g));
    }

    #[test]
    fn generators_are_deterministic(len in 3usize..50, seed in any::<u64>()) {
        prop_assert_eq!(gen_ring(len, seed).unwrap(), gen_ring(len, seed).unwrap());
        prop_assert_eq!(gen_random_connected(len, 3.0, seed).unwrap(), gen_random_connected(len, 3.0, seed).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_algorithm_agrees_with_the_oracle(n in 2usize..24, deg in 2.0f64..4.0, seed in any::<u64>(), k in 0u32..4) {
        let g = gen_random_connected(n, deg, seed).unwrap();
        let d = diameter(&g) as u64;
        let want = mst_oracle(&g);
        for a in [Algo::Det, Algo::Tradeoff] {
            let p = AlgoParams { k: Some(k), ..Default::default() };
            let rep = run_algo(&g, a, &RunConfig::for_graph(&g, seed), p, d).unwrap();
            let o = rep.outcome();
            prop_assert_eq!(&o.edges, &want, "{}", a);
            prop_assert!(o.ldt_violations.is_empty(), "{:?}", o.ldt_violations);
            prop_assert_eq!(o.one_sided_edges, 0);
        }
    }
}

#[test]
fn grc_has_the_advertised_shape() {
    let (g, lay) = gen_grc(4, 16, None, 3).unwrap();
    assert!(g.validate().is_ok());
    assert_eq!(lay.rows, 4);
    assert_eq!(lay.cols, 16);
    assert!(g.bfs_depths(0).iter().all(|d| d.is_some()));
}
