mod common;

use common::{edge_oracle, floyd_warshall, random_network};
use proptest::prelude::*;
use std::collections::BTreeSet;
use trep_core::{presets, Action, Cell, GridSpec, Trajectory};

#[test]
fn distances_match_floyd_warshall_on_random_maps() {
    let mut checked = 0;
    for seed in 0..100 {
        let Some(net) = random_network(seed) else { continue };
        let adj = edge_oracle(&net);
        let oracle = floyd_warshall(&adj);
        for u in 0..net.len() {
            for v in 0..net.len() {
                assert_eq!(net.shortest_distance(u, v), oracle[u][v], "seed {seed}: {} -> {}", net.cell(u), net.cell(v));
                assert_eq!(net.has_edge(u, v), adj[u][v], "seed {seed}: edge {} -> {}", net.cell(u), net.cell(v));
            }
        }
        checked += 1;
    }
    assert!(checked >= 95, "only {checked} maps had free cells");
}

#[test]
fn masks_match_reachable_cells() {
    for seed in 0..100 {
        let Some(net) = random_network(seed) else { continue };
        let adj = edge_oracle(&net);
        for v in 0..net.len() {
            let rcells: BTreeSet<_> = net.rcells(v).into_iter().collect();
            let expected: BTreeSet<_> = (0..net.len()).filter(|&u| adj[v][u]).collect();
            assert_eq!(rcells, expected, "seed {seed} at {}", net.cell(v));
            assert!(rcells.contains(&v));
            let mask = net.mask(v);
            for a in Action::ALL {
                let target = net.spec().step(net.cell(v), a).and_then(|c| net.vertex(c));
                let reachable = target.is_some_and(|t| rcells.contains(&t));
                assert_eq!(mask[a.index()], reachable, "seed {seed} at {} action {a:?}", net.cell(v));
            }
        }
    }
}

#[test]
fn fig2_reachable_cells_of_v1() {
    let f = presets::fig2();
    let got: BTreeSet<_> = f.net.rcells(f.v(1)).into_iter().collect();
    let want: BTreeSet<_> = [0, 1, 2, 4].into_iter().map(|i| f.v(i)).collect();
    assert_eq!(got, want);
    assert!(!f.net.mask(f.v(1))[Action::E.index()]);
    assert!(f.net.transition(f.v(1), Action::E).is_none());
}

#[test]
fn raw_gap_is_bridged_by_a_shortest_path() {
    let net = presets::fixture_8x8();
    let oracle = floyd_warshall(&edge_oracle(&net));
    let spec = *net.spec();
    let mut bridged = 0;
    for u in 0..net.len() {
        for v in 0..net.len() {
            if oracle[u][v] != Some(2) {
                continue;
            }
            let samples = [(0.0, spec.center(net.cell(u))), (1.0, spec.center(net.cell(v)))];
            let t = Trajectory::from_raw(&samples, &net).unwrap();
            assert_eq!(t.len(), 3);
            assert_eq!((t.vertices()[0], t.vertices()[2]), (u, v));
            t.validate(&net).unwrap();
            bridged += 1;
        }
    }
    assert!(bridged > 50);
}

#[test]
fn path_corpus_holds_distinct_shortest_paths() {
    let net = presets::fixture_8x8();
    let corpus = presets::path_corpus(&net, 12, 4..=9, 3);
    assert_eq!(corpus.len(), 12);
    let distinct: BTreeSet<_> = corpus.iter().map(|t| t.vertices().to_vec()).collect();
    assert_eq!(distinct.len(), 12);
    for t in &corpus {
        t.validate(&net).unwrap();
        let hops = (t.len() - 1) as u32;
        assert!((4..=9).contains(&hops));
        assert_eq!(net.shortest_distance(t.first(), *t.vertices().last().unwrap()), Some(hops));
    }
    assert_eq!(corpus, presets::path_corpus(&net, 12, 4..=9, 3));
}

proptest! {
    #[test]
    fn discretize_inverts_center(row in 0usize..20, col in 0usize..20, alpha in 0.1f64..5.0, ox in -50.0f64..50.0) {
        let spec = GridSpec::new([ox, -ox], alpha, 20, 20).unwrap();
        let cell = Cell::new(row, col);
        prop_assert_eq!(spec.discretize(spec.center(cell)).unwrap(), cell);
    }

    #[test]
    fn discretized_point_lies_in_its_cell(x in 0.0f64..30.0, y in 0.0f64..30.0) {
        let spec = GridSpec::new([0.0, 0.0], 3.0, 10, 10).unwrap();
        let c = spec.discretize([x, y]).unwrap();
        let [cx, cy] = spec.center(c);
        prop_assert!((x - cx).abs() <= 1.5 + 1e-9 && (y - cy).abs() <= 1.5 + 1e-9);
    }

    #[test]
    fn distances_are_a_metric_on_symmetric_maps(seed in 0u64..500) {
        if let Some(net) = random_network(seed) {
            for u in 0..net.len() {
                prop_assert_eq!(net.shortest_distance(u, u), Some(0));
                for v in 0..net.len() {
                    prop_assert_eq!(net.shortest_distance(u, v), net.shortest_distance(v, u));
                    for w in 0..net.len() {
                        if let (Some(a), Some(b), Some(c)) = (net.shortest_distance(u, v), net.shortest_distance(v, w), net.shortest_distance(u, w)) {
                            prop_assert!(c <= a + b);
                        }
                    }
                }
            }
        }
    }
}
