use super::solve::{count_partitions, decomposition_objective};
use super::*;
use crate::geometry::Pose2;
use crate::posegraph::Edge;
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type P = Pose2<f64>;

// ---- independent oracle: recursive partition search ------------------------
//
// Enumerates partitions by assigning each vertex to an existing block or a
// new one (a different scheme than the solver's restricted-growth strings).

fn oracle_best_objective(n: usize, edges: &[(usize, usize, f64)]) -> (f64, u64) {
    fn rec(
        v: usize,
        n: usize,
        blocks: &mut Vec<Vec<usize>>,
        edges: &[(usize, usize, f64)],
        best: &mut f64,
        count: &mut u64,
    ) {
        if v == n {
            *count += 1;
            let block_of = |x: usize| blocks.iter().position(|b| b.contains(&x)).unwrap();
            let obj: f64 = edges
                .iter()
                .filter(|(a, b, _)| block_of(*a) != block_of(*b))
                .map(|(_, _, c)| *c)
                .sum();
            if obj < *best {
                *best = obj;
            }
            return;
        }
        for i in 0..blocks.len() {
            blocks[i].push(v);
            rec(v + 1, n, blocks, edges, best, count);
            blocks[i].pop();
        }
        blocks.push(vec![v]);
        rec(v + 1, n, blocks, edges, best, count);
        blocks.pop();
    }
    let mut best = f64::INFINITY;
    let mut count = 0;
    rec(0, n, &mut Vec::new(), edges, &mut best, &mut count);
    (best, count)
}

fn lm(from: (u32, u32), to: (u32, u32)) -> Edge<P> {
    Edge::landmark(
        NodeId::new(from.0, from.1),
        NodeId::new(to.0, to.1),
        Pose2::identity(),
        DMatrix::identity(3, 3),
    )
}

fn odo(s: u32, f: u32) -> Edge<P> {
    Edge::odometry(
        NodeId::new(s, f),
        NodeId::new(s, f + 1),
        Pose2::new(1.0, 0.0, 0.0),
        DMatrix::identity(3, 3),
    )
}

// ---- support weights --------------------------------------------------------

#[test]
fn support_candidate_bound_delta_1() {
    let cfg = SupportConfig::default();
    assert_eq!(cfg.max_support_candidates(), 8);
    let cfg3 = SupportConfig {
        delta: 3,
        ..SupportConfig::default()
    };
    assert_eq!(cfg3.max_support_candidates(), 48);
}

#[test]
fn mutual_support_pair() {
    let mut g = PoseGraph::<P>::new();
    g.add_edge(lm((0, 10), (1, 55))).unwrap();
    g.add_edge(lm((0, 11), (1, 56))).unwrap();
    let w = compute_support_weights(&g, &SupportConfig::default());
    assert_eq!(w[&0], 1.0);
    assert_eq!(w[&1], 1.0);
}

#[test]
fn lone_edge_unsupported() {
    let mut g = PoseGraph::<P>::new();
    g.add_edge(lm((0, 20), (1, 80))).unwrap();
    let w = compute_support_weights(&g, &SupportConfig::default());
    assert_eq!(w[&0], -1.0);
}

#[test]
fn swapped_endpoints_still_support() {
    let mut g = PoseGraph::<P>::new();
    g.add_edge(lm((0, 10), (1, 55))).unwrap();
    g.add_edge(lm((1, 56), (0, 11))).unwrap();
    let w = compute_support_weights(&g, &SupportConfig::default());
    assert_eq!(w[&0], 1.0);
    assert_eq!(w[&1], 1.0);
}

#[test]
fn window_is_sharp() {
    let mut g = PoseGraph::<P>::new();
    g.add_edge(lm((0, 10), (1, 55))).unwrap();
    g.add_edge(lm((0, 12), (1, 55))).unwrap(); // frame diff 2 > delta 1
    let w = compute_support_weights(&g, &SupportConfig::default());
    assert_eq!(w[&0], -1.0);
    assert_eq!(w[&1], -1.0);
    let wide = SupportConfig {
        delta: 2,
        ..SupportConfig::default()
    };
    let w = compute_support_weights(&g, &wide);
    assert_eq!(w[&0], 1.0);
}

#[test]
fn support_counts_respect_bound_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for delta in [1u32, 2, 3] {
        let cfg = SupportConfig {
            delta,
            ..SupportConfig::default()
        };
        for _ in 0..30 {
            let mut g = PoseGraph::<P>::new();
            for _ in 0..rng.random_range(2..60) {
                let a = (0, rng.random_range(0..25u32));
                let b = (1, rng.random_range(0..25u32));
                g.add_edge(lm(a, b)).unwrap();
            }
            for (_, count) in support_candidate_counts(&g, &cfg) {
                assert!(count <= cfg.max_support_candidates());
            }
        }
    }
}

#[test]
fn parallel_duplicates_support_but_do_not_add_slots() {
    let mut g = PoseGraph::<P>::new();
    g.add_edge(lm((0, 5), (1, 9))).unwrap();
    g.add_edge(lm((0, 5), (1, 9))).unwrap();
    let cfg = SupportConfig::default();
    let w = compute_support_weights(&g, &cfg);
    assert_eq!(w[&0], 1.0);
    assert_eq!(w[&1], 1.0);
    let counts = support_candidate_counts(&g, &cfg);
    assert_eq!(counts[&0], 0);
}

// ---- instance construction --------------------------------------------------

#[test]
fn landmark_only_instance_size() {
    let mut g = PoseGraph::<P>::new();
    for f in 0..9 {
        g.add_edge(odo(0, f)).unwrap();
        g.add_edge(odo(1, f)).unwrap();
    }
    g.add_edge(lm((0, 1), (1, 4))).unwrap();
    g.add_edge(lm((0, 4), (1, 7))).unwrap();
    g.add_edge(lm((0, 8), (1, 0))).unwrap();
    let wg = build_instance(&g, &SupportConfig::default());
    assert_eq!(wg.edges().len(), 3);
    assert_eq!(wg.n_vertices(), 6);
}

#[test]
fn full_graph_instance_size() {
    let mut g = PoseGraph::<P>::new();
    for f in 0..9 {
        g.add_edge(odo(0, f)).unwrap();
        g.add_edge(odo(1, f)).unwrap();
    }
    g.add_edge(lm((0, 1), (1, 4))).unwrap();
    g.add_edge(lm((0, 4), (1, 7))).unwrap();
    g.add_edge(lm((0, 8), (1, 0))).unwrap();
    let cfg = SupportConfig {
        mode: McMode::FullGraph,
        ..SupportConfig::default()
    };
    let wg = build_instance(&g, &cfg);
    // 2 sessions x 10 frames: 18 odometry edges plus 3 landmark edges
    assert_eq!(wg.edges().len(), 18 + 3);
    assert_eq!(wg.n_vertices(), 20);
}

#[test]
fn parallel_landmarks_merge_by_cost_sum() {
    let mut g = PoseGraph::<P>::new();
    g.add_edge(lm((0, 5), (1, 9))).unwrap();
    g.add_edge(lm((0, 5), (1, 9))).unwrap();
    let wg = build_instance(&g, &SupportConfig::default());
    assert_eq!(wg.edges().len(), 1);
    assert_eq!(wg.edges()[0].cost, 2.0);
    assert_eq!(wg.edges()[0].sources.len(), 2);
}

// ---- GAEC --------------------------------------------------------------------

#[test]
fn gaec_all_negative_gives_singletons() {
    let g = WeightedGraph::<f64>::from_signed_edges(4, &[(0, 1, -1.0), (1, 2, -1.0), (2, 3, -1.0)]);
    let d = solve_gaec(&g);
    assert_eq!(d.n_components(), 4);
}

#[test]
fn gaec_positive_path_single_component() {
    let g = WeightedGraph::<f64>::from_signed_edges(
        5,
        &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0)],
    );
    let d = solve_gaec(&g);
    assert_eq!(d.n_components(), 1);
}

#[test]
fn gaec_triangle_reaches_oracle_objective() {
    // (+1, +1, -1) triangle: the exhaustive oracle says the optimum is 0
    let edges = [(0usize, 1usize, 1.0), (0, 2, 1.0), (1, 2, -1.0)];
    let (best, _) = oracle_best_objective(3, &edges);
    assert_eq!(best, 0.0);
    let g = WeightedGraph::<f64>::from_signed_edges(3, &edges);
    let d = solve_gaec(&g);
    assert_eq!(decomposition_objective(&g, &d), 0.0);
    // refinement keeps it optimal
    let r = refine_klj(&g, &d);
    assert_eq!(decomposition_objective(&g, &r), 0.0);
}

#[test]
fn gaec_components_refine_positive_subgraph_components() {
    // every contraction follows an edge whose merged cost is positive, so a
    // GAEC component never crosses a positive-subgraph component boundary
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..50 {
        let n = rng.random_range(2..9usize);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(0.5) {
                    edges.push((u, v, if rng.random_bool(0.5) { 1.0 } else { -1.0 }));
                }
            }
        }
        let g = WeightedGraph::<f64>::from_signed_edges(n, &edges);
        let d = solve_gaec(&g);
        let mut uf = UnionFind::new(n);
        for &(u, v, c) in &edges {
            if c > 0.0 {
                uf.union(u, v);
            }
        }
        for &(u, v, _) in &edges {
            let same_gaec =
                d.component[&NodeId::new(0, u as u32)] == d.component[&NodeId::new(0, v as u32)];
            if same_gaec {
                assert_eq!(uf.find(u), uf.find(v));
            }
        }
    }
}

#[test]
fn gaec_equals_positive_components_on_trees() {
    // without cycles no parallel edges appear during contraction, so GAEC
    // contracts exactly the positive edges
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..50 {
        let n = rng.random_range(2..10usize);
        let mut edges = Vec::new();
        for v in 1..n {
            let u = rng.random_range(0..v);
            edges.push((u, v, if rng.random_bool(0.5) { 1.0 } else { -1.0 }));
        }
        let g = WeightedGraph::<f64>::from_signed_edges(n, &edges);
        let d = solve_gaec(&g);
        let mut uf = UnionFind::new(n);
        for &(u, v, c) in &edges {
            if c > 0.0 {
                uf.union(u, v);
            }
        }
        for u in 0..n {
            for v in u + 1..n {
                let same_gaec = d.component[&NodeId::new(0, u as u32)]
                    == d.component[&NodeId::new(0, v as u32)];
                assert_eq!(same_gaec, uf.find(u) == uf.find(v));
            }
        }
    }
}

// ---- refinement ---------------------------------------------------------------

#[test]
fn refine_keeps_optimal_input() {
    let g = WeightedGraph::<f64>::from_signed_edges(3, &[(0, 1, 1.0), (1, 2, -1.0)]);
    let exact = solve_exact(&g).unwrap();
    let refined = refine_klj(&g, &exact.decomposition);
    assert_eq!(refined, exact.decomposition);
}

#[test]
fn refine_never_exceeds_all_joined_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..100 {
        let n = rng.random_range(2..9usize);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(0.6) {
                    edges.push((u, v, if rng.random_bool(0.5) { 1.0 } else { -1.0 }));
                }
            }
        }
        let g = WeightedGraph::<f64>::from_signed_edges(n, &edges);
        let d = refine_klj(&g, &solve_gaec(&g));
        // joining everything cuts nothing, so 0 is always achievable
        assert!(decomposition_objective(&g, &d) <= 0.0);
    }
}

#[test]
fn gaec_plus_refine_matches_exact_on_most_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let mut matches = 0;
    let total = 100;
    for _ in 0..total {
        let n = rng.random_range(2..=8usize);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(0.6) {
                    edges.push((u, v, if rng.random_bool(0.5) { 1.0 } else { -1.0 }));
                }
            }
        }
        let g = WeightedGraph::<f64>::from_signed_edges(n, &edges);
        let exact = solve_exact(&g).unwrap();
        let heur = refine_klj(&g, &solve_gaec(&g));
        let hobj = decomposition_objective(&g, &heur);
        assert!(hobj >= exact.objective - 1e-12);
        if (hobj - exact.objective).abs() < 1e-12 {
            matches += 1;
        }
    }
    assert!(matches >= 90, "only {matches}/{total} matched the optimum");
}

// ---- exact solver ----------------------------------------------------------------

#[test]
fn exact_single_negative_edge() {
    let g = WeightedGraph::<f64>::from_signed_edges(2, &[(0, 1, -1.0)]);
    let out = solve_exact(&g).unwrap();
    assert_eq!(out.objective, -1.0);
    assert_eq!(out.decomposition.n_components(), 2);
}

#[test]
fn exact_single_positive_edge() {
    let g = WeightedGraph::<f64>::from_signed_edges(2, &[(0, 1, 1.0)]);
    let out = solve_exact(&g).unwrap();
    assert_eq!(out.objective, 0.0);
    assert_eq!(out.decomposition.n_components(), 1);
}

#[test]
fn exact_enumerates_bell_numbers() {
    // B_1..B_8 = 1, 2, 5, 15, 52, 203, 877, 4140
    assert_eq!(count_partitions(8), 4140);
    let g = WeightedGraph::<f64>::from_signed_edges(8, &[(0, 1, 1.0)]);
    let out = solve_exact(&g).unwrap();
    assert_eq!(out.partitions_enumerated, 4140);
}

#[test]
fn exact_rejects_oversized_instances() {
    let g = WeightedGraph::<f64>::from_signed_edges(11, &[]);
    assert!(matches!(
        solve_exact(&g),
        Err(McError::TooLarge { limit: 10, got: 11 })
    ));
}

#[test]
fn exact_matches_independent_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for _ in 0..60 {
        let n = rng.random_range(2..=7usize);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(0.6) {
                    edges.push((u, v, if rng.random_bool(0.5) { 1.0 } else { -1.0 }));
                }
            }
        }
        let g = WeightedGraph::<f64>::from_signed_edges(n, &edges);
        let out = solve_exact(&g).unwrap();
        let (oracle_obj, oracle_count) = oracle_best_objective(n, &edges);
        assert_eq!(out.objective, oracle_obj);
        assert_eq!(out.partitions_enumerated, oracle_count);
    }
}

// ---- labeling / validation ---------------------------------------------------------

#[test]
fn all_one_component_labeling_valid() {
    let g = WeightedGraph::<f64>::from_signed_edges(4, &[(0, 1, 1.0), (1, 2, -1.0), (2, 3, 1.0)]);
    let labels = vec![0usize; 4];
    let d = Decomposition::from_labels(&g, &labels);
    let y = labeling_of(&g, &d);
    assert!(y.y.iter().all(|&b| !b));
    assert!(validate(&g, &y));
    assert_eq!(objective(&g, &y).unwrap(), 0.0);
}

#[test]
fn single_cut_edge_on_triangle_invalid() {
    let g = WeightedGraph::<f64>::from_signed_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, -1.0)]);
    let y = MulticutLabeling {
        y: vec![true, false, false],
    };
    assert!(!validate(&g, &y));
    assert!(matches!(
        objective(&g, &y),
        Err(McError::InfeasibleLabeling)
    ));
}

#[test]
fn labeling_of_always_validates() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    for _ in 0..1000 {
        let n = rng.random_range(1..10usize);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(0.4) {
                    edges.push((u, v, 1.0));
                }
            }
        }
        let g = WeightedGraph::<f64>::from_signed_edges(n, &edges);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let d = Decomposition::from_labels(&g, &labels);
        assert!(validate(&g, &labeling_of(&g, &d)));
    }
}

#[test]
fn single_cut_on_random_cycles_always_invalid() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    for _ in 0..1000 {
        let n = rng.random_range(3..12usize);
        let mut edges: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        // a few chords
        for _ in 0..rng.random_range(0..3) {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if u != v
                && !edges
                    .iter()
                    .any(|&(a, b, _)| (a.min(b), a.max(b)) == (u.min(v), u.max(v)))
            {
                edges.push((u, v, -1.0));
            }
        }
        let g = WeightedGraph::<f64>::from_signed_edges(n, &edges);
        let cut = rng.random_range(0..n); // an edge on the cycle
        let y = MulticutLabeling {
            y: (0..g.edges().len()).map(|i| i == cut).collect(),
        };
        assert!(!validate(&g, &y));
    }
}

#[test]
fn exact_dominates_all_enumerated_labelings() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let n = 5;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(0.7) {
                edges.push((u, v, if rng.random_bool(0.5) { 1.0 } else { -1.0 }));
            }
        }
    }
    let g = WeightedGraph::<f64>::from_signed_edges(n, &edges);
    let out = solve_exact(&g).unwrap();
    // enumerate labelings via all partitions of an independent scheme
    fn partitions(n: usize) -> Vec<Vec<usize>> {
        let mut all = Vec::new();
        let mut rgs = vec![0usize; n];
        loop {
            all.push(rgs.clone());
            let mut advanced = false;
            for i in (1..n).rev() {
                let cap = 1 + rgs[..i].iter().copied().max().unwrap_or(0);
                if rgs[i] < cap {
                    rgs[i] += 1;
                    for x in rgs[i + 1..].iter_mut() {
                        *x = 0;
                    }
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                break;
            }
        }
        all
    }
    for labels in partitions(n) {
        let d = Decomposition::from_labels(&g, &labels);
        let obj = objective(&g, &labeling_of(&g, &d)).unwrap();
        assert!(out.objective <= obj + 1e-12);
    }
}

// ---- rejection ------------------------------------------------------------------------

#[test]
fn all_joined_rejects_nothing() {
    let mut g = PoseGraph::<P>::new();
    for f in 0..4 {
        g.add_edge(odo(0, f)).unwrap();
        g.add_edge(odo(1, f)).unwrap();
    }
    g.add_edge(lm((0, 1), (1, 1))).unwrap();
    g.add_edge(lm((0, 2), (1, 2))).unwrap();
    let wg = build_instance(&g, &SupportConfig::default());
    let labels = vec![0usize; wg.n_vertices()];
    let d = Decomposition::from_labels(&wg, &labels);
    let out = reject_cut_edges(&g, &d);
    assert_eq!(out, g);
}

#[test]
fn lone_unsupported_edge_removed() {
    let mut g = PoseGraph::<P>::new();
    for f in 0..9 {
        g.add_edge(odo(0, f)).unwrap();
        g.add_edge(odo(1, f)).unwrap();
    }
    // supported pair stays, isolated edge goes
    g.add_edge(lm((0, 1), (1, 1))).unwrap();
    g.add_edge(lm((0, 2), (1, 2))).unwrap();
    g.add_edge(lm((0, 8), (1, 5))).unwrap();
    let cfg = SupportConfig::default();

    // the exact solver on the lone edge's 2-node sub-instance prefers the cut
    let lone = WeightedGraph::<f64>::from_signed_edges(2, &[(0, 1, -1.0)]);
    assert_eq!(solve_exact(&lone).unwrap().objective, -1.0);

    let (cleaned, removed) = gc_filter(&g, &cfg);
    assert_eq!(removed, vec![20]);
    assert_eq!(cleaned.landmark_edge_ids().len(), 2);
    assert_eq!(
        cleaned
            .edges()
            .iter()
            .filter(|e| e.kind == EdgeKind::Odometry)
            .count(),
        18
    );
}

#[test]
fn removal_count_equals_cut_landmarks() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for _ in 0..20 {
        let mut g = PoseGraph::<P>::new();
        for f in 0..19 {
            g.add_edge(odo(0, f)).unwrap();
            g.add_edge(odo(1, f)).unwrap();
        }
        for _ in 0..rng.random_range(1..12) {
            let a = (0, rng.random_range(0..20u32));
            let b = (1, rng.random_range(0..20u32));
            g.add_edge(lm(a, b)).unwrap();
        }
        let before = g.landmark_edge_ids().len();
        let (cleaned, removed) = gc_filter(&g, &SupportConfig::default());
        assert_eq!(cleaned.landmark_edge_ids().len(), before - removed.len());
    }
}
