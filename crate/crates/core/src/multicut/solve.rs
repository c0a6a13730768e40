//! Multicut solvers: greedy additive edge contraction, Kernighan-Lin-style
//! local refinement, and exhaustive enumeration for small instances.

use super::{labeling_of, objective_unchecked, Decomposition, McError, UnionFind, WeightedGraph};
use crate::scalar::{real, Real};
use std::collections::BTreeMap;

/// Exhaustive enumeration cap.
pub const EXACT_VERTEX_LIMIT: usize = 10;

/// Greedy additive edge contraction: repeatedly contract the highest-cost
/// edge while the maximum cost is positive, summing parallel edges. Ties
/// break toward the smallest merged edge id.
pub fn solve_gaec<S: Real>(g: &WeightedGraph<S>) -> Decomposition {
    let n = g.n_vertices();
    let mut uf = UnionFind::new(n);
    // current contracted edges keyed by root pair -> (summed cost, min edge id)
    let mut edges: BTreeMap<(usize, usize), (S, usize)> = BTreeMap::new();
    for e in g.edges() {
        let key = (e.u.min(e.v), e.u.max(e.v));
        let entry = edges.entry(key).or_insert((S::zero(), e.id));
        entry.0 += e.cost;
        entry.1 = entry.1.min(e.id);
    }
    loop {
        let mut best: Option<((usize, usize), (S, usize))> = None;
        for (&key, &(cost, id)) in &edges {
            if cost <= S::zero() {
                continue;
            }
            let better = match &best {
                None => true,
                Some((_, (bc, bid))) => cost > *bc || (cost == *bc && id < *bid),
            };
            if better {
                best = Some((key, (cost, id)));
            }
        }
        let Some(((a, b), _)) = best else {
            break;
        };
        uf.union(a, b);
        let mut merged: BTreeMap<(usize, usize), (S, usize)> = BTreeMap::new();
        for ((u, v), (cost, id)) in std::mem::take(&mut edges) {
            let (ru, rv) = (uf.find(u), uf.find(v));
            if ru == rv {
                continue; // interior edge of the contracted super-node
            }
            let key = (ru.min(rv), ru.max(rv));
            let entry = merged.entry(key).or_insert((S::zero(), id));
            entry.0 += cost;
            entry.1 = entry.1.min(id);
        }
        edges = merged;
    }
    let labels: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
    Decomposition::from_labels(g, &labels)
}

/// Local search over single-node moves (to adjacent components, or out into
/// a fresh singleton) and pairwise component merges. Never increases the
/// objective; stops at a fixpoint of these moves.
pub fn refine_klj<S: Real>(g: &WeightedGraph<S>, d: &Decomposition) -> Decomposition {
    let n = g.n_vertices();
    let eps = real::<S>(1e-12);
    let mut comp: Vec<usize> = g
        .vertices()
        .iter()
        .enumerate()
        .map(|(i, id)| d.component.get(id).copied().unwrap_or(n + i))
        .collect();
    let mut adj: Vec<Vec<(usize, S)>> = vec![Vec::new(); n];
    for e in g.edges() {
        adj[e.u].push((e.v, e.cost));
        adj[e.v].push((e.u, e.cost));
    }
    let mut next_label = comp.iter().max().map_or(0, |m| m + 1);
    loop {
        let mut improved = false;

        // single-node moves
        for v in 0..n {
            let own = comp[v];
            let mut to_comp: BTreeMap<usize, S> = BTreeMap::new();
            for &(w, c) in &adj[v] {
                *to_comp.entry(comp[w]).or_insert_with(S::zero) += c;
            }
            let to_own = to_comp.get(&own).copied().unwrap_or_else(S::zero);
            // best candidate: adjacent component, or a fresh singleton
            let mut best: Option<(S, Option<usize>)> = None;
            for (&c, &sum) in &to_comp {
                if c == own {
                    continue;
                }
                let delta = to_own - sum;
                if delta < -eps && best.as_ref().is_none_or(|(bd, _)| delta < *bd) {
                    best = Some((delta, Some(c)));
                }
            }
            let delta_out = to_own;
            if delta_out < -eps && best.as_ref().is_none_or(|(bd, _)| delta_out < *bd) {
                best = Some((delta_out, None));
            }
            if let Some((_, target)) = best {
                comp[v] = target.unwrap_or_else(|| {
                    next_label += 1;
                    next_label - 1
                });
                improved = true;
            }
        }

        // pairwise component merges: merging removes the cut between them,
        // improving the objective when that cut cost is positive
        let mut between: BTreeMap<(usize, usize), S> = BTreeMap::new();
        for e in g.edges() {
            let (a, b) = (comp[e.u], comp[e.v]);
            if a != b {
                *between.entry((a.min(b), a.max(b))).or_insert_with(S::zero) += e.cost;
            }
        }
        for ((a, b), cut) in between {
            if cut > eps {
                for c in comp.iter_mut() {
                    if *c == b {
                        *c = a;
                    }
                }
                improved = true;
            }
        }

        if !improved {
            break;
        }
    }
    Decomposition::from_labels(g, &comp)
}

/// Outcome of the exhaustive solver.
#[derive(Debug, Clone)]
pub struct ExactOutcome<S> {
    pub decomposition: Decomposition,
    pub objective: S,
    pub partitions_enumerated: u64,
}

/// Exhaustive enumeration of all set partitions (restricted growth strings,
/// lexicographic order). Global optimum; ties break toward fewer components,
/// then toward the lexicographically smallest canonical labeling.
pub fn solve_exact<S: Real>(g: &WeightedGraph<S>) -> Result<ExactOutcome<S>, McError> {
    let n = g.n_vertices();
    if n > EXACT_VERTEX_LIMIT {
        return Err(McError::TooLarge {
            limit: EXACT_VERTEX_LIMIT,
            got: n,
        });
    }
    if n == 0 {
        return Ok(ExactOutcome {
            decomposition: Decomposition {
                component: BTreeMap::new(),
            },
            objective: S::zero(),
            partitions_enumerated: 1,
        });
    }
    let mut rgs = vec![0usize; n];
    let mut count = 0u64;
    let mut best: Option<(S, usize, Vec<usize>)> = None;
    loop {
        count += 1;
        let mut obj = S::zero();
        for e in g.edges() {
            if rgs[e.u] != rgs[e.v] {
                obj += e.cost;
            }
        }
        let n_comp = rgs.iter().max().unwrap() + 1;
        let better = match &best {
            None => true,
            Some((bo, bc, _)) => obj < *bo || (obj == *bo && n_comp < *bc),
        };
        if better {
            best = Some((obj, n_comp, rgs.clone()));
        }
        if !next_rgs(&mut rgs) {
            break;
        }
    }
    let (objective, _, labels) = best.expect("at least one partition enumerated");
    Ok(ExactOutcome {
        decomposition: Decomposition::from_labels(g, &labels),
        objective,
        partitions_enumerated: count,
    })
}

/// Advance a restricted growth string to its lexicographic successor.
/// Returns false after the last one.
fn next_rgs(a: &mut [usize]) -> bool {
    let n = a.len();
    // b[i] = 1 + max(a[0..i]) is the cap for digit i
    for i in (1..n).rev() {
        let cap = 1 + a[..i].iter().copied().max().unwrap_or(0);
        if a[i] < cap {
            a[i] += 1;
            for x in a[i + 1..].iter_mut() {
                *x = 0;
            }
            return true;
        }
    }
    false
}

/// Number of set partitions `next_rgs` walks for `n` elements (Bell number).
pub fn count_partitions(n: usize) -> u64 {
    if n == 0 {
        return 1;
    }
    let mut rgs = vec![0usize; n];
    let mut count = 1u64;
    while next_rgs(&mut rgs) {
        count += 1;
    }
    count
}

/// Objective of the labeling a decomposition induces (always feasible).
pub fn decomposition_objective<S: Real>(g: &WeightedGraph<S>, d: &Decomposition) -> S {
    objective_unchecked(g, &labeling_of(g, d))
}
