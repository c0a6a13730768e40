//! Maximum clique search: exact branch-and-bound with pivoting for small
//! consistency graphs, degeneracy-ordered greedy beyond the cap.

use super::{ConsistencyGraph, PcmConfig};

/// Word-array bitset over clique vertices.
#[derive(Clone)]
struct Bits(Vec<u64>);

impl Bits {
    fn full(n: usize) -> Self {
        let words = n.div_ceil(64);
        let mut v = vec![u64::MAX; words];
        if !n.is_multiple_of(64) {
            if let Some(last) = v.last_mut() {
                *last = (1u64 << (n % 64)) - 1;
            }
        }
        if n == 0 {
            v.clear();
        }
        Bits(v)
    }

    fn empty(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }

    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    fn clear(&mut self, i: usize) {
        self.0[i / 64] &= !(1 << (i % 64));
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn is_empty(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }

    fn and(&self, other: &[u64]) -> Bits {
        Bits(self.0.iter().zip(other).map(|(a, b)| a & b).collect())
    }

    fn and_count(&self, other: &[u64]) -> usize {
        self.0
            .iter()
            .zip(other)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }
}

/// Maximum clique of the consistency graph, returned as sorted pose-graph
/// edge ids. Exact branch-and-bound when the graph fits under
/// `cfg.exact_clique_limit`, greedy heuristic otherwise. Among maximum
/// cliques the lexicographically smallest edge-id set is returned (exact
/// path; the heuristic applies the same tie-break to its candidates).
pub fn max_clique(cg: &ConsistencyGraph, cfg: &PcmConfig) -> Vec<usize> {
    let n = cg.n_vertices();
    if n == 0 {
        return Vec::new();
    }
    let verts = if n <= cfg.exact_clique_limit {
        exact_max_clique(cg)
    } else {
        greedy_max_clique(cg)
    };
    let mut ids: Vec<usize> = verts.into_iter().map(|v| cg.edge_ids[v]).collect();
    ids.sort_unstable();
    ids
}

fn exact_max_clique(cg: &ConsistencyGraph) -> Vec<usize> {
    let n = cg.n_vertices();
    // phase 1: maximum size via branch and bound with pivoting
    let mut best = greedy_max_clique(cg).len().max(1);
    let all = Bits::full(n);
    best = best.max(bb_size(cg, 0, &all, best));
    // phase 2: lexicographically smallest clique of that size
    let mut chosen = Vec::with_capacity(best);
    let mut cand = Bits::full(n);
    for v in 0..n {
        if !cand.get(v) {
            continue;
        }
        let next = cand.and(cg.row(v));
        let need = best - chosen.len() - 1;
        if clique_at_least(cg, &next, need) {
            chosen.push(v);
            cand = next;
            if chosen.len() == best {
                break;
            }
        }
    }
    debug_assert_eq!(chosen.len(), best);
    chosen
}

/// Largest clique size reachable from candidate set `p` on top of `r_size`
/// already-chosen vertices.
fn bb_size(cg: &ConsistencyGraph, r_size: usize, p: &Bits, mut best: usize) -> usize {
    if p.is_empty() {
        return best.max(r_size);
    }
    if r_size + p.count() <= best {
        return best;
    }
    // pivot on the candidate covering most of p
    let pivot = p
        .iter_ones()
        .max_by_key(|&u| p.and_count(cg.row(u)))
        .expect("p is non-empty");
    let mut p_work = p.clone();
    let branch: Vec<usize> = p
        .iter_ones()
        .filter(|&v| v == pivot || !cg.adjacent(pivot, v))
        .collect();
    for v in branch {
        let next = p_work.and(cg.row(v));
        best = best.max(bb_size(cg, r_size + 1, &next, best));
        p_work.clear(v);
        if r_size + p_work.count() <= best {
            break;
        }
    }
    best
}

/// Does `p` contain a clique of at least `need` vertices?
fn clique_at_least(cg: &ConsistencyGraph, p: &Bits, need: usize) -> bool {
    if need == 0 {
        return true;
    }
    if p.count() < need {
        return false;
    }
    let pivot = p
        .iter_ones()
        .max_by_key(|&u| p.and_count(cg.row(u)))
        .expect("p is non-empty");
    let mut p_work = p.clone();
    let branch: Vec<usize> = p
        .iter_ones()
        .filter(|&v| v == pivot || !cg.adjacent(pivot, v))
        .collect();
    for v in branch {
        if clique_at_least(cg, &p_work.and(cg.row(v)), need - 1) {
            return true;
        }
        p_work.clear(v);
        if p_work.count() < need {
            return false;
        }
    }
    false
}

/// Degeneracy-ordered greedy heuristic: grow a clique from every seed vertex
/// among its not-yet-eliminated neighbors, preferring high-connectivity
/// candidates, smallest vertex id on ties.
fn greedy_max_clique(cg: &ConsistencyGraph) -> Vec<usize> {
    let n = cg.n_vertices();
    if n == 0 {
        return Vec::new();
    }
    // degeneracy order: repeatedly remove the minimum-degree vertex
    let mut deg: Vec<usize> = (0..n).map(|i| cg.degree(i)).collect();
    let mut removed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| !removed[v])
            .min_by_key(|&v| (deg[v], v))
            .expect("vertices remain");
        removed[v] = true;
        order.push(v);
        for u in cg.row(v).to_vec().iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + b)
                }
            })
        }) {
            if !removed[u] {
                deg[u] -= 1;
            }
        }
    }
    let rank: Vec<usize> = {
        let mut r = vec![0; n];
        for (i, &v) in order.iter().enumerate() {
            r[v] = i;
        }
        r
    };
    let mut best: Vec<usize> = Vec::new();
    for &seed in order.iter().rev() {
        // candidates: later neighbors in degeneracy order
        let mut cand = Bits::empty(n);
        for u in 0..n {
            if u != seed && cg.adjacent(seed, u) && rank[u] > rank[seed] {
                cand.0[u / 64] |= 1 << (u % 64);
            }
        }
        if cand.count() < best.len() {
            continue;
        }
        let mut clique = vec![seed];
        while !cand.is_empty() {
            let u = cand
                .iter_ones()
                .max_by_key(|&u| (cand.and_count(cg.row(u)), usize::MAX - u))
                .expect("cand is non-empty");
            clique.push(u);
            cand = cand.and(cg.row(u));
        }
        let mut sorted = clique.clone();
        sorted.sort_unstable();
        let mut best_sorted = best.clone();
        best_sorted.sort_unstable();
        if clique.len() > best.len() || (clique.len() == best.len() && sorted < best_sorted) {
            best = clique;
        }
    }
    best
}
