//! Outlier rejection by pairwise consistency and maximum clique.
//!
//! Two landmark edges are consistent when the loop formed by the two
//! measurements and the odometry chains between their endpoints closes
//! within a translation/rotation gate. The largest mutually consistent set
//! of landmark edges is a maximum clique of the consistency graph; only its
//! members survive the filter.

mod clique;

pub use clique::max_clique;

use crate::geometry::Pose;
use crate::posegraph::{Edge, EdgeKind, NodeId, OdometryIndex, PoseGraph};
use crate::scalar::to_f64;
use std::collections::BTreeMap;

/// How the consistency gate treats odometry noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsistencyMetric {
    /// Fixed thresholds on the loop's translation norm and rotation angle.
    PlainNorm,
    /// Thresholds widened by `kappa` standard deviations of the drift the
    /// odometry chains accumulate (first-order, from the information
    /// matrices), so long loops are not rejected for drift that is expected.
    NoiseScaled,
}

#[derive(Debug, Clone)]
pub struct PcmConfig {
    /// Translation gate in meters.
    pub gamma_t: f64,
    /// Rotation gate in radians.
    pub gamma_r: f64,
    /// Vertex-count cap for the exact clique search; larger consistency
    /// graphs fall back to the degeneracy-ordered greedy heuristic.
    pub exact_clique_limit: usize,
    pub metric: ConsistencyMetric,
    /// Drift multiplier for [`ConsistencyMetric::NoiseScaled`].
    pub kappa: f64,
}

impl Default for PcmConfig {
    fn default() -> Self {
        PcmConfig {
            gamma_t: 2.0,
            gamma_r: 0.5,
            exact_clique_limit: 150,
            metric: ConsistencyMetric::NoiseScaled,
            // Deliberately permissive: pairwise gates widened by ten standard
            // deviations of expected chain drift. At tight gates the clique
            // would already reject every remote mismatch and long-chain
            // correct pairs would start to fragment; this operating point
            // leaves distant-loop verification to the graph-cut stage.
            kappa: 10.0,
        }
    }
}

/// Consistency graph: one vertex per landmark edge, adjacency between
/// consistent pairs (irreflexive, symmetric).
#[derive(Debug, Clone)]
pub struct ConsistencyGraph {
    /// Pose-graph edge id per vertex.
    pub edge_ids: Vec<usize>,
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl ConsistencyGraph {
    pub fn new(edge_ids: Vec<usize>) -> Self {
        let n = edge_ids.len();
        let words = n.div_ceil(64);
        ConsistencyGraph {
            edge_ids,
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn connect(&mut self, i: usize, j: usize) {
        debug_assert_ne!(i, j);
        self.bits[i * self.words + j / 64] |= 1 << (j % 64);
        self.bits[j * self.words + i / 64] |= 1 << (i % 64);
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    pub(crate) fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn adjacency_count(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).sum::<usize>() / 2
    }
}

/// First-order drift statistics for one session's odometry chain, with
/// prefix sums so any sub-chain's variance is O(1) to query.
struct SessionDrift {
    first_frame: u32,
    /// dead-reckoned positions per frame
    pos: Vec<[f64; 3]>,
    /// prefix sums over steps: translational variance, rotational variance,
    /// rot-variance-weighted position and squared-norm moments
    st2: Vec<f64>,
    sr2: Vec<f64>,
    srp: Vec<[f64; 3]>,
    srp2: Vec<f64>,
}

impl SessionDrift {
    /// Variance of the chain's endpoint translation (lever arms taken to the
    /// chain's far end) and of its rotation, between two frames.
    fn chain_variance(&self, a: u32, b: u32) -> Option<(f64, f64)> {
        let lo = a.min(b).checked_sub(self.first_frame)? as usize;
        let hi = b.max(a).checked_sub(self.first_frame)? as usize;
        if hi >= self.pos.len() {
            return None;
        }
        let p = self.pos[hi];
        let var_t = (self.st2[hi] - self.st2[lo])
            + (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) * (self.sr2[hi] - self.sr2[lo])
            - 2.0
                * (p[0] * (self.srp[hi][0] - self.srp[lo][0])
                    + p[1] * (self.srp[hi][1] - self.srp[lo][1])
                    + p[2] * (self.srp[hi][2] - self.srp[lo][2]))
            + (self.srp2[hi] - self.srp2[lo]);
        let var_r = self.sr2[hi] - self.sr2[lo];
        Some((var_t.max(0.0), var_r.max(0.0)))
    }
}

/// Precomputed odometry tables shared by all pairwise checks on one graph.
pub struct PcmContext<P: Pose> {
    index: OdometryIndex<P>,
    drift: BTreeMap<u32, SessionDrift>,
}

impl<P: Pose> PcmContext<P> {
    pub fn new(graph: &PoseGraph<P>) -> Self {
        let index = OdometryIndex::build(graph);
        let mut drift = BTreeMap::new();
        for session in graph.sessions() {
            let Some(first) = index.session_start(session) else {
                continue;
            };
            let mut pos = Vec::new();
            let mut frame = first;
            while let Some(p) = index.pose_in_session(NodeId::new(session, frame)) {
                let t = p.translation();
                let mut q = [0.0; 3];
                for (k, v) in t.iter().enumerate().take(3) {
                    q[k] = to_f64(*v);
                }
                pos.push(q);
                frame += 1;
            }
            let steps = pos.len().saturating_sub(1);
            let mut st2 = vec![0.0; pos.len()];
            let mut sr2 = vec![0.0; pos.len()];
            let mut srp = vec![[0.0; 3]; pos.len()];
            let mut srp2 = vec![0.0; pos.len()];
            for j in 0..steps {
                let (vt, vr) = step_variances(graph, NodeId::new(session, first + j as u32));
                st2[j + 1] = st2[j] + vt;
                sr2[j + 1] = sr2[j] + vr;
                let p = pos[j];
                for k in 0..3 {
                    srp[j + 1][k] = srp[j][k] + vr * p[k];
                }
                srp2[j + 1] = srp2[j] + vr * (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
            }
            drift.insert(
                session,
                SessionDrift {
                    first_frame: first,
                    pos,
                    st2,
                    sr2,
                    srp,
                    srp2,
                },
            );
        }
        PcmContext { index, drift }
    }

    /// Pairwise consistency of two landmark edges (order-independent).
    pub fn consistent(&self, e_a: &Edge<P>, e_b: &Edge<P>, cfg: &PcmConfig) -> bool {
        // canonical pair order makes the check exactly symmetric
        let (first, second) = if edge_sort_key(e_a) <= edge_sort_key(e_b) {
            (e_a, e_b)
        } else {
            (e_b, e_a)
        };
        self.consistent_ordered(first, second, cfg)
    }

    fn consistent_ordered(&self, e_a: &Edge<P>, e_b: &Edge<P>, cfg: &PcmConfig) -> bool {
        let (a_from, a_to, z_a) = orient(e_a);
        let (b_from, b_to, z_b) = orient(e_b);
        if a_from.session != b_from.session || a_to.session != b_to.session {
            return false; // incomparable: endpoints do not pair up by session
        }
        let (Ok(rel_from), Ok(rel_to)) = (
            self.index.relative(a_from, b_from),
            self.index.relative(b_to, a_to),
        ) else {
            return false; // incomparable: odometry-disconnected
        };
        let looped = z_a
            .inverse()
            .compose(&rel_from)
            .compose(&z_b)
            .compose(&rel_to);
        let t_err = to_f64(looped.translation().norm());
        let r_err = to_f64(looped.rotation_angle());
        let (mut gate_t, mut gate_r) = (cfg.gamma_t, cfg.gamma_r);
        if cfg.metric == ConsistencyMetric::NoiseScaled {
            let va = self.pair_chain_variance(a_from, b_from);
            let vb = self.pair_chain_variance(b_to, a_to);
            let (Some((vt_a, vr_a)), Some((vt_b, vr_b))) = (va, vb) else {
                return false;
            };
            gate_t += cfg.kappa * (vt_a + vt_b).sqrt();
            gate_r += cfg.kappa * (vr_a + vr_b).sqrt();
        }
        t_err <= gate_t && r_err <= gate_r
    }

    fn pair_chain_variance(&self, a: NodeId, b: NodeId) -> Option<(f64, f64)> {
        self.drift.get(&a.session)?.chain_variance(a.frame, b.frame)
    }

    /// Diagnostic: loop errors and effective gates for a pair, in canonical
    /// order. `None` when the pair is incomparable.
    pub fn gate_report(
        &self,
        e_a: &Edge<P>,
        e_b: &Edge<P>,
        cfg: &PcmConfig,
    ) -> Option<(f64, f64, f64, f64)> {
        let (first, second) = if edge_sort_key(e_a) <= edge_sort_key(e_b) {
            (e_a, e_b)
        } else {
            (e_b, e_a)
        };
        let (a_from, a_to, z_a) = orient(first);
        let (b_from, b_to, z_b) = orient(second);
        if a_from.session != b_from.session || a_to.session != b_to.session {
            return None;
        }
        let (Ok(rel_from), Ok(rel_to)) = (
            self.index.relative(a_from, b_from),
            self.index.relative(b_to, a_to),
        ) else {
            return None;
        };
        let looped = z_a
            .inverse()
            .compose(&rel_from)
            .compose(&z_b)
            .compose(&rel_to);
        let t_err = to_f64(looped.translation().norm());
        let r_err = to_f64(looped.rotation_angle());
        let (mut gate_t, mut gate_r) = (cfg.gamma_t, cfg.gamma_r);
        if cfg.metric == ConsistencyMetric::NoiseScaled {
            let (vt_a, vr_a) = self.pair_chain_variance(a_from, b_from)?;
            let (vt_b, vr_b) = self.pair_chain_variance(b_to, a_to)?;
            gate_t += cfg.kappa * (vt_a + vt_b).sqrt();
            gate_r += cfg.kappa * (vr_a + vr_b).sqrt();
        }
        Some((t_err, r_err, gate_t, gate_r))
    }
}

/// Per-step measurement variances from the information matrix diagonal.
fn step_variances<P: Pose>(g: &PoseGraph<P>, from: NodeId) -> (f64, f64) {
    let edge = g
        .edges()
        .iter()
        .find(|e| e.kind == EdgeKind::Odometry && e.from == from);
    let Some(e) = edge else {
        return (0.0, 0.0);
    };
    let t_dim = P::TRANS_DIM;
    let mut vt: f64 = 0.0;
    let mut vr: f64 = 0.0;
    for k in 0..P::DOF {
        let info_kk = to_f64(e.info[(k, k)]).max(1e-12);
        let var = 1.0 / info_kk;
        if k < t_dim {
            vt = vt.max(var);
        } else {
            vr = vr.max(var);
        }
    }
    (vt, vr)
}

/// Orient an edge so `from <= to`, inverting the measurement if needed.
fn orient<P: Pose>(e: &Edge<P>) -> (NodeId, NodeId, P) {
    if e.from <= e.to {
        (e.from, e.to, e.z.clone())
    } else {
        (e.to, e.from, e.z.inverse())
    }
}

fn edge_sort_key<P: Pose>(e: &Edge<P>) -> (NodeId, NodeId, Vec<u64>) {
    let (a, b, z) = orient(e);
    let bits = z.log_map().iter().map(|v| to_f64(*v).to_bits()).collect();
    (a, b, bits)
}

/// Standalone pairwise check per the module contract. Builds the odometry
/// tables on each call; batch callers should use [`PcmContext`].
pub fn pairwise_consistency<P: Pose>(
    g: &PoseGraph<P>,
    e_a: &Edge<P>,
    e_b: &Edge<P>,
    cfg: &PcmConfig,
) -> bool {
    PcmContext::new(g).consistent(e_a, e_b, cfg)
}

/// One vertex per landmark edge, an adjacency per consistent pair.
pub fn build_consistency_graph<P: Pose>(g: &PoseGraph<P>, cfg: &PcmConfig) -> ConsistencyGraph {
    let ids = g.landmark_edge_ids();
    let ctx = PcmContext::new(g);
    let mut cg = ConsistencyGraph::new(ids.clone());
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            if ctx.consistent(&g.edges()[ids[i]], &g.edges()[ids[j]], cfg) {
                cg.connect(i, j);
            }
        }
    }
    cg
}

/// Keep exactly the maximum-clique landmark edges; odometry is untouched.
/// Returns the filtered graph and the removed pose-graph edge ids.
pub fn pcm_filter<P: Pose>(g: &PoseGraph<P>, cfg: &PcmConfig) -> (PoseGraph<P>, Vec<usize>) {
    let cg = build_consistency_graph(g, cfg);
    let keep = max_clique(&cg, cfg);
    let keep: std::collections::BTreeSet<usize> = keep.into_iter().collect();
    let mut out = PoseGraph::new();
    for (id, pose) in g.nodes() {
        out.add_node(id, pose.cloned());
    }
    let mut removed = Vec::new();
    for (i, e) in g.edges().iter().enumerate() {
        if e.kind == EdgeKind::Landmark && !keep.contains(&i) {
            removed.push(i);
        } else {
            out.add_edge(e.clone())
                .expect("edge was valid in the source graph");
        }
    }
    (out, removed)
}
