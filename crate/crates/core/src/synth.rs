//! Ground-truth-controlled dataset generator: one loop trajectory split
//! into two sessions, correct inter-session edges at revisits, and randomly
//! injected incorrect edges at a controlled rate.
//!
//! The loop drives a corridor out of the origin, wanders a Manhattan random
//! walk away from it, then steers back and retraces the corridor in
//! reverse. The retrace guarantees a dense revisit region between the first
//! and second half, mid-route self-crossings add sparser ones.

use crate::geometry::{Pose, Pose2, Pose3, Twist};
use crate::optimizer::{initial_guess, Estimate};
use crate::posegraph::{Edge, EdgeKind, LabelSidecar, NodeId, PoseGraph};
use crate::scalar::{real, to_f64, Real};
use nalgebra::DMatrix;
use num_traits::Zero;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub frames_per_session: usize,
    /// Step length in meters.
    pub step_length: f64,
    /// Probability of a 90° turn per free-walk step.
    pub turn_probability: f64,
    /// Odometry noise, translation (meters) and rotation (radians) per step.
    pub odom_sigma_t: f64,
    pub odom_sigma_r: f64,
    /// Inter-session pairs closer than this (ground truth) become correct edges.
    pub revisit_radius: f64,
    /// Incorrect edges as a fraction of all landmark edges.
    pub outlier_rate: f64,
    /// Incorrect edges join pairs at least this far apart (ground truth).
    pub min_outlier_distance: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            frames_per_session: 200,
            step_length: 1.0,
            turn_probability: 0.1,
            odom_sigma_t: 0.05,
            odom_sigma_r: 0.01,
            revisit_radius: 2.0,
            outlier_rate: 0.10,
            min_outlier_distance: 20.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("no correct landmark edges were generated; enlarge the revisit radius")]
    NoCorrectEdges,
    #[error("no eligible distant node pairs for outlier injection")]
    NoEligibleOutlierPairs,
}

/// A generated problem with its ground truth and edge labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset<P: Pose> {
    pub ground_truth: Estimate<P>,
    pub graph: PoseGraph<P>,
    pub labels: LabelSidecar,
}

/// Axis-aligned bounds of the ground-truth translations.
#[derive(Debug, Clone, Copy)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Bounds {
    pub fn of<P: Pose>(est: &Estimate<P>) -> Bounds {
        let mut b = Bounds {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        };
        for (_, p) in est.iter() {
            let t = p.translation();
            for k in 0..3 {
                let v = if k < t.len() { to_f64(t[k]) } else { 0.0 };
                b.min[k] = b.min[k].min(v);
                b.max[k] = b.max[k].max(v);
            }
        }
        b
    }
}

/// Pose types the generator can produce.
pub trait SynthPose: Pose {
    fn from_planar_f64(x: f64, y: f64, theta: f64) -> Self;
    /// Uniformly random measurement: translation within the bounds,
    /// rotation uniform.
    fn uniform_measurement(rng: &mut ChaCha8Rng, bounds: &Bounds) -> Self;
}

impl<S: Real> SynthPose for Pose2<S> {
    fn from_planar_f64(x: f64, y: f64, theta: f64) -> Self {
        Pose2::new(real(x), real(y), real(theta))
    }

    fn uniform_measurement(rng: &mut ChaCha8Rng, b: &Bounds) -> Self {
        let u = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        Pose2::new(
            real(u(rng, b.min[0], b.max[0])),
            real(u(rng, b.min[1], b.max[1])),
            real(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
        )
    }
}

impl<S: Real> SynthPose for Pose3<S> {
    fn from_planar_f64(x: f64, y: f64, theta: f64) -> Self {
        Pose3::from_planar(real(x), real(y), real(theta))
    }

    fn uniform_measurement(rng: &mut ChaCha8Rng, b: &Bounds) -> Self {
        let u = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        let t = nalgebra::Vector3::new(
            real::<S>(u(rng, b.min[0], b.max[0])),
            real::<S>(u(rng, b.min[1], b.max[1])),
            real::<S>(u(rng, b.min[2], b.max[2])),
        );
        // normalized 4D Gaussian: uniform rotation
        let q = nalgebra::Quaternion::new(
            real::<S>(rng.sample::<f64, _>(StandardNormal)),
            real::<S>(rng.sample::<f64, _>(StandardNormal)),
            real::<S>(rng.sample::<f64, _>(StandardNormal)),
            real::<S>(rng.sample::<f64, _>(StandardNormal)),
        );
        Pose3::new(t, nalgebra::UnitQuaternion::new_normalize(q))
    }
}

/// Diagonal information matrix `1/σ²` per axis, with σ floored at 1e-3 so
/// zero-noise configs stay finite.
fn diag_info<P: Pose>(sigma_t: f64, sigma_r: f64) -> DMatrix<P::Scalar> {
    let st = sigma_t.max(1e-3);
    let sr = sigma_r.max(1e-3);
    DMatrix::from_fn(P::DOF, P::DOF, |i, j| {
        if i != j {
            P::Scalar::zero()
        } else if i < P::TRANS_DIM {
            real(1.0 / (st * st))
        } else {
            real(1.0 / (sr * sr))
        }
    })
}

fn noise_twist<P: Pose>(rng: &mut ChaCha8Rng, sigma_t: f64, sigma_r: f64) -> Twist<P::Scalar> {
    let nt = Normal::new(0.0, sigma_t.max(0.0)).expect("valid sigma");
    let nr = Normal::new(0.0, sigma_r.max(0.0)).expect("valid sigma");
    Twist::from_fn(P::DOF, |k, _| {
        if k < P::TRANS_DIM {
            real(nt.sample(rng))
        } else {
            real(nr.sample(rng))
        }
    })
}

/// Number of outliers so that `n_out / (n_correct + n_out) = rate` up to rounding.
pub fn outlier_count(n_correct: usize, rate: f64) -> usize {
    (rate * n_correct as f64 / (1.0 - rate)).round() as usize
}

/// Lattice directions: +x, +y, -x, -y.
const DIRS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

fn heading_angle(dir: usize) -> f64 {
    match dir {
        0 => 0.0,
        1 => std::f64::consts::FRAC_PI_2,
        2 => std::f64::consts::PI,
        _ => -std::f64::consts::FRAC_PI_2,
    }
}

/// Ground-truth loop on the unit lattice: corridor out, free Manhattan walk,
/// steer home, corridor retrace. Returns one waypoint (position, heading
/// direction) per frame, `2 * frames_per_session` in total.
fn loop_waypoints(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<((i64, i64), usize)> {
    let total = 2 * cfg.frames_per_session;
    let corridor = (cfg.frames_per_session / 7).clamp(2, 40) as i64;
    let strip = |p: (i64, i64)| p.1.abs() <= 2 && p.0 >= -3 && p.0 <= corridor + 3;
    let mut pts: Vec<((i64, i64), usize)> = Vec::with_capacity(total);
    let mut pos = (0i64, 0i64);
    let mut dir = 0usize;
    pts.push((pos, dir));
    let step = |p: (i64, i64), d: usize| (p.0 + DIRS[d].0, p.1 + DIRS[d].1);
    // corridor out
    for _ in 0..corridor {
        pos = step(pos, 0);
        pts.push((pos, 0));
    }
    let target = pos; // (corridor, 0)
    let manhattan = |p: (i64, i64)| (p.0 - target.0).abs() + (p.1 - target.1).abs();
    // free walk with budget awareness
    loop {
        let used = pts.len() - 1;
        let remaining = (total - 1 - used) as i64;
        if remaining <= manhattan(pos) + corridor + 4 {
            break;
        }
        if rng.random_bool(cfg.turn_probability.clamp(0.0, 1.0)) {
            dir = if rng.random_bool(0.5) {
                (dir + 1) % 4
            } else {
                (dir + 3) % 4
            };
        }
        // stay off the corridor strip so the revisit region stays clean
        if strip(step(pos, dir)) {
            let left = (dir + 1) % 4;
            let right = (dir + 3) % 4;
            if !strip(step(pos, left)) {
                dir = left;
            } else if !strip(step(pos, right)) {
                dir = right;
            }
        }
        pos = step(pos, dir);
        pts.push((pos, dir));
    }
    // steer home to the corridor's outer end, burning surplus steps
    loop {
        let used = pts.len() - 1;
        let remaining = (total - 1 - used) as i64;
        if remaining <= corridor {
            break;
        }
        let excess = remaining - (manhattan(pos) + corridor);
        let d = if excess >= 2 {
            // step away along y to burn two steps of budget
            if pos.1 >= 0 {
                1
            } else {
                3
            }
        } else if pos.0 != target.0 {
            if pos.0 > target.0 {
                2
            } else {
                0
            }
        } else if pos.1 != target.1 {
            if pos.1 > target.1 {
                3
            } else {
                1
            }
        } else {
            // arrived early by one step: idle westwards into the corridor
            2
        };
        pos = step(pos, d);
        pts.push((pos, d));
    }
    // corridor retrace, oscillating at the origin if budget is left over
    while pts.len() < total {
        let d = if pos.0 > 0 { 2 } else { 0 };
        pos = step(pos, d);
        pts.push((pos, d));
    }
    pts
}

/// Generate the two-session dataset: ground truth, noisy graph, labels.
pub fn generate_multisession<P: SynthPose>(
    cfg: &SynthConfig,
) -> Result<LabeledDataset<P>, SynthError> {
    validate_config(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.frames_per_session;
    let pts = loop_waypoints(cfg, &mut rng);

    let mut ground_truth = Estimate::new();
    for (k, &((x, y), d)) in pts.iter().enumerate() {
        let id = NodeId::new((k / n) as u32, (k % n) as u32);
        ground_truth.set(
            id,
            P::from_planar_f64(
                x as f64 * cfg.step_length,
                y as f64 * cfg.step_length,
                heading_angle(d),
            ),
        );
    }

    let info = diag_info::<P>(cfg.odom_sigma_t, cfg.odom_sigma_r);
    let mut graph = PoseGraph::new();
    for s in 0..2u32 {
        for f in 0..(n as u32 - 1) {
            let a = NodeId::new(s, f);
            let b = NodeId::new(s, f + 1);
            let rel = ground_truth
                .get(a)
                .unwrap()
                .between(ground_truth.get(b).unwrap());
            let z = rel.compose(&P::exp_map(&noise_twist::<P>(
                &mut rng,
                cfg.odom_sigma_t,
                cfg.odom_sigma_r,
            )));
            graph
                .add_edge(Edge::odometry(a, b, z, info.clone()))
                .expect("generator emits valid odometry");
        }
    }

    // correct landmark edges: every inter-session pair within the radius
    let mut labels = LabelSidecar::default();
    let mut n_correct = 0usize;
    for f0 in 0..n as u32 {
        let a = NodeId::new(0, f0);
        let pa = ground_truth.get(a).unwrap().translation();
        for f1 in 0..n as u32 {
            let b = NodeId::new(1, f1);
            let pb = ground_truth.get(b).unwrap().translation();
            if to_f64((pa.clone() - pb).norm()) <= cfg.revisit_radius {
                let rel = ground_truth
                    .get(a)
                    .unwrap()
                    .between(ground_truth.get(b).unwrap());
                let z = rel.compose(&P::exp_map(&noise_twist::<P>(
                    &mut rng,
                    cfg.odom_sigma_t,
                    cfg.odom_sigma_r,
                )));
                graph
                    .add_edge(Edge::landmark(a, b, z, info.clone()))
                    .expect("generator emits valid landmarks");
                labels.mark(a, b, false);
                n_correct += 1;
            }
        }
    }
    if n_correct == 0 {
        return Err(SynthError::NoCorrectEdges);
    }

    inject_outliers_into(
        &mut graph,
        &mut labels,
        &ground_truth,
        cfg.outlier_rate,
        cfg.min_outlier_distance,
        &info,
        &mut rng,
    )?;

    // store the dead-reckoned guess on the vertices
    let (guess, _) = initial_guess(&graph);
    for (id, p) in guess.iter() {
        graph.add_node(id, Some(p.clone()));
    }

    Ok(LabeledDataset {
        ground_truth,
        graph,
        labels,
    })
}

/// Add incorrect edges between random distant inter-session pairs so they
/// make up `rate` of all landmark edges. Standalone variant of the injection
/// step; ground truth supplies the distances and the measurement bounds.
pub fn inject_outliers<P: SynthPose>(
    g: &PoseGraph<P>,
    gt: &Estimate<P>,
    rate: f64,
    min_distance: f64,
    seed: u64,
) -> Result<(PoseGraph<P>, LabelSidecar), SynthError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(SynthError::BadConfig(
            "outlier rate must be in [0, 1)".into(),
        ));
    }
    let mut out = g.clone();
    let mut labels = LabelSidecar::default();
    for e in g.edges().iter().filter(|e| e.kind == EdgeKind::Landmark) {
        labels.mark(e.from, e.to, false);
    }
    let info = g
        .edges()
        .iter()
        .find(|e| e.kind == EdgeKind::Landmark)
        .map(|e| e.info.clone())
        .unwrap_or_else(|| DMatrix::identity(P::DOF, P::DOF));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    inject_outliers_into(
        &mut out,
        &mut labels,
        gt,
        rate,
        min_distance,
        &info,
        &mut rng,
    )?;
    Ok((out, labels))
}

fn inject_outliers_into<P: SynthPose>(
    graph: &mut PoseGraph<P>,
    labels: &mut LabelSidecar,
    gt: &Estimate<P>,
    rate: f64,
    min_distance: f64,
    info: &DMatrix<P::Scalar>,
    rng: &mut ChaCha8Rng,
) -> Result<(), SynthError> {
    let n_correct = graph
        .edges()
        .iter()
        .filter(|e| e.kind == EdgeKind::Landmark)
        .count();
    let n_out = outlier_count(n_correct, rate);
    if n_out == 0 {
        return Ok(());
    }
    let bounds = Bounds::of(gt);
    let session_frames = |s: u32| -> Vec<u32> {
        graph
            .node_ids()
            .filter(|id| id.session == s)
            .map(|id| id.frame)
            .collect()
    };
    let (f0, f1) = (session_frames(0), session_frames(1));
    if f0.is_empty() || f1.is_empty() {
        return Err(SynthError::NoEligibleOutlierPairs);
    }
    let occupied = |g: &PoseGraph<P>, a: NodeId, b: NodeId| {
        g.edges().iter().any(|e| {
            e.kind == EdgeKind::Landmark
                && ((e.from == a && e.to == b) || (e.from == b && e.to == a))
        })
    };
    let mut added = 0usize;
    let mut attempts = 0usize;
    let budget = 10_000 * n_out;
    while added < n_out {
        attempts += 1;
        if attempts > budget {
            return Err(SynthError::NoEligibleOutlierPairs);
        }
        let a = NodeId::new(0, f0[rng.random_range(0..f0.len())]);
        let b = NodeId::new(1, f1[rng.random_range(0..f1.len())]);
        let (Some(pa), Some(pb)) = (gt.get(a), gt.get(b)) else {
            continue;
        };
        if to_f64((pa.translation() - pb.translation()).norm()) <= min_distance
            || occupied(graph, a, b)
        {
            continue;
        }
        let z = P::uniform_measurement(rng, &bounds);
        graph
            .add_edge(Edge::landmark(a, b, z, info.clone()))
            .expect("injected edge is structurally valid");
        labels.mark(a, b, true);
        added += 1;
    }
    Ok(())
}

fn validate_config(cfg: &SynthConfig) -> Result<(), SynthError> {
    if cfg.frames_per_session < 2 {
        return Err(SynthError::BadConfig(
            "need at least 2 frames per session".into(),
        ));
    }
    if !(0.0..1.0).contains(&cfg.outlier_rate) {
        return Err(SynthError::BadConfig(
            "outlier rate must be in [0, 1)".into(),
        ));
    }
    if cfg.revisit_radius >= cfg.min_outlier_distance {
        return Err(SynthError::BadConfig(
            "revisit radius must be smaller than the minimum outlier distance".into(),
        ));
    }
    if cfg.step_length <= 0.0 {
        return Err(SynthError::BadConfig("step length must be positive".into()));
    }
    Ok(())
}
