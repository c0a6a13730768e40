//! Batch nonlinear least-squares pose-graph optimization
//! (Levenberg-Marquardt on the manifold, sparse normal equations).

use crate::geometry::{JacobianPair, Pose, Twist};
use crate::posegraph::{NodeId, OdometryIndex, PoseGraph};
use crate::scalar::{real, to_f64, Real};
use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct LmConfig {
    pub max_iterations: usize,
    pub lambda_init: f64,
    pub lambda_factor: f64,
    /// Stop when the relative error decrease of an accepted step falls below this.
    pub rel_decrease_tol: f64,
    /// Stop when the accepted step norm falls below this.
    pub step_tol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            max_iterations: 100,
            lambda_init: 1e-4,
            lambda_factor: 10.0,
            rel_decrease_tol: 1e-9,
            step_tol: 1e-10,
        }
    }
}

const LAMBDA_MAX: f64 = 1e12;

/// Map from node id to pose. The gauge anchor is the lexicographically
/// smallest node id; the optimizer never moves it.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate<P: Pose> {
    poses: BTreeMap<NodeId, P>,
}

impl<P: Pose> Default for Estimate<P> {
    fn default() -> Self {
        Estimate {
            poses: BTreeMap::new(),
        }
    }
}

impl<P: Pose> Estimate<P> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, id: NodeId, pose: P) {
        self.poses.insert(id, pose);
    }

    pub fn get(&self, id: NodeId) -> Option<&P> {
        self.poses.get(&id)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &P)> {
        self.poses.iter().map(|(id, p)| (*id, p))
    }

    pub fn anchor(&self) -> Option<NodeId> {
        self.poses.keys().next().copied()
    }

    /// Apply a rigid transform on the left to every pose.
    pub fn left_transform(&self, t: &P) -> Estimate<P> {
        Estimate {
            poses: self
                .poses
                .iter()
                .map(|(id, p)| (*id, t.compose(p)))
                .collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum OptimizeError<P: Pose> {
    #[error("numerical failure during optimization: {reason}")]
    NumericalFailure {
        reason: String,
        /// Last estimate that still evaluated to a finite error.
        last: Estimate<P>,
    },
    #[error("edge endpoint {0} missing from the estimate")]
    MissingNode(NodeId),
}

/// Result of an optimization run, with the accepted-step error trace kept
/// for convergence checks.
#[derive(Debug, Clone)]
pub struct OptimizeOutcome<P: Pose> {
    pub estimate: Estimate<P>,
    pub initial_error: f64,
    pub final_error: f64,
    /// Total error after each accepted step (non-increasing).
    pub accepted_errors: Vec<f64>,
    pub iterations: usize,
}

/// Whitened residual of one edge:
/// `Lᵀ · log(between(z, between(x_from, x_to)))` where `info = L·Lᵀ`.
pub fn residual<P: Pose>(
    e: &crate::posegraph::Edge<P>,
    est: &Estimate<P>,
) -> Result<Twist<P::Scalar>, OptimizeError<P>> {
    let xf = est.get(e.from).ok_or(OptimizeError::MissingNode(e.from))?;
    let xt = est.get(e.to).ok_or(OptimizeError::MissingNode(e.to))?;
    let raw = e.z.between(&xf.between(xt)).log_map();
    Ok(whitener(&e.info) * raw)
}

/// Upper-triangular whitening factor `Lᵀ` of the information matrix.
fn whitener<S: Real>(info: &DMatrix<S>) -> DMatrix<S> {
    info.clone()
        .cholesky()
        .map(|c| c.l().transpose())
        .unwrap_or_else(|| DMatrix::identity(info.nrows(), info.ncols()))
}

/// Half the sum of squared whitened residual norms.
pub fn total_error<P: Pose>(g: &PoseGraph<P>, est: &Estimate<P>) -> Result<f64, OptimizeError<P>> {
    let mut acc = 0.0;
    for e in g.edges() {
        let r = residual(e, est)?;
        acc += 0.5 * to_f64(r.norm_squared());
    }
    Ok(acc)
}

/// Whitened residual plus the endpoint Jacobians of one edge.
pub type EdgeLinearization<P> = (
    Twist<<P as Pose>::Scalar>,
    JacobianPair<<P as Pose>::Scalar>,
);

/// Whitened residual plus Jacobians with respect to right perturbations of
/// the two endpoint poses. Analytic where the pose type provides it,
/// central finite differences otherwise.
pub fn residual_and_jacobians<P: Pose>(
    e: &crate::posegraph::Edge<P>,
    est: &Estimate<P>,
) -> Result<EdgeLinearization<P>, OptimizeError<P>> {
    let xf = est.get(e.from).ok_or(OptimizeError::MissingNode(e.from))?;
    let xt = est.get(e.to).ok_or(OptimizeError::MissingNode(e.to))?;
    let w = whitener(&e.info);
    let raw = e.z.between(&xf.between(xt)).log_map();
    let (jf, jt) = match P::error_jacobians(&e.z, xf, xt) {
        Some(j) => j,
        None => numeric_jacobians(&e.z, xf, xt),
    };
    Ok((&w * raw, (&w * jf, &w * jt)))
}

fn numeric_jacobians<P: Pose>(z: &P, xf: &P, xt: &P) -> JacobianPair<P::Scalar> {
    let dof = P::DOF;
    let h = real::<P::Scalar>(1e-6);
    let two_h = h + h;
    let res = |xf: &P, xt: &P| z.between(&xf.between(xt)).log_map();
    let mut jf = DMatrix::zeros(dof, dof);
    let mut jt = DMatrix::zeros(dof, dof);
    for k in 0..dof {
        let mut d = Twist::<P::Scalar>::zeros(dof);
        d[k] = h;
        let plus = P::exp_map(&d);
        d[k] = -h;
        let minus = P::exp_map(&d);
        let col = (res(&xf.compose(&plus), xt) - res(&xf.compose(&minus), xt)) / two_h;
        jf.set_column(k, &col);
        let col = (res(xf, &xt.compose(&plus)) - res(xf, &xt.compose(&minus))) / two_h;
        jt.set_column(k, &col);
    }
    (jf, jt)
}

/// Dead-reckoned initial guess: the first session starts at the identity,
/// poses within a session come from odometry composition, and every later
/// session is placed by the first landmark edge tying it to an already
/// placed one. Sessions with no such edge stay at the identity and are
/// reported back.
pub fn initial_guess<P: Pose>(g: &PoseGraph<P>) -> (Estimate<P>, Vec<u32>) {
    let index = OdometryIndex::build(g);
    let sessions = g.sessions();
    let mut est = Estimate::new();
    let mut origin: BTreeMap<u32, P> = BTreeMap::new();
    if let Some(&first) = sessions.first() {
        origin.insert(first, P::identity());
    }
    loop {
        let mut placed_any = false;
        for &s in &sessions {
            if origin.contains_key(&s) {
                continue;
            }
            for e in g.edges().iter().filter(|e| {
                e.kind == crate::posegraph::EdgeKind::Landmark
                    && (e.from.session == s) != (e.to.session == s)
            }) {
                let (inner, outer, z) = if e.from.session == s {
                    (e.from, e.to, e.z.inverse())
                } else {
                    (e.to, e.from, e.z.clone())
                };
                let Some(t_outer) = origin.get(&outer.session) else {
                    continue;
                };
                let (Some(cum_outer), Some(cum_inner)) =
                    (index.pose_in_session(outer), index.pose_in_session(inner))
                else {
                    continue;
                };
                // outer pose ∘ z places the inner endpoint
                let inner_pose = t_outer.compose(cum_outer).compose(&z);
                origin.insert(s, inner_pose.compose(&cum_inner.inverse()));
                placed_any = true;
                break;
            }
        }
        if !placed_any {
            break;
        }
    }
    let mut unplaced = Vec::new();
    for &s in &sessions {
        if let std::collections::btree_map::Entry::Vacant(slot) = origin.entry(s) {
            slot.insert(P::identity());
            unplaced.push(s);
        }
    }
    for id in g.node_ids() {
        let pose = match index.pose_in_session(id) {
            Some(cum) => origin[&id.session].compose(cum),
            None => origin[&id.session].clone(),
        };
        est.set(id, pose);
    }
    (est, unplaced)
}

/// Levenberg-Marquardt with the anchor node held fixed. Accepted steps never
/// increase the total error.
pub fn optimize<P: Pose>(
    g: &PoseGraph<P>,
    init: &Estimate<P>,
    cfg: &LmConfig,
) -> Result<OptimizeOutcome<P>, OptimizeError<P>> {
    let mut est = init.clone();
    let anchor = est.anchor();
    let vars: Vec<NodeId> = est
        .iter()
        .map(|(id, _)| id)
        .filter(|id| Some(*id) != anchor)
        .collect();
    let var_index: BTreeMap<NodeId, usize> =
        vars.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let dof = P::DOF;
    let dim = vars.len() * dof;

    let mut err = total_error(g, &est)?;
    let initial_error = err;
    if !err.is_finite() {
        return Err(OptimizeError::NumericalFailure {
            reason: "initial error is not finite".into(),
            last: est,
        });
    }
    let mut accepted_errors = Vec::new();
    let mut lambda = cfg.lambda_init;
    let mut iterations = 0;

    if dim == 0 {
        return Ok(OptimizeOutcome {
            estimate: est,
            initial_error,
            final_error: err,
            accepted_errors,
            iterations,
        });
    }

    'outer: for _ in 0..cfg.max_iterations {
        iterations += 1;
        // assemble J'J and J'r in triplet form
        let mut coo = CooMatrix::<P::Scalar>::new(dim, dim);
        let mut grad = DVector::<P::Scalar>::zeros(dim);
        for e in g.edges() {
            let (r, (jf, jt)) = residual_and_jacobians(e, &est)?;
            let blocks = [(e.from, jf), (e.to, jt)];
            for (id_a, j_a) in &blocks {
                let Some(&bi) = var_index.get(id_a) else {
                    continue;
                };
                let gi = j_a.transpose() * &r;
                for k in 0..dof {
                    grad[bi * dof + k] += gi[k];
                }
                for (id_b, j_b) in &blocks {
                    let Some(&bj) = var_index.get(id_b) else {
                        continue;
                    };
                    let h = j_a.transpose() * j_b;
                    for rr in 0..dof {
                        for cc in 0..dof {
                            coo.push(bi * dof + rr, bj * dof + cc, h[(rr, cc)]);
                        }
                    }
                }
            }
        }

        // inner damping loop
        loop {
            let mut damped = coo.clone();
            for k in 0..dim {
                damped.push(k, k, real(lambda));
            }
            let csc = CscMatrix::from(&damped);
            let solved = CscCholesky::factor(&csc).ok().map(|chol| {
                let b = DMatrix::from_column_slice(dim, 1, grad.as_slice());
                chol.solve(&b)
            });
            let Some(delta) = solved else {
                lambda *= cfg.lambda_factor;
                if lambda > LAMBDA_MAX {
                    return Err(OptimizeError::NumericalFailure {
                        reason: "normal equations unsolvable at maximum damping".into(),
                        last: est,
                    });
                }
                continue;
            };
            let step_norm = to_f64(delta.norm());
            // candidate: retract each block, anchor untouched
            let mut candidate = est.clone();
            for (id, &bi) in &var_index {
                let mut d = Twist::<P::Scalar>::zeros(dof);
                for k in 0..dof {
                    d[k] = -delta[(bi * dof + k, 0)];
                }
                let moved = candidate
                    .get(*id)
                    .expect("var node present")
                    .compose(&P::exp_map(&d));
                candidate.set(*id, moved);
            }
            let new_err = total_error(g, &candidate)?;
            if new_err.is_finite() && new_err < err {
                let decrease = (err - new_err) / err.max(f64::MIN_POSITIVE);
                est = candidate;
                err = new_err;
                accepted_errors.push(err);
                lambda = (lambda / cfg.lambda_factor).max(1e-15);
                if decrease < cfg.rel_decrease_tol || step_norm < cfg.step_tol || err == 0.0 {
                    break 'outer;
                }
                break;
            }
            lambda *= cfg.lambda_factor;
            if lambda > LAMBDA_MAX {
                // no downhill step exists at any damping: converged
                break 'outer;
            }
        }
    }

    Ok(OptimizeOutcome {
        estimate: est,
        initial_error,
        final_error: err,
        accepted_errors,
        iterations,
    })
}
