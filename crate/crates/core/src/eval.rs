//! Trajectory scoring: RMSE after closed-form rigid alignment, plus
//! precision/recall of incorrect-edge detection when labels are available.

use crate::geometry::Pose;
use crate::optimizer::Estimate;
use crate::posegraph::{LabelSidecar, NodeId};
use crate::scalar::{real, to_f64};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("need at least 2 common nodes, got {0}")]
    TooFewCommonNodes(usize),
    #[error("point sets are degenerate (coincident or collinear); alignment is not unique")]
    Degenerate,
}

/// Incorrect-edge detection quality of a removal set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Alignment-based trajectory score.
#[derive(Debug, Clone)]
pub struct EvalReport<P: Pose> {
    /// Root-mean-square translation error in meters, after alignment.
    pub rmse: f64,
    /// Number of common nodes scored.
    pub n_nodes: usize,
    /// The rigid transform applied to the estimate.
    pub alignment: P,
    /// Present when ground-truth labels were supplied.
    pub metrics: Option<EdgeMetrics>,
}

/// Best rigid alignment (rotation plus translation, no scale) of the
/// estimate onto the ground truth over their common nodes, and the RMSE of
/// the aligned translations.
pub fn align_and_rmse<P: Pose>(
    est: &Estimate<P>,
    gt: &Estimate<P>,
) -> Result<EvalReport<P>, EvalError> {
    type S<P> = <P as Pose>::Scalar;
    let common: Vec<NodeId> = est
        .iter()
        .map(|(id, _)| id)
        .filter(|id| gt.get(*id).is_some())
        .collect();
    let n = common.len();
    if n < 2 {
        return Err(EvalError::TooFewCommonNodes(n));
    }
    let d = P::TRANS_DIM;
    let mut pe = DMatrix::<S<P>>::zeros(d, n);
    let mut pg = DMatrix::<S<P>>::zeros(d, n);
    for (k, id) in common.iter().enumerate() {
        pe.set_column(k, &est.get(*id).unwrap().translation());
        pg.set_column(k, &gt.get(*id).unwrap().translation());
    }
    let n_s = real::<S<P>>(n as f64);
    let ce = pe.column_sum() / n_s;
    let cg = pg.column_sum() / n_s;
    for k in 0..n {
        let e = pe.column(k) - &ce;
        pe.set_column(k, &e);
        let g = pg.column(k) - &cg;
        pg.set_column(k, &g);
    }
    // cross-covariance maps estimate coordinates onto ground truth
    let h = &pg * pe.transpose();
    let svd = h.clone().svd(true, true);
    let (u, v_t) = (svd.u.expect("svd u"), svd.v_t.expect("svd v_t"));
    let sv = &svd.singular_values;
    let scale = sv[0];
    let needed_rank = d - 1; // collinear 3D sets leave a rotation free
    let tol = real::<S<P>>(1e-9);
    if scale <= tol || (needed_rank > 1 && sv[needed_rank - 1] <= scale * tol) {
        return Err(EvalError::Degenerate);
    }
    let mut r = &u * &v_t;
    if to_f64(r.determinant()) < 0.0 {
        // reflect along the least-significant direction to stay in SO(d)
        let mut u_fix = u.clone();
        let last = d - 1;
        let col = -u_fix.column(last);
        u_fix.set_column(last, &col);
        r = &u_fix * &v_t;
    }
    let t = &cg - &r * &ce;

    let mut sq_sum = 0.0;
    for id in &common {
        let aligned = &r * est.get(*id).unwrap().translation() + &t;
        let diff = aligned - gt.get(*id).unwrap().translation();
        sq_sum += to_f64(diff.norm_squared());
    }
    let rmse = (sq_sum / n as f64).sqrt();
    let alignment = P::from_rotation_translation(&r, &DVector::from_column_slice(t.as_slice()));
    Ok(EvalReport {
        rmse,
        n_nodes: n,
        alignment,
        metrics: None,
    })
}

/// Normalize an endpoint pair for set membership.
pub fn edge_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Precision/recall/F1 of a removed-edge set against ground-truth labels.
/// Removing nothing is perfectly precise; with no incorrect edges to find,
/// recall is 1.
pub fn edge_metrics(removed: &BTreeSet<(NodeId, NodeId)>, labels: &LabelSidecar) -> EdgeMetrics {
    let incorrect: BTreeSet<(NodeId, NodeId)> = labels
        .labels
        .iter()
        .filter(|(_, &bad)| bad)
        .map(|(k, _)| *k)
        .collect();
    let hits = removed.intersection(&incorrect).count();
    let precision = if removed.is_empty() {
        1.0
    } else {
        hits as f64 / removed.len() as f64
    };
    let recall = if incorrect.is_empty() {
        1.0
    } else {
        hits as f64 / incorrect.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    EdgeMetrics {
        precision,
        recall,
        f1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose2, Pose3};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type P = Pose2<f64>;

    fn random_estimate(rng: &mut ChaCha8Rng, n: u32) -> Estimate<P> {
        let mut est = Estimate::new();
        for f in 0..n {
            est.set(
                NodeId::new(0, f),
                Pose2::new(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-3.0..3.0),
                ),
            );
        }
        est
    }

    #[test]
    fn identical_estimates_score_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let gt = random_estimate(&mut rng, 10);
        let report = align_and_rmse(&gt, &gt).unwrap();
        assert!(report.rmse < 1e-12);
        assert_eq!(report.n_nodes, 10);
    }

    #[test]
    fn rigid_transform_is_removed() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        for _ in 0..20 {
            let gt = random_estimate(&mut rng, 8);
            let t = Pose2::new(
                rng.random_range(-50.0..50.0),
                rng.random_range(-50.0..50.0),
                rng.random_range(-3.0..3.0),
            );
            let est = gt.left_transform(&t);
            let report = align_and_rmse(&est, &gt).unwrap();
            assert!(report.rmse < 1e-9, "rmse {}", report.rmse);
        }
    }

    #[test]
    fn rigid_transform_removed_3d() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let mut gt = Estimate::<Pose3<f64>>::new();
        for f in 0..12u32 {
            gt.set(
                NodeId::new(0, f),
                Pose3::from_planar(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    0.0,
                ),
            );
        }
        // give the set 3D extent so it is not coplanar-degenerate for this check
        gt.set(NodeId::new(0, 12), {
            let mut p = Pose3::from_planar(0.0, 0.0, 0.0);
            p.t.z = 5.0;
            p
        });
        let t = Pose3::from_planar(4.0, -7.0, 1.2);
        let est = gt.left_transform(&t);
        let report = align_and_rmse(&est, &gt).unwrap();
        assert!(report.rmse < 1e-9);
    }

    #[test]
    fn closed_form_dominates_random_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        for _ in 0..10 {
            let gt = random_estimate(&mut rng, 10);
            // noisy copy of gt, so the optimum is nontrivial
            let mut est = Estimate::new();
            for (id, p) in gt.iter() {
                est.set(
                    id,
                    Pose2::new(
                        p.x + rng.random_range(-0.5..0.5),
                        p.y + rng.random_range(-0.5..0.5),
                        p.theta,
                    ),
                );
            }
            let closed = align_and_rmse(&est, &gt).unwrap().rmse;
            for _ in 0..10_000 {
                let t = Pose2::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-3.2..3.2),
                );
                let moved = est.left_transform(&t);
                let mut sq = 0.0;
                let mut n = 0;
                for (id, p) in moved.iter() {
                    let d = p.translation() - gt.get(id).unwrap().translation();
                    sq += d.norm_squared();
                    n += 1;
                }
                let sampled = (sq / n as f64).sqrt();
                assert!(closed <= sampled + 1e-12);
            }
        }
    }

    #[test]
    fn rmse_invariant_under_joint_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let gt = random_estimate(&mut rng, 9);
        let mut est = Estimate::new();
        for (id, p) in gt.iter() {
            est.set(
                id,
                Pose2::new(p.x + rng.random_range(-1.0..1.0), p.y, p.theta),
            );
        }
        let base = align_and_rmse(&est, &gt).unwrap().rmse;
        let t = Pose2::new(13.0, -4.0, 1.1);
        let moved = align_and_rmse(&est.left_transform(&t), &gt.left_transform(&t))
            .unwrap()
            .rmse;
        assert!((base - moved).abs() < 1e-9);
    }

    #[test]
    fn too_few_common_nodes() {
        let mut a = Estimate::<P>::new();
        a.set(NodeId::new(0, 0), Pose2::identity());
        let mut b = Estimate::<P>::new();
        b.set(NodeId::new(0, 0), Pose2::identity());
        b.set(NodeId::new(0, 9), Pose2::identity());
        assert!(matches!(
            align_and_rmse(&a, &b),
            Err(EvalError::TooFewCommonNodes(1))
        ));
    }

    #[test]
    fn coincident_points_degenerate() {
        let mut a = Estimate::<P>::new();
        let mut b = Estimate::<P>::new();
        for f in 0..4 {
            a.set(NodeId::new(0, f), Pose2::new(1.0, 2.0, 0.0));
            b.set(NodeId::new(0, f), Pose2::new(f as f64, 0.0, 0.0));
        }
        assert!(matches!(align_and_rmse(&a, &b), Err(EvalError::Degenerate)));
    }

    #[test]
    fn collinear_3d_degenerate() {
        let mut a = Estimate::<Pose3<f64>>::new();
        let mut b = Estimate::<Pose3<f64>>::new();
        for f in 0..6u32 {
            a.set(NodeId::new(0, f), Pose3::from_planar(f as f64, 0.0, 0.0));
            b.set(NodeId::new(0, f), Pose3::from_planar(0.0, f as f64, 0.0));
        }
        assert!(matches!(align_and_rmse(&a, &b), Err(EvalError::Degenerate)));
    }

    // ---- edge metrics -----------------------------------------------------

    fn labels(
        incorrect: &[(u32, u32, u32, u32)],
        correct: &[(u32, u32, u32, u32)],
    ) -> LabelSidecar {
        let mut s = LabelSidecar::default();
        for &(a, b, c, d) in incorrect {
            s.mark(NodeId::new(a, b), NodeId::new(c, d), true);
        }
        for &(a, b, c, d) in correct {
            s.mark(NodeId::new(a, b), NodeId::new(c, d), false);
        }
        s
    }

    fn removed(pairs: &[(u32, u32, u32, u32)]) -> BTreeSet<(NodeId, NodeId)> {
        pairs
            .iter()
            .map(|&(a, b, c, d)| edge_key(NodeId::new(a, b), NodeId::new(c, d)))
            .collect()
    }

    #[test]
    fn exact_removal_is_perfect() {
        let l = labels(&[(0, 1, 1, 5), (0, 2, 1, 9)], &[(0, 3, 1, 3)]);
        let m = edge_metrics(&removed(&[(0, 1, 1, 5), (0, 2, 1, 9)]), &l);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn nothing_removed_conventions() {
        let l = labels(&[(0, 1, 1, 5)], &[]);
        let m = edge_metrics(&BTreeSet::new(), &l);
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);

        // no incorrect edges at all
        let l2 = labels(&[], &[(0, 1, 1, 5)]);
        let m2 = edge_metrics(&BTreeSet::new(), &l2);
        assert_eq!((m2.precision, m2.recall), (1.0, 1.0));
    }

    #[test]
    fn half_and_half() {
        let l = labels(&[(0, 1, 1, 5), (0, 2, 1, 9)], &[(0, 3, 1, 3)]);
        let m = edge_metrics(&removed(&[(0, 1, 1, 5), (0, 3, 1, 3)]), &l);
        assert_eq!((m.precision, m.recall), (0.5, 0.5));
        assert!((m.f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn orientation_insensitive() {
        let l = labels(&[(0, 1, 1, 5)], &[]);
        let m = edge_metrics(&removed(&[(1, 5, 0, 1)]), &l);
        assert_eq!((m.precision, m.recall), (1.0, 1.0));
    }
}
