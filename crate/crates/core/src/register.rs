//! Generalized ICP between two point clouds.
//!
//! Each point carries a plane-regularized covariance (smallest eigenvalue
//! replaced by epsilon, the others by 1), and the alignment minimizes the
//! summed Mahalanobis distance of nearest-neighbor correspondences with
//! Gauss-Newton steps. Correspondences and weights are frozen within an
//! iteration; step halving keeps the frozen cost non-increasing, and the
//! loop stops as soon as re-association no longer lowers the recorded
//! cost, so the cost history is non-increasing by construction.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::transform::RigidTransform;

pub const MAX_STEP_HALVINGS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct GicpConfig {
    /// Neighbors (besides the point itself) in each covariance support.
    pub k_neighbors: usize,
    /// Replacement for the smallest covariance eigenvalue.
    pub cov_epsilon: f64,
    /// Correspondences farther than this are rejected (meters).
    pub max_corr_dist: f64,
    pub max_iterations: usize,
    /// Stop when the accepted translation step is shorter than this.
    pub translation_tol: f64,
    /// Stop when the accepted rotation step is smaller than this (radians).
    pub rotation_tol: f64,
}

impl Default for GicpConfig {
    fn default() -> Self {
        GicpConfig {
            k_neighbors: 20,
            cov_epsilon: 1e-3,
            max_corr_dist: 1.0,
            max_iterations: 50,
            translation_tol: 1e-4,
            rotation_tol: 1e-4,
        }
    }
}

impl GicpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::validation("gicp.k_neighbors", "must be >= 1"));
        }
        if !(self.cov_epsilon > 0.0 && self.cov_epsilon <= 1.0) {
            return Err(Error::validation("gicp.cov_epsilon", "must be in (0, 1]"));
        }
        if !(self.max_corr_dist > 0.0) {
            return Err(Error::validation("gicp.max_corr_dist", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::validation("gicp.max_iterations", "must be >= 1"));
        }
        if !(self.translation_tol > 0.0) || !(self.rotation_tol > 0.0) {
            return Err(Error::validation("gicp.tolerances", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GicpResult {
    /// Maps source coordinates onto the target.
    pub transform: RigidTransform,
    /// Last recorded cost (sum of Mahalanobis distances).
    pub final_cost: f64,
    /// Accepted Gauss-Newton updates.
    pub iterations: usize,
    pub converged: bool,
    /// Frozen-correspondence cost before and after each accepted update,
    /// flattened into (pre, post) pairs. Within a pair the cost never
    /// increases; across pairs the correspondences differ, so the raw
    /// values are not comparable.
    pub cost_history: Vec<f64>,
}

#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    )
}

/// Jacobian of the residual `r = q - ((I + [w]x) x + d)` with respect to
/// `(d, w)` at zero increment: `[-I | [x]x]`.
pub fn residual_jacobian(x: &Vector3<f64>) -> SMatrix<f64, 3, 6> {
    let mut j = SMatrix::<f64, 3, 6>::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-Matrix3::identity()));
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&skew(x));
    j
}

/// Left-multiplies the small-motion increment `(d, w)` onto `t`. The
/// small-angle rotation `I + [w]x` is re-orthonormalized by its polar
/// factor so the result stays a proper rotation.
pub fn apply_increment(t: &RigidTransform, xi: &SVector<f64, 6>) -> RigidTransform {
    let delta = Vector3::new(xi[0], xi[1], xi[2]);
    let omega = Vector3::new(xi[3], xi[4], xi[5]);
    let raw = Matrix3::identity() + skew(&omega);
    let svd = raw.svd(true, true);
    let (u, v_t) = (svd.u.expect("svd.u"), svd.v_t.expect("svd.v_t"));
    let mut rot = u * v_t;
    if rot.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        rot = u * v_t;
    }
    RigidTransform {
        rotation: rot * t.rotation,
        translation: rot * t.translation + delta,
    }
}

/// Plane-regularized covariance per point: the sample covariance of the
/// point and its `k` nearest neighbors with eigenvalues replaced by
/// (epsilon, 1, 1) in ascending order.
pub fn plane_covariances(
    points: &[Vector3<f64>],
    k: usize,
    epsilon: f64,
) -> Result<Vec<Matrix3<f64>>> {
    if points.len() < k + 1 {
        return Err(Error::InsufficientPoints {
            context: "gicp covariance".into(),
            needed: k + 1,
            got: points.len(),
        });
    }
    let tree = KdTree::new(points);
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let support = tree.k_nearest(p, k + 1);
        let mean: Vector3<f64> = support
            .iter()
            .map(|&(i, _)| points[i])
            .sum::<Vector3<f64>>()
            / support.len() as f64;
        let mut cov = Matrix3::zeros();
        for &(i, _) in &support {
            let d = points[i] - mean;
            cov += d * d.transpose();
        }
        let eig = nalgebra::SymmetricEigen::new(cov);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let mut reg = Matrix3::zeros();
        for (rank, &idx) in order.iter().enumerate() {
            let lambda = if rank == 0 { epsilon } else { 1.0 };
            let u = eig.eigenvectors.column(idx);
            reg += lambda * u * u.transpose();
        }
        out.push(reg);
    }
    Ok(out)
}

struct Correspondences {
    /// (source index, target index) pairs.
    pairs: Vec<(usize, usize)>,
    /// Inverse of `cov_t[j] + R cov_s[i] R^T`, frozen per iteration.
    weights: Vec<Matrix3<f64>>,
}

fn associate(
    source: &[Vector3<f64>],
    cov_s: &[Matrix3<f64>],
    cov_t: &[Matrix3<f64>],
    tree_t: &KdTree,
    t: &RigidTransform,
    max_corr_dist: f64,
) -> Correspondences {
    let max_d2 = max_corr_dist * max_corr_dist;
    let mut pairs = Vec::new();
    let mut weights = Vec::new();
    for (i, p) in source.iter().enumerate() {
        let x = t.apply(p);
        if let Some((j, d2)) = tree_t.nearest(&x) {
            if d2 <= max_d2 {
                let m = cov_t[j] + t.rotation * cov_s[i] * t.rotation.transpose();
                let w = m
                    .cholesky()
                    .map(|c| c.inverse())
                    .or_else(|| m.try_inverse())
                    .expect("regularized covariances are positive definite");
                pairs.push((i, j));
                weights.push(w);
            }
        }
    }
    Correspondences { pairs, weights }
}

fn cost_of(
    corr: &Correspondences,
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    t: &RigidTransform,
) -> f64 {
    corr.pairs
        .iter()
        .zip(&corr.weights)
        .map(|(&(i, j), w)| {
            let d = target[j] - t.apply(&source[i]);
            d.dot(&(w * d))
        })
        .sum()
}

/// Estimates the rigid transform aligning `source` onto `target`.
pub fn gicp(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    config: &GicpConfig,
) -> Result<GicpResult> {
    config.validate()?;
    let cov_s = plane_covariances(source, config.k_neighbors, config.cov_epsilon)?;
    let cov_t = plane_covariances(target, config.k_neighbors, config.cov_epsilon)?;
    let tree_t = KdTree::new(target);

    let mut t = RigidTransform::identity();
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0usize;
    let mut converged = false;

    for _ in 0..config.max_iterations {
        let corr = associate(source, &cov_s, &cov_t, &tree_t, &t, config.max_corr_dist);
        if corr.pairs.is_empty() {
            return Ok(GicpResult {
                transform: t,
                final_cost: history.last().copied().unwrap_or(f64::INFINITY),
                iterations,
                converged: false,
                cost_history: history,
            });
        }
        // Re-association may raise the summed cost even as the fit
        // improves (pairs switch to truer, farther partners), so the
        // cost is only ever compared under one frozen correspondence set.
        let cost_now = cost_of(&corr, source, target, &t);

        // Gauss-Newton normal equations on the frozen correspondences.
        let mut h = SMatrix::<f64, 6, 6>::zeros();
        let mut g = SVector::<f64, 6>::zeros();
        for (&(i, j), w) in corr.pairs.iter().zip(&corr.weights) {
            let x = t.apply(&source[i]);
            let r = target[j] - x;
            let jac = residual_jacobian(&x);
            let wj = w * jac;
            h += jac.transpose() * wj;
            g += wj.transpose() * r;
        }
        let Some(xi) = h.cholesky().map(|c| c.solve(&(-g))).or_else(|| h.lu().solve(&(-g)))
        else {
            converged = false;
            break;
        };

        // Descent is judged against the frozen-association cost at the
        // current transform, never against costs recorded under earlier
        // associations, which are not comparable.
        let reference = cost_now;
        let mut accepted: Option<(RigidTransform, f64, SVector<f64, 6>)> = None;
        let mut step = xi;
        for _ in 0..=MAX_STEP_HALVINGS {
            let cand = apply_increment(&t, &step);
            let cost_cand = cost_of(&corr, source, target, &cand);
            if cost_cand <= reference {
                accepted = Some((cand, cost_cand, step));
                break;
            }
            step *= 0.5;
        }
        let Some((t_new, cost_new, step)) = accepted else {
            // Numerical floor: no step length lowers the frozen cost.
            converged = true;
            break;
        };
        t = t_new;
        iterations += 1;
        history.push(cost_now);
        history.push(cost_new);
        let d_norm = step.fixed_rows::<3>(0).norm();
        let w_norm = step.fixed_rows::<3>(3).norm();
        if d_norm < config.translation_tol && w_norm < config.rotation_tol {
            converged = true;
            break;
        }
    }

    Ok(GicpResult {
        final_cost: history.last().copied().unwrap_or(f64::INFINITY),
        transform: t,
        iterations,
        converged,
        cost_history: history,
    })
}

/// Association cost of `source` against `target` at a fixed transform,
/// using the same plane-regularized weights and correspondence gating as
/// [`gicp`]. Comparable with [`GicpResult::final_cost`] (both sum over
/// accepted pairs). Infinite when nothing pairs within `max_corr_dist`.
pub fn alignment_cost(
    source: &[Vector3<f64>],
    target: &[Vector3<f64>],
    t: &RigidTransform,
    config: &GicpConfig,
) -> Result<f64> {
    config.validate()?;
    let cov_s = plane_covariances(source, config.k_neighbors, config.cov_epsilon)?;
    let cov_t = plane_covariances(target, config.k_neighbors, config.cov_epsilon)?;
    let tree_t = KdTree::new(target);
    let corr = associate(source, &cov_s, &cov_t, &tree_t, t, config.max_corr_dist);
    if corr.pairs.is_empty() {
        return Ok(f64::INFINITY);
    }
    Ok(cost_of(&corr, source, target, t))
}

/// Keeps the first point seen in each cubic voxel, output ordered by voxel
/// key. Deterministic for a fixed input order.
pub fn voxel_downsample(points: &[Vector3<f64>], voxel: f64) -> Vec<Vector3<f64>> {
    debug_assert!(voxel > 0.0);
    let inv = 1.0 / voxel;
    let mut cells: std::collections::BTreeMap<(i64, i64, i64), Vector3<f64>> =
        std::collections::BTreeMap::new();
    for p in points {
        let key = (
            (p.x * inv).floor() as i64,
            (p.y * inv).floor() as i64,
            (p.z * inv).floor() as i64,
        );
        cells.entry(key).or_insert(*p);
    }
    cells.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;

    fn random_cloud(seed: u64, n: usize) -> Vec<Vector3<f64>> {
        let mut rng = StreamRng::new(seed, &[11]);
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.uniform(-5.0, 5.0),
                    rng.uniform(-5.0, 5.0),
                    rng.uniform(-1.0, 1.0),
                )
            })
            .collect()
    }

    #[test]
    fn plane_covariance_flattens_the_normal() {
        let mut pts = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                pts.push(Vector3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0));
            }
        }
        let covs = plane_covariances(&pts, 20, 1e-3).unwrap();
        for c in &covs {
            // z is the plane normal: C * z = epsilon * z.
            let cz = c * Vector3::z();
            assert_relative_eq!(cz, Vector3::new(0.0, 0.0, 1e-3), epsilon = 1e-9);
            let eig = nalgebra::SymmetricEigen::new(*c);
            let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_relative_eq!(ev[0], 1e-3, epsilon = 1e-9);
            assert_relative_eq!(ev[1], 1.0, epsilon = 1e-9);
            assert_relative_eq!(ev[2], 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let t = RigidTransform::from_rotation_z(0.3, Vector3::new(1.0, -2.0, 0.5));
        let p = Vector3::new(2.0, 1.0, -0.5);
        let q = Vector3::new(2.1, 0.9, -0.4);
        let x = t.apply(&p);
        let analytic = residual_jacobian(&x);
        let h = 1e-6;
        for col in 0..6 {
            let mut plus = SVector::<f64, 6>::zeros();
            plus[col] = h;
            let r_plus = q - apply_increment(&t, &plus).apply(&p);
            let r_minus = q - apply_increment(&t, &(-plus)).apply(&p);
            let fd = (r_plus - r_minus) / (2.0 * h);
            for row in 0..3 {
                let a = analytic[(row, col)];
                let scale = a.abs().max(1.0);
                assert!(
                    (fd[row] - a).abs() / scale < 1e-5,
                    "col {col} row {row}: fd {} vs analytic {a}",
                    fd[row]
                );
            }
        }
    }

    #[test]
    fn apply_increment_stays_orthonormal() {
        let t = RigidTransform::identity();
        let xi = SVector::<f64, 6>::from_column_slice(&[0.1, -0.2, 0.05, 0.3, -0.1, 0.2]);
        let out = apply_increment(&t, &xi);
        out.validate().unwrap();
    }

    #[test]
    fn aligning_a_cloud_with_itself_is_identity() {
        let pts = random_cloud(1, 200);
        let res = gicp(&pts, &pts, &GicpConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.transform.translation.norm() < 1e-9);
        assert!((res.transform.rotation - Matrix3::identity()).abs().max() < 1e-9);
    }

    #[test]
    fn recovers_a_known_transform_without_noise() {
        let source = random_cloud(2, 300);
        let truth = RigidTransform {
            rotation: Rotation3::from_axis_angle(&Vector3::z_axis(), 0.035).into_inner(),
            translation: Vector3::new(0.1, -0.05, 0.02),
        };
        let target: Vec<Vector3<f64>> = source.iter().map(|p| truth.apply(p)).collect();
        let res = gicp(&source, &target, &GicpConfig::default()).unwrap();
        assert!(res.converged, "{res:?}");
        assert!((res.transform.translation - truth.translation).norm() < 1e-4);
        let rot_err = (res.transform.rotation.transpose() * truth.rotation - Matrix3::identity())
            .abs()
            .max();
        assert!(rot_err < 1e-4, "rotation error {rot_err}");
    }

    #[test]
    fn accepted_steps_never_raise_their_frozen_cost() {
        let source = random_cloud(3, 250);
        let truth = RigidTransform {
            rotation: Rotation3::from_axis_angle(&Vector3::y_axis(), 0.02).into_inner(),
            translation: Vector3::new(0.2, 0.1, -0.05),
        };
        let mut rng = StreamRng::new(9, &[5]);
        let target: Vec<Vector3<f64>> = source
            .iter()
            .map(|p| truth.apply(p) + Vector3::new(rng.gauss(), rng.gauss(), rng.gauss()) * 0.01)
            .collect();
        let res = gicp(&source, &target, &GicpConfig::default()).unwrap();
        assert_eq!(res.cost_history.len(), 2 * res.iterations);
        assert!(res.iterations >= 1);
        for pair in res.cost_history.chunks_exact(2) {
            assert!(pair[1] <= pair[0], "step raised cost: {:?}", res.cost_history);
        }
        assert_eq!(res.final_cost, *res.cost_history.last().unwrap());
    }

    #[test]
    fn too_few_points_is_an_error() {
        let pts = random_cloud(4, 10);
        let err = gicp(&pts, &pts, &GicpConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientPoints { .. }));
    }

    #[test]
    fn disjoint_clouds_do_not_converge() {
        let a = random_cloud(5, 100);
        let b: Vec<Vector3<f64>> = a.iter().map(|p| p + Vector3::new(100.0, 0.0, 0.0)).collect();
        let res = gicp(&a, &b, &GicpConfig::default()).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn voxel_downsample_keeps_one_point_per_cell() {
        let pts = vec![
            Vector3::new(0.01, 0.01, 0.01),
            Vector3::new(0.02, 0.03, 0.01), // same 0.05 m voxel as the first
            Vector3::new(0.2, 0.0, 0.0),
        ];
        let ds = voxel_downsample(&pts, 0.05);
        assert_eq!(ds.len(), 2);
        assert!(ds.contains(&pts[0]), "first point in a cell wins");
        assert!(!ds.contains(&pts[1]));
    }
}
