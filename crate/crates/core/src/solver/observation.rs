//! Photometric residuals and their analytic Jacobians.
//!
//! One observation couples a scene point to one frame of its visibility
//! list: the residual stacks `phi(u) - I(u' + u)` over the patch offsets,
//! and the Jacobian rows chain the sampled image gradient with the
//! projection partials. The patch is axis-aligned in the target image
//! (offsets are added after projection, no warp).

use crate::geometry::{project, projection_jacobian, Intrinsics, Pose};
use crate::image::{GradientPair, GrayImage, Patch};
use crate::solver::SolverConfig;
use nalgebra::{DVector, MatrixXx3, MatrixXx6, Point3};

/// Residual block for one (point, frame) pair.
#[derive(Debug, Clone)]
pub struct Observation {
    /// Dense index of the point among the active points of this solve.
    pub point_local: usize,
    /// Window slot of the observing frame.
    pub frame_slot: usize,
    /// `phi(u) - I(u' + u)`, one entry per patch offset.
    pub residual: DVector<f64>,
    /// d(residual)/d(twist), D x 6.
    pub jac_pose: MatrixXx6<f64>,
    /// d(residual)/d(point), D x 3.
    pub jac_point: MatrixXx3<f64>,
    /// Huber IRLS weight in (0, 1].
    pub weight: f64,
}

impl Observation {
    pub fn rows(&self) -> usize {
        self.residual.len()
    }
}

/// Huber IRLS weight for an observation with residual norm `s`: 1 inside
/// the quadratic region, `delta / s` beyond it.
pub fn robust_weight(residual_norm: f64, delta: f64) -> f64 {
    debug_assert!(delta > 0.0);
    if residual_norm <= delta {
        1.0
    } else {
        delta / residual_norm
    }
}

/// Huber loss of a residual norm.
pub fn huber_loss(residual_norm: f64, delta: f64) -> f64 {
    if residual_norm <= delta {
        0.5 * residual_norm * residual_norm
    } else {
        delta * (residual_norm - 0.5 * delta)
    }
}

/// Robust total cost of an observation set.
pub fn robust_cost(observations: &[Observation], delta: f64) -> f64 {
    observations
        .iter()
        .map(|o| huber_loss(o.residual.norm(), delta))
        .sum()
}

/// Evaluate the residual and Jacobians of one point in one frame.
///
/// Returns `None` when the projection falls behind the camera or any
/// patch sample leaves the image; the observation then contributes
/// nothing this iteration (it is re-tested on the next one).
#[allow(clippy::too_many_arguments)]
pub fn evaluate_observation(
    point_local: usize,
    frame_slot: usize,
    position: &Point3<f64>,
    ref_patch: &Patch,
    pose: &Pose,
    image: &GrayImage,
    grads: &GradientPair,
    k: &Intrinsics,
    cfg: &SolverConfig,
) -> Option<Observation> {
    let proj = project(pose, k, position, cfg.min_depth)?;
    let (proj_jac_pose, proj_jac_point) = projection_jacobian(pose, k, position, cfg.min_depth)?;

    let d = ref_patch.len();
    let mut residual = DVector::zeros(d);
    let mut jac_pose = MatrixXx6::zeros(d);
    let mut jac_point = MatrixXx3::zeros(d);

    for (i, offset) in Patch::offsets(ref_patch.radius()).enumerate() {
        let sample_at = proj.pixel + offset;
        let intensity = image.sample_bilinear(&sample_at)?;
        let grad = grads.sample(&sample_at)?;
        residual[i] = ref_patch.values()[i] - intensity;
        // residual = phi - I(u'+u), so the rows pick up a minus sign.
        let g = grad.transpose();
        jac_pose.row_mut(i).copy_from(&(-(g * proj_jac_pose)));
        jac_point.row_mut(i).copy_from(&(-(g * proj_jac_point)));
    }

    let weight = robust_weight(residual.norm(), cfg.huber_delta);
    Some(Observation {
        point_local,
        frame_slot,
        residual,
        jac_pose,
        jac_point,
        weight,
    })
}
