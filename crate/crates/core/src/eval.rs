//! Relative-error trajectory evaluation in the KITTI odometry style: for
//! every start frame (stride 10) and segment length, the error of the
//! relative transform between estimate and ground truth over that segment,
//! translation as a percentage of the length, rotation as degrees per
//! meter. The metric is invariant to any global rigid transform of either
//! trajectory.

use crate::geometry::Pose;
use std::fmt;

/// Start-frame stride of the averaging protocol.
pub const DEFAULT_START_STRIDE: usize = 10;

/// Standard KITTI segment lengths in meters.
pub const KITTI_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrajectoryMismatch {
    pub estimate: usize,
    pub ground_truth: usize,
}

impl fmt::Display for TrajectoryMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "trajectory lengths differ: estimate has {} frames, ground truth {}",
            self.estimate, self.ground_truth
        )
    }
}

impl std::error::Error for TrajectoryMismatch {}

/// Averaged error over all segments of one length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentError {
    pub length: f64,
    pub translation_percent: f64,
    pub rotation_deg_per_m: f64,
    /// Number of segments averaged.
    pub count: usize,
}

/// Cumulative path distance along a camera-to-world trajectory.
pub fn trajectory_distances(poses_c2w: &[Pose]) -> Vec<f64> {
    let mut dist = Vec::with_capacity(poses_c2w.len());
    let mut acc = 0.0;
    dist.push(0.0);
    for pair in poses_c2w.windows(2) {
        acc += (pair[1].translation - pair[0].translation).norm();
        dist.push(acc);
    }
    dist
}

/// Total ground-truth path length.
pub fn trajectory_length(poses_c2w: &[Pose]) -> f64 {
    trajectory_distances(poses_c2w).last().copied().unwrap_or(0.0)
}

fn first_index_at_distance(dist: &[f64], start: usize, length: f64) -> Option<usize> {
    (start..dist.len()).find(|&j| dist[j] >= dist[start] + length)
}

/// Per-length averaged relative errors. Both trajectories are
/// camera-to-world, as stored in trajectory files. Segments longer than
/// the trajectory are skipped; when no segment fits, the result is empty.
pub fn relative_error(
    estimate_c2w: &[Pose],
    gt_c2w: &[Pose],
    lengths: &[f64],
    start_stride: usize,
) -> Result<Vec<SegmentError>, TrajectoryMismatch> {
    if estimate_c2w.len() != gt_c2w.len() {
        return Err(TrajectoryMismatch {
            estimate: estimate_c2w.len(),
            ground_truth: gt_c2w.len(),
        });
    }
    let dist = trajectory_distances(gt_c2w);
    let stride = start_stride.max(1);
    let mut out = Vec::new();
    for &length in lengths {
        let mut t_sum = 0.0;
        let mut r_sum = 0.0;
        let mut count = 0;
        for start in (0..gt_c2w.len()).step_by(stride) {
            let Some(end) = first_index_at_distance(&dist, start, length) else {
                continue;
            };
            let delta_gt = gt_c2w[start].inverse().compose(&gt_c2w[end]);
            let delta_est = estimate_c2w[start].inverse().compose(&estimate_c2w[end]);
            let error = delta_est.inverse().compose(&delta_gt);
            t_sum += error.translation.norm() / length;
            r_sum += error.rotation_angle() / length;
            count += 1;
        }
        if count > 0 {
            out.push(SegmentError {
                length,
                translation_percent: 100.0 * t_sum / count as f64,
                rotation_deg_per_m: (r_sum / count as f64).to_degrees(),
                count,
            });
        }
    }
    Ok(out)
}

/// Per-frame absolute pose errors (rotation in radians, translation in
/// scene units), after aligning both trajectories to their first frame so
/// the result is independent of the shared gauge.
pub fn pose_errors(estimate_c2w: &[Pose], gt_c2w: &[Pose]) -> Vec<(f64, f64)> {
    assert_eq!(estimate_c2w.len(), gt_c2w.len());
    if estimate_c2w.is_empty() {
        return Vec::new();
    }
    let e0 = estimate_c2w[0].inverse();
    let g0 = gt_c2w[0].inverse();
    estimate_c2w
        .iter()
        .zip(gt_c2w.iter())
        .map(|(e, g)| {
            let rel_e = e0.compose(e);
            let rel_g = g0.compose(g);
            let angle =
                crate::geometry::rotation_angle(&(rel_e.rotation * rel_g.rotation.transpose()));
            let trans = (rel_e.translation - rel_g.translation).norm();
            (angle, trans)
        })
        .collect()
}
