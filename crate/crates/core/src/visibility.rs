//! Per-point visibility lists, maintained by ZNCC gating of each new
//! frame against the point's fixed reference patch.

use crate::geometry::{project, Intrinsics, Pose};
use crate::image::{extract_patch, zncc, GrayImage, Patch};
use crate::select::{mark_occupied, OccupancyMask};
use nalgebra::{Point3, Vector2};
use rayon::prelude::*;

pub type FrameId = usize;
pub type PointId = u64;

/// A scene point with its frozen reference appearance.
///
/// `ref_patch` is the optimization descriptor and `gate_patch` the 5x5
/// patch used for visibility scoring; both are extracted once, when the
/// point is created, and never updated.
#[derive(Debug, Clone)]
pub struct ScenePoint {
    pub id: PointId,
    /// World coordinates, refined by the solver.
    pub position: Point3<f64>,
    /// Frame in which the point was created.
    pub ref_frame: FrameId,
    /// Fixed appearance descriptor, radius = solver patch radius.
    pub ref_patch: Patch,
    /// Fixed 5x5 gating patch around the original pixel.
    pub gate_patch: Patch,
    /// Frames with a gated observation, excluding `ref_frame`.
    pub visibility: Vec<FrameId>,
}

impl ScenePoint {
    pub fn n_visible(&self) -> usize {
        self.visibility.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityConfig {
    /// Minimum ZNCC score for an observation to count.
    pub zncc_threshold: f64,
    /// A point is gated only against frames within this id distance of its
    /// reference frame.
    pub max_frame_distance: usize,
    /// Radius of the gating patch (2 -> 5x5).
    pub zncc_patch_radius: usize,
    /// Depth below which a projection is treated as behind the camera.
    pub min_depth: f64,
}

impl Default for VisibilityConfig {
    fn default() -> Self {
        VisibilityConfig {
            zncc_threshold: 0.6,
            max_frame_distance: 2,
            zncc_patch_radius: 2,
            min_depth: crate::geometry::DEFAULT_MIN_DEPTH,
        }
    }
}

/// Outcome of gating one frame against the active points.
#[derive(Debug)]
pub struct VisibilityUpdate {
    /// Mask with a block invalidated around every accepted projection.
    pub mask: OccupancyMask,
    /// (point index, projected pixel) for each accepted observation.
    pub accepted: Vec<(usize, Vector2<f64>)>,
    /// Number of points gated (close enough and projecting in bounds).
    pub tested: usize,
}

/// Step 1 of per-frame processing: connect the new frame to existing
/// points.
///
/// Each point within `max_frame_distance` of its reference frame is
/// projected with the frame's pose initialization; if the projection is in
/// bounds with positive depth and the 5x5 patch there correlates with the
/// point's gate patch above the threshold, the frame joins the point's
/// visibility list and a block around the projection is reserved in the
/// returned mask.
pub fn update_visibility(
    frame_id: FrameId,
    img: &GrayImage,
    pose: &Pose,
    points: &mut [ScenePoint],
    k: &Intrinsics,
    cfg: &VisibilityConfig,
    mask_block_radius: usize,
) -> VisibilityUpdate {
    let mut mask = OccupancyMask::all_valid(img.width(), img.height());

    // Gating is independent per point; the mask merge afterwards is a
    // union so the order does not matter.
    let scores: Vec<Option<(usize, Vector2<f64>, bool)>> = points
        .par_iter()
        .enumerate()
        .map(|(idx, point)| {
            if frame_id.abs_diff(point.ref_frame) > cfg.max_frame_distance
                || frame_id == point.ref_frame
            {
                return None;
            }
            let proj = project(pose, k, &point.position, cfg.min_depth)?;
            let target = extract_patch(img, &proj.pixel, cfg.zncc_patch_radius)?;
            let score = zncc(&point.gate_patch, &target);
            Some((idx, proj.pixel, score > cfg.zncc_threshold))
        })
        .collect();

    let mut accepted = Vec::new();
    let mut tested = 0;
    for entry in scores.into_iter().flatten() {
        let (idx, pixel, pass) = entry;
        tested += 1;
        if pass {
            if !points[idx].visibility.contains(&frame_id) {
                points[idx].visibility.push(frame_id);
            }
            mark_occupied(&mut mask, &pixel, mask_block_radius);
            accepted.push((idx, pixel));
        }
    }

    VisibilityUpdate {
        mask,
        accepted,
        tested,
    }
}
