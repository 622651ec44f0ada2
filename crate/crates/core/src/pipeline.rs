//! Sliding-window orchestration: ingest frames with pose initializations,
//! connect them to existing points, select and initialize new points,
//! optimize full windows, and manage the point lifecycle.
//!
//! Frame processing is strictly sequential (the occupancy mask of frame i
//! depends on the points of earlier frames); parallelism lives inside the
//! solver, matcher, and renderer.

use crate::geometry::{Intrinsics, Pose, DEFAULT_MIN_DISPARITY};
use crate::image::{extract_patch, gradients, GrayImage};
use crate::select::{select_pixels_from_magnitude, SelectionConfig};
use crate::solver::{optimize_window, OptimizeReport, SolveStatus, SolverConfig};
use crate::stereo::{block_match, init_points_from_disparity, DisparityMap, StereoConfig};
use crate::visibility::{update_visibility, FrameId, PointId, ScenePoint, VisibilityConfig};
use crate::window::{SlidingWindow, WindowFrame};
use nalgebra::{Point3, Vector2};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Frames optimized jointly (5).
    pub window_size: usize,
    /// Frames the window advances after an optimization. The default of 4
    /// leaves one shared frame that carries the refined gauge forward.
    pub stride: usize,
    /// When true, initialize each new frame by applying the external
    /// file's relative motion on top of the previous refined pose instead
    /// of taking the file pose verbatim.
    pub chain_initialization: bool,
    pub selection: SelectionConfig,
    pub visibility: VisibilityConfig,
    pub solver: SolverConfig,
    pub stereo: StereoConfig,
    /// Disparities at or below this never become points.
    pub min_disparity: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window_size: 5,
            stride: 4,
            chain_initialization: false,
            selection: SelectionConfig::default(),
            visibility: VisibilityConfig::default(),
            solver: SolverConfig::default(),
            stereo: StereoConfig::default(),
            min_disparity: DEFAULT_MIN_DISPARITY,
        }
    }
}

impl PipelineConfig {
    /// Selection config with the border margin widened so the reference
    /// patch always fits.
    fn selection_effective(&self) -> SelectionConfig {
        SelectionConfig {
            border_margin: self
                .selection
                .border_margin
                .max(self.selection.nms_radius)
                .max(self.solver.patch_radius),
            ..self.selection
        }
    }
}

/// Depth source for new-point initialization in one frame.
pub enum PointInit<'a> {
    /// No depth available: no new points this frame (the visibility update
    /// still runs).
    None,
    /// Rectified right image; disparities come from block matching.
    Stereo(&'a GrayImage),
    /// Precomputed disparity raster aligned with the frame.
    Disparity(&'a DisparityMap),
}

/// Per-frame processing outcome.
#[derive(Debug, Clone, Copy)]
pub struct FrameSummary {
    pub frame_id: FrameId,
    /// Points gated against this frame (close enough, in bounds).
    pub n_gated: usize,
    /// Observations that passed the ZNCC gate.
    pub n_accepted: usize,
    pub n_selected: usize,
    pub n_new_points: usize,
    /// Set when pushing this frame filled the window and triggered an
    /// optimization.
    pub optimized: bool,
}

/// One optimized window and its iteration log.
#[derive(Debug, Clone)]
pub struct WindowRecord {
    pub window_index: usize,
    pub first_frame: FrameId,
    pub last_frame: FrameId,
    pub report: OptimizeReport,
}

impl WindowRecord {
    pub fn succeeded(&self) -> bool {
        self.report.accepted_steps > 0 || self.report.status == SolveStatus::Converged
    }
}

/// A scene point written out after leaving the optimization.
#[derive(Debug, Clone, Copy)]
pub struct RetiredPoint {
    pub id: PointId,
    pub position: Point3<f64>,
    pub ref_frame: FrameId,
    pub n_visible: usize,
}

/// Everything a batch run produces.
#[derive(Debug)]
pub struct RunResult {
    /// Refined world-to-camera pose per frame, in frame order.
    pub trajectory_w2c: Vec<Pose>,
    pub windows: Vec<WindowRecord>,
    pub points: Vec<RetiredPoint>,
}

impl RunResult {
    /// Camera-to-world trajectory, the file convention.
    pub fn trajectory_c2w(&self) -> Vec<Pose> {
        self.trajectory_w2c.iter().map(|p| p.inverse()).collect()
    }

    /// False when windows ran and none of them improved or converged.
    pub fn any_window_succeeded(&self) -> bool {
        self.windows.is_empty() || self.windows.iter().any(|w| w.succeeded())
    }
}

pub struct Pipeline {
    cfg: PipelineConfig,
    k: Intrinsics,
    window: SlidingWindow,
    /// Latest pose per frame id; entries freeze once the frame leaves the
    /// window.
    poses: Vec<Pose>,
    next_point_id: PointId,
    windows: Vec<WindowRecord>,
    retired: Vec<RetiredPoint>,
    /// Highest frame id included in any optimized window.
    optimized_through: Option<FrameId>,
    last_file_init: Option<Pose>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, k: Intrinsics) -> Self {
        assert!(cfg.window_size >= 2);
        assert!(cfg.stride >= 1 && cfg.stride < cfg.window_size);
        Pipeline {
            cfg,
            k,
            window: SlidingWindow::new(),
            poses: Vec::new(),
            next_point_id: 0,
            windows: Vec::new(),
            retired: Vec::new(),
            optimized_through: None,
            last_file_init: None,
        }
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.k
    }

    pub fn window(&self) -> &SlidingWindow {
        &self.window
    }

    /// Latest pose (world-to-camera) of a processed frame.
    pub fn pose(&self, frame: FrameId) -> Pose {
        self.poses[frame]
    }

    /// Ingest the next frame. `pose_init` is world-to-camera, from the
    /// external odometry file.
    pub fn process_frame(
        &mut self,
        img: GrayImage,
        pose_init: Pose,
        init: PointInit<'_>,
    ) -> FrameSummary {
        let frame_id = self.poses.len();

        let pose = if self.cfg.chain_initialization && frame_id > 0 {
            // Carry the file's relative motion on top of the refined pose.
            let prev_file = self.last_file_init.expect("previous init recorded");
            let relative = pose_init.compose(&prev_file.inverse());
            relative.compose(&self.poses[frame_id - 1])
        } else {
            pose_init
        };
        self.last_file_init = Some(pose_init);

        // Step 1: establish connections to the new frame.
        let update = update_visibility(
            frame_id,
            &img,
            &pose,
            &mut self.window.points,
            &self.k,
            &self.cfg.visibility,
            self.cfg.selection.mask_block_radius,
        );

        // Step 2: add new scene points on unmasked gradient maxima.
        let grads = gradients(&img).expect("frames must be at least 3x3");
        let mut magnitude = Vec::with_capacity(img.width() * img.height());
        for y in 0..img.height() {
            for x in 0..img.width() {
                magnitude.push(grads.gx(x, y).hypot(grads.gy(x, y)));
            }
        }
        let selected = select_pixels_from_magnitude(
            &magnitude,
            img.width(),
            img.height(),
            &update.mask,
            &self.cfg.selection_effective(),
        );

        let owned_dmap;
        let dmap: Option<&DisparityMap> = match init {
            PointInit::None => None,
            PointInit::Disparity(d) => Some(d),
            PointInit::Stereo(right) => match block_match(&img, right, &self.cfg.stereo) {
                Ok(d) => {
                    owned_dmap = d;
                    Some(&owned_dmap)
                }
                Err(_) => None,
            },
        };

        let mut n_new_points = 0;
        if let Some(dmap) = dmap {
            let candidates =
                init_points_from_disparity(dmap, &selected, &self.k, self.cfg.min_disparity);
            let to_world = pose.inverse();
            for ((x, y), cam_point) in candidates {
                let pixel = Vector2::new(x as f64, y as f64);
                let Some(ref_patch) = extract_patch(&img, &pixel, self.cfg.solver.patch_radius)
                else {
                    continue;
                };
                // Points too close to the border for the gating patch can
                // never be confirmed visible; skip them outright.
                let Some(gate_patch) =
                    extract_patch(&img, &pixel, self.cfg.visibility.zncc_patch_radius)
                else {
                    continue;
                };
                self.window.points.push(ScenePoint {
                    id: self.next_point_id,
                    position: to_world.transform(&cam_point),
                    ref_frame: frame_id,
                    ref_patch,
                    gate_patch,
                    visibility: Vec::new(),
                });
                self.next_point_id += 1;
                n_new_points += 1;
            }
        }

        self.window.push(WindowFrame {
            id: frame_id,
            image: Arc::new(img),
            grads: Arc::new(grads),
            pose,
        });
        self.poses.push(pose);

        let mut optimized = false;
        if self.window.len() == self.cfg.window_size {
            self.optimize_and_slide();
            optimized = true;
        }

        FrameSummary {
            frame_id,
            n_gated: update.tested,
            n_accepted: update.accepted.len(),
            n_selected: selected.len(),
            n_new_points,
            optimized,
        }
    }

    fn record_window(&mut self, report: OptimizeReport) {
        for frame in &self.window.frames {
            self.poses[frame.id] = frame.pose;
        }
        self.optimized_through = Some(self.window.frames.last().unwrap().id);
        self.windows.push(WindowRecord {
            window_index: self.windows.len(),
            first_frame: self.window.frames.first().unwrap().id,
            last_frame: self.window.frames.last().unwrap().id,
            report,
        });
    }

    fn optimize_and_slide(&mut self) {
        let report = optimize_window(&mut self.window, &self.k, &self.cfg.solver);
        self.record_window(report);

        // Advance: the last window frames stay, the rest leave for good.
        self.window.frames.drain(..self.cfg.stride);
        let window_start = self.window.frames.first().map(|f| f.id).unwrap_or(0);
        let next_frame = self.poses.len();
        let horizon = self.cfg.visibility.max_frame_distance;

        let mut kept = Vec::with_capacity(self.window.points.len());
        for point in self.window.points.drain(..) {
            let has_live_observation = point.visibility.iter().any(|f| *f >= window_start);
            let can_still_gain = point.ref_frame + horizon >= next_frame;
            if has_live_observation || can_still_gain {
                kept.push(point);
            } else {
                self.retired.push(RetiredPoint {
                    id: point.id,
                    position: point.position,
                    ref_frame: point.ref_frame,
                    n_visible: point.visibility.len(),
                });
            }
        }
        self.window.points = kept;
    }

    /// Flush: optimize any trailing frames that never saw a full window,
    /// retire the remaining points, and hand back the run artifacts.
    pub fn finish(mut self) -> RunResult {
        let tail_unoptimized = self
            .window
            .frames
            .last()
            .map(|f| self.optimized_through.map_or(true, |t| f.id > t))
            .unwrap_or(false);
        if tail_unoptimized && self.window.len() >= 2 {
            let report = optimize_window(&mut self.window, &self.k, &self.cfg.solver);
            self.record_window(report);
        }

        for point in self.window.points.drain(..) {
            self.retired.push(RetiredPoint {
                id: point.id,
                position: point.position,
                ref_frame: point.ref_frame,
                n_visible: point.visibility.len(),
            });
        }
        self.retired.sort_by_key(|p| p.id);

        RunResult {
            trajectory_w2c: self.poses,
            windows: self.windows,
            points: self.retired,
        }
    }
}
