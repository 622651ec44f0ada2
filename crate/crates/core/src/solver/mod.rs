//! Sliding-window photometric bundle adjustment.
//!
//! The solver evaluates photometric residuals for every (point, visible
//! frame) pair in the window, assembles Huber-weighted block-sparse normal
//! equations, eliminates the points with a Schur complement, and iterates
//! Levenberg-Marquardt. The first window frame is held constant to fixate
//! the gauge freedom; the scene points referenced in it are still
//! optimized.

mod normal;
mod observation;

pub use normal::{
    build_normal_equations, schur_solve, NormalEquations, SchurSolution, SingularSystem,
};
pub use observation::{
    evaluate_observation, huber_loss, robust_cost, robust_weight, Observation,
};

use crate::geometry::{se3_exp, Intrinsics, Pose, Twist, DEFAULT_MIN_DEPTH};
use crate::window::SlidingWindow;
use nalgebra::Point3;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Patch radius of the photometric descriptor (1 or 2).
    pub patch_radius: usize,
    pub max_iterations: usize,
    /// Relative cost change below which the solve terminates.
    pub tol_cost: f64,
    /// Gradient max-norm below which the solve terminates.
    pub tol_gradient: f64,
    /// Step norm below which the solve terminates.
    pub tol_step: f64,
    /// Huber elbow, in normalized intensity units, applied to the
    /// per-observation residual norm.
    pub huber_delta: f64,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub min_depth: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            patch_radius: 1,
            max_iterations: 100,
            tol_cost: 1e-6,
            tol_gradient: 1e-6,
            tol_step: 1e-6,
            huber_delta: 0.1,
            lambda_init: 1e-4,
            lambda_up: 10.0,
            lambda_down: 0.1,
            lambda_min: 1e-12,
            lambda_max: 1e8,
            min_depth: DEFAULT_MIN_DEPTH,
        }
    }
}

/// One Levenberg-Marquardt iteration (one linear solve and its verdict).
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Robust cost after this iteration's verdict.
    pub cost: f64,
    pub damping: f64,
    pub step_norm: f64,
    pub n_obs: usize,
    pub n_rows: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// A termination tolerance was met.
    Converged,
    MaxIterations,
    /// No observation was valid; the window was left untouched.
    NoObservations,
    /// Damping hit its ceiling without an acceptable step.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub status: SolveStatus,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: Vec<IterationRecord>,
    pub n_active_points: usize,
    pub accepted_steps: usize,
}

impl OptimizeReport {
    /// Fraction of the total achieved cost reduction reached within the
    /// first `n` iterations (rejected ones included).
    pub fn reduction_fraction_by(&self, n: usize) -> f64 {
        let total = self.initial_cost - self.final_cost;
        if total <= 0.0 {
            return 1.0;
        }
        let mut cost_at_n = self.initial_cost;
        for rec in self.iterations.iter().take(n) {
            if rec.accepted {
                cost_at_n = rec.cost;
            }
        }
        (self.initial_cost - cost_at_n) / total
    }
}

/// Pairing of an active point with one window frame of its visibility
/// list, plus the writeback index into `window.points`.
struct ObsSpec {
    point_local: usize,
    point_index: usize,
    frame_slot: usize,
}

struct Layout {
    /// Window-point index per active point, dense order.
    active_points: Vec<usize>,
    specs: Vec<ObsSpec>,
    /// Slot -> free-frame index (None for the gauge frame).
    free_of_slot: Vec<Option<usize>>,
    n_free: usize,
}

fn plan(window: &SlidingWindow) -> Layout {
    let mut free_of_slot = vec![None; window.frames.len()];
    for slot in 1..window.frames.len() {
        free_of_slot[slot] = Some(slot - 1);
    }
    let n_free = window.frames.len().saturating_sub(1);

    let mut active_points = Vec::new();
    let mut specs = Vec::new();
    for (pi, point) in window.points.iter().enumerate() {
        let mut slots: Vec<usize> = point
            .visibility
            .iter()
            .filter_map(|fid| window.slot_of(*fid))
            .collect();
        slots.sort_unstable();
        if slots.is_empty() {
            continue;
        }
        let local = active_points.len();
        active_points.push(pi);
        for frame_slot in slots {
            specs.push(ObsSpec {
                point_local: local,
                point_index: pi,
                frame_slot,
            });
        }
    }
    Layout {
        active_points,
        specs,
        free_of_slot,
        n_free,
    }
}

/// Evaluate all observations for the given candidate state. The output
/// order follows the spec order, keeping accumulation deterministic.
fn evaluate_all(
    window: &SlidingWindow,
    layout: &Layout,
    poses: &[Pose],
    positions: &[Point3<f64>],
    k: &Intrinsics,
    cfg: &SolverConfig,
) -> Vec<Observation> {
    let maybe: Vec<Option<Observation>> = layout
        .specs
        .par_iter()
        .map(|spec| {
            let frame = &window.frames[spec.frame_slot];
            let point = &window.points[spec.point_index];
            evaluate_observation(
                spec.point_local,
                spec.frame_slot,
                &positions[spec.point_local],
                &point.ref_patch,
                &poses[spec.frame_slot],
                &frame.image,
                &frame.grads,
                k,
                cfg,
            )
        })
        .collect();
    maybe.into_iter().flatten().collect()
}

fn total_rows(observations: &[Observation]) -> usize {
    observations.iter().map(|o| o.rows()).sum()
}

/// Refine the window in place and return the iteration log.
///
/// Accepted steps strictly decrease the robust cost; the pose of the
/// first frame is bit-identical before and after.
pub fn optimize_window(
    window: &mut SlidingWindow,
    k: &Intrinsics,
    cfg: &SolverConfig,
) -> OptimizeReport {
    assert!(window.frames.len() >= 2, "window needs at least two frames");
    let layout = plan(window);

    let mut poses: Vec<Pose> = window.frames.iter().map(|f| f.pose).collect();
    let mut positions: Vec<Point3<f64>> = layout
        .active_points
        .iter()
        .map(|pi| window.points[*pi].position)
        .collect();

    let mut observations = evaluate_all(window, &layout, &poses, &positions, k, cfg);
    if observations.is_empty() {
        return OptimizeReport {
            status: SolveStatus::NoObservations,
            initial_cost: 0.0,
            final_cost: 0.0,
            iterations: Vec::new(),
            n_active_points: layout.active_points.len(),
            accepted_steps: 0,
        };
    }

    let mut cost = robust_cost(&observations, cfg.huber_delta);
    let initial_cost = cost;
    let mut lambda = cfg.lambda_init;
    let mut iterations = Vec::new();
    let mut accepted_steps = 0;
    let mut status = SolveStatus::MaxIterations;

    for iteration in 1..=cfg.max_iterations {
        let ne = build_normal_equations(
            &observations,
            &layout.free_of_slot,
            layout.n_free,
            positions.len(),
        );
        if ne.gradient_max_norm() < cfg.tol_gradient {
            status = SolveStatus::Converged;
            break;
        }

        let record_base = (observations.len(), total_rows(&observations));
        match schur_solve(&ne, lambda) {
            Err(_) => {
                iterations.push(IterationRecord {
                    iteration,
                    cost,
                    damping: lambda,
                    step_norm: 0.0,
                    n_obs: record_base.0,
                    n_rows: record_base.1,
                    accepted: false,
                });
                if lambda >= cfg.lambda_max {
                    status = SolveStatus::Stalled;
                    break;
                }
                lambda = (lambda * cfg.lambda_up).min(cfg.lambda_max);
            }
            Ok(solution) => {
                let mut cand_poses = poses.clone();
                for (slot, free) in layout.free_of_slot.iter().enumerate() {
                    if let Some(f) = *free {
                        let delta = Twist::from_vector(&solution.pose_updates[f].into());
                        cand_poses[slot] = se3_exp(&delta).compose(&poses[slot]);
                    }
                }
                let mut cand_positions = positions.clone();
                for (j, update) in solution.point_updates.iter().enumerate() {
                    cand_positions[j] += update;
                }

                let cand_obs = evaluate_all(window, &layout, &cand_poses, &cand_positions, k, cfg);
                let cand_cost = if cand_obs.is_empty() {
                    f64::INFINITY
                } else {
                    robust_cost(&cand_obs, cfg.huber_delta)
                };
                let step_norm = solution.step_norm();

                if cand_cost < cost {
                    assert!(
                        cand_cost < cost,
                        "accepted step must strictly decrease the robust cost"
                    );
                    let relative_drop = (cost - cand_cost) / cost.max(f64::MIN_POSITIVE);
                    poses = cand_poses;
                    positions = cand_positions;
                    observations = cand_obs;
                    cost = cand_cost;
                    accepted_steps += 1;
                    iterations.push(IterationRecord {
                        iteration,
                        cost,
                        damping: lambda,
                        step_norm,
                        n_obs: observations.len(),
                        n_rows: total_rows(&observations),
                        accepted: true,
                    });
                    lambda = (lambda * cfg.lambda_down).max(cfg.lambda_min);
                    if relative_drop < cfg.tol_cost || step_norm < cfg.tol_step {
                        status = SolveStatus::Converged;
                        break;
                    }
                } else {
                    iterations.push(IterationRecord {
                        iteration,
                        cost,
                        damping: lambda,
                        step_norm,
                        n_obs: record_base.0,
                        n_rows: record_base.1,
                        accepted: false,
                    });
                    if lambda >= cfg.lambda_max {
                        status = SolveStatus::Stalled;
                        break;
                    }
                    lambda = (lambda * cfg.lambda_up).min(cfg.lambda_max);
                }
            }
        }
    }

    // Write the refined state back; slot 0 is untouched by construction.
    for (slot, pose) in poses.iter().enumerate().skip(1) {
        window.frames[slot].pose = *pose;
    }
    for (local, pi) in layout.active_points.iter().enumerate() {
        window.points[*pi].position = positions[local];
    }

    OptimizeReport {
        status,
        initial_cost,
        final_cost: cost,
        iterations,
        n_active_points: layout.active_points.len(),
        accepted_steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{extract_patch, gradients, GrayImage};
    use crate::visibility::ScenePoint;
    use crate::window::WindowFrame;
    use nalgebra::{Vector2, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn smooth_image(w: usize, h: usize, phase: f64) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let (xf, yf) = (x as f64, y as f64);
            0.5 + 0.2 * (0.11 * xf + phase).sin() * (0.09 * yf).cos()
                + 0.2 * (0.07 * xf - 0.05 * yf + 0.3 * phase).cos()
        })
    }

    /// Two identical frames observing a plane of points at depth `z`,
    /// already at the optimum.
    fn aligned_window(k: &Intrinsics, cfg: &SolverConfig) -> SlidingWindow {
        let img = Arc::new(smooth_image(96, 96, 0.0));
        let grads = Arc::new(gradients(&img).unwrap());
        let mut window = SlidingWindow::new();
        for id in 0..2 {
            window.push(WindowFrame {
                id,
                image: img.clone(),
                grads: grads.clone(),
                pose: Pose::identity(),
            });
        }
        let z = 3.0;
        let mut id = 0;
        for y in (10..86).step_by(7) {
            for x in (10..86).step_by(7) {
                let px = Vector2::new(x as f64, y as f64);
                let position = Point3::new(
                    (px.x - k.cx) * z / k.fx,
                    (px.y - k.cy) * z / k.fy,
                    z,
                );
                window.points.push(ScenePoint {
                    id,
                    position,
                    ref_frame: 0,
                    ref_patch: extract_patch(&img, &px, cfg.patch_radius).unwrap(),
                    gate_patch: extract_patch(&img, &px, 2).unwrap(),
                    visibility: vec![1],
                });
                id += 1;
            }
        }
        window
    }

    #[test]
    fn already_optimal_window_terminates_immediately() {
        let k = Intrinsics::new(60.0, 60.0, 48.0, 48.0, 0.0);
        let cfg = SolverConfig::default();
        let mut window = aligned_window(&k, &cfg);
        let report = optimize_window(&mut window, &k, &cfg);
        assert_eq!(report.status, SolveStatus::Converged);
        assert!(report.iterations.len() <= 2);
        assert!(report.final_cost < 1e-12);
    }

    #[test]
    fn gauge_frame_pose_is_bit_identical() {
        let k = Intrinsics::new(60.0, 60.0, 48.0, 48.0, 0.0);
        let cfg = SolverConfig::default();
        let mut window = aligned_window(&k, &cfg);
        // Perturb the second frame so the solver actually moves.
        window.frames[1].pose = se3_exp(&Twist::new(
            Vector3::new(2e-3, -1e-3, 1e-3),
            Vector3::new(1e-3, 5e-4, -1e-3),
        ));
        let before = window.frames[0].pose;
        let report = optimize_window(&mut window, &k, &cfg);
        assert!(report.accepted_steps > 0);
        let after = window.frames[0].pose;
        assert_eq!(before.rotation, after.rotation);
        assert_eq!(before.translation, after.translation);
    }

    #[test]
    fn accepted_costs_strictly_decrease() {
        let k = Intrinsics::new(60.0, 60.0, 48.0, 48.0, 0.0);
        let cfg = SolverConfig::default();
        let mut window = aligned_window(&k, &cfg);
        window.frames[1].pose = se3_exp(&Twist::new(
            Vector3::new(5e-3, 3e-3, -4e-3),
            Vector3::new(-2e-3, 1e-3, 2e-3),
        ));
        let report = optimize_window(&mut window, &k, &cfg);
        let mut last = report.initial_cost;
        for rec in report.iterations.iter().filter(|r| r.accepted) {
            assert!(rec.cost < last);
            last = rec.cost;
        }
        assert!(report.final_cost < report.initial_cost);
    }

    #[test]
    fn perturbed_frames_recover_poses() {
        // Three rendered views of a textured plane; points carry two
        // observations each, which pins them and makes the poses
        // observable.
        use crate::synth::{forward_trajectory, render_synthetic, Scenario, SyntheticScene};
        let k = Intrinsics::new(110.0, 110.0, 80.0, 60.0, 0.0);
        let cfg = SolverConfig::default();
        // Camera-facing facets at spread depths disambiguate translation
        // from rotation without grazing-angle warp errors.
        let scene = SyntheticScene::generate(Scenario::PointCloud, 21);
        let gt = forward_trajectory(3, 0.2);
        let mut window = SlidingWindow::new();
        let mut depths = Vec::new();
        for (i, pose) in gt.iter().enumerate() {
            let (img, depth) = render_synthetic(&scene, pose, &k, 160, 120);
            depths.push(depth);
            let img = Arc::new(img);
            window.push(WindowFrame {
                id: i,
                grads: Arc::new(gradients(&img).unwrap()),
                image: img,
                pose: *pose,
            });
        }
        let depth0 = &depths[0];
        let img0 = window.frames[0].image.clone();
        let to_world = gt[0].inverse();
        let mut id = 0;
        for y in (8..112).step_by(6) {
            for x in (8..152).step_by(6) {
                let z = depth0[y * 160 + x];
                if z <= 0.0 {
                    continue;
                }
                // Skip patches that straddle a facet silhouette; the
                // pipeline's ZNCC gate plays that role on real runs.
                let mut smooth = true;
                for dy in -2i64..=2 {
                    for dx in -2i64..=2 {
                        let zn = depth0[(y as i64 + dy) as usize * 160 + (x as i64 + dx) as usize];
                        if (zn - z).abs() > 0.05 * z {
                            smooth = false;
                        }
                    }
                }
                if !smooth {
                    continue;
                }
                let px = Vector2::new(x as f64, y as f64);
                let cam = Point3::new(
                    (px.x - k.cx) * z / k.fx,
                    (px.y - k.cy) * z / k.fy,
                    z,
                );
                let position = to_world.transform(&cam);
                // Ground-truth occlusion culling: a frame observes the
                // point only if the rendered depth there agrees with the
                // point's depth. The pipeline's ZNCC gate plays this role
                // on real runs.
                let mut visibility = Vec::new();
                for frame in 1..3usize {
                    let Some(proj) =
                        crate::geometry::project(&gt[frame], &k, &position, 1e-3)
                    else {
                        continue;
                    };
                    let (ux, uy) = (proj.pixel.x.round(), proj.pixel.y.round());
                    if ux < 3.0 || uy < 3.0 || ux > 156.0 || uy > 116.0 {
                        continue;
                    }
                    let zr = depths[frame][uy as usize * 160 + ux as usize];
                    if (zr - proj.depth).abs() <= 0.02 * proj.depth {
                        visibility.push(frame);
                    }
                }
                if visibility.is_empty() {
                    continue;
                }
                window.points.push(ScenePoint {
                    id,
                    position,
                    ref_frame: 0,
                    ref_patch: extract_patch(&img0, &px, cfg.patch_radius).unwrap(),
                    gate_patch: extract_patch(&img0, &px, 2).unwrap(),
                    visibility,
                });
                id += 1;
            }
        }

        let noise = [
            Twist::new(
                Vector3::new(0.008, -0.006, 0.01),
                Vector3::new(0.003, -0.002, 0.004),
            ),
            Twist::new(
                Vector3::new(-0.007, 0.009, -0.008),
                Vector3::new(-0.002, 0.004, -0.003),
            ),
        ];
        for (slot, twist) in noise.iter().enumerate() {
            window.frames[slot + 1].pose = se3_exp(twist).compose(&gt[slot + 1]);
        }

        let report = optimize_window(&mut window, &k, &cfg);
        eprintln!(
            "recover: status {:?} iters {} cost {:.3e}->{:.3e} points {}",
            report.status,
            report.iterations.len(),
            report.initial_cost,
            report.final_cost,
            report.n_active_points
        );
        assert!(report.accepted_steps > 0);
        for slot in 1..3 {
            let err = window.frames[slot].pose.compose(&gt[slot].inverse());
            eprintln!(
                "  frame {}: rot {:.3e} trans {:?}",
                slot,
                err.rotation_angle(),
                err.translation.as_slice()
            );
            let rot_before = noise[slot - 1].w.norm();
            let trans_before = noise[slot - 1].v.norm();
            assert!(
                err.rotation_angle() < rot_before / 4.0,
                "frame {}: rotation {} vs initial {}",
                slot,
                err.rotation_angle(),
                rot_before
            );
            // Translation along the optical axis is the weakest direction
            // of this two-frame micro problem; the full-window acceptance
            // suite carries the tight bound.
            assert!(
                err.translation.norm() < trans_before / 2.0,
                "frame {}: translation {} vs initial {}",
                slot,
                err.translation.norm(),
                trans_before
            );
        }
    }

    #[test]
    fn no_observations_is_a_noop() {
        let k = Intrinsics::new(60.0, 60.0, 48.0, 48.0, 0.0);
        let cfg = SolverConfig::default();
        let mut window = aligned_window(&k, &cfg);
        for p in &mut window.points {
            p.visibility.clear();
        }
        let before = window.frames[1].pose;
        let report = optimize_window(&mut window, &k, &cfg);
        assert_eq!(report.status, SolveStatus::NoObservations);
        assert_eq!(window.frames[1].pose, before);
    }

    #[test]
    fn evaluation_is_bitwise_reproducible() {
        let k = Intrinsics::new(60.0, 60.0, 48.0, 48.0, 0.0);
        let cfg = SolverConfig::default();
        let window = aligned_window(&k, &cfg);
        let layout = plan(&window);
        let poses: Vec<Pose> = window.frames.iter().map(|f| f.pose).collect();
        let positions: Vec<Point3<f64>> = layout
            .active_points
            .iter()
            .map(|pi| window.points[*pi].position)
            .collect();
        let a = evaluate_all(&window, &layout, &poses, &positions, &k, &cfg);
        let b = evaluate_all(&window, &layout, &poses, &positions, &k, &cfg);
        assert_eq!(a.len(), b.len());
        for (oa, ob) in a.iter().zip(b.iter()) {
            assert_eq!(oa.residual, ob.residual);
            assert_eq!(oa.jac_pose, ob.jac_pose);
            assert_eq!(oa.weight, ob.weight);
        }
        let ca = robust_cost(&a, cfg.huber_delta);
        let cb = robust_cost(&b, cfg.huber_delta);
        assert_eq!(ca.to_bits(), cb.to_bits());
    }

    /// Like `aligned_window` but with a much gentler texture, so the
    /// sampled central-difference gradients track the bilinear interpolant
    /// to a few 1e-4 relative.
    fn gentle_window(k: &Intrinsics, cfg: &SolverConfig) -> SlidingWindow {
        let img = Arc::new(GrayImage::from_fn(96, 96, |x, y| {
            let (xf, yf) = (x as f64, y as f64);
            0.5 + 0.22 * (0.02 * xf).sin() * (0.017 * yf).cos()
                + 0.2 * (0.014 * xf - 0.011 * yf).cos()
        }));
        let grads = Arc::new(gradients(&img).unwrap());
        let mut window = SlidingWindow::new();
        for id in 0..2 {
            window.push(WindowFrame {
                id,
                image: img.clone(),
                grads: grads.clone(),
                pose: Pose::identity(),
            });
        }
        let z = 3.0;
        let mut id = 0;
        // Half-integer pixels: every patch sample sits at a bilinear cell
        // center, where the sampled gradients are most faithful.
        for y in (10..86).step_by(7) {
            for x in (10..86).step_by(7) {
                let px = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                window.points.push(ScenePoint {
                    id,
                    position: Point3::new(
                        (px.x - k.cx) * z / k.fx,
                        (px.y - k.cy) * z / k.fy,
                        z,
                    ),
                    ref_frame: 0,
                    ref_patch: extract_patch(&img, &px, cfg.patch_radius).unwrap(),
                    gate_patch: extract_patch(&img, &px, 2).unwrap(),
                    visibility: vec![1],
                });
                id += 1;
            }
        }
        window
    }

    #[test]
    fn assembled_gradient_matches_cost_finite_differences() {
        // Unrobust gradient (-J^T r) against central differences of the
        // total squared cost, checked for every free coordinate. The
        // perturbation is kept small enough that samples stay near cell
        // centers.
        let k = Intrinsics::new(60.0, 60.0, 48.0, 48.0, 0.0);
        let mut cfg = SolverConfig::default();
        cfg.huber_delta = f64::INFINITY; // unit weights
        let mut window = gentle_window(&k, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        window.frames[1].pose = se3_exp(&Twist::new(
            Vector3::new(
                rng.random_range(-2e-4..2e-4),
                rng.random_range(-2e-4..2e-4),
                rng.random_range(-2e-4..2e-4),
            ),
            Vector3::new(
                rng.random_range(-1e-4..1e-4),
                rng.random_range(-1e-4..1e-4),
                rng.random_range(-1e-4..1e-4),
            ),
        ));

        let layout = plan(&window);
        let poses: Vec<Pose> = window.frames.iter().map(|f| f.pose).collect();
        let positions: Vec<Point3<f64>> = layout
            .active_points
            .iter()
            .map(|pi| window.points[*pi].position)
            .collect();
        let obs = evaluate_all(&window, &layout, &poses, &positions, &k, &cfg);
        let ne = build_normal_equations(&obs, &layout.free_of_slot, layout.n_free, positions.len());

        let unrobust_cost = |poses: &[Pose], positions: &[Point3<f64>]| -> f64 {
            let obs = evaluate_all(&window, &layout, poses, positions, &k, &cfg);
            obs.iter().map(|o| 0.5 * o.residual.norm_squared()).sum()
        };

        let step = 1e-5;
        let grad_scale = ne.gradient_max_norm();
        // Pose coordinates of the single free frame.
        for c in 0..6 {
            let mut dv = nalgebra::Vector6::zeros();
            dv[c] = step;
            let mut pp = poses.clone();
            pp[1] = se3_exp(&Twist::from_vector(&dv)).compose(&poses[1]);
            dv[c] = -step;
            let mut pm = poses.clone();
            pm[1] = se3_exp(&Twist::from_vector(&dv)).compose(&poses[1]);
            let fd = (unrobust_cost(&pp, &positions) - unrobust_cost(&pm, &positions))
                / (2.0 * step);
            let g = ne.g_c[0][c]; // g = -dcost/dtheta
            let denom = fd.abs().max(0.05 * grad_scale);
            assert!(
                (g + fd).abs() / denom < 1e-3,
                "pose coord {}: g={} fd={}",
                c,
                g,
                fd
            );
        }
        // A few point coordinates.
        for j in (0..positions.len()).step_by(17) {
            for c in 0..3 {
                let mut xp = positions.clone();
                xp[j].coords[c] += step;
                let mut xm = positions.clone();
                xm[j].coords[c] -= step;
                let fd =
                    (unrobust_cost(&poses, &xp) - unrobust_cost(&poses, &xm)) / (2.0 * step);
                let g = ne.g_p[j][c];
                let denom = fd.abs().max(0.05 * grad_scale);
                assert!(
                    (g + fd).abs() / denom < 1e-3,
                    "point {} coord {}: g={} fd={}",
                    j,
                    c,
                    fd,
                    g
                );
            }
        }
    }
}
