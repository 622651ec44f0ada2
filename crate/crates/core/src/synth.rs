//! Synthetic scenes with analytic, band-limited textures, a ray-cast
//! renderer, and ground-truth trajectory/perturbation helpers for
//! verification at desk scale.
//!
//! The texture is a sum of sinusoids, so rendered images are smooth
//! enough for finite-difference Jacobian oracles while still carrying
//! texture for gradient-based point selection.

use crate::geometry::{Intrinsics, Pose, Twist};
use crate::image::GrayImage;
use crate::stereo::{DisparityMap, INVALID_DISPARITY};
use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

/// Nominal mean scene depth of the built scenarios, in scene units. Noise
/// levels quoted as a fraction of scene scale refer to this.
pub const SCENE_SCALE: f64 = 5.0;

/// Smooth procedural texture: a bias plus eight sinusoids over the plane's
/// local (u, v) coordinates.
#[derive(Debug, Clone)]
pub struct SinusoidTexture {
    components: Vec<(f64, f64, f64, f64)>, // amplitude, ku, kv, phase
}

impl SinusoidTexture {
    /// Band-limited random texture with wavelengths in
    /// `[min_period, max_period]` scene units. Longer wavelengths get
    /// larger amplitudes; total amplitude stays within [0.05, 0.95].
    pub fn random(rng: &mut ChaCha8Rng, min_period: f64, max_period: f64) -> Self {
        let n = 8;
        let mut raw = Vec::with_capacity(n);
        let mut amp_sum = 0.0;
        for _ in 0..n {
            let period = rng.random_range(min_period..max_period);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let k = std::f64::consts::TAU / period;
            let amp = period;
            amp_sum += amp;
            raw.push((
                amp,
                k * angle.cos(),
                k * angle.sin(),
                rng.random_range(0.0..std::f64::consts::TAU),
            ));
        }
        let scale = 0.42 / amp_sum;
        SinusoidTexture {
            components: raw
                .into_iter()
                .map(|(a, ku, kv, p)| (a * scale, ku, kv, p))
                .collect(),
        }
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let mut val = 0.5;
        for (a, ku, kv, phase) in &self.components {
            val += a * (ku * u + kv * v + phase).sin();
        }
        val.clamp(0.0, 1.0)
    }
}

/// A textured rectangle (possibly unbounded) in world space.
#[derive(Debug, Clone)]
pub struct TexturedPlane {
    pub origin: Point3<f64>,
    /// In-plane unit axes; the normal is their cross product.
    pub axis_u: Vector3<f64>,
    pub axis_v: Vector3<f64>,
    pub half_u: f64,
    pub half_v: f64,
    pub texture: SinusoidTexture,
}

impl TexturedPlane {
    fn normal(&self) -> Vector3<f64> {
        self.axis_u.cross(&self.axis_v)
    }

    /// Ray parameter and local (u, v) of the hit, if any.
    fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let n = self.normal();
        let denom = dir.dot(&n);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.origin - origin).dot(&n) / denom;
        if t <= 1e-6 {
            return None;
        }
        let hit = origin + dir * t;
        let rel = hit - self.origin;
        let u = rel.dot(&self.axis_u);
        let v = rel.dot(&self.axis_v);
        if u.abs() > self.half_u || v.abs() > self.half_v {
            return None;
        }
        Some((t, u, v))
    }
}

/// Plane set plus a constant background intensity.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub planes: Vec<TexturedPlane>,
    pub background: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Plane,
    Corridor,
    PointCloud,
}

impl Scenario {
    pub fn parse(name: &str) -> Option<Scenario> {
        match name {
            "plane" => Some(Scenario::Plane),
            "corridor" => Some(Scenario::Corridor),
            "point-cloud" => Some(Scenario::PointCloud),
            _ => None,
        }
    }
}

impl SyntheticScene {
    /// Single frontoparallel plane at the given depth, unbounded extent.
    /// The workhorse of the unit tests.
    pub fn frontoparallel_plane(depth: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SyntheticScene {
            planes: vec![TexturedPlane {
                origin: Point3::new(0.0, 0.0, depth),
                axis_u: Vector3::x(),
                axis_v: Vector3::y(),
                half_u: f64::INFINITY,
                half_v: f64::INFINITY,
                texture: SinusoidTexture::random(&mut rng, 0.5, 2.5),
            }],
            background: 0.5,
        }
    }

    pub fn generate(scenario: Scenario, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match scenario {
            Scenario::Plane => {
                // One large plane, slightly tilted for depth variation.
                let tilt = 0.15f64;
                SyntheticScene {
                    planes: vec![TexturedPlane {
                        origin: Point3::new(0.0, 0.0, 6.0),
                        axis_u: Vector3::new(tilt.cos(), 0.0, -tilt.sin()),
                        axis_v: Vector3::y(),
                        half_u: 40.0,
                        half_v: 40.0,
                        texture: SinusoidTexture::random(&mut rng, 0.5, 2.5),
                    }],
                    background: 0.5,
                }
            }
            Scenario::Corridor => {
                let mid = 9.0;
                let half_len = 9.0;
                let (hw, hh) = (1.4, 1.0);
                let wall = |origin: Point3<f64>,
                                axis_u: Vector3<f64>,
                                axis_v: Vector3<f64>,
                                half_u: f64,
                                half_v: f64,
                                rng: &mut ChaCha8Rng| TexturedPlane {
                    origin,
                    axis_u,
                    axis_v,
                    half_u,
                    half_v,
                    texture: SinusoidTexture::random(rng, 0.5, 2.5),
                };
                SyntheticScene {
                    planes: vec![
                        // floor (+y is down in camera coordinates)
                        wall(
                            Point3::new(0.0, hh, mid),
                            Vector3::x(),
                            Vector3::z(),
                            hw,
                            half_len,
                            &mut rng,
                        ),
                        // ceiling
                        wall(
                            Point3::new(0.0, -hh, mid),
                            Vector3::x(),
                            Vector3::z(),
                            hw,
                            half_len,
                            &mut rng,
                        ),
                        // left wall
                        wall(
                            Point3::new(-hw, 0.0, mid),
                            Vector3::y(),
                            Vector3::z(),
                            hh,
                            half_len,
                            &mut rng,
                        ),
                        // right wall
                        wall(
                            Point3::new(hw, 0.0, mid),
                            Vector3::y(),
                            Vector3::z(),
                            hh,
                            half_len,
                            &mut rng,
                        ),
                        // end cap
                        wall(
                            Point3::new(0.0, 0.0, mid + half_len),
                            Vector3::x(),
                            Vector3::y(),
                            hw,
                            hh,
                            &mut rng,
                        ),
                    ],
                    background: 0.5,
                }
            }
            Scenario::PointCloud => {
                // A field of large, roughly camera-facing facets at spread
                // depths, plus a backdrop. Gentle tilts keep the
                // unwarped-patch model faithful while the depth spread
                // disambiguates translation from rotation.
                let mut planes = Vec::new();
                for _ in 0..16 {
                    let center = Point3::new(
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-2.2..2.2),
                        rng.random_range(4.0..9.0),
                    );
                    let mut u = Vector3::new(
                        1.0,
                        rng.random_range(-0.1..0.1),
                        rng.random_range(-0.1..0.1),
                    );
                    u.normalize_mut();
                    let mut v = Vector3::new(
                        rng.random_range(-0.1..0.1),
                        1.0,
                        rng.random_range(-0.1..0.1),
                    );
                    v -= u * v.dot(&u);
                    v.normalize_mut();
                    planes.push(TexturedPlane {
                        origin: center,
                        axis_u: u,
                        axis_v: v,
                        half_u: rng.random_range(1.2..1.8),
                        half_v: rng.random_range(1.2..1.8),
                        texture: SinusoidTexture::random(&mut rng, 0.45, 1.8),
                    });
                }
                planes.push(TexturedPlane {
                    origin: Point3::new(0.0, 0.0, 11.0),
                    axis_u: Vector3::x(),
                    axis_v: Vector3::y(),
                    half_u: 60.0,
                    half_v: 60.0,
                    texture: SinusoidTexture::random(&mut rng, 1.0, 4.0),
                });
                SyntheticScene {
                    planes,
                    background: 0.5,
                }
            }
        }
    }
}

/// Ray-cast the scene from a world-to-camera pose. Returns the image and
/// the per-pixel camera depth (0 where no geometry was hit).
pub fn render_synthetic(
    scene: &SyntheticScene,
    pose_w2c: &Pose,
    k: &Intrinsics,
    width: usize,
    height: usize,
) -> (GrayImage, Vec<f64>) {
    let c2w = pose_w2c.inverse();
    let origin = Point3::from(c2w.translation);
    let mut data = vec![0.0; width * height];
    let mut depth = vec![0.0; width * height];

    data.par_chunks_mut(width)
        .zip(depth.par_chunks_mut(width))
        .enumerate()
        .for_each(|(y, (img_row, depth_row))| {
            for x in 0..width {
                // Camera ray with unit z component: the ray parameter of a
                // hit equals its camera depth.
                let dir_cam = Vector3::new(
                    (x as f64 - k.cx) / k.fx,
                    (y as f64 - k.cy) / k.fy,
                    1.0,
                );
                let dir = c2w.rotation * dir_cam;
                let mut best: Option<(f64, f64)> = None; // (depth, intensity)
                for plane in &scene.planes {
                    if let Some((t, u, v)) = plane.intersect(&origin, &dir) {
                        if best.map_or(true, |(bt, _)| t < bt) {
                            best = Some((t, plane.texture.eval(u, v)));
                        }
                    }
                }
                match best {
                    Some((t, intensity)) => {
                        img_row[x] = intensity;
                        depth_row[x] = t;
                    }
                    None => {
                        img_row[x] = scene.background;
                        depth_row[x] = 0.0;
                    }
                }
            }
        });

    (GrayImage::new(width, height, data), depth)
}

/// Gentle forward ground-truth trajectory: mostly +z motion with a slight
/// sway and yaw. Returns world-to-camera poses.
pub fn forward_trajectory(n_frames: usize, step: f64) -> Vec<Pose> {
    (0..n_frames)
        .map(|i| {
            let s = i as f64;
            let center = Vector3::new(
                0.05 * (0.5 * s).sin(),
                0.03 * (0.4 * s).cos() - 0.03,
                step * s,
            );
            let yaw = 0.015 * (0.35 * s).sin();
            let pitch = 0.008 * (0.3 * s + 1.0).sin();
            let (cy, sy) = (yaw.cos(), yaw.sin());
            let (cp, sp) = (pitch.cos(), pitch.sin());
            let r_yaw = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
            let r_pitch = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
            // Camera-to-world: orientation plus camera center.
            let c2w = Pose::new(r_yaw * r_pitch, center);
            c2w.inverse()
        })
        .collect()
}

/// Left-multiply each pose except the first by a random twist with the
/// given rotation/translation scales. The first frame is the gauge and is
/// kept exact.
pub fn perturb_trajectory(
    gt_w2c: &[Pose],
    sigma_rot: f64,
    sigma_trans: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Pose> {
    let rot = Normal::new(0.0, sigma_rot / 3f64.sqrt()).unwrap();
    let trans = Normal::new(0.0, sigma_trans / 3f64.sqrt()).unwrap();
    gt_w2c
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            if i == 0 {
                return *pose;
            }
            let noise = Twist::new(
                Vector3::new(
                    trans.sample(rng),
                    trans.sample(rng),
                    trans.sample(rng),
                ),
                Vector3::new(rot.sample(rng), rot.sample(rng), rot.sample(rng)),
            );
            crate::geometry::se3_exp(&noise).compose(pose)
        })
        .collect()
}

/// Convert a rendered depth raster into a disparity map, optionally
/// corrupting the depths with multiplicative Gaussian noise. Zero depth
/// stays invalid.
pub fn disparity_from_depth(
    depth: &[f64],
    width: usize,
    height: usize,
    k: &Intrinsics,
    depth_noise_frac: f64,
    rng: &mut ChaCha8Rng,
) -> DisparityMap {
    assert!(k.baseline > 0.0);
    assert_eq!(depth.len(), width * height);
    let noise = Normal::new(0.0, depth_noise_frac.max(0.0)).unwrap();
    let disp: Vec<f32> = depth
        .iter()
        .map(|z| {
            if *z <= 0.0 {
                return INVALID_DISPARITY;
            }
            let zn = if depth_noise_frac > 0.0 {
                z * (1.0 + noise.sample(rng).clamp(-0.3, 0.3))
            } else {
                *z
            };
            (k.fx * k.baseline / zn) as f32
        })
        .collect();
    DisparityMap::from_raw(width, height, disp)
}
