//! SE(3) parameterization via twists and the exponential map, pinhole
//! projection, and stereo triangulation.
//!
//! Poses act on world points as `X_cam = R * X_world + t` (world-to-camera).
//! Pose increments compose on the left: `T <- exp(delta) * T`, which keeps
//! the pose Jacobians expressed in the camera frame.

use nalgebra::{Matrix2x3, Matrix2x6, Matrix3, Point3, Vector2, Vector3, Vector6};
use std::fmt;

/// Below this rotation angle exp/log switch to their series expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Default minimum camera-frame depth for a projection to count as visible.
pub const DEFAULT_MIN_DEPTH: f64 = 1e-3;

/// Default minimum disparity for stereo triangulation.
pub const DEFAULT_MIN_DISPARITY: f64 = 0.5;

/// Element of se(3): translational part `v` and rotational part `w`
/// (axis-angle, radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub v: Vector3<f64>,
    pub w: Vector3<f64>,
}

impl Twist {
    pub fn new(v: Vector3<f64>, w: Vector3<f64>) -> Self {
        Twist { v, w }
    }

    pub fn zero() -> Self {
        Twist {
            v: Vector3::zeros(),
            w: Vector3::zeros(),
        }
    }

    /// Stacked 6-vector `[v; w]`.
    pub fn as_vector(&self) -> Vector6<f64> {
        Vector6::new(self.v.x, self.v.y, self.v.z, self.w.x, self.w.y, self.w.z)
    }

    pub fn from_vector(t: &Vector6<f64>) -> Self {
        Twist {
            v: Vector3::new(t[0], t[1], t[2]),
            w: Vector3::new(t[3], t[4], t[5]),
        }
    }

    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }
}

/// Rigid-body transform stored as rotation matrix plus translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Camera center in world coordinates for a world-to-camera pose.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }

    /// Frobenius deviation of `RᵀR` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    /// Rotation angle in radians.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }
}

/// Angle of a rotation matrix in [0, pi]. Uses atan2 of the skew norm
/// against the trace, which stays accurate near the identity where the
/// acos form loses half the significant digits.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let sin = 0.5
        * Vector3::new(
            r[(2, 1)] - r[(1, 2)],
            r[(0, 2)] - r[(2, 0)],
            r[(1, 0)] - r[(0, 1)],
        )
        .norm();
    let cos = (r.trace() - 1.0) * 0.5;
    sin.atan2(cos)
}

/// Pinhole camera parameters. `baseline` is the stereo baseline in scene
/// units and must be positive when used for triangulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub baseline: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, baseline: f64) -> Self {
        Intrinsics {
            fx,
            fy,
            cx,
            cy,
            baseline,
        }
    }
}

/// Result of projecting a world point: subpixel coordinates plus the
/// camera-frame depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Vector2<f64>,
    pub depth: f64,
}

/// Rotation too close to pi for a stable logarithm; callers may perturb.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NearSingularRotation;

impl fmt::Display for NearSingularRotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rotation angle within 1e-6 of pi; log map is unstable")
    }
}

impl std::error::Error for NearSingularRotation {}

fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Exponential map se(3) -> SE(3), Rodrigues closed form with a 2nd-order
/// series below [`SMALL_ANGLE`].
pub fn se3_exp(t: &Twist) -> Pose {
    let theta = t.w.norm();
    let wx = skew(&t.w);
    let wx2 = wx * wx;

    let (rot, v_mat) = if theta < SMALL_ANGLE {
        let rot = Matrix3::identity() + wx + wx2 * 0.5;
        let v_mat = Matrix3::identity() + wx * 0.5 + wx2 * (1.0 / 6.0);
        (rot, v_mat)
    } else {
        let t2 = theta * theta;
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / t2;
        let c = (theta - theta.sin()) / (t2 * theta);
        let rot = Matrix3::identity() + wx * a + wx2 * b;
        let v_mat = Matrix3::identity() + wx * b + wx2 * c;
        (rot, v_mat)
    };

    Pose {
        rotation: rot,
        translation: v_mat * t.v,
    }
}

/// Logarithm map SE(3) -> se(3), inverse of [`se3_exp`].
///
/// Fails when the rotation angle is within 1e-6 of pi, where the axis is
/// not recoverable from the skew part.
pub fn se3_log(p: &Pose) -> Result<Twist, NearSingularRotation> {
    let theta = p.rotation_angle();
    if (std::f64::consts::PI - theta).abs() < 1e-6 {
        return Err(NearSingularRotation);
    }

    let w = if theta < SMALL_ANGLE {
        // R - Rᵀ = 2 sin(theta) * skew(axis); series at small angle.
        Vector3::new(
            p.rotation[(2, 1)] - p.rotation[(1, 2)],
            p.rotation[(0, 2)] - p.rotation[(2, 0)],
            p.rotation[(1, 0)] - p.rotation[(0, 1)],
        ) * 0.5
    } else {
        Vector3::new(
            p.rotation[(2, 1)] - p.rotation[(1, 2)],
            p.rotation[(0, 2)] - p.rotation[(2, 0)],
            p.rotation[(1, 0)] - p.rotation[(0, 1)],
        ) * (theta / (2.0 * theta.sin()))
    };

    let wx = skew(&w);
    let wx2 = wx * wx;
    let v_inv = if theta < SMALL_ANGLE {
        Matrix3::identity() - wx * 0.5 + wx2 * (1.0 / 12.0)
    } else {
        let t2 = theta * theta;
        let coeff = (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / t2;
        Matrix3::identity() - wx * 0.5 + wx2 * coeff
    };

    Ok(Twist {
        v: v_inv * p.translation,
        w,
    })
}

/// Project a world point through a world-to-camera pose and pinhole model.
///
/// Returns `None` when the camera-frame depth is at or below `min_depth`;
/// the caller treats the observation as invisible.
pub fn project(pose: &Pose, k: &Intrinsics, x: &Point3<f64>, min_depth: f64) -> Option<Projection> {
    let pc = pose.rotation * x.coords + pose.translation;
    if pc.z <= min_depth {
        return None;
    }
    let inv_z = 1.0 / pc.z;
    Some(Projection {
        pixel: Vector2::new(k.fx * pc.x * inv_z + k.cx, k.fy * pc.y * inv_z + k.cy),
        depth: pc.z,
    })
}

/// Analytic partials of the projected pixel with respect to a
/// left-multiplied twist increment on the pose (2x6) and to the world
/// point (2x3).
///
/// Twist columns are ordered `[v; w]`, matching [`Twist::as_vector`].
pub fn projection_jacobian(
    pose: &Pose,
    k: &Intrinsics,
    x: &Point3<f64>,
    min_depth: f64,
) -> Option<(Matrix2x6<f64>, Matrix2x3<f64>)> {
    let pc = pose.rotation * x.coords + pose.translation;
    if pc.z <= min_depth {
        return None;
    }
    let inv_z = 1.0 / pc.z;
    let inv_z2 = inv_z * inv_z;

    // d(pixel)/d(camera-frame point)
    let d_pix = Matrix2x3::new(
        k.fx * inv_z,
        0.0,
        -k.fx * pc.x * inv_z2,
        0.0,
        k.fy * inv_z,
        -k.fy * pc.y * inv_z2,
    );

    // Left increment: exp(d)·T·X ≈ pc + dv + dw × pc, so
    // d(pc)/d(twist) = [I | -skew(pc)].
    let mut d_pose = Matrix2x6::zeros();
    d_pose
        .fixed_view_mut::<2, 3>(0, 0)
        .copy_from(&(d_pix * Matrix3::identity()));
    d_pose
        .fixed_view_mut::<2, 3>(0, 3)
        .copy_from(&(d_pix * (-skew(&pc))));

    let d_point = d_pix * pose.rotation;
    Some((d_pose, d_point))
}

/// Back-project a rectified stereo match into the camera frame:
/// `z = fx * baseline / disparity`, x and y by inverse pinhole.
///
/// Returns `None` for disparities at or below `min_disparity` (too
/// distant to triangulate).
pub fn triangulate_stereo(
    pixel: &Vector2<f64>,
    disparity: f64,
    k: &Intrinsics,
    min_disparity: f64,
) -> Option<Point3<f64>> {
    assert!(k.baseline > 0.0, "triangulation requires a positive baseline");
    if disparity <= min_disparity {
        return None;
    }
    let z = k.fx * k.baseline / disparity;
    let x = (pixel.x - k.cx) * z / k.fx;
    let y = (pixel.y - k.cy) * z / k.fy;
    Some(Point3::new(x, y, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_twist(rng: &mut ChaCha8Rng, max_angle: f64) -> Twist {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let angle = rng.random_range(0.0..max_angle);
        Twist::new(v, axis * angle)
    }

    #[test]
    fn exp_of_zero_twist_is_identity() {
        let p = se3_exp(&Twist::zero());
        assert_relative_eq!(p.rotation, Matrix3::identity(), epsilon = 1e-15);
        assert_relative_eq!(p.translation, Vector3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn exp_quarter_turn_about_z() {
        let t = Twist::new(Vector3::zeros(), Vector3::new(0.0, 0.0, FRAC_PI_2));
        let p = se3_exp(&t);
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(p.rotation, expected, epsilon = 1e-12);
        assert_relative_eq!(p.translation, Vector3::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn exp_inverse_composition_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let t = random_twist(&mut rng, PI - 0.1);
            let neg = Twist::new(-t.v, -t.w);
            let p = se3_exp(&t).compose(&se3_exp(&neg));
            assert!((p.rotation - Matrix3::identity()).norm() < 1e-10);
            assert!(p.translation.norm() < 1e-10);
        }
    }

    #[test]
    fn exp_produces_valid_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let p = se3_exp(&random_twist(&mut rng, PI - 0.1));
            assert!(p.orthonormality_error() < 1e-9);
            assert!((p.rotation.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn log_of_identity_is_zero() {
        let t = se3_log(&Pose::identity()).unwrap();
        assert!(t.norm() < 1e-15);
    }

    #[test]
    fn log_of_pure_translation() {
        let p = Pose::new(Matrix3::identity(), Vector3::new(1.0, -2.0, 3.0));
        let t = se3_log(&p).unwrap();
        assert_relative_eq!(t.v, Vector3::new(1.0, -2.0, 3.0), epsilon = 1e-12);
        assert!(t.w.norm() < 1e-12);
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let t = random_twist(&mut rng, PI - 0.1);
            let back = se3_log(&se3_exp(&t)).unwrap();
            assert!(
                (back.as_vector() - t.as_vector()).norm() < 1e-9,
                "round trip failed for {:?}",
                t
            );
        }
    }

    #[test]
    fn exp_log_round_trip_small_angles() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..50 {
            let t = random_twist(&mut rng, 1e-9);
            let back = se3_log(&se3_exp(&t)).unwrap();
            assert!((back.as_vector() - t.as_vector()).norm() < 1e-12);
        }
    }

    #[test]
    fn log_near_pi_signals_singularity() {
        let t = Twist::new(Vector3::zeros(), Vector3::new(PI - 1e-9, 0.0, 0.0));
        assert!(se3_log(&se3_exp(&t)).is_err());
    }

    #[test]
    fn log_exp_round_trip_on_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..100 {
            let p = se3_exp(&random_twist(&mut rng, PI - 1e-3));
            let q = se3_exp(&se3_log(&p).unwrap());
            assert!((q.rotation - p.rotation).norm() < 1e-9);
            assert!((q.translation - p.translation).norm() < 1e-9);
        }
    }

    #[test]
    fn project_on_optical_axis() {
        let k = Intrinsics::new(100.0, 100.0, 50.0, 50.0, 0.0);
        let pr = project(
            &Pose::identity(),
            &k,
            &Point3::new(0.0, 0.0, 1.0),
            DEFAULT_MIN_DEPTH,
        )
        .unwrap();
        assert_relative_eq!(pr.pixel, Vector2::new(50.0, 50.0), epsilon = 1e-15);
        assert_relative_eq!(pr.depth, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn project_off_axis_pinhole_arithmetic() {
        // u = fx*x/z + cx = 100*0.5/1 + 50 = 100
        let k = Intrinsics::new(100.0, 100.0, 50.0, 50.0, 0.0);
        let pr = project(
            &Pose::identity(),
            &k,
            &Point3::new(0.5, 0.0, 1.0),
            DEFAULT_MIN_DEPTH,
        )
        .unwrap();
        assert_relative_eq!(pr.pixel, Vector2::new(100.0, 50.0), epsilon = 1e-12);
    }

    #[test]
    fn project_behind_camera_is_none() {
        let k = Intrinsics::new(100.0, 100.0, 50.0, 50.0, 0.0);
        assert!(project(
            &Pose::identity(),
            &k,
            &Point3::new(0.0, 0.0, -1.0),
            DEFAULT_MIN_DEPTH
        )
        .is_none());
    }

    /// Central finite differences of `project`, the independent oracle for
    /// the analytic Jacobians.
    fn fd_jacobians(
        pose: &Pose,
        k: &Intrinsics,
        x: &Point3<f64>,
        step: f64,
    ) -> (Matrix2x6<f64>, Matrix2x3<f64>) {
        let mut d_pose = Matrix2x6::zeros();
        for i in 0..6 {
            let mut plus = Vector6::zeros();
            plus[i] = step;
            let mut minus = Vector6::zeros();
            minus[i] = -step;
            let pp = se3_exp(&Twist::from_vector(&plus)).compose(pose);
            let pm = se3_exp(&Twist::from_vector(&minus)).compose(pose);
            let up = project(&pp, k, x, 1e-9).unwrap().pixel;
            let um = project(&pm, k, x, 1e-9).unwrap().pixel;
            d_pose.set_column(i, &((up - um) / (2.0 * step)));
        }
        let mut d_point = Matrix2x3::zeros();
        for i in 0..3 {
            let mut xp = *x;
            xp.coords[i] += step;
            let mut xm = *x;
            xm.coords[i] -= step;
            let up = project(pose, k, &xp, 1e-9).unwrap().pixel;
            let um = project(pose, k, &xm, 1e-9).unwrap().pixel;
            d_point.set_column(i, &((up - um) / (2.0 * step)));
        }
        (d_pose, d_point)
    }

    #[test]
    fn projection_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let k = Intrinsics::new(320.0, 300.0, 160.0, 120.0, 0.0);
        let mut checked = 0;
        while checked < 100 {
            let pose = se3_exp(&random_twist(&mut rng, 0.5));
            let x = Point3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(0.5..50.0),
            );
            // Point must be in front of the perturbed camera too.
            let pc = pose.rotation * x.coords + pose.translation;
            if pc.z < 0.5 {
                continue;
            }
            let (jp, jx) = projection_jacobian(&pose, &k, &x, DEFAULT_MIN_DEPTH).unwrap();
            let (fp, fx) = fd_jacobians(&pose, &k, &x, 1e-6);
            for c in 0..6 {
                let denom = fp.column(c).norm().max(1e-9);
                assert!(
                    (jp.column(c) - fp.column(c)).norm() / denom < 1e-4,
                    "pose column {} mismatch",
                    c
                );
            }
            for c in 0..3 {
                let denom = fx.column(c).norm().max(1e-9);
                assert!(
                    (jx.column(c) - fx.column(c)).norm() / denom < 1e-4,
                    "point column {} mismatch",
                    c
                );
            }
            checked += 1;
        }
    }

    #[test]
    fn translation_columns_match_point_jacobian_at_identity() {
        let k = Intrinsics::new(200.0, 200.0, 100.0, 80.0, 0.0);
        let x = Point3::new(0.4, -0.2, 2.5);
        let (jp, jx) = projection_jacobian(&Pose::identity(), &k, &x, DEFAULT_MIN_DEPTH).unwrap();
        // At identity the frame mapping is the identity, so the pure
        // translation block equals d(pixel)/d(point).
        assert_relative_eq!(
            jp.fixed_view::<2, 3>(0, 0).into_owned(),
            jx,
            epsilon = 1e-12
        );
    }

    #[test]
    fn point_jacobian_on_axis_has_no_cross_terms() {
        let k = Intrinsics::new(150.0, 170.0, 80.0, 60.0, 0.0);
        let (_, jx) = projection_jacobian(
            &Pose::identity(),
            &k,
            &Point3::new(0.0, 0.0, 4.0),
            DEFAULT_MIN_DEPTH,
        )
        .unwrap();
        assert_eq!(jx[(0, 1)], 0.0);
        assert_eq!(jx[(1, 0)], 0.0);
    }

    #[test]
    fn triangulate_unit_depth_at_principal_point() {
        let k = Intrinsics::new(100.0, 100.0, 64.0, 48.0, 0.25);
        let d = k.fx * k.baseline; // z = 1
        let p = triangulate_stereo(
            &Vector2::new(64.0, 48.0),
            d,
            &k,
            DEFAULT_MIN_DISPARITY,
        )
        .unwrap();
        assert_relative_eq!(p, Point3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn triangulate_zero_disparity_is_none() {
        let k = Intrinsics::new(100.0, 100.0, 64.0, 48.0, 0.25);
        assert!(triangulate_stereo(&Vector2::new(10.0, 10.0), 0.0, &k, 0.5).is_none());
    }

    #[test]
    fn project_triangulate_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let k = Intrinsics::new(320.0, 320.0, 160.0, 120.0, 0.3);
        for _ in 0..100 {
            let x = Point3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.5..30.0),
            );
            // Rectified pair: right camera offset by -baseline along x.
            let left = Pose::identity();
            let right = Pose::new(Matrix3::identity(), Vector3::new(-k.baseline, 0.0, 0.0));
            let ul = project(&left, &k, &x, 1e-9).unwrap();
            let ur = project(&right, &k, &x, 1e-9).unwrap();
            assert_relative_eq!(ul.pixel.y, ur.pixel.y, epsilon = 1e-9);
            let disparity = ul.pixel.x - ur.pixel.x;
            let back = triangulate_stereo(&ul.pixel, disparity, &k, 0.0).unwrap();
            assert!((back - x).norm() < 1e-9, "{:?} vs {:?}", back, x);
        }
    }
}
