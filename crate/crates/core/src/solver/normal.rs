//! Block-structured Gauss-Newton normal equations and their Schur
//! reduction.
//!
//! Because the reference patch is fixed, poses couple only through scene
//! points: the camera-camera part of the Hessian is strictly block
//! diagonal, and eliminating the 3x3 point blocks leaves a dense camera
//! system of at most 6 x window_size unknowns.

use crate::solver::Observation;
use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Matrix6x3, Vector3, Vector6};
use std::fmt;

/// Weighted `J^T J` and `-J^T r` accumulated into blocks.
///
/// Camera blocks exist only for free frames (gauge frames contribute no
/// pose block); point blocks are always built.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub n_free: usize,
    /// 6x6 diagonal camera blocks, one per free frame.
    pub h_cc: Vec<Matrix6<f64>>,
    /// Camera gradient segments (`-J^T r`).
    pub g_c: Vec<Vector6<f64>>,
    /// 3x3 diagonal point blocks, one per active point.
    pub h_pp: Vec<Matrix3<f64>>,
    /// Point gradient segments.
    pub g_p: Vec<Vector3<f64>>,
    /// Camera-point coupling blocks per point, sorted by free-frame index.
    pub h_cp: Vec<Vec<(usize, Matrix6x3<f64>)>>,
}

impl NormalEquations {
    pub fn n_points(&self) -> usize {
        self.h_pp.len()
    }

    /// Max-norm of the stacked gradient.
    pub fn gradient_max_norm(&self) -> f64 {
        let cam = self
            .g_c
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        self.g_p
            .iter()
            .flat_map(|g| g.iter())
            .fold(cam, |m, v| m.max(v.abs()))
    }

    /// Dense (6F + 3N) Hessian reconstructed from the blocks. Used by the
    /// structure checks; the solver itself never forms this.
    pub fn dense_hessian(&self) -> DMatrix<f64> {
        let nf = self.n_free;
        let np = self.n_points();
        let dim = 6 * nf + 3 * np;
        let mut h = DMatrix::zeros(dim, dim);
        for (f, block) in self.h_cc.iter().enumerate() {
            h.view_mut((6 * f, 6 * f), (6, 6)).copy_from(block);
        }
        for (j, block) in self.h_pp.iter().enumerate() {
            let o = 6 * nf + 3 * j;
            h.view_mut((o, o), (3, 3)).copy_from(block);
        }
        for (j, blocks) in self.h_cp.iter().enumerate() {
            let col = 6 * nf + 3 * j;
            for (f, w) in blocks {
                h.view_mut((6 * f, col), (6, 3)).copy_from(w);
                h.view_mut((col, 6 * f), (3, 6)).copy_from(&w.transpose());
            }
        }
        h
    }

    /// Dense stacked gradient, camera segments first.
    pub fn dense_gradient(&self) -> DVector<f64> {
        let nf = self.n_free;
        let mut g = DVector::zeros(6 * nf + 3 * self.n_points());
        for (f, seg) in self.g_c.iter().enumerate() {
            g.rows_mut(6 * f, 6).copy_from(seg);
        }
        for (j, seg) in self.g_p.iter().enumerate() {
            g.rows_mut(6 * nf + 3 * j, 3).copy_from(seg);
        }
        g
    }
}

/// Assemble the normal equations from weighted observations.
///
/// `free_of_slot` maps a window slot to its free-frame index, or `None`
/// for frames held constant to fixate the gauge. Observations in fixed
/// frames still contribute to their point blocks.
pub fn build_normal_equations(
    observations: &[Observation],
    free_of_slot: &[Option<usize>],
    n_free: usize,
    n_points: usize,
) -> NormalEquations {
    let mut ne = NormalEquations {
        n_free,
        h_cc: vec![Matrix6::zeros(); n_free],
        g_c: vec![Vector6::zeros(); n_free],
        h_pp: vec![Matrix3::zeros(); n_points],
        g_p: vec![Vector3::zeros(); n_points],
        h_cp: vec![Vec::new(); n_points],
    };
    for obs in observations {
        let w = obs.weight;
        let j = obs.point_local;
        let jx_t = obs.jac_point.transpose();
        ne.h_pp[j] += &jx_t * &obs.jac_point * w;
        ne.g_p[j] -= &jx_t * &obs.residual * w;
        if let Some(f) = free_of_slot[obs.frame_slot] {
            let jp_t = obs.jac_pose.transpose();
            ne.h_cc[f] += &jp_t * &obs.jac_pose * w;
            ne.g_c[f] -= &jp_t * &obs.residual * w;
            let coupling = &jp_t * &obs.jac_point * w;
            match ne.h_cp[j].binary_search_by_key(&f, |e| e.0) {
                Ok(pos) => ne.h_cp[j][pos].1 += coupling,
                Err(pos) => ne.h_cp[j].insert(pos, (f, coupling)),
            }
        }
    }
    ne
}

/// The damped reduced camera system could not be factorized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularSystem;

impl fmt::Display for SingularSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "damped reduced camera system is singular")
    }
}

impl std::error::Error for SingularSystem {}

/// Updates produced by one damped solve.
#[derive(Debug, Clone)]
pub struct SchurSolution {
    pub pose_updates: Vec<Vector6<f64>>,
    pub point_updates: Vec<Vector3<f64>>,
    /// Points whose damped block was singular; their update is zero this
    /// iteration.
    pub skipped_points: Vec<usize>,
}

impl SchurSolution {
    pub fn step_norm(&self) -> f64 {
        let s: f64 = self
            .pose_updates
            .iter()
            .map(|v| v.norm_squared())
            .chain(self.point_updates.iter().map(|v| v.norm_squared()))
            .sum();
        s.sqrt()
    }
}

fn damp6(h: &Matrix6<f64>, lambda: f64) -> Matrix6<f64> {
    let mut out = *h;
    for i in 0..6 {
        out[(i, i)] += lambda * h[(i, i)];
    }
    out
}

fn damp3(h: &Matrix3<f64>, lambda: f64) -> Matrix3<f64> {
    let mut out = *h;
    for i in 0..3 {
        out[(i, i)] += lambda * h[(i, i)];
    }
    out
}

/// Solve the damped system by eliminating the point blocks.
///
/// Diagonals are augmented multiplicatively (`H + lambda * diag(H)`), the
/// reduced camera matrix `S = H_cc - sum W A^-1 W^T` is solved densely,
/// and point updates follow by back-substitution.
pub fn schur_solve(ne: &NormalEquations, lambda: f64) -> Result<SchurSolution, SingularSystem> {
    assert!(lambda > 0.0);
    let nf = ne.n_free;
    let np = ne.n_points();

    let mut hpp_inv: Vec<Option<Matrix3<f64>>> = Vec::with_capacity(np);
    let mut skipped_points = Vec::new();
    for j in 0..np {
        let damped = damp3(&ne.h_pp[j], lambda);
        match damped.cholesky() {
            Some(ch) => hpp_inv.push(Some(ch.inverse())),
            None => {
                skipped_points.push(j);
                hpp_inv.push(None);
            }
        }
    }

    let pose_updates = if nf == 0 {
        Vec::new()
    } else {
        let mut s = DMatrix::zeros(6 * nf, 6 * nf);
        let mut rhs = DVector::zeros(6 * nf);
        for f in 0..nf {
            s.view_mut((6 * f, 6 * f), (6, 6))
                .copy_from(&damp6(&ne.h_cc[f], lambda));
            rhs.rows_mut(6 * f, 6).copy_from(&ne.g_c[f]);
        }
        for j in 0..np {
            let Some(inv) = &hpp_inv[j] else { continue };
            let blocks = &ne.h_cp[j];
            if blocks.is_empty() {
                continue;
            }
            let y = inv * ne.g_p[j];
            for (a, wa) in blocks {
                let wa_inv = wa * inv;
                let mut seg = rhs.rows_mut(6 * a, 6);
                seg -= wa * y;
                for (b, wb) in blocks {
                    let contrib = wa_inv * wb.transpose();
                    let mut view = s.view_mut((6 * a, 6 * b), (6, 6));
                    view -= contrib;
                }
            }
        }
        let solution = match s.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => s.lu().solve(&rhs).ok_or(SingularSystem)?,
        };
        (0..nf)
            .map(|f| Vector6::from(solution.fixed_rows::<6>(6 * f)))
            .collect()
    };

    let mut point_updates = vec![Vector3::zeros(); np];
    for j in 0..np {
        let Some(inv) = &hpp_inv[j] else { continue };
        let mut rhs = ne.g_p[j];
        for (a, wa) in &ne.h_cp[j] {
            rhs -= wa.transpose() * pose_updates[*a];
        }
        point_updates[j] = inv * rhs;
    }

    Ok(SchurSolution {
        pose_updates,
        point_updates,
        skipped_points,
    })
}
