//! Winner-takes-all SAD block matching with a left-right consistency
//! check. Used only to initialize scene point depths; the photometric
//! refinement does the rest, so there is no subpixel interpolation.

use crate::geometry::{triangulate_stereo, Intrinsics};
use crate::image::GrayImage;
use nalgebra::{Point3, Vector2};
use rayon::prelude::*;
use std::fmt;

/// Marker for pixels without a disparity estimate.
pub const INVALID_DISPARITY: f32 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoConfig {
    /// Number of disparities searched, in pixels.
    pub max_disparity: usize,
    /// SAD aggregation window radius (3 -> 7x7 window).
    pub sad_radius: usize,
    /// Maximum left-right disagreement in pixels.
    pub lr_tolerance: f64,
}

impl Default for StereoConfig {
    fn default() -> Self {
        StereoConfig {
            max_disparity: 128,
            sad_radius: 3,
            lr_tolerance: 1.0,
        }
    }
}

/// Per-pixel disparity raster; invalid pixels carry [`INVALID_DISPARITY`].
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    disp: Vec<f32>,
}

impl DisparityMap {
    pub fn new_invalid(width: usize, height: usize) -> Self {
        DisparityMap {
            width,
            height,
            disp: vec![INVALID_DISPARITY; width * height],
        }
    }

    /// Wrap a raw disparity buffer (values < 0 are invalid).
    pub fn from_raw(width: usize, height: usize, disp: Vec<f32>) -> Self {
        assert_eq!(disp.len(), width * height);
        DisparityMap {
            width,
            height,
            disp,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f32> {
        let d = self.disp[y * self.width + x];
        (d >= 0.0).then_some(d)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, d: f32) {
        self.disp[y * self.width + x] = d;
    }

    pub fn valid_count(&self) -> usize {
        self.disp.iter().filter(|d| **d >= 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimensionMismatch {
    pub left: (usize, usize),
    pub right: (usize, usize),
}

impl fmt::Display for DimensionMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "stereo pair dimensions differ: {}x{} vs {}x{}",
            self.left.0, self.left.1, self.right.0, self.right.1
        )
    }
}

impl std::error::Error for DimensionMismatch {}

/// One-directional WTA matcher: pixel (x, y) in `src` is compared against
/// (x + sign*d, y) in `dst` for d in [0, max_disparity]. Ties break toward
/// the smaller disparity. Rows are independent and matched in parallel.
pub fn block_match_directed(
    src: &GrayImage,
    dst: &GrayImage,
    sign: i64,
    cfg: &StereoConfig,
) -> DisparityMap {
    let (w, h) = (src.width(), src.height());
    let r = cfg.sad_radius as i64;
    let mut disp = vec![INVALID_DISPARITY; w * h];

    disp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let y = y as i64;
        if y < r || y >= h as i64 - r {
            return;
        }
        for x in r..w as i64 - r {
            let mut best_d = None;
            let mut best_cost = f64::INFINITY;
            for d in 0..=cfg.max_disparity as i64 {
                let xd = x + sign * d;
                if xd - r < 0 || xd + r >= w as i64 {
                    continue;
                }
                let mut cost = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let a = src.get((x + dx) as usize, (y + dy) as usize);
                        let b = dst.get((xd + dx) as usize, (y + dy) as usize);
                        cost += (a - b).abs();
                    }
                }
                if cost < best_cost {
                    best_cost = cost;
                    best_d = Some(d);
                }
            }
            if let Some(d) = best_d {
                row[x as usize] = d as f32;
            }
        }
    });

    DisparityMap {
        width: w,
        height: h,
        disp,
    }
}

/// Brute-force SAD disparity for a rectified pair, with pixels failing the
/// left-right check (or at window borders) marked invalid. Disparities are
/// integer; there is no subpixel refinement.
pub fn block_match(
    left: &GrayImage,
    right: &GrayImage,
    cfg: &StereoConfig,
) -> Result<DisparityMap, DimensionMismatch> {
    if left.width() != right.width() || left.height() != right.height() {
        return Err(DimensionMismatch {
            left: (left.width(), left.height()),
            right: (right.width(), right.height()),
        });
    }
    // Left features sit to the right of their right-image matches:
    // u_R = u_L - d.
    let d_left = block_match_directed(left, right, -1, cfg);
    let d_right = block_match_directed(right, left, 1, cfg);

    let (w, h) = (left.width(), left.height());
    let mut out = DisparityMap::new_invalid(w, h);
    for y in 0..h {
        for x in 0..w {
            let Some(dl) = d_left.get(x, y) else {
                continue;
            };
            let xr = x as i64 - dl as i64;
            if xr < 0 {
                continue;
            }
            let Some(dr) = d_right.get(xr as usize, y) else {
                continue;
            };
            if (dl as f64 - dr as f64).abs() <= cfg.lr_tolerance {
                out.set(x, y, dl);
            }
        }
    }
    Ok(out)
}

/// Triangulate candidate scene points for the selected pixels that carry a
/// valid disparity. Points are returned in the frame's camera coordinates;
/// the pipeline maps them to world via the frame pose.
pub fn init_points_from_disparity(
    dmap: &DisparityMap,
    pixels: &[(usize, usize)],
    k: &Intrinsics,
    min_disparity: f64,
) -> Vec<((usize, usize), Point3<f64>)> {
    pixels
        .iter()
        .filter_map(|&(x, y)| {
            let d = dmap.get(x, y)?;
            let p = triangulate_stereo(
                &Vector2::new(x as f64, y as f64),
                d as f64,
                k,
                min_disparity,
            )?;
            Some(((x, y), p))
        })
        .collect()
}
