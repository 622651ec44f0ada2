//! New scene-point pixels are 3x3 local maxima of the gradient magnitude,
//! excluding a mask of cells already occupied by projections of existing
//! points. Selection happens at integer coordinates.

use crate::image::{gradient_magnitude, GrayImage};
use nalgebra::Vector2;

/// Per-pixel validity mask for new-point selection.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMask {
    width: usize,
    height: usize,
    valid: Vec<bool>,
}

impl OccupancyMask {
    pub fn all_valid(width: usize, height: usize) -> Self {
        OccupancyMask {
            width,
            height,
            valid: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    /// Non-maxima suppression radius (1 -> 3x3 neighborhood).
    pub nms_radius: usize,
    /// Radius of the square block reserved around existing-point
    /// projections (1 -> 3x3 area).
    pub mask_block_radius: usize,
    /// Gradient magnitude must strictly exceed this to be selectable. Any
    /// nonvanishing gradient is usable, so the default is 0.
    pub min_gradient: f64,
    /// Pixels closer than this to the border are skipped, so that the
    /// reference patch fits inside the image. Callers set it to
    /// max(nms_radius, patch_radius).
    pub border_margin: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            nms_radius: 1,
            mask_block_radius: 1,
            min_gradient: 0.0,
            border_margin: 1,
        }
    }
}

/// Invalidate all in-bounds pixels within Chebyshev distance `radius` of
/// the rounded position. Blocks are clipped at the borders; overlapping
/// marks union.
pub fn mark_occupied(mask: &mut OccupancyMask, px: &Vector2<f64>, radius: usize) {
    let cx = px.x.round() as i64;
    let cy = px.y.round() as i64;
    let r = radius as i64;
    for y in cy - r..=cy + r {
        if y < 0 || y >= mask.height as i64 {
            continue;
        }
        for x in cx - r..=cx + r {
            if x < 0 || x >= mask.width as i64 {
                continue;
            }
            mask.valid[y as usize * mask.width + x as usize] = false;
        }
    }
}

/// Select pixels that are local maxima of the gradient magnitude within
/// the NMS neighborhood, on valid mask cells, away from the border.
///
/// Ties break deterministically: a pixel must be strictly greater than
/// every neighbor that precedes it in row-major order and at least as
/// large as every neighbor that follows, so on a plateau only the first
/// pixel survives.
pub fn select_pixels(
    img: &GrayImage,
    mask: &OccupancyMask,
    cfg: &SelectionConfig,
) -> Vec<(usize, usize)> {
    let Ok(grad) = gradient_magnitude(img) else {
        return Vec::new();
    };
    select_pixels_from_magnitude(&grad, img.width(), img.height(), mask, cfg)
}

/// Same as [`select_pixels`] but on a precomputed gradient-magnitude
/// raster, which the pipeline already has.
pub fn select_pixels_from_magnitude(
    grad: &[f64],
    width: usize,
    height: usize,
    mask: &OccupancyMask,
    cfg: &SelectionConfig,
) -> Vec<(usize, usize)> {
    assert_eq!(grad.len(), width * height);
    assert_eq!((mask.width, mask.height), (width, height));
    let margin = cfg.border_margin.max(cfg.nms_radius) as i64;
    let r = cfg.nms_radius as i64;
    let mut selected = Vec::new();
    if 2 * margin >= width as i64 || 2 * margin >= height as i64 {
        return selected;
    }
    for y in margin..height as i64 - margin {
        for x in margin..width as i64 - margin {
            if !mask.is_valid(x as usize, y as usize) {
                continue;
            }
            let g = grad[y as usize * width + x as usize];
            if g <= cfg.min_gradient {
                continue;
            }
            let here = y * width as i64 + x;
            let mut is_max = true;
            'nms: for dy in -r..=r {
                for dx in -r..=r {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    let there = ny * width as i64 + nx;
                    let gn = grad[there as usize];
                    let ok = if there < here { g > gn } else { g >= gn };
                    if !ok {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if is_max {
                selected.push((x as usize, y as usize));
            }
        }
    }
    selected
}
