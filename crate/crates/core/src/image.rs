//! Grayscale image container with bilinear subpixel sampling,
//! central-difference gradients, fixed-size patch extraction, and ZNCC
//! scoring. Intensities are normalized to [0, 1] at load time.

use nalgebra::Vector2;
use std::fmt;

/// Single-channel intensity raster, row-major, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// Raised when an image is too small for an operation (gradients need at
/// least 3x3).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageTooSmall {
    pub width: usize,
    pub height: usize,
}

impl fmt::Display for ImageTooSmall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "image {}x{} is smaller than 3x3", self.width, self.height)
    }
}

impl std::error::Error for ImageTooSmall {}

fn bilinear(data: &[f64], width: usize, height: usize, p: &Vector2<f64>) -> Option<f64> {
    let (w, h) = (width as f64, height as f64);
    if !(p.x >= 0.0 && p.x <= w - 1.0 && p.y >= 0.0 && p.y <= h - 1.0) {
        return None;
    }
    let x0 = (p.x.floor() as usize).min(width - 1);
    let y0 = (p.y.floor() as usize).min(height - 1);
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = p.x - x0 as f64;
    let fy = p.y - y0 as f64;
    let v00 = data[y0 * width + x0];
    let v10 = data[y0 * width + x1];
    let v01 = data[y1 * width + x0];
    let v11 = data[y1 * width + x1];
    let top = v00 + fx * (v10 - v00);
    let bot = v01 + fx * (v11 - v01);
    Some(top + fy * (bot - top))
}

impl GrayImage {
    /// Wrap a row-major intensity buffer. Panics when the buffer length
    /// does not match the dimensions.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "buffer length != width*height");
        debug_assert!(
            data.iter().all(|v| (0.0..=1.0).contains(v)),
            "intensities must lie in [0, 1]"
        );
        GrayImage {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Bilinear blend of the four surrounding pixels. `None` outside
    /// [0, w-1] x [0, h-1]; the caller treats the whole patch observation
    /// as invalid.
    #[inline]
    pub fn sample_bilinear(&self, p: &Vector2<f64>) -> Option<f64> {
        bilinear(&self.data, self.width, self.height, p)
    }
}

/// Per-pixel horizontal and vertical derivative rasters. Values may be
/// negative, so these are not [`GrayImage`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    width: usize,
    height: usize,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl GradientPair {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn gx(&self, x: usize, y: usize) -> f64 {
        self.gx[y * self.width + x]
    }

    #[inline]
    pub fn gy(&self, x: usize, y: usize) -> f64 {
        self.gy[y * self.width + x]
    }

    /// Image gradient at a subpixel location, bilinearly interpolated from
    /// the precomputed rasters.
    #[inline]
    pub fn sample(&self, p: &Vector2<f64>) -> Option<Vector2<f64>> {
        let gx = bilinear(&self.gx, self.width, self.height, p)?;
        let gy = bilinear(&self.gy, self.width, self.height, p)?;
        Some(Vector2::new(gx, gy))
    }
}

/// Central-difference gradients with the 1/2·[-1, 0, 1] filter; border
/// pixels fall back to one-sided differences.
pub fn gradients(img: &GrayImage) -> Result<GradientPair, ImageTooSmall> {
    let (w, h) = (img.width, img.height);
    if w < 3 || h < 3 {
        return Err(ImageTooSmall {
            width: w,
            height: h,
        });
    }
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = if x == 0 {
                img.get(1, y) - img.get(0, y)
            } else if x == w - 1 {
                img.get(w - 1, y) - img.get(w - 2, y)
            } else {
                (img.get(x + 1, y) - img.get(x - 1, y)) * 0.5
            };
            gy[i] = if y == 0 {
                img.get(x, 1) - img.get(x, 0)
            } else if y == h - 1 {
                img.get(x, h - 1) - img.get(x, h - 2)
            } else {
                (img.get(x, y + 1) - img.get(x, y - 1)) * 0.5
            };
        }
    }
    Ok(GradientPair {
        width: w,
        height: h,
        gx,
        gy,
    })
}

/// Per-pixel `sqrt(gx^2 + gy^2)` raster.
pub fn gradient_magnitude(img: &GrayImage) -> Result<Vec<f64>, ImageTooSmall> {
    let g = gradients(img)?;
    Ok(g.gx
        .iter()
        .zip(g.gy.iter())
        .map(|(x, y)| x.hypot(*y))
        .collect())
}

/// Fixed square patch of intensities: (2r+1)^2 values, row-major over the
/// offsets in [-r, r]^2.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    radius: usize,
    values: Vec<f64>,
}

impl Patch {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Offsets enumerated in the same row-major order as `values`.
    pub fn offsets(radius: usize) -> impl Iterator<Item = Vector2<f64>> {
        let r = radius as isize;
        (-r..=r).flat_map(move |dy| (-r..=r).map(move |dx| Vector2::new(dx as f64, dy as f64)))
    }
}

/// Sample a patch of radius `r` around a subpixel center. `None` when the
/// footprint leaves the image; only this frame's observation is invalid,
/// not the scene point.
pub fn extract_patch(img: &GrayImage, center: &Vector2<f64>, radius: usize) -> Option<Patch> {
    let mut values = Vec::with_capacity((2 * radius + 1) * (2 * radius + 1));
    for offset in Patch::offsets(radius) {
        values.push(img.sample_bilinear(&(center + offset))?);
    }
    Some(Patch { radius, values })
}

/// Zero-mean normalized cross-correlation in [-1, 1]. Near-constant
/// patches (deviation energy below 1e-12) score 0: low-texture patches
/// cannot be confirmed visible. Panics on mismatched dimensionality.
pub fn zncc(a: &Patch, b: &Patch) -> f64 {
    assert_eq!(a.len(), b.len(), "ZNCC requires equal patch dimensionality");
    let n = a.len() as f64;
    let mean_a = a.values.iter().sum::<f64>() / n;
    let mean_b = b.values.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (va, vb) in a.values.iter().zip(b.values.iter()) {
        let da = va - mean_a;
        let db = vb - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a < 1e-12 || var_b < 1e-12 {
        return 0.0;
    }
    cov / (var_a * var_b).sqrt()
}
