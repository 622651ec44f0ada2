//! Dataset ingestion and file formats.
//!
//! A sequence directory holds 8-bit grayscale images with zero-padded
//! numeric names (`NNNNNN.pgm`, PNG also accepted), a `poses.txt` with one
//! row-major 3x4 camera-to-world matrix per line, and a `calib.txt` with
//! `fx= fy= cx= cy= baseline=` lines. Optional subdirectories `right/` and
//! `disparity/` carry the stereo companion images and 16-bit PGM disparity
//! rasters (value/256 = disparity in pixels, 0 = invalid).

use crate::geometry::{Intrinsics, Pose};
use crate::image::GrayImage;
use crate::stereo::{DisparityMap, INVALID_DISPARITY};
use nalgebra::{Matrix3, Vector3};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum DatasetError {
    Io {
        path: PathBuf,
        source: io::Error,
    },
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    CountMismatch {
        images: usize,
        poses: usize,
    },
    BadImage {
        path: PathBuf,
        message: String,
    },
    MissingFile(PathBuf),
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::Io { path, source } => {
                write!(f, "i/o error on {}: {}", path.display(), source)
            }
            DatasetError::Parse {
                path,
                line,
                message,
            } => write!(f, "{}:{}: {}", path.display(), line, message),
            DatasetError::CountMismatch { images, poses } => write!(
                f,
                "found {} images but {} pose lines; counts must match",
                images, poses
            ),
            DatasetError::BadImage { path, message } => {
                write!(f, "unreadable image {}: {}", path.display(), message)
            }
            DatasetError::MissingFile(path) => write!(f, "missing file {}", path.display()),
        }
    }
}

impl std::error::Error for DatasetError {}

fn io_err(path: &Path, source: io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------------
// PGM
// ---------------------------------------------------------------------

struct PgmHeader {
    width: usize,
    height: usize,
    maxval: u32,
    data_offset: usize,
}

fn parse_pgm_header(bytes: &[u8], path: &Path) -> Result<PgmHeader, DatasetError> {
    let parse = |line: usize, msg: &str| DatasetError::Parse {
        path: path.to_path_buf(),
        line,
        message: msg.to_string(),
    };
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(parse(1, "not a binary PGM (missing P5 magic)"));
    }
    // Three whitespace-separated tokens follow the magic; '#' starts a
    // comment running to end of line.
    let mut tokens = Vec::new();
    let mut i = 2;
    while tokens.len() < 3 && i < bytes.len() {
        match bytes[i] {
            b'#' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                tokens.push(
                    std::str::from_utf8(&bytes[start..i])
                        .map_err(|_| parse(1, "non-ascii header token"))?
                        .to_string(),
                );
            }
        }
    }
    if tokens.len() < 3 || i >= bytes.len() {
        return Err(parse(1, "truncated PGM header"));
    }
    i += 1; // single whitespace byte after maxval
    let width: usize = tokens[0].parse().map_err(|_| parse(1, "bad width"))?;
    let height: usize = tokens[1].parse().map_err(|_| parse(1, "bad height"))?;
    let maxval: u32 = tokens[2].parse().map_err(|_| parse(1, "bad maxval"))?;
    Ok(PgmHeader {
        width,
        height,
        maxval,
        data_offset: i,
    })
}

/// Read an 8-bit binary PGM as a normalized intensity image
/// (255 -> 1.0 exactly).
pub fn read_pgm(path: &Path) -> Result<GrayImage, DatasetError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let header = parse_pgm_header(&bytes, path)?;
    if header.maxval != 255 {
        return Err(DatasetError::BadImage {
            path: path.to_path_buf(),
            message: format!("expected maxval 255, got {}", header.maxval),
        });
    }
    let n = header.width * header.height;
    let data = &bytes[header.data_offset..];
    if data.len() < n {
        return Err(DatasetError::BadImage {
            path: path.to_path_buf(),
            message: format!("expected {} pixels, got {}", n, data.len()),
        });
    }
    let values = data[..n].iter().map(|b| *b as f64 / 255.0).collect();
    Ok(GrayImage::new(header.width, header.height, values))
}

/// Write an 8-bit binary PGM, quantizing intensities to 0..255.
pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<(), DatasetError> {
    let mut out = Vec::with_capacity(img.width() * img.height() + 32);
    write!(out, "P5\n{} {}\n255\n", img.width(), img.height()).unwrap();
    out.extend(
        img.data()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a 16-bit PGM disparity raster: value/256 = disparity in pixels,
/// 0 = invalid. Samples are big-endian per the PNM convention.
pub fn read_disparity_pgm(path: &Path) -> Result<DisparityMap, DatasetError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let header = parse_pgm_header(&bytes, path)?;
    if header.maxval != 65535 {
        return Err(DatasetError::BadImage {
            path: path.to_path_buf(),
            message: format!("expected maxval 65535, got {}", header.maxval),
        });
    }
    let n = header.width * header.height;
    let data = &bytes[header.data_offset..];
    if data.len() < 2 * n {
        return Err(DatasetError::BadImage {
            path: path.to_path_buf(),
            message: format!("expected {} samples, got {} bytes", n, data.len()),
        });
    }
    let disp = (0..n)
        .map(|i| {
            let raw = u16::from_be_bytes([data[2 * i], data[2 * i + 1]]);
            if raw == 0 {
                INVALID_DISPARITY
            } else {
                raw as f32 / 256.0
            }
        })
        .collect();
    Ok(DisparityMap::from_raw(header.width, header.height, disp))
}

/// Write a disparity map as a 16-bit PGM (invalid pixels become 0).
pub fn write_disparity_pgm(path: &Path, dmap: &DisparityMap) -> Result<(), DatasetError> {
    let mut out = Vec::with_capacity(2 * dmap.width() * dmap.height() + 32);
    write!(out, "P5\n{} {}\n65535\n", dmap.width(), dmap.height()).unwrap();
    for y in 0..dmap.height() {
        for x in 0..dmap.width() {
            let raw = match dmap.get(x, y) {
                Some(d) => ((d as f64 * 256.0).round().clamp(0.0, 65535.0)) as u16,
                None => 0,
            };
            out.extend_from_slice(&raw.to_be_bytes());
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read an image by extension: binary PGM natively, PNG through the image
/// crate.
pub fn read_image(path: &Path) -> Result<GrayImage, DatasetError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => read_pgm(path),
        Some("png") => {
            let img = image::open(path).map_err(|e| DatasetError::BadImage {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            let luma = img.to_luma8();
            let (w, h) = (luma.width() as usize, luma.height() as usize);
            let data = luma.into_raw().iter().map(|b| *b as f64 / 255.0).collect();
            Ok(GrayImage::new(w, h, data))
        }
        _ => Err(DatasetError::BadImage {
            path: path.to_path_buf(),
            message: "unsupported image extension (use .pgm or .png)".to_string(),
        }),
    }
}

// ---------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------

/// Read a trajectory file: one frame per line, 12 space-separated floats,
/// the row-major 3x4 [R|t] camera-to-world matrix. Rotations must be
/// orthonormal within 1e-6 and are projected to the nearest rotation.
pub fn read_trajectory(path: &Path) -> Result<Vec<Pose>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut poses = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse = |msg: String| DatasetError::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: msg,
        };
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| parse(format!("bad float: {}", e)))?;
        if values.len() != 12 {
            return Err(parse(format!("expected 12 values, got {}", values.len())));
        }
        let rotation = Matrix3::new(
            values[0], values[1], values[2], values[4], values[5], values[6], values[8],
            values[9], values[10],
        );
        let translation = Vector3::new(values[3], values[7], values[11]);
        let pose = Pose::new(rotation, translation);
        if pose.orthonormality_error() > 1e-6 {
            return Err(parse(format!(
                "rotation part not orthonormal (error {:.3e})",
                pose.orthonormality_error()
            )));
        }
        poses.push(Pose::new(nearest_rotation(&rotation), translation));
    }
    Ok(poses)
}

/// Project a near-rotation onto SO(3) via SVD.
fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u_fixed = u;
        u_fixed.column_mut(2).neg_mut();
        r = u_fixed * v_t;
    }
    r
}

/// Write camera-to-world poses in the same 12-float format.
pub fn write_trajectory(path: &Path, poses_c2w: &[Pose]) -> Result<(), DatasetError> {
    let mut out = String::new();
    for pose in poses_c2w {
        let r = &pose.rotation;
        let t = &pose.translation;
        let row = [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ];
        let line: Vec<String> = row.iter().map(|v| format!("{:.15e}", v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------

/// Read `calib.txt`: `key=value` lines for fx, fy, cx, cy, baseline.
pub fn read_calib(path: &Path) -> Result<Intrinsics, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut fx = None;
    let mut fy = None;
    let mut cx = None;
    let mut cy = None;
    let mut baseline = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse = |msg: String| DatasetError::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: msg,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse("expected key=value".to_string()))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| parse(format!("bad float: {}", e)))?;
        match key.trim() {
            "fx" => fx = Some(value),
            "fy" => fy = Some(value),
            "cx" => cx = Some(value),
            "cy" => cy = Some(value),
            "baseline" => baseline = Some(value),
            other => return Err(parse(format!("unknown key '{}'", other))),
        }
    }
    let missing = |k: &str| DatasetError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: format!("missing key '{}'", k),
    };
    let k = Intrinsics::new(
        fx.ok_or_else(|| missing("fx"))?,
        fy.ok_or_else(|| missing("fy"))?,
        cx.ok_or_else(|| missing("cx"))?,
        cy.ok_or_else(|| missing("cy"))?,
        baseline.unwrap_or(0.0),
    );
    if k.fx <= 0.0 || k.fy <= 0.0 {
        return Err(DatasetError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "focal lengths must be positive".to_string(),
        });
    }
    Ok(k)
}

pub fn write_calib(path: &Path, k: &Intrinsics) -> Result<(), DatasetError> {
    let text = format!(
        "fx={:.15e}\nfy={:.15e}\ncx={:.15e}\ncy={:.15e}\nbaseline={:.15e}\n",
        k.fx, k.fy, k.cx, k.cy, k.baseline
    );
    fs::write(path, text).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------
// Sequences
// ---------------------------------------------------------------------

/// A dataset directory opened for reading. Pose and calibration data are
/// loaded up front; images are read lazily per frame.
pub struct Sequence {
    dir: PathBuf,
    image_files: Vec<PathBuf>,
    poses_c2w: Vec<Pose>,
    pub intrinsics: Intrinsics,
}

impl Sequence {
    pub fn open(dir: &Path) -> Result<Self, DatasetError> {
        let mut image_files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| io_err(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && matches!(
                        p.extension().and_then(|e| e.to_str()),
                        Some("pgm") | Some("png")
                    )
            })
            .collect();
        image_files.sort();

        let poses_path = dir.join("poses.txt");
        if !poses_path.is_file() {
            return Err(DatasetError::MissingFile(poses_path));
        }
        let calib_path = dir.join("calib.txt");
        if !calib_path.is_file() {
            return Err(DatasetError::MissingFile(calib_path));
        }
        let poses_c2w = read_trajectory(&poses_path)?;
        if poses_c2w.len() != image_files.len() {
            return Err(DatasetError::CountMismatch {
                images: image_files.len(),
                poses: poses_c2w.len(),
            });
        }
        let intrinsics = read_calib(&calib_path)?;
        Ok(Sequence {
            dir: dir.to_path_buf(),
            image_files,
            poses_c2w,
            intrinsics,
        })
    }

    pub fn len(&self) -> usize {
        self.image_files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_files.is_empty()
    }

    pub fn image_path(&self, i: usize) -> &Path {
        &self.image_files[i]
    }

    pub fn image(&self, i: usize) -> Result<GrayImage, DatasetError> {
        read_image(&self.image_files[i])
    }

    /// Pose initialization as stored in the file (camera-to-world).
    pub fn pose_c2w(&self, i: usize) -> Pose {
        self.poses_c2w[i]
    }

    /// Pose initialization ready for projection (world-to-camera).
    pub fn pose_w2c(&self, i: usize) -> Pose {
        self.poses_c2w[i].inverse()
    }

    fn companion(&self, subdir: &str, i: usize) -> Option<PathBuf> {
        let name = self.image_files[i].file_name()?;
        let path = self.dir.join(subdir).join(name);
        path.is_file().then_some(path)
    }

    /// Right stereo image, when `right/NNNNNN.pgm` exists.
    pub fn right_image(&self, i: usize) -> Option<Result<GrayImage, DatasetError>> {
        self.companion("right", i).map(|p| read_image(&p))
    }

    /// Precomputed disparity raster, when `disparity/NNNNNN.pgm` exists.
    pub fn disparity(&self, i: usize) -> Option<Result<DisparityMap, DatasetError>> {
        self.companion("disparity", i)
            .map(|p| read_disparity_pgm(&p))
    }
}
