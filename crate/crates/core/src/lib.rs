//! Photometric bundle adjustment for image sequences.
//!
//! The engine jointly refines camera poses and 3D scene points by
//! maximizing photometric consistency against fixed reference patches.
//! Correspondences are never tracked explicitly: every pixel with a
//! nonvanishing gradient can participate, and the alignment falls out of
//! the optimization.
//!
//! In-memory poses are world-to-camera throughout; trajectory files store
//! the camera-to-world convention (12 floats per line, row-major 3x4).

pub mod dataset;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod pipeline;
pub mod select;
pub mod solver;
pub mod stereo;
pub mod synth;
pub mod visibility;
pub mod window;

pub use geometry::{Intrinsics, Pose, Twist};
pub use image::GrayImage;
pub use pipeline::{Pipeline, PipelineConfig, PointInit, RunResult};
pub use solver::SolverConfig;
pub use visibility::{FrameId, PointId, ScenePoint};
pub use window::SlidingWindow;
