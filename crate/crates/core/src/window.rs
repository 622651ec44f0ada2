//! The sliding window: the active set of frames, poses, and scene points
//! being jointly optimized.

use crate::geometry::Pose;
use crate::image::{GradientPair, GrayImage};
use crate::visibility::{FrameId, ScenePoint};
use std::sync::Arc;

/// One frame held by the window. Image and gradients are shared with the
/// pipeline; the pose is world-to-camera and is what the solver refines.
#[derive(Debug, Clone)]
pub struct WindowFrame {
    pub id: FrameId,
    pub image: Arc<GrayImage>,
    pub grads: Arc<GradientPair>,
    pub pose: Pose,
}

/// Frames in id order plus the scene points whose reference frame or
/// visibility intersects them.
#[derive(Debug, Default)]
pub struct SlidingWindow {
    pub frames: Vec<WindowFrame>,
    pub points: Vec<ScenePoint>,
}

impl SlidingWindow {
    pub fn new() -> Self {
        SlidingWindow {
            frames: Vec::new(),
            points: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Window slot of a frame id, if present.
    pub fn slot_of(&self, id: FrameId) -> Option<usize> {
        self.frames.iter().position(|f| f.id == id)
    }

    pub fn push(&mut self, frame: WindowFrame) {
        if let Some(last) = self.frames.last() {
            assert!(frame.id > last.id, "frame ids must be strictly increasing");
        }
        self.frames.push(frame);
    }
}
