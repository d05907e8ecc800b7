//! Skeleton sequences, frame differencing and windowing.
//!
//! Coordinates are absolute 3-D joint positions in millimetres. Velocities
//! are per-frame displacements (mm/frame), with no frame-rate term.

mod csv;
mod synth;

pub use csv::{load_mocap_csv, parse_mocap_csv, write_mocap_csv, MocapFile};
pub use synth::{generate_synthetic, SynthParams};

use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("sequence too short: {0}")]
    TooShort(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no frames")]
    NoFrames,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = MotionError> = std::result::Result<T, E>;

/// Joint names and the kinematic tree used for rendering.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSpec {
    pub names: Vec<String>,
    /// Parent joint per joint, `-1` for a root.
    pub parents: Vec<i64>,
    pub unit: String,
}

impl SkeletonSpec {
    pub fn new(names: Vec<String>, parents: Vec<i64>) -> Result<Self> {
        let n = names.len();
        if n == 0 || parents.len() != n {
            return Err(MotionError::Invalid(format!(
                "{} joint names but {} parent indices",
                n,
                parents.len()
            )));
        }
        if let Some((j, p)) = parents
            .iter()
            .enumerate()
            .find(|(j, &p)| p < -1 || p >= n as i64 || p == *j as i64)
        {
            return Err(MotionError::Invalid(format!("joint {j} has invalid parent {p}")));
        }
        Ok(Self {
            names,
            parents,
            unit: "mm".into(),
        })
    }

    pub fn joint_count(&self) -> usize {
        self.names.len()
    }

    /// Star of four-joint limbs around joint 0, used by the synthetic generator.
    pub fn synthetic(joints: usize) -> Self {
        let parents = (0..joints)
            .map(|j| match j {
                0 => -1,
                j if (j - 1) % 4 == 0 => 0,
                j => j as i64 - 1,
            })
            .collect();
        let names = (0..joints).map(|j| format!("j{j}")).collect();
        Self::new(names, parents).expect("synthetic skeleton is valid")
    }

    /// `(parent, child)` pairs.
    pub fn bones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parents
            .iter()
            .enumerate()
            .filter(|(_, &p)| p >= 0)
            .map(|(j, &p)| (p as usize, j))
    }
}

/// `frames x joints x 3` coordinates in mm.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence {
    pub id: String,
    frames: Tensor,
    fps: f64,
}

impl MotionSequence {
    pub fn new(id: impl Into<String>, frames: Tensor, fps: f64) -> Result<Self> {
        if frames.shape().len() != 3 || frames.shape()[2] != 3 {
            return Err(MotionError::Shape(format!(
                "expected [frames, joints, 3], got {:?}",
                frames.shape()
            )));
        }
        if !frames.is_finite() {
            return Err(MotionError::Invalid("non-finite coordinate".into()));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(MotionError::Invalid(format!("fps must be positive, got {fps}")));
        }
        Ok(Self {
            id: id.into(),
            frames,
            fps,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn joint_count(&self) -> usize {
        self.frames.shape()[1]
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    /// Flat `joints * 3` coordinates of one frame.
    pub fn pose(&self, frame: usize) -> &[f64] {
        let plane = self.joint_count() * 3;
        &self.frames.data()[frame * plane..(frame + 1) * plane]
    }

    /// Frames `[start, start + len)` as a `[len, joints, 3]` tensor.
    pub fn slice(&self, start: usize, len: usize) -> Result<Tensor> {
        self.frames
            .channels(start, len)
            .map_err(|e| MotionError::Shape(e.to_string()))
    }
}

/// Per-frame joint displacements, one frame shorter than the source.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocitySequence {
    pub deltas: Tensor,
}

/// Input/target pair cut from a contiguous stretch of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleWindow {
    pub input: Tensor,
    pub target: Tensor,
    pub source: String,
    pub start: usize,
}

impl SampleWindow {
    pub fn id(&self) -> String {
        format!("{}@{}", self.source, self.start)
    }
}

pub fn compute_velocity(seq: &MotionSequence) -> Result<VelocitySequence> {
    let f = seq.frame_count();
    if f < 2 {
        return Err(MotionError::TooShort(format!("velocity needs 2 frames, got {f}")));
    }
    let plane = seq.joint_count() * 3;
    let d = seq.frames.data();
    let deltas = (0..(f - 1) * plane).map(|i| d[i + plane] - d[i]).collect();
    Ok(VelocitySequence {
        deltas: Tensor::new(vec![f - 1, seq.joint_count(), 3], deltas).expect("velocity shape"),
    })
}

/// Adds the running sum of `vel` ([T, N, 3]) to `anchor` (N*3 values).
pub fn recover_positions(vel: &Tensor, anchor: &[f64]) -> Result<Tensor> {
    let shape = vel.shape();
    if shape.len() != 3 || shape[2] != 3 || anchor.len() != shape[1] * 3 {
        return Err(MotionError::Shape(format!(
            "velocities {:?} with anchor of {} values",
            shape,
            anchor.len()
        )));
    }
    let mut running = anchor.to_vec();
    let mut out = Vec::with_capacity(vel.numel());
    for step in vel.data().chunks(anchor.len()) {
        for (r, d) in running.iter_mut().zip(step) {
            *r += d;
        }
        out.extend_from_slice(&running);
    }
    Ok(Tensor::new(shape.to_vec(), out).expect("recovered shape"))
}

/// Keeps every `factor`-th frame starting at frame 0.
pub fn downsample(seq: &MotionSequence, factor: usize) -> Result<MotionSequence> {
    if factor < 1 {
        return Err(MotionError::Invalid("downsample factor must be at least 1".into()));
    }
    let plane = seq.joint_count() * 3;
    let kept: Vec<usize> = (0..seq.frame_count()).step_by(factor).collect();
    let mut data = Vec::with_capacity(kept.len() * plane);
    for &f in &kept {
        data.extend_from_slice(seq.pose(f));
    }
    let frames = Tensor::new(vec![kept.len(), seq.joint_count(), 3], data).expect("downsampled shape");
    MotionSequence::new(seq.id.clone(), frames, seq.fps / factor as f64)
}

/// Ordered windows of `t_in` input frames followed by `t_out` target frames.
pub fn window_dataset(seq: &MotionSequence, t_in: usize, t_out: usize, stride: usize) -> Result<Vec<SampleWindow>> {
    if stride < 1 || t_in < 1 || t_out < 1 {
        return Err(MotionError::Invalid(format!(
            "window lengths and stride must be positive (t_in {t_in}, t_out {t_out}, stride {stride})"
        )));
    }
    let f = seq.frame_count();
    if f < t_in + t_out {
        return Err(MotionError::TooShort(format!(
            "sequence '{}' has {f} frames, windows need {}",
            seq.id,
            t_in + t_out
        )));
    }
    (0..=f - t_in - t_out)
        .step_by(stride)
        .map(|start| {
            Ok(SampleWindow {
                input: seq.slice(start, t_in)?,
                target: seq.slice(start + t_in, t_out)?,
                source: seq.id.clone(),
                start,
            })
        })
        .collect()
}
