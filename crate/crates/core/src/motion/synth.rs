//! Periodic sinusoid + drift + noise skeleton motion.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{MotionError, MotionSequence, Result, SkeletonSpec};
use crate::tensor::Tensor;

/// Parameters of one synthetic sequence. Per-joint vectors have `joint_count` entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub joint_count: usize,
    pub rest_offsets: Vec<[f64; 3]>,
    /// Per-axis oscillation amplitude (mm).
    pub amplitudes: Vec<[f64; 3]>,
    /// Oscillation frequency (Hz).
    pub frequencies: Vec<f64>,
    /// Phase (radians).
    pub phases: Vec<f64>,
    /// Whole-body drift (mm/frame).
    pub drift: [f64; 3],
    pub noise_std: f64,
    pub frames: usize,
    pub fps: f64,
    pub seed: u64,
}

impl SynthParams {
    /// Motionless skeleton in its rest pose.
    pub fn still(joint_count: usize, frames: usize, fps: f64) -> Self {
        Self {
            joint_count,
            rest_offsets: rest_pose(joint_count),
            amplitudes: vec![[0.0; 3]; joint_count],
            frequencies: vec![0.0; joint_count],
            phases: vec![0.0; joint_count],
            drift: [0.0; 3],
            noise_std: 0.0,
            frames,
            fps,
            seed: 0,
        }
    }

    /// Rest pose translated at a constant `drift` per frame.
    pub fn pure_drift(joint_count: usize, frames: usize, fps: f64, drift: [f64; 3]) -> Self {
        Self {
            drift,
            ..Self::still(joint_count, frames, fps)
        }
    }

    /// Walking-like periodic motion with amplitudes, frequencies and phases drawn from `seed`.
    pub fn periodic(joint_count: usize, frames: usize, fps: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // One shared gait frequency, joints differ in amplitude and phase.
        let base = rng.gen_range(0.6..1.2);
        let amplitudes = (0..joint_count)
            .map(|j| {
                let reach = if j == 0 { 0.3 } else { 1.0 };
                [
                    reach * rng.gen_range(20.0..80.0),
                    reach * rng.gen_range(10.0..40.0),
                    reach * rng.gen_range(20.0..80.0),
                ]
            })
            .collect();
        let frequencies = (0..joint_count).map(|_| base * rng.gen_range(0.9..1.1)).collect();
        let phases = (0..joint_count).map(|_| rng.gen_range(0.0..TAU)).collect();
        Self {
            amplitudes,
            frequencies,
            phases,
            seed,
            ..Self::still(joint_count, frames, fps)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.joint_count;
        let bad = |m: String| Err(MotionError::Invalid(m));
        if n == 0 {
            return bad("joint_count must be positive".into());
        }
        if self.rest_offsets.len() != n
            || self.amplitudes.len() != n
            || self.frequencies.len() != n
            || self.phases.len() != n
        {
            return bad(format!("per-joint parameter lists must have {n} entries"));
        }
        if self.frames == 0 {
            return bad("duration must be at least one frame".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise std must be non-negative, got {}", self.noise_std));
        }
        if self.amplitudes.iter().flatten().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return bad("amplitudes must be non-negative".into());
        }
        let finite = self
            .rest_offsets
            .iter()
            .flatten()
            .chain(&self.drift)
            .chain(&self.frequencies)
            .chain(&self.phases)
            .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite parameter".into());
        }
        Ok(())
    }

    pub fn skeleton(&self) -> SkeletonSpec {
        SkeletonSpec::synthetic(self.joint_count)
    }
}

/// Rest pose matching [`SkeletonSpec::synthetic`]: limbs of 100 mm segments fanning out from joint 0.
fn rest_pose(joints: usize) -> Vec<[f64; 3]> {
    let limbs = joints.saturating_sub(1).div_ceil(4).max(1);
    (0..joints)
        .map(|j| {
            if j == 0 {
                return [0.0; 3];
            }
            let limb = (j - 1) / 4;
            let along = ((j - 1) % 4 + 1) as f64 * 100.0;
            let angle = TAU * limb as f64 / limbs as f64;
            [along * angle.cos(), 0.0, along * angle.sin()]
        })
        .collect()
}

pub fn generate_synthetic(params: &SynthParams) -> Result<MotionSequence> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise = Normal::new(0.0, params.noise_std).map_err(|e| MotionError::Invalid(e.to_string()))?;
    let n = params.joint_count;
    let mut data = Vec::with_capacity(params.frames * n * 3);
    for f in 0..params.frames {
        let t = f as f64 / params.fps;
        for j in 0..n {
            let wave = (TAU * params.frequencies[j] * t + params.phases[j]).sin();
            for axis in 0..3 {
                let mut v =
                    params.rest_offsets[j][axis] + params.drift[axis] * f as f64 + params.amplitudes[j][axis] * wave;
                if params.noise_std > 0.0 {
                    v += noise.sample(&mut rng);
                }
                data.push(v);
            }
        }
    }
    let frames = Tensor::new(vec![params.frames, n, 3], data).expect("synthetic shape");
    MotionSequence::new(format!("synth{}", params.seed), frames, params.fps)
}
