//! Orthographic stick-figure plots, one panel per frame.

use std::fmt::Write as _;
use std::path::Path;

use super::{EvalError, Result};
use crate::motion::{MotionSequence, SkeletonSpec};

const PANEL: f64 = 200.0;
const MARGIN: f64 = 10.0;
const TRUTH_COLOR: &str = "#1f4e9c";
const PRED_COLOR: &str = "#d0342c";

/// Which two coordinate axes are drawn (horizontal, vertical).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Projection {
    XY,
    #[default]
    XZ,
    ZY,
}

impl std::str::FromStr for Projection {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xy" => Ok(Projection::XY),
            "xz" => Ok(Projection::XZ),
            "zy" => Ok(Projection::ZY),
            _ => Err(EvalError::Invalid(format!(
                "unknown projection '{s}' (expected xy, xz or zy)"
            ))),
        }
    }
}

impl Projection {
    fn axes(self) -> (usize, usize) {
        match self {
            Projection::XY => (0, 1),
            Projection::XZ => (0, 2),
            Projection::ZY => (2, 1),
        }
    }
}

/// SVG text for the selected frames of `truth` and, when given, `prediction` overlaid in a second colour.
pub fn render_pose_svg_string(
    truth: &MotionSequence,
    prediction: Option<&MotionSequence>,
    skeleton: &SkeletonSpec,
    frames: &[usize],
    projection: Projection,
) -> Result<String> {
    if frames.is_empty() {
        return Err(EvalError::Invalid("no frames selected".into()));
    }
    let sequences: Vec<(&MotionSequence, &str)> = std::iter::once((truth, TRUTH_COLOR))
        .chain(prediction.map(|p| (p, PRED_COLOR)))
        .collect();
    for (seq, _) in &sequences {
        if seq.joint_count() != skeleton.joint_count() {
            return Err(EvalError::Shape(format!(
                "sequence '{}' has {} joints, skeleton has {}",
                seq.id,
                seq.joint_count(),
                skeleton.joint_count()
            )));
        }
        if let Some(&f) = frames.iter().find(|&&f| f >= seq.frame_count()) {
            return Err(EvalError::Invalid(format!(
                "frame {f} out of range for '{}' ({} frames)",
                seq.id,
                seq.frame_count()
            )));
        }
    }

    let (ha, va) = projection.axes();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for (seq, _) in &sequences {
        for &f in frames {
            for joint in seq.pose(f).chunks(3) {
                for (k, axis) in [ha, va].into_iter().enumerate() {
                    lo[k] = lo[k].min(joint[axis]);
                    hi[k] = hi[k].max(joint[axis]);
                }
            }
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let scale = (PANEL - 2.0 * MARGIN) / span;
    let project = |panel: usize, joint: &[f64]| {
        let x = panel as f64 * PANEL + MARGIN + (joint[ha] - lo[0]) * scale;
        // SVG y grows downwards.
        let y = PANEL - MARGIN - (joint[va] - lo[1]) * scale;
        (x, y)
    };

    let width = PANEL * frames.len() as f64;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL}" viewBox="0 0 {width} {PANEL}">"#
    )
    .unwrap();
    for (panel, &f) in frames.iter().enumerate() {
        writeln!(svg, r#"<g id="frame-{f}">"#).unwrap();
        for (seq, color) in &sequences {
            let pose = seq.pose(f);
            for (parent, child) in skeleton.bones() {
                let (x1, y1) = project(panel, &pose[parent * 3..parent * 3 + 3]);
                let (x2, y2) = project(panel, &pose[child * 3..child * 3 + 3]);
                writeln!(
                    svg,
                    r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{color}" stroke-width="2"/>"#
                )
                .unwrap();
            }
            for joint in pose.chunks(3) {
                let (cx, cy) = project(panel, joint);
                writeln!(svg, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2.5" fill="{color}"/>"#).unwrap();
            }
        }
        writeln!(svg, "</g>").unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes [`render_pose_svg_string`] output to `path`; nothing is written on error.
pub fn render_pose_svg(
    truth: &MotionSequence,
    prediction: Option<&MotionSequence>,
    skeleton: &SkeletonSpec,
    frames: &[usize],
    projection: Projection,
    path: impl AsRef<Path>,
) -> Result<()> {
    let svg = render_pose_svg_string(truth, prediction, skeleton, frames, projection)?;
    let path = path.as_ref();
    std::fs::write(path, svg).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}
