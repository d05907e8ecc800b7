//! `#mocap-csv v1` reader and writer.
//!
//! ```text
//! #mocap-csv v1
//! joints=<N>,fps=<fps>,unit=mm
//! <name0>,<name1>,...
//! <parent0>,<parent1>,...
//! #sequence <id>
//! j0x,j0y,j0z,j1x,...      one line per frame
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{MotionError, MotionSequence, Result, SkeletonSpec};
use crate::tensor::Tensor;

const MAGIC: &str = "#mocap-csv v1";
const SEQUENCE_TAG: &str = "#sequence";

#[derive(Clone, Debug, PartialEq)]
pub struct MocapFile {
    pub skeleton: SkeletonSpec,
    pub fps: f64,
    pub sequences: Vec<MotionSequence>,
}

fn parse_err(line: usize, message: impl Into<String>) -> MotionError {
    MotionError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_header(line: usize, text: &str) -> Result<(usize, f64)> {
    let mut joints = None;
    let mut fps = None;
    for field in text.split(',') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("malformed header field '{field}'")))?;
        match key.trim() {
            "joints" => {
                joints = Some(
                    value
                        .trim()
                        .parse::<usize>()
                        .map_err(|_| parse_err(line, format!("bad joint count '{value}'")))?,
                )
            }
            "fps" => {
                fps = Some(
                    value
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| parse_err(line, format!("bad fps '{value}'")))?,
                )
            }
            "unit" if value.trim() == "mm" => {}
            "unit" => return Err(parse_err(line, format!("unsupported unit '{value}'"))),
            other => return Err(parse_err(line, format!("unknown header key '{other}'"))),
        }
    }
    match (joints, fps) {
        (Some(j), Some(f)) if j > 0 && f > 0.0 && f.is_finite() => Ok((j, f)),
        _ => Err(parse_err(line, "header needs joints > 0 and fps > 0")),
    }
}

/// Parses the text of a mocap CSV file.
pub fn parse_mocap_csv(text: &str) -> Result<MocapFile> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let mut next = |what: &str| lines.next().ok_or_else(|| parse_err(0, format!("missing {what} line")));
    let (n, magic) = next("magic")?;
    if magic.trim() != MAGIC {
        return Err(parse_err(n, format!("expected '{MAGIC}'")));
    }
    let (n, header) = next("header")?;
    let (joints, fps) = parse_header(n, header)?;

    let (n, names) = next("joint names")?;
    let names: Vec<String> = names.split(',').map(|s| s.trim().to_string()).collect();
    if names.len() != joints {
        return Err(parse_err(
            n,
            format!("expected {joints} joint names, got {}", names.len()),
        ));
    }
    let (n, parents) = next("parent indices")?;
    let parents = parents
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<i64>()
                .map_err(|_| parse_err(n, format!("non-numeric parent index '{s}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    if parents.len() != joints {
        return Err(parse_err(
            n,
            format!("expected {joints} parent indices, got {}", parents.len()),
        ));
    }
    let skeleton = SkeletonSpec::new(names, parents).map_err(|e| parse_err(n, e.to_string()))?;

    let width = joints * 3;
    let mut blocks: Vec<(String, usize, Vec<f64>)> = Vec::new();
    for (n, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(SEQUENCE_TAG) {
            let id = rest.trim();
            if id.is_empty() {
                return Err(parse_err(n, "sequence tag without id"));
            }
            blocks.push((id.to_string(), n, Vec::new()));
            continue;
        }
        if blocks.is_empty() {
            blocks.push(("0".to_string(), n, Vec::new()));
        }
        let data = &mut blocks.last_mut().expect("block").2;
        let mut count = 0;
        for cell in line.split(',') {
            let value: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(n, format!("non-numeric cell '{cell}'")))?;
            if !value.is_finite() {
                return Err(parse_err(n, format!("non-finite cell '{cell}'")));
            }
            data.push(value);
            count += 1;
        }
        if count != width {
            return Err(parse_err(n, format!("expected {width} columns, got {count}")));
        }
    }
    if blocks.is_empty() {
        return Err(MotionError::NoFrames);
    }
    let sequences = blocks
        .into_iter()
        .map(|(id, line, data)| {
            if data.is_empty() {
                return Err(parse_err(line, format!("sequence '{id}': no frames")));
            }
            let frames = Tensor::new(vec![data.len() / width, joints, 3], data).expect("frame shape");
            MotionSequence::new(id, frames, fps)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MocapFile {
        skeleton,
        fps,
        sequences,
    })
}

pub fn load_mocap_csv(path: impl AsRef<Path>) -> Result<MocapFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MotionError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_mocap_csv(&text)
}

/// Renders sequences (sharing `skeleton` and frame rate) as mocap CSV text.
pub fn write_mocap_csv(skeleton: &SkeletonSpec, sequences: &[MotionSequence]) -> Result<String> {
    let first = sequences.first().ok_or(MotionError::NoFrames)?;
    let fps = first.fps();
    let joints = skeleton.joint_count();
    if let Some(bad) = sequences.iter().find(|s| s.joint_count() != joints || s.fps() != fps) {
        return Err(MotionError::Shape(format!(
            "sequence '{}' has {} joints at {} fps, file has {joints} at {fps}",
            bad.id,
            bad.joint_count(),
            bad.fps()
        )));
    }
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "joints={joints},fps={fps},unit=mm").unwrap();
    writeln!(out, "{}", skeleton.names.join(",")).unwrap();
    let parents: Vec<String> = skeleton.parents.iter().map(|p| p.to_string()).collect();
    writeln!(out, "{}", parents.join(",")).unwrap();
    for seq in sequences {
        writeln!(out, "{SEQUENCE_TAG} {}", seq.id).unwrap();
        for f in 0..seq.frame_count() {
            let cells: Vec<String> = seq.pose(f).iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SMALL: &str =
        "#mocap-csv v1\njoints=2,fps=25,unit=mm\nhip,knee\n-1,0\n#sequence walk\n1,2,3,4,5,6\n7.5,8,9,-10,11,12e1\n";

    #[test]
    fn parses_cell_by_cell() {
        let file = parse_mocap_csv(SMALL).unwrap();
        assert_eq!(file.fps, 25.0);
        assert_eq!(file.skeleton.names, vec!["hip", "knee"]);
        assert_eq!(file.skeleton.parents, vec![-1, 0]);
        let seq = &file.sequences[0];
        assert_eq!(seq.id, "walk");
        assert_eq!(seq.frames().shape(), &[2, 2, 3]);
        assert_eq!(
            seq.frames().data(),
            &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.5, 8.0, 9.0, -10.0, 11.0, 120.0]
        );
    }

    #[test]
    fn multiple_blocks() {
        let text = format!("{SMALL}#sequence run\n0,0,0,1,1,1\n");
        let file = parse_mocap_csv(&text).unwrap();
        assert_eq!(file.sequences.len(), 2);
        assert_eq!(file.sequences[1].id, "run");
        assert_eq!(file.sequences[1].frame_count(), 1);
    }

    #[test]
    fn empty_data_is_no_frames() {
        let text = "#mocap-csv v1\njoints=2,fps=25,unit=mm\nhip,knee\n-1,0\n\n";
        let err = parse_mocap_csv(text).unwrap_err();
        assert_eq!(err.to_string(), "no frames");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("#mocap v2\n", 1),
            ("#mocap-csv v1\njoints=two,fps=25,unit=mm\n", 2),
            ("#mocap-csv v1\njoints=2,fps=25,unit=mm\nhip\n", 3),
            ("#mocap-csv v1\njoints=2,fps=25,unit=mm\nhip,knee\n-1,x\n", 4),
            ("#mocap-csv v1\njoints=2,fps=25,unit=mm\nhip,knee\n-1,0\n1,2,3,4,5\n", 5),
            (
                "#mocap-csv v1\njoints=2,fps=25,unit=mm\nhip,knee\n-1,0\n#sequence a\n1,2,3\n",
                6,
            ),
            (
                "#mocap-csv v1\njoints=2,fps=25,unit=mm\nhip,knee\n-1,0\n\n1,2,3,4,5,abc\n",
                6,
            ),
        ];
        for (text, line) in cases {
            match parse_mocap_csv(text) {
                Err(MotionError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    proptest! {
        #[test]
        fn write_then_parse_is_identity(
            frames in 1usize..6,
            joints in 1usize..5,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let t = Tensor::from_fn(&[frames, joints, 3], |_| rng.gen_range(-1e4..1e4) * rng.gen::<f64>());
            let seq = MotionSequence::new("s1", t, 50.0).unwrap();
            let skel = SkeletonSpec::synthetic(joints);
            let text = write_mocap_csv(&skel, std::slice::from_ref(&seq)).unwrap();
            let back = parse_mocap_csv(&text).unwrap();
            prop_assert_eq!(back.skeleton, skel);
            prop_assert_eq!(&back.sequences[0], &seq);
        }
    }
}
