//! MPJPE horizon tables, reference predictors, ablation runs and SVG pose plots.

mod ablation;
mod render;

pub use ablation::{default_variants, run_ablation, AblationEntry, AblationReport, AblationSetup, Variant};
pub use render::{render_pose_svg, render_pose_svg_string, Projection};

use std::fmt::Write as _;

use thiserror::Error;

use crate::motion::SampleWindow;
use crate::network::{predict, NetworkError, TwoStreamModelParams};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("no evaluation windows")]
    NoWindows,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Mean (unsquared) Euclidean joint error per frame, in mm.
pub fn mpjpe_metric(pred: &Tensor, target: &Tensor) -> Result<Vec<f64>> {
    if pred.shape() != target.shape() || pred.shape().len() != 3 || pred.shape()[2] != 3 {
        return Err(EvalError::Shape(format!(
            "pred {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let joints = pred.shape()[1];
    Ok(pred
        .data()
        .chunks(joints * 3)
        .zip(target.data().chunks(joints * 3))
        .map(|(p, t)| {
            let total: f64 = p
                .chunks(3)
                .zip(t.chunks(3))
                .map(|(a, b)| {
                    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
                    (dx * dx + dy * dy + dz * dz).sqrt()
                })
                .sum();
            total / joints as f64
        })
        .collect())
}

/// 1-based predicted-frame index for each horizon, rounding half up.
pub fn horizons_to_frames(horizons_ms: &[f64], fps: f64, t_out: usize) -> Result<Vec<usize>> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(EvalError::Invalid(format!("fps must be positive, got {fps}")));
    }
    horizons_ms
        .iter()
        .map(|&ms| {
            if !(ms > 0.0 && ms.is_finite()) {
                return Err(EvalError::Invalid(format!("horizon {ms} ms must be positive")));
            }
            let frame = (ms * fps / 1000.0 + 0.5).floor() as usize;
            if frame == 0 || frame > t_out {
                return Err(EvalError::Invalid(format!(
                    "{ms} ms at {fps} fps is frame {frame}, outside 1..={t_out}"
                )));
            }
            Ok(frame)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    /// Repeats the last observed pose.
    ZeroVelocity,
    /// Extrapolates the last observed frame difference.
    ConstantVelocity,
}

impl BaselineKind {
    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::ZeroVelocity => "zero-velocity",
            BaselineKind::ConstantVelocity => "constant-velocity",
        }
    }
}

pub fn baseline_predict(kind: BaselineKind, input: &Tensor, t_out: usize) -> Result<Tensor> {
    let shape = input.shape();
    if shape.len() != 3 || shape[2] != 3 || t_out == 0 {
        return Err(EvalError::Shape(format!("input {shape:?}, t_out {t_out}")));
    }
    let frames = shape[0];
    let min_frames = match kind {
        BaselineKind::ZeroVelocity => 1,
        BaselineKind::ConstantVelocity => 2,
    };
    if frames < min_frames {
        return Err(EvalError::Invalid(format!(
            "{} needs {min_frames} input frames, got {frames}",
            kind.label()
        )));
    }
    let plane = shape[1] * 3;
    let last = &input.data()[(frames - 1) * plane..];
    let step: Vec<f64> = match kind {
        BaselineKind::ZeroVelocity => vec![0.0; plane],
        BaselineKind::ConstantVelocity => {
            let prev = &input.data()[(frames - 2) * plane..(frames - 1) * plane];
            last.iter().zip(prev).map(|(a, b)| a - b).collect()
        }
    };
    let mut out = Vec::with_capacity(t_out * plane);
    for i in 1..=t_out {
        out.extend(last.iter().zip(&step).map(|(p, s)| p + s * i as f64));
    }
    Ok(Tensor::new(vec![t_out, shape[1], 3], out).expect("baseline shape"))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HorizonRow {
    pub horizon_ms: f64,
    /// 1-based predicted frame.
    pub frame: usize,
    pub mpjpe_mm: f64,
    pub count: usize,
}

/// Mean error per horizon for one predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonTable {
    pub label: String,
    pub rows: Vec<HorizonRow>,
}

pub const CSV_HEADER: &str = "variant,horizon_ms,frame,mpjpe_mm,count";

impl HorizonTable {
    pub fn csv_rows(&self, out: &mut String) {
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.6},{}",
                self.label, r.horizon_ms, r.frame, r.mpjpe_mm, r.count
            )
            .unwrap();
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        self.csv_rows(&mut out);
        out
    }

    pub fn error_at(&self, horizon_ms: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.horizon_ms == horizon_ms)
            .map(|r| r.mpjpe_mm)
    }
}

/// Aligned text table: one line per labelled row of errors.
pub fn format_text_table(horizons_ms: &[f64], rows: &[(String, Option<Vec<f64>>)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max("ms".len());
    let mut out = format!("{:<width$}", "ms");
    for h in horizons_ms {
        write!(out, " {:>9}", h).unwrap();
    }
    out.push('\n');
    for (label, values) in rows {
        write!(out, "{label:<width$}").unwrap();
        match values {
            Some(v) => v.iter().for_each(|e| write!(out, " {e:>9.2}").unwrap()),
            None => out.push_str(" FAILED"),
        }
        out.push('\n');
    }
    out
}

/// Mean per-horizon error of `predictor` over `windows`, accumulated in window order.
pub fn evaluate_predictor(
    label: impl Into<String>,
    windows: &[SampleWindow],
    horizons_ms: &[f64],
    fps: f64,
    mut predictor: impl FnMut(&Tensor) -> Result<Tensor>,
) -> Result<HorizonTable> {
    let first = windows.first().ok_or(EvalError::NoWindows)?;
    let t_out = first.target.shape()[0];
    let frames = horizons_to_frames(horizons_ms, fps, t_out)?;
    let mut sums = vec![0.0; t_out];
    for w in windows {
        let pred = predictor(&w.input)?;
        for (s, e) in sums.iter_mut().zip(mpjpe_metric(&pred, &w.target)?) {
            *s += e;
        }
    }
    let n = windows.len();
    let rows = horizons_ms
        .iter()
        .zip(frames)
        .map(|(&horizon_ms, frame)| HorizonRow {
            horizon_ms,
            frame,
            mpjpe_mm: sums[frame - 1] / n as f64,
            count: n,
        })
        .collect();
    Ok(HorizonTable {
        label: label.into(),
        rows,
    })
}

pub fn evaluate_model(
    label: impl Into<String>,
    params: &TwoStreamModelParams,
    windows: &[SampleWindow],
    horizons_ms: &[f64],
    fps: f64,
) -> Result<HorizonTable> {
    evaluate_predictor(label, windows, horizons_ms, fps, |x| Ok(predict(params, x)?.fused))
}

pub fn evaluate_baseline(
    kind: BaselineKind,
    windows: &[SampleWindow],
    horizons_ms: &[f64],
    fps: f64,
) -> Result<HorizonTable> {
    let t_out = windows.first().ok_or(EvalError::NoWindows)?.target.shape()[0];
    evaluate_predictor(kind.label(), windows, horizons_ms, fps, |x| {
        baseline_predict(kind, x, t_out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ModelConfig, TwoStreamModelParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.gen_range(-300.0..300.0))
    }

    #[test]
    fn metric_examples() {
        let t = random(&[4, 5, 3], 1);
        assert_eq!(mpjpe_metric(&t, &t).unwrap(), vec![0.0; 4]);
        let shifted = Tensor::from_fn(&[4, 5, 3], |i| t.data()[i] + [3.0, 4.0, 0.0][i % 3]);
        for e in mpjpe_metric(&shifted, &t).unwrap() {
            assert!((e - 5.0).abs() < 1e-12);
        }
        assert!(mpjpe_metric(&t, &random(&[4, 6, 3], 2)).is_err());
    }

    proptest! {
        #[test]
        fn metric_is_translation_invariant_and_permutation_equivariant(
            seed in any::<u64>(),
            shift in prop::array::uniform3(-1e3f64..1e3),
        ) {
            let (p, t) = (random(&[3, 6, 3], seed), random(&[3, 6, 3], seed ^ 0xabc));
            let base = mpjpe_metric(&p, &t).unwrap();
            let mv = |x: &Tensor| Tensor::from_fn(x.shape(), |i| x.data()[i] + shift[i % 3]);
            for (a, b) in base.iter().zip(mpjpe_metric(&mv(&p), &mv(&t)).unwrap()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            let perm = [3usize, 0, 5, 1, 4, 2];
            let permute = |x: &Tensor| Tensor::from_fn(x.shape(), |i| {
                let (f, k, d) = (i / 18, (i / 3) % 6, i % 3);
                x.at(&[f, perm[k], d])
            });
            for (a, b) in base.iter().zip(mpjpe_metric(&permute(&p), &permute(&t)).unwrap()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn horizon_frames() {
        assert_eq!(
            horizons_to_frames(&[80.0, 160.0, 320.0, 400.0], 25.0, 10).unwrap(),
            vec![2, 4, 8, 10]
        );
        assert_eq!(horizons_to_frames(&[1000.0], 25.0, 25).unwrap(), vec![25]);
        assert_eq!(horizons_to_frames(&[40.0], 25.0, 10).unwrap(), vec![1]);
        assert_eq!(horizons_to_frames(&[60.0], 25.0, 10).unwrap(), vec![2]);
        assert!(horizons_to_frames(&[1000.0], 25.0, 10).is_err());
        assert!(horizons_to_frames(&[-80.0], 25.0, 10).is_err());
        assert!(horizons_to_frames(&[5.0], 25.0, 10).is_err());
    }

    #[test]
    fn baselines() {
        let still = Tensor::from_fn(&[4, 2, 3], |i| (i % 6) as f64);
        for kind in [BaselineKind::ZeroVelocity, BaselineKind::ConstantVelocity] {
            let out = baseline_predict(kind, &still, 3).unwrap();
            assert!(out.data().iter().enumerate().all(|(i, &v)| v == (i % 6) as f64));
        }
        let drift = Tensor::from_fn(&[7, 2, 3], |i| (i / 6) as f64 * 2.5 + (i % 6) as f64);
        let input = drift.channels(0, 4).unwrap();
        let target = drift.channels(4, 3).unwrap();
        let cv = baseline_predict(BaselineKind::ConstantVelocity, &input, 3).unwrap();
        assert!(mpjpe_metric(&cv, &target).unwrap().iter().all(|&e| e < 1e-12));
        let one = Tensor::zeros(&[1, 2, 3]);
        assert!(baseline_predict(BaselineKind::ConstantVelocity, &one, 3).is_err());
        assert!(baseline_predict(BaselineKind::ZeroVelocity, &one, 3).is_ok());
    }

    #[test]
    fn zero_velocity_matches_zero_network() {
        let cfg = ModelConfig {
            joints: 5,
            t_in: 4,
            t_out: 3,
            hidden: 4,
            depth: 6,
            ..ModelConfig::default()
        };
        let params = TwoStreamModelParams::zeros(&cfg).unwrap();
        let x = random(&[4, 5, 3], 7);
        let zv = baseline_predict(BaselineKind::ZeroVelocity, &x, 3).unwrap();
        assert_eq!(predict(&params, &x).unwrap().v_pred, zv);
    }

    #[test]
    fn table_csv_and_text() {
        let windows: Vec<SampleWindow> = (0..3)
            .map(|s| SampleWindow {
                input: random(&[4, 2, 3], s),
                target: random(&[10, 2, 3], s + 10),
                source: "a".into(),
                start: s as usize,
            })
            .collect();
        let table = evaluate_baseline(BaselineKind::ZeroVelocity, &windows, &[80.0, 400.0], 25.0).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[1].frame, 10);
        assert_eq!(table.rows[0].count, 3);
        let csv = table.to_csv();
        assert!(csv.starts_with("variant,horizon_ms,frame,mpjpe_mm,count\nzero-velocity,80,2,"));
        let text = format_text_table(
            &[80.0, 400.0],
            &[("zero-velocity".into(), Some(vec![1.0, 2.0])), ("x".into(), None)],
        );
        assert!(text.contains("FAILED"));
        assert_eq!(text.lines().count(), 3);
        assert!(matches!(
            evaluate_baseline(BaselineKind::ZeroVelocity, &[], &[80.0], 25.0),
            Err(EvalError::NoWindows)
        ));
    }
}
