use std::fmt::Write as _;
use std::str::FromStr;

use super::{evaluate_model, format_text_table, EvalError, HorizonTable, Result, CSV_HEADER};
use crate::motion::SampleWindow;
use crate::network::{FusionMode, ModelConfig, SUPPORTED_DEPTHS};
use crate::training::{check_disjoint, train, TrainConfig};

/// One architecture in an ablation run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variant {
    pub label: String,
    /// `None` keeps the base configuration's depth.
    pub depth: Option<usize>,
    pub fusion: FusionMode,
}

impl Variant {
    pub fn depth(depth: usize) -> Self {
        Self {
            label: format!("tst-{depth}"),
            depth: Some(depth),
            fusion: FusionMode::TemporalFusion,
        }
    }

    pub fn fusion(fusion: FusionMode) -> Self {
        Self {
            label: fusion.label().to_string(),
            depth: None,
            fusion,
        }
    }

    pub fn model_config(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            depth: self.depth.unwrap_or(base.depth),
            fusion: self.fusion,
            ..base.clone()
        }
    }
}

impl FromStr for Variant {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(d) = s.strip_prefix("tst-") {
            let depth: usize = d
                .parse()
                .map_err(|_| EvalError::Invalid(format!("bad depth in variant '{s}'")))?;
            if !SUPPORTED_DEPTHS.contains(&depth) {
                return Err(EvalError::Invalid(format!("depth {depth} not in {SUPPORTED_DEPTHS:?}")));
            }
            return Ok(Variant::depth(depth));
        }
        s.parse::<FusionMode>()
            .map(Variant::fusion)
            .map_err(|_| EvalError::Invalid(format!("unknown variant '{s}'")))
    }
}

/// Depth sweep followed by the fusion-mode sweep.
pub fn default_variants() -> Vec<Variant> {
    SUPPORTED_DEPTHS
        .iter()
        .map(|&d| Variant::depth(d))
        .chain(FusionMode::ALL.into_iter().map(Variant::fusion))
        .collect()
}

/// Shared settings for every variant of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationSetup {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub horizons_ms: Vec<f64>,
    pub fps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationEntry {
    pub variant: Variant,
    pub parameter_count: usize,
    /// Error message when training or evaluation failed.
    pub result: std::result::Result<HorizonTable, String>,
    pub window_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub horizons_ms: Vec<f64>,
    pub entries: Vec<AblationEntry>,
}

impl AblationReport {
    /// True when every variant was scored on the same window ids.
    pub fn uses_identical_windows(&self) -> bool {
        self.entries.windows(2).all(|p| p[0].window_ids == p[1].window_ids)
    }

    pub fn table(&self, label: &str) -> Option<&HorizonTable> {
        self.entries
            .iter()
            .find(|e| e.variant.label == label)
            .and_then(|e| e.result.as_ref().ok())
    }

    /// `variant,horizon_ms,frame,mpjpe_mm,count`; failed variants report `NaN` with count 0.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for e in &self.entries {
            match &e.result {
                Ok(table) => table.csv_rows(&mut out),
                Err(_) => {
                    for h in &self.horizons_ms {
                        writeln!(out, "{},{h},,NaN,0", e.variant.label).unwrap();
                    }
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let rows: Vec<(String, Option<Vec<f64>>)> = self
            .entries
            .iter()
            .map(|e| {
                let label = format!("{} ({} params)", e.variant.label, e.parameter_count);
                let values = e
                    .result
                    .as_ref()
                    .ok()
                    .map(|t| t.rows.iter().map(|r| r.mpjpe_mm).collect());
                (label, values)
            })
            .collect();
        let mut text = format_text_table(&self.horizons_ms, &rows);
        for e in &self.entries {
            if let Err(msg) = &e.result {
                writeln!(text, "{}: {msg}", e.variant.label).unwrap();
            }
        }
        text
    }
}

/// Trains and scores every variant with identical data, budget and seeds.
///
/// A variant whose training fails is recorded as failed; the run continues.
pub fn run_ablation(
    train_windows: &[SampleWindow],
    eval_windows: &[SampleWindow],
    variants: &[Variant],
    setup: &AblationSetup,
) -> Result<AblationReport> {
    if variants.is_empty() {
        return Err(EvalError::Invalid("no variants requested".into()));
    }
    if eval_windows.is_empty() {
        return Err(EvalError::NoWindows);
    }
    check_disjoint(train_windows, eval_windows).map_err(|e| EvalError::Invalid(e.to_string()))?;
    let window_ids: Vec<String> = eval_windows.iter().map(|w| w.id()).collect();
    let mut entries = Vec::with_capacity(variants.len());
    for variant in variants {
        let model = variant.model_config(&setup.model);
        let parameter_count = crate::network::TwoStreamModelParams::zeros(&model)
            .map(|p| p.parameter_count())
            .unwrap_or(0);
        log::info!("ablation: training {} ({parameter_count} parameters)", variant.label);
        let result = train(&model, train_windows, &setup.train)
            .map_err(|e| e.to_string())
            .and_then(|outcome| {
                evaluate_model(
                    &variant.label,
                    &outcome.params,
                    eval_windows,
                    &setup.horizons_ms,
                    setup.fps,
                )
                .map_err(|e| e.to_string())
            });
        if let Err(msg) = &result {
            log::warn!("ablation: variant {} failed: {msg}", variant.label);
        }
        entries.push(AblationEntry {
            variant: variant.clone(),
            parameter_count,
            result,
            window_ids: window_ids.clone(),
        });
    }
    Ok(AblationReport {
        horizons_ms: setup.horizons_ms.clone(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_variants() {
        assert_eq!("tst-16".parse::<Variant>().unwrap(), Variant::depth(16));
        assert_eq!("v-only".parse::<Variant>().unwrap(), Variant::fusion(FusionMode::VOnly));
        assert!("tst-7".parse::<Variant>().is_err());
        assert!("concat".parse::<Variant>().is_err());
        let all = default_variants();
        assert_eq!(all.len(), 9);
        assert_eq!(all[1].label, "tst-11");
        assert_eq!(all[8].label, "temporal-fusion");
    }

    #[test]
    fn variant_overrides_base() {
        let base = ModelConfig {
            depth: 11,
            fusion: FusionMode::Addition,
            ..ModelConfig::default()
        };
        let deep = Variant::depth(21).model_config(&base);
        assert_eq!((deep.depth, deep.fusion), (21, FusionMode::TemporalFusion));
        let p = Variant::fusion(FusionMode::POnly).model_config(&base);
        assert_eq!((p.depth, p.fusion), (11, FusionMode::POnly));
    }
}
