//! Depth and fusion ablation on a small synthetic benchmark with a short training budget.

use trajfuse::eval::{default_variants, run_ablation, AblationSetup};
use trajfuse::motion::{generate_synthetic, window_dataset, SynthParams};
use trajfuse::network::ModelConfig;
use trajfuse::training::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let windows = |seeds: std::ops::Range<u64>| -> Result<Vec<_>, Box<dyn std::error::Error>> {
        let mut out = Vec::new();
        for seed in seeds {
            let seq = generate_synthetic(&SynthParams::periodic(9, 30, 25.0, seed))?;
            out.extend(window_dataset(&seq, 10, 10, 5)?);
        }
        Ok(out)
    };
    let train_windows = windows(0..6)?;
    let eval_windows = windows(100..103)?;
    let model = ModelConfig {
        joints: 9,
        hidden: 16,
        ..ModelConfig::default()
    };
    let setup = AblationSetup {
        train: TrainConfig {
            batch_size: 6,
            adam: trajfuse::tensor::AdamHyper {
                lr: 1e-3,
                ..Default::default()
            },
            ..TrainConfig::new(60, model.t_out)
        },
        model,
        horizons_ms: vec![80.0, 160.0, 320.0, 400.0],
        fps: 25.0,
    };
    let report = run_ablation(&train_windows, &eval_windows, &default_variants(), &setup)?;
    print!("{}", report.to_text());
    println!("\n{}", report.to_csv());
    Ok(())
}
