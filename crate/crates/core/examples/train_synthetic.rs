//! Trains the two-stream model on synthetic periodic motion and compares it with the baselines.
//!
//! `cargo run --release --example train_synthetic -- [steps]` (default 300).

use trajfuse::eval::{evaluate_baseline, evaluate_model, format_text_table, BaselineKind};
use trajfuse::motion::{generate_synthetic, window_dataset, SynthParams};
use trajfuse::network::ModelConfig;
use trajfuse::training::{train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(300);
    let mut windows = Vec::new();
    for seed in 0..8 {
        let seq = generate_synthetic(&SynthParams::periodic(17, 30, 25.0, seed))?;
        windows.extend(window_dataset(&seq, 10, 10, 5)?);
    }
    let model = ModelConfig {
        joints: 17,
        ..ModelConfig::default()
    };
    let config = TrainConfig {
        batch_size: 8,
        ..TrainConfig::new(steps, model.t_out)
    };
    println!("{} windows, {steps} steps", windows.len());
    let outcome = train(&model, &windows, &config)?;
    for r in outcome.log.records.iter().step_by((steps / 10).max(1)) {
        println!("step {:4}  loss {:10.2}", r.step, r.loss);
    }

    let horizons = [80.0, 160.0, 320.0, 400.0];
    let tables = [
        evaluate_model("two-stream", &outcome.params, &windows, &horizons, 25.0)?,
        evaluate_baseline(BaselineKind::ZeroVelocity, &windows, &horizons, 25.0)?,
        evaluate_baseline(BaselineKind::ConstantVelocity, &windows, &horizons, 25.0)?,
    ];
    let rows: Vec<_> = tables
        .iter()
        .map(|t| (t.label.clone(), Some(t.rows.iter().map(|r| r.mpjpe_mm).collect())))
        .collect();
    println!("\nMPJPE (mm) on the training windows");
    print!("{}", format_text_table(&horizons, &rows));
    Ok(())
}
