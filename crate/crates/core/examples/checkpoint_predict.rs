//! Saves a model, loads it back and predicts the continuation of a sequence.

use trajfuse::eval::mpjpe_metric;
use trajfuse::motion::{generate_synthetic, SynthParams};
use trajfuse::network::{init_params, load_checkpoint, predict, save_checkpoint, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ModelConfig {
        joints: 17,
        hidden: 32,
        seed: 11,
        ..ModelConfig::default()
    };
    let params = init_params(&config)?;
    println!("{} parameters", params.parameter_count());

    let dir = std::env::temp_dir().join("trajfuse-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.ckpt");
    save_checkpoint(&params, &path)?;
    let loaded = load_checkpoint(&path)?;
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());

    let seq = generate_synthetic(&SynthParams::periodic(17, 20, 25.0, 4))?;
    let observed = seq.slice(0, 10)?;
    let future = seq.slice(10, 10)?;
    let before = predict(&params, &observed)?;
    let after = predict(&loaded, &observed)?;
    println!("reloaded output identical: {}", before.fused == after.fused);
    println!(
        "p-stream {:?}, v-stream {:?}, fused {:?}",
        after.p_pred.shape(),
        after.v_pred.shape(),
        after.fused.shape()
    );
    let err = mpjpe_metric(&after.fused, &future)?;
    println!(
        "untrained per-frame MPJPE (mm): {:?}",
        err.iter().map(|e| e.round()).collect::<Vec<_>>()
    );
    Ok(())
}
