//! Draws a synthetic sequence and a model prediction as side-by-side SVG panels.

use trajfuse::eval::{render_pose_svg, Projection};
use trajfuse::motion::{generate_synthetic, MotionSequence, SynthParams};
use trajfuse::network::{init_params, predict, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = SynthParams::periodic(17, 20, 25.0, 2);
    let seq = generate_synthetic(&params)?;
    let model = init_params(&ModelConfig {
        joints: 17,
        hidden: 16,
        ..ModelConfig::default()
    })?;
    let truth = MotionSequence::new("future", seq.slice(10, 10)?, seq.fps())?;
    let pred = MotionSequence::new("predicted", predict(&model, &seq.slice(0, 10)?)?.fused, seq.fps())?;

    let path = std::env::temp_dir().join("trajfuse-poses.svg");
    render_pose_svg(
        &truth,
        Some(&pred),
        &params.skeleton(),
        &[0, 4, 9],
        Projection::XZ,
        &path,
    )?;
    println!("wrote {}", path.display());
    Ok(())
}
