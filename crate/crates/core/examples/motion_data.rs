//! Synthetic mocap: generate, write and re-parse CSV, velocity round trip, windows.

use trajfuse::motion::{
    compute_velocity, generate_synthetic, parse_mocap_csv, recover_positions, window_dataset, write_mocap_csv,
    SynthParams,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = SynthParams::periodic(17, 50, 25.0, 3);
    let seq = generate_synthetic(&params)?;
    println!(
        "{}: {} frames, {} joints at {} fps",
        seq.id,
        seq.frame_count(),
        seq.joint_count(),
        seq.fps()
    );

    let text = write_mocap_csv(&params.skeleton(), std::slice::from_ref(&seq))?;
    let parsed = parse_mocap_csv(&text)?;
    let back = &parsed.sequences[0];
    println!(
        "CSV: {} bytes, round-trip max error {:.1e} mm",
        text.len(),
        back.frames().max_abs_diff(seq.frames())
    );

    let vel = compute_velocity(&seq)?;
    let rebuilt = recover_positions(&vel.deltas, seq.pose(0))?;
    let rest = seq.slice(1, seq.frame_count() - 1)?;
    println!(
        "velocity {:?}, recovered positions max error {:.1e} mm",
        vel.deltas.shape(),
        rebuilt.max_abs_diff(&rest)
    );

    let windows = window_dataset(&seq, 10, 10, 5)?;
    println!("{} windows of 10 observed + 10 predicted frames:", windows.len());
    for w in &windows {
        println!(
            "  {}  input {:?}  target {:?}",
            w.id(),
            w.input.shape(),
            w.target.shape()
        );
    }
    Ok(())
}
