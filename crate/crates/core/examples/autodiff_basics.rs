//! Fits a single 3x3 convolution to a target with the tape and Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajfuse::tensor::{adam_step, conv2d_forward, AdamHyper, AdamState, Tape, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let input = Tensor::from_fn(&[2, 12, 3], |_| rng.gen_range(-1.0..1.0));
    let true_kernel = Tensor::from_fn(&[1, 2, 3, 3], |_| rng.gen_range(-0.5..0.5));
    let true_bias = Tensor::new(vec![1], vec![0.25])?;
    let target = conv2d_forward(&input, &true_kernel, &true_bias, 1, 1)?;

    let mut kernel = Tensor::zeros(&[1, 2, 3, 3]);
    let mut bias = Tensor::zeros(&[1]);
    let hyper = AdamHyper {
        lr: 0.01,
        ..AdamHyper::default()
    };
    let mut state = AdamState::new([&kernel, &bias]);

    for step in 0..=1500 {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone())?;
        let k = tape.param(kernel.clone())?;
        let b = tape.param(bias.clone())?;
        let y = tape.conv2d(x, k, b, 1, 1)?;
        let t = tape.constant(target.clone())?;
        // The [1, 12, 3] output is one frame of twelve 3-vectors.
        let loss = tape.weighted_sq_error(y, t, &[1.0])?;
        let grads = tape.backward(loss)?;
        if step % 300 == 0 {
            println!("step {step:3}  loss {:.3e}", tape.value(loss).data()[0]);
        }
        adam_step(
            &mut [&mut kernel, &mut bias],
            &[grads.get(k), grads.get(b)],
            &mut state,
            &hyper,
        )?;
    }
    println!("max kernel error {:.2e}", kernel.max_abs_diff(&true_kernel));
    println!("bias {:.4} (true 0.25)", bias.data()[0]);
    Ok(())
}
