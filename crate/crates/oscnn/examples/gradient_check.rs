//! Verify the analytic gradients of a composite network against central
//! finite differences, in f64.
//!
//! Builds a small network that touches every layer type (convolution,
//! ReLU, max-pool, flatten, dropout, hidden and classifier fully connected
//! layers), runs one forward/backward pass, then nudges a sample of
//! parameters by ±h and compares the loss slope with the analytic value.
//!
//! Run with: cargo run --release --example gradient_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oscnn::net::{
    backward, forward, init_params, softmax_cross_entropy, DropoutMode, LayerKind, NetworkSpec,
};
use oscnn::tensor::ops::{ConvSpec, PoolSpec};
use oscnn::tensor::Tensor;

fn main() -> oscnn::Result<()> {
    let spec = NetworkSpec {
        input: [3, 8, 8],
        layers: vec![
            LayerKind::Conv { out_channels: 4, kernel: 3, conv: ConvSpec { stride: 1, pad: 1 } },
            LayerKind::Relu,
            LayerKind::MaxPool(PoolSpec { window: 2, stride: 2 }),
            LayerKind::Flatten,
            LayerKind::Dropout { p: 0.5 },
            LayerKind::FullyConnected { out_features: 10 },
            LayerKind::Relu,
            LayerKind::FullyConnected { out_features: 4 },
        ],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // f64 everywhere: finite differences at h = 1e-5 need the headroom.
    let mut params = init_params(&spec, &mut rng)?.cast::<f64>();
    let batch = 2;
    let mut input = Tensor::<f64>::zeros(&[batch, 3, 8, 8]);
    for v in input.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let labels = [1usize, 3];

    // Dropout draws a fresh mask per forward pass, which would make the
    // loss non-deterministic between probes; evaluation mode keeps the
    // function fixed so the finite-difference slope is well defined.
    let loss_of = |params: &oscnn::net::ParamSet<f64>| -> oscnn::Result<f64> {
        let (logits, _) = forward(&spec, params, &input, DropoutMode::Eval)?;
        Ok(softmax_cross_entropy(&logits, &labels)?.0)
    };

    let (logits, trace) = forward(&spec, &params, &input, DropoutMode::Eval)?;
    let (loss, grad_logits) = softmax_cross_entropy(&logits, &labels)?;
    let grads = backward(&spec, &params, &trace, &grad_logits)?;
    println!("loss at the probe point: {loss:.6}");

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let entry_names: Vec<String> =
        params.entries().iter().map(|(name, _)| name.clone()).collect();
    for name in &entry_names {
        let pair_count = params.get(name).unwrap().len();
        let mut entry_worst: f64 = 0.0;
        for pair in 0..pair_count {
            let coords = params.get(name).unwrap()[pair].weights.data().len();
            // Spot-check a spread of coordinates rather than every weight.
            for c in (0..coords).step_by((coords / 7).max(1)) {
                let analytic = grads.get(name).unwrap()[pair].weights.data()[c];
                let original = params.get(name).unwrap()[pair].weights.data()[c];
                params.get_mut(name).unwrap()[pair].weights.data_mut()[c] = original + h;
                let up = loss_of(&params)?;
                params.get_mut(name).unwrap()[pair].weights.data_mut()[c] = original - h;
                let down = loss_of(&params)?;
                params.get_mut(name).unwrap()[pair].weights.data_mut()[c] = original;
                let numeric = (up - down) / (2.0 * h);
                let rel = (analytic - numeric).abs()
                    / analytic.abs().max(numeric.abs()).max(1e-8);
                entry_worst = entry_worst.max(rel);
            }
        }
        worst = worst.max(entry_worst);
        println!("  {name:<10} worst relative error {entry_worst:.3e}");
    }
    println!("overall worst relative error: {worst:.3e}");
    assert!(worst < 1e-4, "analytic and numeric gradients disagree");
    println!("analytic gradients agree with finite differences (tolerance 1e-4)");
    Ok(())
}
