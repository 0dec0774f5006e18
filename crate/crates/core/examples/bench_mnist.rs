// quick throughput probe for the MNIST preset
use negotiated_core::harness::{model_preset, negotiated_specs, DatasetId};
use negotiated_core::net::{backward_and_step, build_network, OptimizerState, SigmoidCfg};
use negotiated_core::rng::Rng;
use negotiated_core::Tensor;
use std::time::Instant;

fn main() {
    let preset = model_preset(DatasetId::Mnist);
    let specs = negotiated_specs(&preset, 16, SigmoidCfg::new(true, 2.0).unwrap());
    let mut net = build_network(preset.input, &specs, 0).unwrap();
    let mut opt = OptimizerState::adam(&net, 1e-3).unwrap();
    let mut rng = Rng::new(1);
    let batch = 64usize;
    let data: Vec<f64> = (0..batch * 784).map(|_| rng.uniform(0.0, 1.0)).collect();
    let x = Tensor::from_vec(&[batch, 1, 28, 28], data).unwrap();
    let t = Tensor::filled(&[batch, 16], 0.7);
    // warmup
    for _ in 0..3 { backward_and_step(&mut net, &x, &t, &mut opt).unwrap(); }
    let start = Instant::now();
    let steps = 40;
    for _ in 0..steps { backward_and_step(&mut net, &x, &t, &mut opt).unwrap(); }
    let dt = start.elapsed().as_secs_f64();
    let sps = steps as f64 * batch as f64 / dt;
    println!("train: {:.1} samples/s  ({:.1} ms/step of {batch})", sps, dt / steps as f64 * 1e3);
    let start = Instant::now();
    let big: Vec<f64> = (0..1024 * 784).map(|_| rng.uniform(0.0, 1.0)).collect();
    let xb = Tensor::from_vec(&[1024, 1, 28, 28], big).unwrap();
    let _ = net.forward_batched(&xb, 256).unwrap();
    println!("eval: {:.1} samples/s", 1024.0 / start.elapsed().as_secs_f64());
}
