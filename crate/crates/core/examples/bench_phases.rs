// component timing for the MNIST preset training step
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
    let b = 64usize;
    let x = Tensor::from_vec(&[b, 1, 28, 28], (0..b * 784).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap();
    let t = Tensor::filled(&[b, 16], 0.7);

    for _ in 0..3 { backward_and_step(&mut net, &x, &t, &mut opt).unwrap(); }

    let reps = 30;
    let start = Instant::now();
    for _ in 0..reps { let _ = net.forward(&x).unwrap(); }
    let fwd = start.elapsed().as_secs_f64() / reps as f64;

    let start = Instant::now();
    for _ in 0..reps { backward_and_step(&mut net, &x, &t, &mut opt).unwrap(); }
    let full = start.elapsed().as_secs_f64() / reps as f64;

    println!("forward (1 thread path, whole batch): {:.1} ms", fwd * 1e3);
    println!("full train step (chunked parallel):   {:.1} ms", full * 1e3);
    println!("train throughput: {:.0} samples/s", b as f64 / full);
}
