//! Minimal deterministic differentiable network engine.
//!
//! The layer vocabulary is fixed: `conv2d`, `maxpool2d`, `flatten`, `dense`,
//! `relu` and the softened output sigmoid. Parameters are initialized
//! He-uniform from a seed, so two networks built from the same specs and
//! seed are value-identical, and a whole training run is reproducible from
//! `(specs, seed, data order)` alone.

mod checkpoint;
mod layers;
mod loss;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use loss::{bce_loss, BCE_CLAMP};
pub use optim::{OptimizerKind, OptimizerState};

use crate::error::{Error, Result};
use crate::parallel::{chunk_ranges, run_slots};
use crate::rng::Rng;
use crate::tensor::Tensor;

use layers::ConvGeometry;

/// Gradient accumulation is split into this many fixed chunks; boundaries
/// never depend on the worker count, so training is bitwise deterministic.
const GRAD_CHUNKS: usize = 4;

/// Output-sigmoid configuration (softening per Eq. style `1/(1+e^(-x/c))`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidCfg {
    softener: bool,
    coeff: f64,
}

impl SigmoidCfg {
    pub fn new(softener: bool, coeff: f64) -> Result<Self> {
        if !(coeff > 0.0 && coeff.is_finite()) {
            return Err(Error::Config(format!(
                "sigmoid softening coefficient must be positive, got {coeff}"
            )));
        }
        Ok(SigmoidCfg { softener, coeff })
    }

    /// Plain logistic sigmoid (softener off).
    pub fn plain() -> Self {
        SigmoidCfg {
            softener: false,
            coeff: 1.0,
        }
    }

    pub fn softener(&self) -> bool {
        self.softener
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    /// Effective divisor applied to the pre-activation.
    fn divisor(&self) -> f64 {
        if self.softener {
            self.coeff
        } else {
            1.0
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        1.0 / (1.0 + (-x / self.divisor()).exp())
    }
}

/// Softened sigmoid as a standalone operation; validates the coefficient.
pub fn custom_sigmoid(x: f64, softener_on: bool, coeff: f64) -> Result<f64> {
    Ok(SigmoidCfg::new(softener_on, coeff)?.apply(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Valid,
    Same,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    },
    MaxPool2d {
        size: usize,
        stride: usize,
    },
    Flatten,
    Dense {
        units: usize,
    },
    Relu,
    CustomSigmoid(SigmoidCfg),
}

impl LayerSpec {
    /// Valid-padding convolution with stride 1.
    pub fn conv2d(filters: usize, kernel: usize) -> Self {
        LayerSpec::Conv2d {
            filters,
            kernel,
            stride: 1,
            padding: Padding::Valid,
        }
    }

    /// Same-padding convolution with stride 1.
    pub fn conv2d_same(filters: usize, kernel: usize) -> Self {
        LayerSpec::Conv2d {
            filters,
            kernel,
            stride: 1,
            padding: Padding::Same,
        }
    }

    /// 2x2 max pooling with stride 2.
    pub fn maxpool2() -> Self {
        LayerSpec::MaxPool2d { size: 2, stride: 2 }
    }

    pub fn dense(units: usize) -> Self {
        LayerSpec::Dense { units }
    }

    pub fn relu() -> Self {
        LayerSpec::Relu
    }

    pub fn custom_sigmoid(cfg: SigmoidCfg) -> Self {
        LayerSpec::CustomSigmoid(cfg)
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::CustomSigmoid(_) => "custom_sigmoid",
        }
    }
}

/// Shape of the values flowing between layers (per sample).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dims {
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
    Flat(usize),
}

impl Dims {
    pub fn image(channels: usize, height: usize, width: usize) -> Self {
        Dims::Image {
            channels,
            height,
            width,
        }
    }

    pub fn flat(n: usize) -> Self {
        Dims::Flat(n)
    }

    pub fn count(&self) -> usize {
        match *self {
            Dims::Image {
                channels,
                height,
                width,
            } => channels * height * width,
            Dims::Flat(n) => n,
        }
    }
}

/// Weights and bias of one parameterized layer (also reused as the gradient
/// container, since gradients share the shapes).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct Network {
    input: Dims,
    specs: Vec<LayerSpec>,
    dims: Vec<Dims>,
    params: Vec<Option<LayerParams>>,
    seed: u64,
}

fn shape_error(index: usize, spec: &LayerSpec, input: &Dims, detail: &str) -> Error {
    Error::Shape(format!(
        "layer {index} ({}) cannot follow {input:?}: {detail}",
        spec.kind_name()
    ))
}

fn infer_output(index: usize, spec: &LayerSpec, input: &Dims) -> Result<Dims> {
    match spec {
        LayerSpec::Conv2d {
            filters,
            kernel,
            stride,
            padding,
        } => {
            let Dims::Image { height, width, .. } = *input else {
                return Err(shape_error(index, spec, input, "expects image input"));
            };
            if *filters == 0 || *kernel == 0 || *stride == 0 {
                return Err(Error::Config(format!(
                    "layer {index} (conv2d): filters, kernel and stride must be positive"
                )));
            }
            match padding {
                Padding::Valid => {
                    if *kernel > height || *kernel > width {
                        return Err(shape_error(
                            index,
                            spec,
                            input,
                            "kernel larger than input under valid padding",
                        ));
                    }
                    Ok(Dims::image(
                        *filters,
                        (height - kernel) / stride + 1,
                        (width - kernel) / stride + 1,
                    ))
                }
                Padding::Same => {
                    if *stride != 1 {
                        return Err(Error::Config(format!(
                            "layer {index} (conv2d): same padding requires stride 1"
                        )));
                    }
                    Ok(Dims::image(*filters, height, width))
                }
            }
        }
        LayerSpec::MaxPool2d { size, stride } => {
            let Dims::Image {
                channels,
                height,
                width,
            } = *input
            else {
                return Err(shape_error(index, spec, input, "expects image input"));
            };
            if *size == 0 || *stride == 0 || *size > height || *size > width {
                return Err(shape_error(index, spec, input, "pool window does not fit"));
            }
            Ok(Dims::image(
                channels,
                (height - size) / stride + 1,
                (width - size) / stride + 1,
            ))
        }
        LayerSpec::Flatten => match *input {
            Dims::Image { .. } => Ok(Dims::flat(input.count())),
            Dims::Flat(_) => Err(shape_error(index, spec, input, "input is already flat")),
        },
        LayerSpec::Dense { units } => match *input {
            Dims::Flat(n) if *units > 0 => {
                let _ = n;
                Ok(Dims::flat(*units))
            }
            Dims::Flat(_) => Err(Error::Config(format!(
                "layer {index} (dense): units must be positive"
            ))),
            Dims::Image { .. } => Err(shape_error(
                index,
                spec,
                input,
                "expects flat input (insert flatten first)",
            )),
        },
        LayerSpec::Relu | LayerSpec::CustomSigmoid(_) => Ok(*input),
    }
}

/// Builds a network from layer specs, with He-uniform fan-in initialization
/// drawn from `seed`.
pub fn build_network(input: Dims, specs: &[LayerSpec], seed: u64) -> Result<Network> {
    let mut dims = Vec::with_capacity(specs.len());
    let mut current = input;
    for (i, spec) in specs.iter().enumerate() {
        current = infer_output(i, spec, &current)?;
        dims.push(current);
    }

    let mut rng = Rng::new(seed);
    let mut params = Vec::with_capacity(specs.len());
    let mut in_dims = input;
    for spec in specs {
        let p = match spec {
            LayerSpec::Conv2d { filters, kernel, .. } => {
                let Dims::Image { channels, .. } = in_dims else {
                    unreachable!("validated above")
                };
                let fan_in = channels * kernel * kernel;
                let limit = (6.0 / fan_in as f64).sqrt();
                let mut weights = Tensor::zeros(&[*filters, channels, *kernel, *kernel]);
                for w in weights.data_mut() {
                    *w = rng.uniform(-limit, limit);
                }
                Some(LayerParams {
                    weights,
                    bias: Tensor::zeros(&[*filters]),
                })
            }
            LayerSpec::Dense { units } => {
                let Dims::Flat(n) = in_dims else {
                    unreachable!("validated above")
                };
                let limit = (6.0 / n as f64).sqrt();
                let mut weights = Tensor::zeros(&[*units, n]);
                for w in weights.data_mut() {
                    *w = rng.uniform(-limit, limit);
                }
                Some(LayerParams {
                    weights,
                    bias: Tensor::zeros(&[*units]),
                })
            }
            _ => None,
        };
        params.push(p);
        in_dims = infer_output(0, spec, &in_dims).expect("validated above");
    }

    Ok(Network {
        input,
        specs: specs.to_vec(),
        dims,
        params,
        seed,
    })
}

struct Trace {
    /// `activations[0]` is the input batch; `activations[i + 1]` is the
    /// output of layer `i`.
    activations: Vec<Tensor>,
    pool_argmax: Vec<Option<Vec<u32>>>,
}

impl Network {
    pub fn input_dims(&self) -> Dims {
        self.input
    }

    pub fn output_dims(&self) -> Dims {
        self.dims.last().copied().unwrap_or(self.input)
    }

    /// Width of the final flat output.
    pub fn output_units(&self) -> Result<usize> {
        match self.output_dims() {
            Dims::Flat(n) => Ok(n),
            other => Err(Error::Shape(format!(
                "network output {other:?} is not flat"
            ))),
        }
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Option<LayerParams>] {
        &self.params
    }

    /// Mutable access to the raw parameters (checkpoint restore, manual
    /// initialization, gradient probes).
    pub fn params_mut(&mut self) -> &mut [Option<LayerParams>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params
            .iter()
            .flatten()
            .map(|p| p.weights.len() + p.bias.len())
            .sum()
    }

    /// The configuration of the final output sigmoid, if the network ends in
    /// one.
    pub fn output_sigmoid(&self) -> Option<SigmoidCfg> {
        match self.specs.last() {
            Some(LayerSpec::CustomSigmoid(cfg)) => Some(*cfg),
            _ => None,
        }
    }

    fn check_batch_shape(&self, batch: &Tensor) -> Result<()> {
        let expected: Vec<usize> = match self.input {
            Dims::Image {
                channels,
                height,
                width,
            } => vec![channels, height, width],
            Dims::Flat(n) => vec![n],
        };
        let shape = batch.shape();
        if shape.len() != expected.len() + 1 || shape[1..] != expected[..] || shape[0] == 0 {
            return Err(Error::Shape(format!(
                "batch shape {shape:?} does not match network input {:?}",
                self.input
            )));
        }
        Ok(())
    }

    /// Runs the network over a batch. The leading axis indexes samples.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch_shape(batch)?;
        let mut current = batch.clone();
        for (i, spec) in self.specs.iter().enumerate() {
            current = self.apply_layer(i, spec, &current, None)?;
        }
        current.check_finite("forward output")?;
        Ok(current)
    }

    /// Inference over a large batch, split into fixed sub-batches that run
    /// in parallel. Results are identical to `forward` on the whole batch.
    pub fn forward_batched(&self, inputs: &Tensor, sub_batch: usize) -> Result<Tensor> {
        self.check_batch_shape(inputs)?;
        let n = inputs.batch_len();
        let sub = sub_batch.max(1);
        let n_chunks = n.div_ceil(sub);
        if n_chunks <= 1 {
            return self.forward(inputs);
        }
        let outputs = run_slots(n_chunks, |slot| {
            let start = slot * sub;
            let end = (start + sub).min(n);
            self.forward(&inputs.rows(start..end))
        });
        let mut out_shape = None;
        let mut data = Vec::new();
        for out in outputs {
            let out = out?;
            if out_shape.is_none() {
                let mut s = out.shape().to_vec();
                s[0] = n;
                out_shape = Some(s);
            }
            data.extend_from_slice(out.data());
        }
        Tensor::from_vec(&out_shape.expect("at least one chunk"), data)
    }

    fn conv_geometry(&self, layer: usize, input: &Dims) -> ConvGeometry {
        let LayerSpec::Conv2d {
            filters,
            kernel,
            stride,
            padding,
        } = &self.specs[layer]
        else {
            unreachable!("conv geometry on non-conv layer")
        };
        let Dims::Image {
            channels,
            height,
            width,
        } = *input
        else {
            unreachable!("validated at build time")
        };
        let Dims::Image {
            height: out_h,
            width: out_w,
            ..
        } = self.dims[layer]
        else {
            unreachable!("conv output is an image")
        };
        let (pad_top, pad_left) = match padding {
            Padding::Valid => (0, 0),
            Padding::Same => ((kernel - 1) / 2, (kernel - 1) / 2),
        };
        ConvGeometry {
            cin: channels,
            h: height,
            w: width,
            filters: *filters,
            kernel: *kernel,
            stride: *stride,
            pad_top,
            pad_left,
            out_h,
            out_w,
        }
    }

    fn layer_input_dims(&self, layer: usize) -> Dims {
        if layer == 0 {
            self.input
        } else {
            self.dims[layer - 1]
        }
    }

    fn apply_layer(
        &self,
        layer: usize,
        spec: &LayerSpec,
        input: &Tensor,
        mut trace: Option<&mut Vec<Option<Vec<u32>>>>,
    ) -> Result<Tensor> {
        let batch = input.batch_len();
        let out_dims = self.dims[layer];
        match spec {
            LayerSpec::Conv2d { .. } => {
                let g = self.conv_geometry(layer, &self.layer_input_dims(layer));
                let p = self.params[layer].as_ref().expect("conv has params");
                let mut out = Tensor::zeros(&out_shape(batch, &out_dims));
                let in_len = g.cin * g.h * g.w;
                let out_len = g.filters * g.out_len();
                let mut cols = vec![0.0; g.patch_len() * g.out_len()];
                for s in 0..batch {
                    layers::conv_forward(
                        &input.data()[s * in_len..(s + 1) * in_len],
                        p.weights.data(),
                        p.bias.data(),
                        &g,
                        &mut cols,
                        &mut out.data_mut()[s * out_len..(s + 1) * out_len],
                    );
                }
                if let Some(t) = trace.as_deref_mut() {
                    t[layer] = None;
                }
                Ok(out)
            }
            LayerSpec::MaxPool2d { size, stride } => {
                let Dims::Image {
                    channels,
                    height,
                    width,
                } = self.layer_input_dims(layer)
                else {
                    unreachable!()
                };
                let mut out = Tensor::zeros(&out_shape(batch, &out_dims));
                let in_len = channels * height * width;
                let per_sample = out_dims.count();
                let mut argmax = vec![0u32; batch * per_sample];
                for s in 0..batch {
                    layers::maxpool_forward(
                        &input.data()[s * in_len..(s + 1) * in_len],
                        channels,
                        height,
                        width,
                        *size,
                        *stride,
                        &mut out.data_mut()[s * per_sample..(s + 1) * per_sample],
                        &mut argmax[s * per_sample..(s + 1) * per_sample],
                    );
                }
                if let Some(t) = trace {
                    t[layer] = Some(argmax);
                }
                Ok(out)
            }
            LayerSpec::Flatten => input
                .clone()
                .reshaped(&out_shape(batch, &out_dims)),
            LayerSpec::Dense { units } => {
                let Dims::Flat(in_units) = self.layer_input_dims(layer) else {
                    unreachable!()
                };
                let p = self.params[layer].as_ref().expect("dense has params");
                let mut out = Tensor::zeros(&[batch, *units]);
                layers::gemm_nt(
                    input.data(),
                    p.weights.data(),
                    out.data_mut(),
                    batch,
                    in_units,
                    *units,
                );
                let bias = p.bias.data();
                for row in out.data_mut().chunks_mut(*units) {
                    for (v, b) in row.iter_mut().zip(bias) {
                        *v += b;
                    }
                }
                Ok(out)
            }
            LayerSpec::Relu => {
                let mut out = input.clone();
                for v in out.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                Ok(out)
            }
            LayerSpec::CustomSigmoid(cfg) => {
                let mut out = input.clone();
                for v in out.data_mut() {
                    *v = cfg.apply(*v);
                }
                Ok(out)
            }
        }
    }

    fn forward_trace(&self, batch: &Tensor) -> Result<Trace> {
        self.check_batch_shape(batch)?;
        let mut pool_argmax: Vec<Option<Vec<u32>>> = vec![None; self.specs.len()];
        let mut activations = Vec::with_capacity(self.specs.len() + 1);
        activations.push(batch.clone());
        for (i, spec) in self.specs.iter().enumerate() {
            let out = self.apply_layer(i, spec, &activations[i], Some(&mut pool_argmax))?;
            activations.push(out);
        }
        Ok(Trace {
            activations,
            pool_argmax,
        })
    }

    /// Backpropagates `d_output` (gradient of a summed loss w.r.t. the final
    /// activations) and returns per-layer parameter gradient sums.
    fn backward(&self, trace: &Trace, d_output: Tensor) -> Result<Vec<Option<LayerParams>>> {
        let batch = trace.activations[0].batch_len();
        let mut grads: Vec<Option<LayerParams>> = self
            .params
            .iter()
            .map(|p| {
                p.as_ref().map(|lp| LayerParams {
                    weights: Tensor::zeros(lp.weights.shape()),
                    bias: Tensor::zeros(lp.bias.shape()),
                })
            })
            .collect();

        let mut d = d_output;
        for layer in (0..self.specs.len()).rev() {
            let input = &trace.activations[layer];
            let output = &trace.activations[layer + 1];
            d = match &self.specs[layer] {
                LayerSpec::CustomSigmoid(cfg) => {
                    let divisor = if cfg.softener() { cfg.coeff() } else { 1.0 };
                    let mut dx = d;
                    for (g, &y) in dx.data_mut().iter_mut().zip(output.data()) {
                        *g *= y * (1.0 - y) / divisor;
                    }
                    dx
                }
                LayerSpec::Relu => {
                    let mut dx = d;
                    for (g, &y) in dx.data_mut().iter_mut().zip(output.data()) {
                        if y <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    dx
                }
                LayerSpec::Dense { units } => {
                    let Dims::Flat(in_units) = self.layer_input_dims(layer) else {
                        unreachable!()
                    };
                    let grad = grads[layer].as_mut().expect("dense has grads");
                    // dW += dY^T X
                    layers::gemm_tn(
                        d.data(),
                        input.data(),
                        grad.weights.data_mut(),
                        *units,
                        batch,
                        in_units,
                    );
                    let db = grad.bias.data_mut();
                    for row in d.data().chunks(*units) {
                        for (b, &g) in db.iter_mut().zip(row) {
                            *b += g;
                        }
                    }
                    let p = self.params[layer].as_ref().expect("dense has params");
                    let mut dx = Tensor::zeros(&[batch, in_units]);
                    layers::gemm_nn(
                        d.data(),
                        p.weights.data(),
                        dx.data_mut(),
                        batch,
                        *units,
                        in_units,
                    );
                    dx
                }
                LayerSpec::Flatten => {
                    let shape = input.shape().to_vec();
                    d.reshaped(&shape)?
                }
                LayerSpec::MaxPool2d { .. } => {
                    let argmax = trace.pool_argmax[layer]
                        .as_ref()
                        .expect("pool recorded argmax");
                    let mut dx = Tensor::zeros(input.shape());
                    let in_len = input.row_len();
                    let out_len = d.row_len();
                    for s in 0..batch {
                        layers::maxpool_backward(
                            &d.data()[s * out_len..(s + 1) * out_len],
                            &argmax[s * out_len..(s + 1) * out_len],
                            &mut dx.data_mut()[s * in_len..(s + 1) * in_len],
                        );
                    }
                    dx
                }
                LayerSpec::Conv2d { .. } => {
                    let g = self.conv_geometry(layer, &self.layer_input_dims(layer));
                    let p = self.params[layer].as_ref().expect("conv has params");
                    let grad = grads[layer].as_mut().expect("conv has grads");
                    let mut dx = Tensor::zeros(input.shape());
                    let in_len = input.row_len();
                    let out_len = d.row_len();
                    let mut cols = vec![0.0; g.patch_len() * g.out_len()];
                    let mut d_cols = vec![0.0; g.patch_len() * g.out_len()];
                    for s in 0..batch {
                        layers::conv_backward(
                            &input.data()[s * in_len..(s + 1) * in_len],
                            p.weights.data(),
                            &d.data()[s * out_len..(s + 1) * out_len],
                            &g,
                            &mut cols,
                            &mut d_cols,
                            grad.weights.data_mut(),
                            grad.bias.data_mut(),
                            &mut dx.data_mut()[s * in_len..(s + 1) * in_len],
                        );
                    }
                    dx
                }
            };
        }
        Ok(grads)
    }
}

fn out_shape(batch: usize, dims: &Dims) -> Vec<usize> {
    match *dims {
        Dims::Image {
            channels,
            height,
            width,
        } => vec![batch, channels, height, width],
        Dims::Flat(n) => vec![batch, n],
    }
}

enum LossTarget<'a> {
    Bce(&'a Tensor),
    Softmax(&'a [usize]),
}

fn train_step(
    net: &mut Network,
    batch: &Tensor,
    target: &LossTarget,
    opt: &mut OptimizerState,
) -> Result<f64> {
    net.check_batch_shape(batch)?;
    let b = batch.batch_len();
    let units = net.output_units()?;
    match target {
        LossTarget::Bce(t) => {
            if t.shape() != [b, units] {
                return Err(Error::Shape(format!(
                    "target shape {:?} does not match (batch, units) = ({b}, {units})",
                    t.shape()
                )));
            }
        }
        LossTarget::Softmax(labels) => {
            if labels.len() != b {
                return Err(Error::Shape(format!(
                    "{} labels for a batch of {b}",
                    labels.len()
                )));
            }
            if let Some(&bad) = labels.iter().find(|&&l| l >= units) {
                return Err(Error::Shape(format!(
                    "label {bad} out of range for {units} output units"
                )));
            }
        }
    }

    // Per-chunk gradient sums, combined in chunk order and scaled once at
    // the end, so the result does not depend on how many threads ran.
    let ranges = chunk_ranges(b, GRAD_CHUNKS);
    let net_ref = &*net;
    let partials = run_slots(ranges.len(), |slot| {
        let range = ranges[slot].clone();
        let sub = batch.rows(range.clone());
        let trace = net_ref.forward_trace(&sub)?;
        let output = trace.activations.last().expect("nonempty network");
        let (loss_sum, d_out) = match target {
            LossTarget::Bce(t) => {
                let sub_t = t.rows(range.clone());
                let mut d = Tensor::zeros(output.shape());
                loss::bce_sum_grad(output.data(), sub_t.data(), d.data_mut());
                (loss::bce_sum(output.data(), sub_t.data()), d)
            }
            LossTarget::Softmax(labels) => {
                let mut d = Tensor::zeros(output.shape());
                let sum = loss::softmax_ce_sum(
                    output.data(),
                    &labels[range.clone()],
                    units,
                    d.data_mut(),
                );
                (sum, d)
            }
        };
        let grads = net_ref.backward(&trace, d_out)?;
        Ok::<(f64, Vec<Option<LayerParams>>), Error>((loss_sum, grads))
    });

    let scale = match target {
        LossTarget::Bce(_) => 1.0 / (b * units) as f64,
        LossTarget::Softmax(_) => 1.0 / b as f64,
    };

    let mut total_loss = 0.0;
    let mut total: Option<Vec<Option<LayerParams>>> = None;
    for partial in partials {
        let (loss_sum, grads) = partial?;
        total_loss += loss_sum;
        match &mut total {
            None => total = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(grads) {
                    let (Some(a), Some(g)) = (a.as_mut(), g) else {
                        continue;
                    };
                    for (x, y) in a.weights.data_mut().iter_mut().zip(g.weights.data()) {
                        *x += y;
                    }
                    for (x, y) in a.bias.data_mut().iter_mut().zip(g.bias.data()) {
                        *x += y;
                    }
                }
            }
        }
    }
    let mut grads = total.expect("at least one chunk");
    for g in grads.iter_mut().flatten() {
        for v in g.weights.data_mut() {
            *v *= scale;
        }
        for v in g.bias.data_mut() {
            *v *= scale;
        }
    }
    total_loss *= scale;

    if !total_loss.is_finite() {
        return Err(Error::NonFinite(format!("training loss = {total_loss}")));
    }
    for (i, g) in grads.iter().enumerate() {
        if let Some(g) = g {
            if g.weights.check_finite("").is_err() || g.bias.check_finite("").is_err() {
                return Err(Error::NonFinite(format!(
                    "gradient of layer {i} ({})",
                    net.specs[i].kind_name()
                )));
            }
        }
    }

    opt.apply(net.params_mut(), &grads)?;
    Ok(total_loss)
}

/// One BCE training step: backpropagates the mean binary cross-entropy of
/// `forward(batch)` against soft targets in `[0,1]` and applies the
/// optimizer update.
pub fn backward_and_step(
    net: &mut Network,
    batch: &Tensor,
    target: &Tensor,
    opt: &mut OptimizerState,
) -> Result<f64> {
    train_step(net, batch, &LossTarget::Bce(target), opt)
}

/// One softmax cross-entropy training step over integer labels (the one-hot
/// baseline head).
pub fn backward_and_step_softmax(
    net: &mut Network,
    batch: &Tensor,
    labels: &[usize],
    opt: &mut OptimizerState,
) -> Result<f64> {
    train_step(net, batch, &LossTarget::Softmax(labels), opt)
}
