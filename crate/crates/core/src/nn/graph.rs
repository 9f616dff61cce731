use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, Normal};
// Float math for no_std builds; inherent methods win when std is linked.
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::kernels::{self, BnStats, ConvShape};
use super::spec::{LayerKind, LayerSpec};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Leaky-ReLU slope for negative inputs.
pub const LEAKY_SLOPE: f64 = 0.2;
const BN_MOMENTUM: f64 = 0.1;

/// One layer of a [`Graph`]. Node `i` writes activation `i + 1`; activation 0 is the graph input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub spec: LayerSpec,
    pub input: usize,
    /// Second operand of a channel concatenation, appended after `input`.
    pub skip: Option<usize>,
}

/// Shape requirements on graph inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputContract {
    /// Exactly this spatial size.
    Fixed { height: usize, width: usize },
    /// Any size whose sides are positive multiples of `multiple`.
    MultipleOf { multiple: usize },
    /// Flat vector input of this many features.
    Vector { features: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
}

/// Gradient buffers aligned with [`Graph::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub values: Vec<Vec<T>>,
}

impl<T: Real> Grads<T> {
    pub fn zero(&mut self) {
        for g in &mut self.values {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|g| g.iter().all(|v| v.is_zero()))
    }

    pub fn scale(&mut self, s: T) {
        for g in &mut self.values {
            g.iter_mut().for_each(|v| *v = *v * s);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch-norm layers.
    Train,
    /// Running statistics; the graph behaves as a fixed function.
    Eval,
}

/// Activations recorded by a forward pass, consumed by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Tape<T> {
    pub mode: Mode,
    acts: Vec<Tensor<T>>,
    bn: Vec<Option<BnStats<T>>>,
}

impl<T: Real> Tape<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.acts.last().expect("tape has the input activation")
    }

    pub fn activation(&self, index: usize) -> &Tensor<T> {
        &self.acts[index]
    }
}

#[derive(Debug, Clone, Copy)]
struct Slots {
    weight: usize,
    bias: usize,
    running: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph<T> {
    in_channels: usize,
    contract: InputContract,
    nodes: Vec<Node>,
    params: Vec<Param<T>>,
    /// Batch-norm running mean / variance pairs, named like params.
    buffers: Vec<Param<T>>,
}

impl<T: Real> Graph<T> {
    /// Builds a graph, inferring parameter shapes from a probe of the input contract.
    /// Weights start at zero; see [`Graph::init_gaussian`].
    pub fn new(in_channels: usize, contract: InputContract, nodes: Vec<Node>) -> Result<Self> {
        let mut g = Graph {
            in_channels,
            contract,
            nodes,
            params: Vec::new(),
            buffers: Vec::new(),
        };
        let probe = g.probe_shape();
        let shapes = g.activation_shapes(probe)?;
        let mut params = Vec::new();
        let mut buffers = Vec::new();
        for node in &g.nodes {
            let cin = shapes[node.input][1];
            let s = &node.spec;
            let zeros = |name: String, shape: Vec<usize>| Param {
                value: vec![T::zero(); shape.iter().product()],
                name,
                shape,
            };
            match s.kind {
                LayerKind::Conv => {
                    params.push(zeros(format!("{}.weight", node.name), vec![s.channels, cin, s.kernel, s.kernel]));
                    params.push(zeros(format!("{}.bias", node.name), vec![s.channels]));
                }
                LayerKind::Deconv => {
                    params.push(zeros(format!("{}.weight", node.name), vec![cin, s.channels, s.kernel, s.kernel]));
                    params.push(zeros(format!("{}.bias", node.name), vec![s.channels]));
                }
                LayerKind::FullyConnected => {
                    let in_f: usize = shapes[node.input][1..].iter().product();
                    params.push(zeros(format!("{}.weight", node.name), vec![s.channels, in_f]));
                    params.push(zeros(format!("{}.bias", node.name), vec![s.channels]));
                }
                LayerKind::BatchNorm => {
                    let mut gamma = zeros(format!("{}.gamma", node.name), vec![cin]);
                    gamma.value.iter_mut().for_each(|v| *v = T::one());
                    params.push(gamma);
                    params.push(zeros(format!("{}.beta", node.name), vec![cin]));
                    buffers.push(zeros(format!("{}.running_mean", node.name), vec![cin]));
                    let mut var = zeros(format!("{}.running_var", node.name), vec![cin]);
                    var.value.iter_mut().for_each(|v| *v = T::one());
                    buffers.push(var);
                }
                _ => {}
            }
        }
        g.params = params;
        g.buffers = buffers;
        Ok(g)
    }

    fn probe_shape(&self) -> [usize; 4] {
        match self.contract {
            InputContract::Fixed { height, width } => [1, self.in_channels, height, width],
            InputContract::MultipleOf { multiple } => [1, self.in_channels, multiple, multiple],
            InputContract::Vector { features } => [1, features, 1, 1],
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn contract(&self) -> InputContract {
        self.contract
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.nodes.iter().map(|n| n.spec).collect()
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Param<T>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Param<T>] {
        &mut self.buffers
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads<T> {
        Grads {
            values: self.params.iter().map(|p| vec![T::zero(); p.value.len()]).collect(),
        }
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Gaussian `(0, std)` weights for conv/deconv/dense layers, zero biases,
    /// unit batch-norm scale.
    pub fn init_gaussian(&mut self, std: f64, rng: &mut impl Rng) {
        let normal = Normal::new(0.0, std).expect("positive std");
        for p in &mut self.params {
            if p.name.ends_with(".weight") {
                p.value
                    .iter_mut()
                    .for_each(|v| *v = T::lit(normal.sample(rng)));
            } else if p.name.ends_with(".gamma") {
                p.value.iter_mut().for_each(|v| *v = T::one());
            } else {
                p.value.iter_mut().for_each(|v| *v = T::zero());
            }
        }
    }

    /// Re-draws one named parameter from a Gaussian `(0, std)`.
    pub fn init_param_gaussian(&mut self, name: &str, std: f64, rng: &mut impl Rng) -> Result<()> {
        let i = self
            .param_index(name)
            .ok_or_else(|| Error::Missing(alloc::format!("parameter {name}")))?;
        let normal = Normal::new(0.0, std).map_err(|_| Error::invalid("std must be positive"))?;
        self.params[i].value.iter_mut().for_each(|v| *v = T::lit(normal.sample(rng)));
        Ok(())
    }

    /// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases.
    pub fn init_he(&mut self, rng: &mut impl Rng) {
        for p in &mut self.params {
            if p.name.ends_with(".weight") {
                // conv: [out, in, k, k]; deconv: [in, out, k, k]; dense: [out, in]
                let fan_in: usize = if p.shape.len() == 4 {
                    p.shape[1] * p.shape[2] * p.shape[3]
                } else {
                    p.shape[1]
                };
                let std = (2.0 / fan_in as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                p.value
                    .iter_mut()
                    .for_each(|v| *v = T::lit(normal.sample(rng)));
            } else if p.name.ends_with(".gamma") {
                p.value.iter_mut().for_each(|v| *v = T::one());
            } else {
                p.value.iter_mut().for_each(|v| *v = T::zero());
            }
        }
    }

    fn slots(&self) -> Vec<Option<Slots>> {
        let mut next = 0;
        let mut next_buf = 0;
        self.nodes
            .iter()
            .map(|n| {
                if !n.spec.has_params() {
                    return None;
                }
                let s = Slots {
                    weight: next,
                    bias: next + 1,
                    running: (n.spec.kind == LayerKind::BatchNorm).then_some(next_buf),
                };
                next += 2;
                if n.spec.kind == LayerKind::BatchNorm {
                    next_buf += 2;
                }
                Some(s)
            })
            .collect()
    }

    pub fn check_input(&self, shape: [usize; 4]) -> Result<()> {
        let [n, c, h, w] = shape;
        if n == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let ok = match self.contract {
            InputContract::Fixed { height, width } => c == self.in_channels && h == height && w == width,
            InputContract::MultipleOf { multiple } => {
                c == self.in_channels && h > 0 && w > 0 && h % multiple == 0 && w % multiple == 0
            }
            InputContract::Vector { features } => c == features && h == 1 && w == 1,
        };
        if ok {
            Ok(())
        } else {
            let expected = match self.contract {
                InputContract::Fixed { height, width } => {
                    format!("[N, {}, {height}, {width}]", self.in_channels)
                }
                InputContract::MultipleOf { multiple } => format!(
                    "[N, {}, H, W] with H and W positive multiples of {multiple}",
                    self.in_channels
                ),
                InputContract::Vector { features } => format!("[N, {features}, 1, 1]"),
            };
            Err(Error::shape(expected, format!("{shape:?}")))
        }
    }

    /// Shapes of every activation for an input of `input` shape.
    pub fn activation_shapes(&self, input: [usize; 4]) -> Result<Vec<[usize; 4]>> {
        let mut shapes = vec![input];
        for node in &self.nodes {
            let [n, c, h, w] = *shapes
                .get(node.input)
                .ok_or_else(|| Error::invalid(format!("node {} reads a future activation", node.name)))?;
            let s = &node.spec;
            let bad = || Error::invalid(format!("layer {} ({s}) cannot consume [{n}, {c}, {h}, {w}]", node.name));
            let out = match s.kind {
                LayerKind::Conv => {
                    let oh = kernels::conv_out(h, s.kernel, s.stride, s.padding).ok_or_else(bad)?;
                    let ow = kernels::conv_out(w, s.kernel, s.stride, s.padding).ok_or_else(bad)?;
                    [n, s.channels, oh, ow]
                }
                LayerKind::Deconv => {
                    let grow = |e: usize| ((e - 1) * s.stride + s.kernel + s.output_padding).checked_sub(2 * s.padding);
                    [n, s.channels, grow(h).ok_or_else(bad)?, grow(w).ok_or_else(bad)?]
                }
                LayerKind::FullyConnected => [n, s.channels, 1, 1],
                LayerKind::Reshape => {
                    if s.channels * s.height * s.width != c * h * w {
                        return Err(bad());
                    }
                    [n, s.channels, s.height, s.width]
                }
                LayerKind::Concat => {
                    let skip = node.skip.ok_or_else(bad)?;
                    let [sn, sc, sh, sw] = *shapes.get(skip).ok_or_else(bad)?;
                    if sn != n || sh != h || sw != w {
                        return Err(bad());
                    }
                    [n, c + sc, h, w]
                }
                _ => [n, c, h, w],
            };
            shapes.push(out);
        }
        Ok(shapes)
    }

    fn conv_shape(&self, node: &Node, cin: usize) -> ConvShape {
        ConvShape {
            cin,
            cout: node.spec.channels,
            kernel: node.spec.kernel,
            stride: node.spec.stride,
            padding: node.spec.padding,
            output_padding: node.spec.output_padding,
        }
    }

    fn apply(
        &self,
        node: &Node,
        slot: Option<Slots>,
        x: &Tensor<T>,
        skip: Option<&Tensor<T>>,
        mode: Mode,
    ) -> Result<(Tensor<T>, Option<BnStats<T>>)> {
        let s = &node.spec;
        let p = |i: usize| self.params[i].value.as_slice();
        Ok(match s.kind {
            LayerKind::Conv => {
                let sl = slot.expect("conv has params");
                let cs = self.conv_shape(node, x.channels());
                (kernels::conv_forward(x, p(sl.weight), p(sl.bias), &cs), None)
            }
            LayerKind::Deconv => {
                let sl = slot.expect("deconv has params");
                let cs = self.conv_shape(node, x.channels());
                (kernels::deconv_forward(x, p(sl.weight), p(sl.bias), &cs), None)
            }
            LayerKind::FullyConnected => {
                let sl = slot.expect("dense has params");
                (kernels::dense_forward(x, p(sl.weight), p(sl.bias), s.channels), None)
            }
            LayerKind::BatchNorm => {
                let sl = slot.expect("bn has params");
                match mode {
                    Mode::Train => {
                        let st = kernels::bn_batch_stats(x);
                        let y = kernels::bn_apply(x, &st.mean, &st.var, p(sl.weight), p(sl.bias));
                        (y, Some(st))
                    }
                    Mode::Eval => {
                        let r = sl.running.expect("bn has running stats");
                        let y = kernels::bn_apply(
                            x,
                            &self.buffers[r].value,
                            &self.buffers[r + 1].value,
                            p(sl.weight),
                            p(sl.bias),
                        );
                        (y, None)
                    }
                }
            }
            LayerKind::Relu => (x.map(|v| if v > T::zero() { v } else { T::zero() }), None),
            LayerKind::LeakyRelu => {
                let a = T::lit(LEAKY_SLOPE);
                (x.map(|v| if v > T::zero() { v } else { v * a }), None)
            }
            LayerKind::Tanh => (x.map(|v| v.tanh()), None),
            LayerKind::Sigmoid => (x.map(sigmoid), None),
            LayerKind::Concat => (Tensor::concat_channels(x, skip.expect("concat skip"))?, None),
            LayerKind::Reshape => (x.clone().reshape([x.batch(), s.channels, s.height, s.width])?, None),
        })
    }

    /// Read-only inference; batch norm uses running statistics.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x.shape())?;
        self.activation_shapes(x.shape())?;
        // Drop activations after their last consumer to bound memory on large images.
        let total = self.nodes.len() + 1;
        let mut last_use = vec![0usize; total];
        for (i, node) in self.nodes.iter().enumerate() {
            last_use[node.input] = last_use[node.input].max(i);
            if let Some(s) = node.skip {
                last_use[s] = last_use[s].max(i);
            }
        }
        let slots = self.slots();
        let mut acts: Vec<Option<Tensor<T>>> = vec![None; total];
        acts[0] = Some(x.clone());
        for (i, node) in self.nodes.iter().enumerate() {
            let input = acts[node.input].as_ref().expect("live activation");
            let skip = node.skip.map(|s| acts[s].as_ref().expect("live skip"));
            let (y, _) = self.apply(node, slots[i], input, skip, Mode::Eval)?;
            acts[i + 1] = Some(y);
            for j in 0..=i {
                if last_use[j] == i && j != i + 1 {
                    acts[j] = None;
                }
            }
        }
        Ok(acts.pop().flatten().expect("graph output"))
    }

    /// Forward pass keeping every activation for [`Graph::backward`].
    /// Does not touch running statistics; see [`Graph::update_running_stats`].
    pub fn forward_tape(&self, x: &Tensor<T>, mode: Mode) -> Result<Tape<T>> {
        self.check_input(x.shape())?;
        self.activation_shapes(x.shape())?;
        let slots = self.slots();
        let mut acts = Vec::with_capacity(self.nodes.len() + 1);
        let mut bn = Vec::with_capacity(self.nodes.len());
        acts.push(x.clone());
        for (i, node) in self.nodes.iter().enumerate() {
            let skip = node.skip.map(|s| &acts[s]);
            let (y, st) = self.apply(node, slots[i], &acts[node.input], skip, mode)?;
            acts.push(y);
            bn.push(st);
        }
        Ok(Tape { mode, acts, bn })
    }

    /// Exponential moving average of the batch statistics recorded in `tape`.
    pub fn update_running_stats(&mut self, tape: &Tape<T>) {
        self.blend_running_stats(tape, BN_MOMENTUM);
    }

    /// Moves every running statistic a fraction `weight` of the way towards the
    /// batch statistic recorded in `tape`; 1 overwrites.
    pub fn blend_running_stats(&mut self, tape: &Tape<T>, weight: f64) {
        let slots = self.slots();
        let m = T::lit(weight);
        for (i, st) in tape.bn.iter().enumerate() {
            let (Some(st), Some(sl)) = (st, slots[i]) else {
                continue;
            };
            let r = sl.running.expect("bn slot");
            // Unbiased variance for the running estimate.
            let unbias = if st.count > 1 {
                T::lit(st.count as f64 / (st.count as f64 - 1.0))
            } else {
                T::one()
            };
            for ch in 0..st.mean.len() {
                let rm = &mut self.buffers[r].value[ch];
                *rm = (T::one() - m) * *rm + m * st.mean[ch];
                let rv = &mut self.buffers[r + 1].value[ch];
                *rv = (T::one() - m) * *rv + m * st.var[ch] * unbias;
            }
        }
    }

    /// Back-propagates `grad_out` through the recorded pass. Parameter gradients
    /// are accumulated into `grads` when given; the input gradient is returned.
    pub fn backward(&self, tape: &Tape<T>, grad_out: &Tensor<T>, mut grads: Option<&mut Grads<T>>) -> Tensor<T> {
        let slots = self.slots();
        let mut g: Vec<Option<Tensor<T>>> = vec![None; tape.acts.len()];
        let last = tape.acts.len() - 1;
        g[last] = Some(grad_out.clone());
        for (i, node) in self.nodes.iter().enumerate().rev() {
            let Some(gy) = g[i + 1].take() else {
                continue;
            };
            let x = &tape.acts[node.input];
            let y = &tape.acts[i + 1];
            let s = &node.spec;
            let gx = match s.kind {
                LayerKind::Conv | LayerKind::Deconv | LayerKind::FullyConnected | LayerKind::BatchNorm => {
                    let sl = slots[i].expect("parametric layer");
                    let pg = grads.as_deref_mut().map(|gr| {
                        let (a, b) = two_mut(&mut gr.values, sl.weight, sl.bias);
                        (a.as_mut_slice(), b.as_mut_slice())
                    });
                    let w = self.params[sl.weight].value.as_slice();
                    match s.kind {
                        LayerKind::Conv => {
                            kernels::conv_backward(x, &gy, w, &self.conv_shape(node, x.channels()), pg)
                        }
                        LayerKind::Deconv => {
                            kernels::deconv_backward(x, &gy, w, &self.conv_shape(node, x.channels()), pg)
                        }
                        LayerKind::FullyConnected => kernels::dense_backward(x, &gy, w, s.channels, pg),
                        _ => {
                            let (mean, var, batch) = match &tape.bn[i] {
                                Some(st) => (st.mean.as_slice(), st.var.as_slice(), true),
                                None => {
                                    let r = sl.running.expect("bn slot");
                                    (
                                        self.buffers[r].value.as_slice(),
                                        self.buffers[r + 1].value.as_slice(),
                                        false,
                                    )
                                }
                            };
                            kernels::bn_backward(x, &gy, mean, var, w, batch, pg)
                        }
                    }
                }
                LayerKind::Relu => zip_map(&gy, x, |g, v| if v > T::zero() { g } else { T::zero() }),
                LayerKind::LeakyRelu => {
                    let a = T::lit(LEAKY_SLOPE);
                    zip_map(&gy, x, |g, v| if v > T::zero() { g } else { g * a })
                }
                LayerKind::Tanh => zip_map(&gy, y, |g, t| g * (T::one() - t * t)),
                LayerKind::Sigmoid => zip_map(&gy, y, |g, p| g * p * (T::one() - p)),
                LayerKind::Reshape => gy.reshape(x.shape()).expect("same element count"),
                LayerKind::Concat => {
                    let (ga, gb) = gy.split_channels(x.channels());
                    let skip = node.skip.expect("concat skip");
                    accumulate(&mut g[skip], gb);
                    ga
                }
            };
            accumulate(&mut g[node.input], gx);
        }
        g[0].take().unwrap_or_else(|| Tensor::zeros(tape.acts[0].shape()))
    }

    /// Copies parameters and buffers whose names and shapes match in `other`.
    /// Returns the number of transferred tensors.
    pub fn load_matching(&mut self, other: &Graph<T>) -> usize {
        let mut n = 0;
        for (dst, src) in [(&mut self.params, &other.params), (&mut self.buffers, &other.buffers)] {
            for p in dst.iter_mut() {
                if let Some(q) = src.iter().find(|q| q.name == p.name && q.shape == p.shape) {
                    p.value.clone_from(&q.value);
                    n += 1;
                }
            }
        }
        n
    }

    pub fn cast<U: Real>(&self) -> Graph<U> {
        let conv = |ps: &[Param<T>]| {
            ps.iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    value: p.value.iter().map(|v| U::lit(v.as_f64())).collect(),
                })
                .collect()
        };
        Graph {
            in_channels: self.in_channels,
            contract: self.contract,
            nodes: self.nodes.clone(),
            params: conv(&self.params),
            buffers: conv(&self.buffers),
        }
    }

    /// 64-bit FNV-1a over all parameter and buffer bits, for cheap equality checks.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.params.iter().chain(&self.buffers) {
            for v in &p.value {
                for b in v.as_f64().to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

pub fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape(), data).expect("same shape")
}

fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

fn two_mut<V>(v: &mut [V], a: usize, b: usize) -> (&mut V, &mut V) {
    assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}
