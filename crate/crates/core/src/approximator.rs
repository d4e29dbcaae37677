//! Small dense network with exact reverse-mode gradients, Adam, and soft
//! target updates. Everything runs in `f64`.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two objectives times five actions.
pub const Q_OUTPUTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl Dense {
    fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

/// Which agents enter an agent's mean action.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborScope {
    /// Every other agent.
    #[default]
    All,
    /// Other agents inside the field of view.
    Fov,
}

/// Shape of the assembled network input: flattened FOV channels, the
/// relative-position summary, the mean action and the preference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputLayout {
    pub fov: usize,
    pub channels: usize,
    pub relative_features: usize,
    pub mean_action: usize,
    pub preference: usize,
    #[serde(default)]
    pub neighbors: NeighborScope,
}

impl InputLayout {
    pub fn size(&self) -> usize {
        self.channels * self.fov * self.fov + self.relative_features + self.mean_action + self.preference
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layout: InputLayout,
    pub layers: Vec<Dense>,
}

impl NetworkSpec {
    pub fn new(layout: InputLayout, layers: Vec<Dense>) -> Result<Self> {
        let spec = Self { layout, layers };
        spec.validate()?;
        Ok(spec)
    }

    /// ReLU hidden layers of the given widths and an identity output head.
    pub fn mlp(layout: InputLayout, hidden: &[usize]) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = layout.size();
        for &h in hidden {
            layers.push(Dense {
                inputs: prev,
                outputs: h,
                activation: Activation::Relu,
            });
            prev = h;
        }
        layers.push(Dense {
            inputs: prev,
            outputs: Q_OUTPUTS,
            activation: Activation::Identity,
        });
        Self::new(layout, layers)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.layers.first().ok_or_else(|| Error::invalid("network has no layers"))?;
        if first.inputs != self.layout.size() {
            return Err(Error::invalid(format!(
                "first layer takes {} inputs, layout provides {}",
                first.inputs,
                self.layout.size()
            )));
        }
        for w in self.layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(Error::invalid("consecutive layer shapes are incompatible"));
            }
        }
        if self.layers.iter().any(|l| l.inputs == 0 || l.outputs == 0) {
            return Err(Error::invalid("layers need non-zero widths"));
        }
        if self.output_size() != Q_OUTPUTS {
            return Err(Error::invalid(format!(
                "output head must have {Q_OUTPUTS} units, got {}",
                self.output_size()
            )));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Uniform `+-sqrt(6 / (fan_in + fan_out))` weights, zero biases.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            let limit = (6.0 / (l.inputs + l.outputs) as f64).sqrt();
            params.extend((0..l.inputs * l.outputs).map(|_| rng.gen_range(-limit..=limit)));
            params.extend(std::iter::repeat_n(0.0, l.outputs));
        }
        params
    }
}

/// Online parameters and the slowly tracking target copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    pub theta: Vec<f64>,
    pub target: Vec<f64>,
}

impl ParamStore {
    pub fn new(theta: Vec<f64>) -> Self {
        Self {
            target: theta.clone(),
            theta,
        }
    }
}

/// Per-layer inputs and pre-activations of one forward pass. When the pass
/// started from a [`PrefixCache`], the first entry of `inputs` only holds the
/// suffix columns.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    prefix_len: usize,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn check_len(params: &[f64], spec: &NetworkSpec) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::invalid(format!(
            "parameter vector has {} entries, network needs {}",
            params.len(),
            spec.param_count()
        )));
    }
    Ok(())
}

pub fn forward(params: &[f64], spec: &NetworkSpec, input: &[f64]) -> Result<ForwardCache> {
    check_len(params, spec)?;
    if input.len() != spec.input_size() {
        return Err(Error::invalid(format!(
            "input has {} entries, network expects {}",
            input.len(),
            spec.input_size()
        )));
    }
    let first = &spec.layers[0];
    let w = &params[..first.inputs * first.outputs];
    let b = &params[first.inputs * first.outputs..first.param_count()];
    let z: Vec<f64> = w.chunks_exact(first.inputs).zip(b).map(|(row, bias)| dot(row, input) + bias).collect();
    finish_forward(params, spec, 0, input.to_vec(), z)
}

/// First-layer pre-activations contributed by the leading input columns and
/// the bias. Many inputs that share this prefix can then be evaluated with
/// [`forward_with_prefix`] at the cost of their suffix alone.
#[derive(Debug, Clone)]
pub struct PrefixCache {
    len: usize,
    partial: Vec<f64>,
}

impl PrefixCache {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

pub fn prefix_partial(params: &[f64], spec: &NetworkSpec, prefix: &[f64]) -> Result<PrefixCache> {
    check_len(params, spec)?;
    let first = &spec.layers[0];
    if prefix.len() > first.inputs {
        return Err(Error::invalid("prefix longer than the network input"));
    }
    let w = &params[..first.inputs * first.outputs];
    let b = &params[first.inputs * first.outputs..first.param_count()];
    let partial = w
        .chunks_exact(first.inputs)
        .zip(b)
        .map(|(row, bias)| dot(&row[..prefix.len()], prefix) + bias)
        .collect();
    Ok(PrefixCache {
        len: prefix.len(),
        partial,
    })
}

pub fn forward_with_prefix(
    params: &[f64],
    spec: &NetworkSpec,
    prefix: &PrefixCache,
    suffix: &[f64],
) -> Result<ForwardCache> {
    check_len(params, spec)?;
    let first = &spec.layers[0];
    if prefix.len + suffix.len() != first.inputs || prefix.partial.len() != first.outputs {
        return Err(Error::invalid("prefix and suffix do not cover the network input"));
    }
    let w = &params[..first.inputs * first.outputs];
    let z: Vec<f64> = w
        .chunks_exact(first.inputs)
        .zip(&prefix.partial)
        .map(|(row, p)| p + dot(&row[prefix.len..], suffix))
        .collect();
    finish_forward(params, spec, prefix.len, suffix.to_vec(), z)
}

fn finish_forward(params: &[f64], spec: &NetworkSpec, prefix_len: usize, x0: Vec<f64>, z0: Vec<f64>) -> Result<ForwardCache> {
    let mut inputs = Vec::with_capacity(spec.layers.len());
    let mut pre = Vec::with_capacity(spec.layers.len());
    let activate = |layer: &Dense, z: &[f64]| -> Vec<f64> {
        match layer.activation {
            Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
            Activation::Identity => z.to_vec(),
        }
    };
    let mut x = activate(&spec.layers[0], &z0);
    inputs.push(x0);
    pre.push(z0);
    let mut offset = spec.layers[0].param_count();
    for layer in &spec.layers[1..] {
        let w = &params[offset..offset + layer.inputs * layer.outputs];
        let b = &params[offset + layer.inputs * layer.outputs..offset + layer.param_count()];
        offset += layer.param_count();
        let z: Vec<f64> = w
            .chunks_exact(layer.inputs)
            .zip(b)
            .map(|(row, bias)| dot(row, &x) + bias)
            .collect();
        let a = activate(layer, &z);
        inputs.push(std::mem::replace(&mut x, a));
        pre.push(z);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("network output is not finite"));
    }
    Ok(ForwardCache {
        prefix_len,
        inputs,
        pre,
        output: x,
    })
}

/// Adds `d(upstream . output) / d(params)` to `grad`.
pub fn backward_into(
    params: &[f64],
    spec: &NetworkSpec,
    cache: &ForwardCache,
    upstream: &[f64],
    grad: &mut [f64],
) -> Result<()> {
    if cache.prefix_len != 0 {
        return Err(Error::invalid("cache came from a prefix pass, use backward_prefix_into"));
    }
    backward_impl(params, spec, cache, upstream, grad, None)
}

/// Like [`backward_into`] for a pass started from a prefix, except that the
/// first-layer weight gradient of the prefix columns is left out. The
/// first-layer pre-activation gradient is added to `first_delta` instead, to
/// be applied once per prefix with [`accumulate_prefix_grad`].
pub fn backward_prefix_into(
    params: &[f64],
    spec: &NetworkSpec,
    cache: &ForwardCache,
    upstream: &[f64],
    grad: &mut [f64],
    first_delta: &mut [f64],
) -> Result<()> {
    if first_delta.len() != spec.layers[0].outputs {
        return Err(Error::invalid("first-layer delta buffer has the wrong length"));
    }
    backward_impl(params, spec, cache, upstream, grad, Some(first_delta))
}

pub fn accumulate_prefix_grad(spec: &NetworkSpec, grad: &mut [f64], first_delta: &[f64], prefix: &[f64]) -> Result<()> {
    let first = &spec.layers[0];
    if grad.len() != spec.param_count() || first_delta.len() != first.outputs || prefix.len() > first.inputs {
        return Err(Error::invalid("prefix gradient buffers do not match the network"));
    }
    for (o, &d) in first_delta.iter().enumerate() {
        if d != 0.0 {
            let row = o * first.inputs;
            axpy(d, prefix, &mut grad[row..row + prefix.len()]);
        }
    }
    Ok(())
}

fn backward_impl(
    params: &[f64],
    spec: &NetworkSpec,
    cache: &ForwardCache,
    upstream: &[f64],
    grad: &mut [f64],
    mut first_delta: Option<&mut [f64]>,
) -> Result<()> {
    check_len(params, spec)?;
    if grad.len() != params.len() {
        return Err(Error::invalid("gradient buffer length differs from parameters"));
    }
    if upstream.len() != spec.output_size() || cache.pre.len() != spec.layers.len() {
        return Err(Error::invalid("upstream gradient or cache does not match the network"));
    }
    let mut offsets = Vec::with_capacity(spec.layers.len());
    let mut o = 0;
    for l in &spec.layers {
        offsets.push(o);
        o += l.param_count();
    }
    let mut delta = upstream.to_vec();
    for (k, layer) in spec.layers.iter().enumerate().rev() {
        if layer.activation == Activation::Relu {
            for (d, &z) in delta.iter_mut().zip(&cache.pre[k]) {
                if z <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let x = &cache.inputs[k];
        let skip = if k == 0 { cache.prefix_len } else { 0 };
        let base = offsets[k];
        let nw = layer.inputs * layer.outputs;
        let w = &params[base..base + nw];
        {
            let (gw, gb) = grad[base..base + layer.param_count()].split_at_mut(nw);
            for (o, (&d, gb_o)) in delta.iter().zip(gb.iter_mut()).enumerate() {
                if d != 0.0 {
                    let row = o * layer.inputs;
                    axpy(d, x, &mut gw[row + skip..row + layer.inputs]);
                    *gb_o += d;
                }
            }
        }
        if k > 0 {
            let mut next = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, &w[o * layer.inputs..(o + 1) * layer.inputs], &mut next);
                }
            }
            delta = next;
        } else if let Some(acc) = first_delta.as_deref_mut() {
            axpy(1.0, &delta, acc);
        }
    }
    Ok(())
}

pub fn backward(params: &[f64], spec: &NetworkSpec, cache: &ForwardCache, upstream: &[f64]) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; params.len()];
    backward_into(params, spec, cache, upstream, &mut grad)?;
    Ok(grad)
}

/// Adam state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam step. Non-finite gradients reject the step and
/// leave both parameters and state untouched.
pub fn optimizer_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::invalid("optimizer buffers have different lengths"));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::numeric("non-finite gradient, step rejected"));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        let m = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
        let v = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        params[i] -= state.learning_rate * (m / c1) / ((v / c2).sqrt() + state.epsilon);
    }
    Ok(())
}

/// `target <- alpha * theta + (1 - alpha) * target`.
pub fn soft_update(theta: &[f64], target: &mut [f64], alpha: f64) -> Result<()> {
    if theta.len() != target.len() {
        return Err(Error::invalid("soft update on parameter vectors of different length"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("soft update rate {alpha} outside [0, 1]")));
    }
    for (tb, &th) in target.iter_mut().zip(theta) {
        *tb = alpha * th + (1.0 - alpha) * *tb;
    }
    Ok(())
}

pub const CHECKPOINT_FORMAT: &str = "maif-checkpoint/1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub episodes: u64,
    pub updates: u64,
    pub stage: usize,
    pub zeta: f64,
}

/// Everything needed to resume or evaluate a trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub spec: NetworkSpec,
    pub params: ParamStore,
    pub optimizer: OptimizerState,
    pub rng: ChaCha8Rng,
    pub progress: Progress,
}

impl Checkpoint {
    pub fn new(spec: NetworkSpec, params: ParamStore, optimizer: OptimizerState, rng: ChaCha8Rng) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            spec,
            params,
            optimizer,
            rng,
            progress: Progress::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Parse(format!("unsupported checkpoint format '{}'", self.format)));
        }
        self.spec.validate()?;
        let n = self.spec.param_count();
        let lens = [
            self.params.theta.len(),
            self.params.target.len(),
            self.optimizer.first_moment.len(),
            self.optimizer.second_moment.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::invalid("checkpoint arrays do not match the network size"));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.params.theta) || !finite(&self.params.target) {
            return Err(Error::numeric("checkpoint holds non-finite parameters"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text)?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
