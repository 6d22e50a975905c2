//! A small dense feed-forward network trained with Adam on a squared-error
//! loss. Activations flow as `batch x features` matrices; each layer stores
//! its weights as `out x in`.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "linear" => Some(Activation::Linear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub output_size: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl Default for NetworkSpec {
    /// 25-day input window, three hidden layers, one output per action.
    fn default() -> Self {
        NetworkSpec {
            input_size: 25,
            hidden_sizes: vec![64, 128, 128],
            output_size: 4,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Linear,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.output_size == 0 || self.hidden_sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!("layer sizes must be at least 1: {self:?}")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out, activation)` for every layer, input to output.
    fn layer_shapes(&self) -> Vec<(usize, usize, Activation)> {
        let mut sizes = vec![self.input_size];
        sizes.extend(&self.hidden_sizes);
        sizes.push(self.output_size);
        let last = sizes.len() - 2;
        sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let act = if k == last { self.output_activation } else { self.hidden_activation };
                (w[0], w[1], act)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
}

/// Intermediate values of a forward pass, needed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (`inputs[0]` is the network input).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation output of each layer.
    pre_activations: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Parameter gradients, laid out like [`Network::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out, activation)| {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-limit..=limit));
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        Ok(Network { spec, layers })
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out, activation)| Layer {
                weights: Array2::zeros((fan_out, fan_in)),
                bias: Array1::zeros(fan_out),
                activation,
            })
            .collect();
        Ok(Network { spec, layers })
    }

    /// Builds a network from explicit layers; shapes must chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::Empty("layer list".into()))?;
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[1].weights.ncols() != pair[0].weights.nrows() {
                return Err(Error::ShapeMismatch(format!("layer {} input does not match layer {k} output", k + 1)));
            }
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weights.nrows() {
                return Err(Error::ShapeMismatch(format!("layer {k} bias length")));
            }
        }
        let last = layers.last().expect("non-empty");
        let spec = NetworkSpec {
            input_size: first.weights.ncols(),
            hidden_sizes: layers[..layers.len() - 1].iter().map(|l| l.weights.nrows()).collect(),
            output_size: last.weights.nrows(),
            hidden_activation: layers.first().map(|l| l.activation).unwrap_or(Activation::Relu),
            output_activation: last.activation,
        };
        spec.validate()?;
        Ok(Network { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Order-sensitive hash of every parameter's bit pattern.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for layer in &self.layers {
            for v in layer.weights.iter().chain(layer.bias.iter()) {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.spec.input_size {
            return Err(Error::ShapeMismatch(format!(
                "input has {cols} features, network expects {}",
                self.spec.input_size
            )));
        }
        Ok(())
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass over a `batch x input_size` matrix.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(inputs.ncols())?;
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        let mut act = inputs.to_owned();
        for layer in &self.layers {
            let mut z = act.dot(&layer.weights.t());
            z += &layer.bias;
            apply(layer.activation, &mut z);
            act = z;
        }
        if act.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(act)
    }

    /// Forward pass that keeps what [`backward`](Self::backward) needs.
    pub fn forward_cached(&self, inputs: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        self.check_input(inputs.ncols())?;
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut act = inputs.to_owned();
        for layer in &self.layers {
            let mut z = act.dot(&layer.weights.t());
            z += &layer.bias;
            let mut a = z.clone();
            apply(layer.activation, &mut a);
            layer_inputs.push(act);
            pre_activations.push(z);
            act = a;
        }
        if act.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(ForwardCache {
            inputs: layer_inputs,
            pre_activations,
            output: act,
        })
    }

    /// Reverse-mode gradients of a loss whose gradient with respect to the
    /// network output is `upstream` (`batch x output_size`). ReLU uses
    /// subgradient 0 at exactly 0.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Array2<f64>) -> Result<Gradients> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::ShapeMismatch("forward cache belongs to a different network".into()));
        }
        if upstream.dim() != cache.output.dim() {
            return Err(Error::ShapeMismatch(format!(
                "upstream gradient {:?} vs output {:?}",
                upstream.dim(),
                cache.output.dim()
            )));
        }
        let n = self.layers.len();
        let mut weights = vec![Array2::zeros((0, 0)); n];
        let mut biases = vec![Array1::zeros(0); n];
        let mut delta = upstream.clone();
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            if layer.activation == Activation::Relu {
                Zip::from(&mut delta)
                    .and(&cache.pre_activations[k])
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0;
                        }
                    });
            }
            weights[k] = delta.t().dot(&cache.inputs[k]);
            biases[k] = delta.sum_axis(Axis(0));
            if k > 0 {
                delta = delta.dot(&layer.weights);
            }
        }
        Ok(Gradients { weights, biases })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_str(&text, &path.display().to_string())
    }

    /// Text checkpoint: a version line, a layer count, then per layer a
    /// header `layer <out> <in> <activation>`, a `w` line with the weights in
    /// row-major order and a `b` line with the biases. Values use Rust's
    /// shortest round-trip formatting, so reloading is exact.
    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::new();
        out.push_str(CHECKPOINT_MAGIC);
        out.push('\n');
        let _ = writeln!(out, "layers {}", self.layers.len());
        for layer in &self.layers {
            let (rows, cols) = layer.weights.dim();
            let _ = writeln!(out, "layer {rows} {cols} {}", layer.activation.name());
            out.push('w');
            for v in layer.weights.iter() {
                let _ = write!(out, " {v:?}");
            }
            out.push_str("\nb");
            for v in layer.bias.iter() {
                let _ = write!(out, " {v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_checkpoint_str(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
        let err = |line: usize, message: &str| Error::Parse {
            path: origin.to_string(),
            line,
            message: message.to_string(),
        };
        let mut next = |what: &str| lines.next().ok_or_else(|| err(0, &format!("unexpected end of file, expected {what}")));

        let (ln, magic) = next("header")?;
        if magic.trim() != CHECKPOINT_MAGIC {
            return Err(err(ln, "not a network checkpoint (bad header)"));
        }
        let (ln, count) = next("layer count")?;
        let count: usize = count
            .strip_prefix("layers ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| err(ln, "expected `layers <count>`"))?;

        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, header) = next("layer header")?;
            let fields: Vec<&str> = header.split_whitespace().collect();
            let (rows, cols, act) = match fields.as_slice() {
                ["layer", r, c, a] => (
                    r.parse::<usize>().map_err(|_| err(ln, "bad row count"))?,
                    c.parse::<usize>().map_err(|_| err(ln, "bad column count"))?,
                    Activation::parse(a).ok_or_else(|| err(ln, "unknown activation"))?,
                ),
                _ => return Err(err(ln, "expected `layer <out> <in> <activation>`")),
            };
            let (ln, w) = next("weights")?;
            let w = parse_values(w, 'w', rows * cols).map_err(|m| err(ln, &m))?;
            let (ln, b) = next("biases")?;
            let b = parse_values(b, 'b', rows).map_err(|m| err(ln, &m))?;
            layers.push(Layer {
                weights: Array2::from_shape_vec((rows, cols), w).map_err(|e| err(ln, &e.to_string()))?,
                bias: Array1::from(b),
                activation: act,
            });
        }
        Network::from_layers(layers)
    }
}

const CHECKPOINT_MAGIC: &str = "pandemic-policy-network v1";

fn parse_values(line: &str, tag: char, expected: usize) -> std::result::Result<Vec<f64>, String> {
    let rest = line
        .strip_prefix(tag)
        .ok_or_else(|| format!("expected a `{tag}` line"))?;
    let values = rest
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad number `{t}`")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if values.len() != expected {
        return Err(format!("expected {expected} values, found {}", values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite parameter".into());
    }
    Ok(values)
}

fn apply(act: Activation, z: &mut Array2<f64>) {
    if act == Activation::Relu {
        z.mapv_inplace(|v| v.max(0.0));
    }
}

/// Mean squared error and its gradient with respect to `predicted`.
pub fn mse_loss(predicted: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predicted.len() != target.len() || predicted.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "prediction has {} values, target {}",
            predicted.len(),
            target.len()
        )));
    }
    let n = predicted.len() as f64;
    let loss = predicted.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let grad = predicted.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    Ok((loss, grad))
}

/// Batched MSE: the mean over every element of the matrices.
pub fn mse_loss_batch(predicted: &Array2<f64>, target: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
    if predicted.dim() != target.dim() || predicted.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            predicted.dim(),
            target.dim()
        )));
    }
    let n = predicted.len() as f64;
    let diff = predicted - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = diff.mapv(|d| 2.0 * d / n);
    Ok((loss, grad))
}

/// Adam optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(network: &Network, learning_rate: f64) -> Self {
        let zeros = || Gradients {
            weights: network.layers.iter().map(|l| Array2::zeros(l.weights.dim())).collect(),
            biases: network.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        };
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam step.
    pub fn update(&mut self, network: &mut Network, grads: &Gradients) -> Result<()> {
        if grads.weights.len() != network.layers.len() || grads.biases.len() != network.layers.len() {
            return Err(Error::ShapeMismatch("gradient layer count".into()));
        }
        for (k, layer) in network.layers.iter().enumerate() {
            if grads.weights[k].dim() != layer.weights.dim() || grads.biases[k].len() != layer.bias.len() {
                return Err(Error::ShapeMismatch(format!("gradient shape for layer {k}")));
            }
        }
        let finite = |g: &Gradients| {
            g.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
                && g.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
        };
        if !finite(grads) {
            return Err(Error::NonFinite("gradient".into()));
        }
        let t = (self.step + 1) as f64;
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let c1 = 1.0 - b1.powf(t);
        let c2 = 1.0 - b2.powf(t);
        let rule = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                *m = flush_subnormal(b1 * *m + (1.0 - b1) * g);
                *v = flush_subnormal(b2 * *v + (1.0 - b2) * g * g);
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        for (k, layer) in network.layers.iter_mut().enumerate() {
            rule(
                contiguous_mut(&mut layer.weights),
                self.m.weights[k].as_slice_mut().expect("standard layout"),
                self.v.weights[k].as_slice_mut().expect("standard layout"),
                grads.weights[k].as_standard_layout().as_slice().expect("standard layout"),
            );
            rule(
                layer.bias.as_slice_mut().expect("contiguous"),
                self.m.biases[k].as_slice_mut().expect("contiguous"),
                self.v.biases[k].as_slice_mut().expect("contiguous"),
                grads.biases[k].as_slice().expect("contiguous"),
            );
        }
        self.step += 1;
        if network.layers.iter().any(|l| l.weights.iter().chain(l.bias.iter()).any(|p| !p.is_finite())) {
            return Err(Error::NonFinite("parameters after Adam update".into()));
        }
        Ok(())
    }
}

/// Moments of parameters that stop receiving gradient decay geometrically
/// into the subnormal range, where arithmetic is drastically slower.
#[inline]
fn flush_subnormal(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        x
    }
}

fn contiguous_mut(a: &mut Array2<f64>) -> &mut [f64] {
    if !a.is_standard_layout() {
        *a = a.as_standard_layout().into_owned();
    }
    a.as_slice_mut().expect("standard layout")
}
