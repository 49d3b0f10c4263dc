//! Feed-forward network with exact backpropagation.
//!
//! The network is a stack of affine layers with an elementwise activation:
//! hidden layers use ReLU or tanh, the output layer is always sigmoid so the
//! final activations can be read as per-attribute confidence scores. Losses
//! supply the gradient with respect to the final logits and [`backward`]
//! chains it through the stack.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Largest f64 strictly below 1. Sigmoid outputs are clamped into
/// `[MIN_POSITIVE, SCORE_MAX]` so scores stay in the open unit interval
/// even when a logit saturates the exponential.
pub const SCORE_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Numerically stable logistic function, without the score clamp.
pub(crate) fn sigmoid_raw(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic function clamped into the open interval (0, 1).
pub fn sigmoid(z: f64) -> f64 {
    sigmoid_raw(z).clamp(f64::MIN_POSITIVE, SCORE_MAX)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the activation output `a`.
    ///
    /// For ReLU the zero branch is taken at the kink, so `a == 0` maps to
    /// slope 0.
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::format(format!("unknown activation `{other}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Activation choice for hidden layers; the output layer is always sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HiddenActivation {
    #[default]
    Relu,
    Tanh,
}

impl From<HiddenActivation> for Activation {
    fn from(h: HiddenActivation) -> Activation {
        match h {
            HiddenActivation::Relu => Activation::Relu,
            HiddenActivation::Tanh => Activation::Tanh,
        }
    }
}

impl FromStr for HiddenActivation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(HiddenActivation::Relu),
            "tanh" => Ok(HiddenActivation::Tanh),
            other => Err(Error::config(format!(
                "hidden activation must be relu or tanh, got `{other}`"
            ))),
        }
    }
}

/// Weight initialization rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScaleRule {
    /// Uniform in `[-s, s]` with `s = sqrt(6 / (fan_in + fan_out))`.
    #[default]
    UniformXavier,
}

#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub init_seed: u64,
    pub init_scale_rule: InitScaleRule,
}

impl NetworkConfig {
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden_activation: HiddenActivation,
        init_seed: u64,
    ) -> Result<Self> {
        let cfg = NetworkConfig {
            layer_sizes,
            hidden_activation,
            init_seed,
            init_scale_rule: InitScaleRule::UniformXavier,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::config(format!(
                "layer_sizes needs at least input and output dims, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::config(format!(
                "layer sizes must be positive, got {:?}",
                self.layer_sizes
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Output dimension, i.e. the attribute count K.
    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }
}

/// One affine layer: `weight` is `out x in`, bias has length `out`.
#[derive(Debug, Clone)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct NetworkParams {
    pub layers: Vec<Layer>,
    pub config: NetworkConfig,
}

impl NetworkParams {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.rows()
    }

    /// Check the layer-to-layer dimension chaining against the config.
    pub fn validate(&self) -> Result<()> {
        if self.layers.len() + 1 != self.config.layer_sizes.len() {
            return Err(Error::shape(format!(
                "{} layers do not chain {} layer sizes",
                self.layers.len(),
                self.config.layer_sizes.len()
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let (fan_in, fan_out) = (self.config.layer_sizes[i], self.config.layer_sizes[i + 1]);
            if layer.weight.cols() != fan_in || layer.weight.rows() != fan_out {
                return Err(Error::shape(format!(
                    "layer {i}: weight is {}x{}, expected {}x{}",
                    layer.weight.rows(),
                    layer.weight.cols(),
                    fan_out,
                    fan_in
                )));
            }
            if layer.bias.len() != fan_out {
                return Err(Error::shape(format!(
                    "layer {i}: bias length {} != {}",
                    layer.bias.len(),
                    fan_out
                )));
            }
        }
        Ok(())
    }
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Matrix,
    /// Per-layer pre-activations `z_i`, batch x out_i.
    pub pre_activations: Vec<Matrix>,
    /// Per-layer activations `a_i = act(z_i)`.
    pub activations: Vec<Matrix>,
}

impl ForwardTrace {
    /// Final-layer pre-activations.
    pub fn logits(&self) -> &Matrix {
        self.pre_activations.last().unwrap()
    }

    /// Final-layer sigmoid scores, strictly inside (0, 1).
    pub fn scores(&self) -> &Matrix {
        self.activations.last().unwrap()
    }

    /// Activation output of the next-to-last layer (the embedding the
    /// triplet baseline trains on).
    pub fn penultimate(&self) -> Result<&Matrix> {
        let n = self.activations.len();
        if n < 2 {
            return Err(Error::config(
                "network has no penultimate layer (single-layer network)".to_string(),
            ));
        }
        Ok(&self.activations[n - 2])
    }

    pub fn batch(&self) -> usize {
        self.input.rows()
    }
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Per-layer gradients, shapes mirroring [`NetworkParams`].
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub layers: Vec<LayerGrads>,
}

impl GradientBundle {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        GradientBundle {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    /// Zero out the gradients of the given layer (used for freeze masks).
    pub fn zero_layer(&mut self, index: usize) {
        if let Some(layer) = self.layers.get_mut(index) {
            layer.weight.data_mut().fill(0.0);
            layer.bias.fill(0.0);
        }
    }

    fn congruent_with(&self, params: &NetworkParams) -> Result<()> {
        if self.layers.len() != params.layers.len() {
            return Err(Error::shape(format!(
                "gradient bundle has {} layers, params have {}",
                self.layers.len(),
                params.layers.len()
            )));
        }
        for (i, (g, p)) in self.layers.iter().zip(&params.layers).enumerate() {
            if g.weight.rows() != p.weight.rows()
                || g.weight.cols() != p.weight.cols()
                || g.bias.len() != p.bias.len()
            {
                return Err(Error::shape(format!("gradient shape mismatch at layer {i}")));
            }
        }
        Ok(())
    }
}

/// Draw fresh parameters: Xavier-uniform weights, zero biases, fully
/// determined by `config.init_seed`.
pub fn init_network(config: &NetworkConfig) -> Result<NetworkParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    let n_layers = config.layer_sizes.len() - 1;
    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let (fan_in, fan_out) = (config.layer_sizes[i], config.layer_sizes[i + 1]);
        let scale = match config.init_scale_rule {
            InitScaleRule::UniformXavier => (6.0 / (fan_in + fan_out) as f64).sqrt(),
        };
        let weight = Matrix::from_fn(fan_out, fan_in, |_, _| {
            let u: f64 = rand::Rng::random(&mut rng);
            (2.0 * u - 1.0) * scale
        })?;
        let activation = if i + 1 == n_layers {
            Activation::Sigmoid
        } else {
            config.hidden_activation.into()
        };
        layers.push(Layer {
            weight,
            bias: vec![0.0; fan_out],
            activation,
        });
    }
    let params = NetworkParams {
        layers,
        config: config.clone(),
    };
    params.validate()?;
    Ok(params)
}

/// Run the network over a batch, keeping every intermediate value.
pub fn forward(params: &NetworkParams, inputs: &Matrix) -> Result<ForwardTrace> {
    if inputs.cols() != params.input_dim() {
        return Err(Error::shape(format!(
            "input has {} columns, network expects {}",
            inputs.cols(),
            params.input_dim()
        )));
    }
    let mut pre_activations = Vec::with_capacity(params.layers.len());
    let mut activations = Vec::with_capacity(params.layers.len());
    let mut current = inputs.clone();
    for layer in &params.layers {
        // z = a_prev * W^T + b
        let mut z = current.matmul_nt(&layer.weight)?;
        for r in 0..z.rows() {
            for (c, b) in layer.bias.iter().enumerate() {
                z.set(r, c, z.get(r, c) + b);
            }
        }
        let a = z.map(|v| layer.activation.apply(v))?;
        pre_activations.push(z);
        current = a.clone();
        activations.push(a);
    }
    Ok(ForwardTrace {
        input: inputs.clone(),
        pre_activations,
        activations,
    })
}

/// Exact gradients of a scalar loss given its gradient w.r.t. the final
/// logits (the last layer's pre-activations).
pub fn backward(
    params: &NetworkParams,
    trace: &ForwardTrace,
    dl_dlogits: &Matrix,
) -> Result<GradientBundle> {
    let logits = trace.logits();
    if dl_dlogits.rows() != logits.rows() || dl_dlogits.cols() != logits.cols() {
        return Err(Error::shape(format!(
            "dl_dlogits is {}x{}, logits are {}x{}",
            dl_dlogits.rows(),
            dl_dlogits.cols(),
            logits.rows(),
            logits.cols()
        )));
    }
    backward_through(params, trace, params.layers.len() - 1, dl_dlogits.clone())
}

/// Gradients when the loss is defined on the *activation output* of layer
/// `layer_index` (0-based). Layers above `layer_index` receive zero
/// gradients; this is how the embedding baseline trains everything up to
/// the penultimate layer while the output layer stays frozen.
pub fn backward_from_layer(
    params: &NetworkParams,
    trace: &ForwardTrace,
    layer_index: usize,
    dl_dactivation: &Matrix,
) -> Result<GradientBundle> {
    if layer_index >= params.layers.len() {
        return Err(Error::shape(format!(
            "layer index {layer_index} out of range for {} layers",
            params.layers.len()
        )));
    }
    let act = &trace.activations[layer_index];
    if dl_dactivation.rows() != act.rows() || dl_dactivation.cols() != act.cols() {
        return Err(Error::shape(format!(
            "dl_dactivation is {}x{}, activation is {}x{}",
            dl_dactivation.rows(),
            dl_dactivation.cols(),
            act.rows(),
            act.cols()
        )));
    }
    // Convert the activation gradient to a pre-activation gradient.
    let deriv = act.map(|a| params.layers[layer_index].activation.derivative_from_output(a))?;
    let delta = dl_dactivation.hadamard(&deriv)?;
    backward_through(params, trace, layer_index, delta)
}

/// Chain rule from layer `start` (whose pre-activation gradient is `delta`)
/// down to the input. Layers above `start` get zero gradients.
fn backward_through(
    params: &NetworkParams,
    trace: &ForwardTrace,
    start: usize,
    mut delta: Matrix,
) -> Result<GradientBundle> {
    let mut bundle = GradientBundle::zeros_like(params);
    for i in (0..=start).rev() {
        let input_act = if i == 0 {
            &trace.input
        } else {
            &trace.activations[i - 1]
        };
        // dW_i = delta^T * a_{i-1}; db_i = column sums of delta.
        let grad_w = delta.matmul_tn(input_act)?;
        let grad_b = delta.column_sums();
        bundle.layers[i] = LayerGrads {
            weight: grad_w,
            bias: grad_b,
        };
        if i > 0 {
            let da = delta.matmul_nn(&params.layers[i].weight)?;
            let prev_act = &trace.activations[i - 1];
            let deriv =
                prev_act.map(|a| params.layers[i - 1].activation.derivative_from_output(a))?;
            delta = da.hadamard(&deriv)?;
        }
    }
    Ok(bundle)
}

/// Turn a gradient w.r.t. the final sigmoid scores into a gradient w.r.t.
/// the final logits, via the elementwise factor `s * (1 - s)`.
pub fn score_grad_to_logit_grad(dscores: &Matrix, scores: &Matrix) -> Result<Matrix> {
    let deriv = scores.map(|s| s * (1.0 - s))?;
    dscores.hadamard(&deriv)
}

/// One plain SGD step: `params - lr * grads`, elementwise.
pub fn sgd_step(params: &NetworkParams, grads: &GradientBundle, lr: f64) -> Result<NetworkParams> {
    if !(lr > 0.0) {
        return Err(Error::config(format!("learning rate must be positive, got {lr}")));
    }
    grads.congruent_with(params)?;
    let mut updated = params.clone();
    for (layer, grad) in updated.layers.iter_mut().zip(&grads.layers) {
        let w = layer.weight.data_mut();
        for (wv, gv) in w.iter_mut().zip(grad.weight.data()) {
            *wv -= lr * gv;
        }
        for (bv, gv) in layer.bias.iter_mut().zip(&grad.bias) {
            *bv -= lr * gv;
        }
    }
    Ok(updated)
}

const CHECKPOINT_MAGIC: &str = "SSDAL-MODEL 1";

fn write_floats(out: &mut impl Write, values: &[f64]) -> Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            write!(out, " ")?;
        }
        // 17 significant digits: exact f64 round trip.
        write!(out, "{v:.16e}")?;
        first = false;
    }
    writeln!(out)?;
    Ok(())
}

/// Write a model in the line-oriented text checkpoint format.
pub fn save_checkpoint(params: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    writeln!(out, "{}", params.layers.len())?;
    for layer in &params.layers {
        writeln!(
            out,
            "{} {} {}",
            layer.weight.rows(),
            layer.weight.cols(),
            layer.activation.tag()
        )?;
        for r in 0..layer.weight.rows() {
            write_floats(&mut out, layer.weight.row(r))?;
        }
        write_floats(&mut out, &layer.bias)?;
    }
    out.flush()?;
    Ok(())
}

fn parse_floats(line: &str, expected: usize, what: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::format(format!("bad float `{t}` in {what}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(Error::format(format!(
            "{what}: expected {expected} values, got {}",
            values.len()
        )));
    }
    Ok(values)
}

/// Read a model written by [`save_checkpoint`].
///
/// The stored config carries the reconstructed layer sizes; the original
/// init seed is not part of the format and loads as zero.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NetworkParams> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let mut next_line = |what: &str| -> Result<String> {
        lines
            .next()
            .ok_or_else(|| Error::format(format!("unexpected end of checkpoint at {what}")))?
            .map_err(Error::from)
    };

    let magic = next_line("magic")?;
    if magic.trim() != CHECKPOINT_MAGIC {
        return Err(Error::format(format!("bad checkpoint magic `{}`", magic.trim())));
    }
    let n_layers: usize = next_line("layer count")?
        .trim()
        .parse()
        .map_err(|_| Error::format("bad layer count".to_string()))?;
    if n_layers == 0 {
        return Err(Error::format("checkpoint has zero layers".to_string()));
    }

    let mut layers = Vec::with_capacity(n_layers);
    for li in 0..n_layers {
        let header = next_line("layer header")?;
        let mut parts = header.split_whitespace();
        let rows: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::format(format!("layer {li}: bad rows")))?;
        let cols: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::format(format!("layer {li}: bad cols")))?;
        let activation: Activation = parts
            .next()
            .ok_or_else(|| Error::format(format!("layer {li}: missing activation")))?
            .parse()?;
        if parts.next().is_some() {
            return Err(Error::format(format!("layer {li}: trailing tokens in header")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let line = next_line("weight row")?;
            data.extend(parse_floats(&line, cols, &format!("layer {li} row {r}"))?);
        }
        let weight = Matrix::new(rows, cols, data)?;
        let bias_line = next_line("bias")?;
        let bias = parse_floats(&bias_line, rows, &format!("layer {li} bias"))?;
        layers.push(Layer {
            weight,
            bias,
            activation,
        });
    }
    if let Some(extra) = lines.next() {
        let extra = extra?;
        if !extra.trim().is_empty() {
            return Err(Error::format("trailing content after checkpoint".to_string()));
        }
    }

    let mut layer_sizes = Vec::with_capacity(n_layers + 1);
    layer_sizes.push(layers[0].weight.cols());
    for layer in &layers {
        layer_sizes.push(layer.weight.rows());
    }
    // Dimension chaining check.
    for (i, w) in layers.iter().enumerate() {
        if w.weight.cols() != layer_sizes[i] {
            return Err(Error::format(format!(
                "layer {i} does not chain with the previous layer"
            )));
        }
    }
    let hidden_activation = match layers[0].activation {
        Activation::Tanh => HiddenActivation::Tanh,
        _ => HiddenActivation::Relu,
    };
    let params = NetworkParams {
        layers,
        config: NetworkConfig {
            layer_sizes,
            hidden_activation,
            init_seed: 0,
            init_scale_rule: InitScaleRule::UniformXavier,
        },
    };
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(sizes: &[usize], seed: u64) -> NetworkConfig {
        NetworkConfig::new(sizes.to_vec(), HiddenActivation::Tanh, seed).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = config(&[4, 8, 5], 42);
        let a = init_network(&cfg).unwrap();
        let b = init_network(&cfg).unwrap();
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert_eq!(la.weight.data(), lb.weight.data());
            assert_eq!(la.bias, lb.bias);
        }
    }

    #[test]
    fn init_rejects_short_layer_list() {
        assert!(NetworkConfig::new(vec![4], HiddenActivation::Relu, 0).is_err());
        assert!(NetworkConfig::new(vec![4, 0, 3], HiddenActivation::Relu, 0).is_err());
    }

    #[test]
    fn init_shapes_chain() {
        let cfg = config(&[8, 16, 105], 7);
        let params = init_network(&cfg).unwrap();
        assert_eq!(params.layers[0].weight.rows(), 16);
        assert_eq!(params.layers[0].weight.cols(), 8);
        assert_eq!(params.layers[0].bias.len(), 16);
        assert_eq!(params.layers[1].weight.rows(), 105);
        assert_eq!(params.layers[1].weight.cols(), 16);
        assert_eq!(params.layers[1].bias.len(), 105);
    }

    #[test]
    fn init_weights_within_xavier_bound() {
        let cfg = config(&[8, 16, 5], 3);
        let params = init_network(&cfg).unwrap();
        let s0 = (6.0_f64 / 24.0).sqrt();
        assert!(params.layers[0].weight.data().iter().all(|w| w.abs() <= s0));
        assert!(params.layers[0].weight.data().iter().any(|w| *w != 0.0));
    }

    #[test]
    fn identity_single_layer_reproduces_input() {
        // One layer, weight = I, bias = 0: logits equal the input.
        let weight = Matrix::from_fn(3, 3, |r, c| if r == c { 1.0 } else { 0.0 }).unwrap();
        let params = NetworkParams {
            layers: vec![Layer {
                weight,
                bias: vec![0.0; 3],
                activation: Activation::Sigmoid,
            }],
            config: config(&[3, 3], 0),
        };
        let x = Matrix::new(2, 3, vec![0.5, -1.0, 2.0, 0.0, 3.0, -0.25]).unwrap();
        let trace = forward(&params, &x).unwrap();
        assert_eq!(trace.logits().data(), x.data());
    }

    #[test]
    fn zero_weights_give_half_scores() {
        let params = NetworkParams {
            layers: vec![Layer {
                weight: Matrix::zeros(4, 3),
                bias: vec![0.0; 4],
                activation: Activation::Sigmoid,
            }],
            config: config(&[3, 4], 0),
        };
        let x = Matrix::new(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0]).unwrap();
        let trace = forward(&params, &x).unwrap();
        assert!(trace.scores().data().iter().all(|&s| s == 0.5));
    }

    #[test]
    fn forward_is_pure() {
        let cfg = config(&[5, 7, 6, 4], 11);
        let params = init_network(&cfg).unwrap();
        let x = Matrix::from_fn(3, 5, |r, c| (r * 5 + c) as f64 * 0.1 - 0.6).unwrap();
        let t1 = forward(&params, &x).unwrap();
        let t2 = forward(&params, &x).unwrap();
        assert_eq!(t1.logits().data(), t2.logits().data());
        assert_eq!(t1.scores().data(), t2.scores().data());
    }

    #[test]
    fn forward_rejects_dim_mismatch() {
        let cfg = config(&[5, 4], 1);
        let params = init_network(&cfg).unwrap();
        let x = Matrix::zeros(2, 6);
        assert!(matches!(forward(&params, &x), Err(Error::Shape(_))));
    }

    #[test]
    fn scores_stay_in_open_interval_under_saturation() {
        let params = NetworkParams {
            layers: vec![Layer {
                weight: Matrix::new(1, 1, vec![1.0]).unwrap(),
                bias: vec![0.0],
                activation: Activation::Sigmoid,
            }],
            config: config(&[1, 1], 0),
        };
        let x = Matrix::new(2, 1, vec![1000.0, -1000.0]).unwrap();
        let trace = forward(&params, &x).unwrap();
        let s = trace.scores().data();
        assert!(s[0] < 1.0 && s[0] > 0.0);
        assert!(s[1] > 0.0 && s[1] < 1.0);
    }

    #[test]
    fn backward_zero_upstream_gives_zero_grads() {
        let cfg = config(&[4, 6, 3], 5);
        let params = init_network(&cfg).unwrap();
        let x = Matrix::from_fn(2, 4, |r, c| (r + c) as f64 * 0.3).unwrap();
        let trace = forward(&params, &x).unwrap();
        let zeros = Matrix::zeros(2, 3);
        let grads = backward(&params, &trace, &zeros).unwrap();
        for layer in &grads.layers {
            assert!(layer.weight.data().iter().all(|&g| g == 0.0));
            assert!(layer.bias.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn backward_sum_of_logits_is_outer_product_structure() {
        // Hand-derived 2x2 case: L = sum of logits, single linear layer.
        // z = x W^T + b, dL/dW[j][k] = sum_batch x[.,k], dL/db[j] = batch.
        let weight = Matrix::new(2, 2, vec![0.3, -0.2, 0.5, 0.7]).unwrap();
        let params = NetworkParams {
            layers: vec![Layer {
                weight,
                bias: vec![0.1, -0.1],
                activation: Activation::Sigmoid,
            }],
            config: config(&[2, 2], 0),
        };
        let x = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let trace = forward(&params, &x).unwrap();
        let ones = Matrix::new(2, 2, vec![1.0; 4]).unwrap();
        let grads = backward(&params, &trace, &ones).unwrap();
        // Column sums of x are [4, 6]; both output rows see them.
        assert_eq!(grads.layers[0].weight.data(), &[4.0, 6.0, 4.0, 6.0]);
        assert_eq!(grads.layers[0].bias, vec![2.0, 2.0]);
    }

    #[test]
    fn sgd_step_applies_displacement() {
        let params = NetworkParams {
            layers: vec![Layer {
                weight: Matrix::new(1, 1, vec![2.0]).unwrap(),
                bias: vec![0.0],
                activation: Activation::Sigmoid,
            }],
            config: config(&[1, 1], 0),
        };
        let grads = GradientBundle {
            layers: vec![LayerGrads {
                weight: Matrix::new(1, 1, vec![0.5]).unwrap(),
                bias: vec![0.0],
            }],
        };
        let updated = sgd_step(&params, &grads, 1.0).unwrap();
        assert_eq!(updated.layers[0].weight.get(0, 0), 1.5);

        // Zero grads leave params bit-identical.
        let zeros = GradientBundle::zeros_like(&params);
        let same = sgd_step(&params, &zeros, 0.7).unwrap();
        assert_eq!(same.layers[0].weight.data(), params.layers[0].weight.data());

        // Two steps at lr commute with one step at the summed displacement.
        let two = sgd_step(&sgd_step(&params, &grads, 0.25).unwrap(), &grads, 0.25).unwrap();
        let one = sgd_step(&params, &grads, 0.5).unwrap();
        assert!((two.layers[0].weight.get(0, 0) - one.layers[0].weight.get(0, 0)).abs() < 1e-15);
    }

    #[test]
    fn sgd_rejects_non_positive_lr() {
        let cfg = config(&[2, 2], 0);
        let params = init_network(&cfg).unwrap();
        let grads = GradientBundle::zeros_like(&params);
        assert!(matches!(sgd_step(&params, &grads, 0.0), Err(Error::Config(_))));
        assert!(matches!(sgd_step(&params, &grads, -1.0), Err(Error::Config(_))));
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let cfg = config(&[3, 5, 4], 99);
        let params = init_network(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        save_checkpoint(&params, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.layers.len(), params.layers.len());
        for (a, b) in params.layers.iter().zip(&loaded.layers) {
            assert_eq!(a.weight.data(), b.weight.data());
            assert_eq!(a.bias, b.bias);
            assert_eq!(a.activation, b.activation);
        }
        assert_eq!(loaded.config.layer_sizes, vec![3, 5, 4]);
    }

    #[test]
    fn checkpoint_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "NOT-A-MODEL\n1\n").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
    }
}
