use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::linear_forward;
use super::{Gradients, NnError, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    fn record(self, tape: &mut Tape, v: Var) -> Var {
        match self {
            Activation::Identity => v,
            Activation::Relu => tape.relu(v),
            Activation::Tanh => tape.tanh(v),
        }
    }
}

/// Dense layer with `weight[out×in]` and `bias[out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    /// Uniform initialization in `±1/√fan_in`.
    pub fn init<R: Rng + ?Sized>(inp: usize, out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inp as f64).sqrt();
        let weight = (0..inp * out).map(|_| rng.gen_range(-bound..=bound)).collect();
        let bias = (0..out).map(|_| rng.gen_range(-bound..=bound)).collect();
        Self {
            weight: Tensor::new(vec![out, inp], weight).expect("shape"),
            bias: Tensor::new(vec![out], bias).expect("shape"),
        }
    }

    pub fn constant(inp: usize, out: usize, weight: f64, bias: f64) -> Self {
        Self {
            weight: Tensor::full(&[out, inp], weight),
            bias: Tensor::full(&[out], bias),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// Topology record stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub sizes: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

/// Multi-layer perceptron. The hidden activation follows every layer but the
/// last; the output activation follows the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
    hidden: Activation,
    output: Activation,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least an input and an output size");
        let layers = sizes.windows(2).map(|w| Linear::init(w[0], w[1], rng)).collect();
        Self {
            layers,
            hidden,
            output,
        }
    }

    pub fn from_layers(
        layers: Vec<Linear>,
        hidden: Activation,
        output: Activation,
    ) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::Config("an MLP needs at least one layer".into()));
        }
        for l in &layers {
            if l.bias.len() != l.out_dim() {
                return Err(NnError::Shape {
                    op: "layer bias",
                    left: l.weight.shape().to_vec(),
                    right: l.bias.shape().to_vec(),
                });
            }
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(NnError::Shape {
                    op: "layer chain",
                    left: pair[0].weight.shape().to_vec(),
                    right: pair[1].weight.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            layers,
            hidden,
            output,
        })
    }

    pub fn spec(&self) -> MlpSpec {
        let mut sizes = vec![self.in_dim()];
        sizes.extend(self.layers.iter().map(Linear::out_dim));
        MlpSpec {
            sizes,
            hidden: self.hidden,
            output: self.output,
        }
    }

    /// Rebuilds a zero-initialized network from a topology record.
    pub fn from_spec(spec: &MlpSpec) -> Result<Self, NnError> {
        if spec.sizes.len() < 2 {
            return Err(NnError::Config("topology needs at least two sizes".into()));
        }
        let layers = spec
            .sizes
            .windows(2)
            .map(|w| Linear::constant(w[0], w[1], 0.0, 0.0))
            .collect();
        Self::from_layers(layers, spec.hidden, spec.output)
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameters in layer order: `w0, b0, w1, b1, …`.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("{prefix}.{i}.weight"), format!("{prefix}.{i}.bias")])
            .collect()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    /// Plain forward pass, `[batch×in] → [batch×out]`, without recording.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        if input.shape().len() != 2 || input.cols() != self.in_dim() {
            return Err(NnError::Shape {
                op: "mlp forward",
                left: input.shape().to_vec(),
                right: self.layers[0].weight.shape().to_vec(),
            });
        }
        let mut h = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation(i);
            h = linear_forward(&h, &layer.weight, &layer.bias)?;
            if act != Activation::Identity {
                h.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            }
        }
        Ok(h)
    }

    /// Records the parameters on `tape`. With `trainable = false` they are
    /// recorded as constants, so gradients flow through the network to its
    /// input but never into its weights.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundMlp {
        let vars = self
            .layers
            .iter()
            .map(|l| {
                if trainable {
                    (tape.param(&l.weight), tape.param(&l.bias))
                } else {
                    (tape.constant(l.weight.clone()), tape.constant(l.bias.clone()))
                }
            })
            .collect();
        BoundMlp {
            vars,
            hidden: self.hidden,
            output: self.output,
            in_dim: self.in_dim(),
            shapes: self.params().iter().map(|p| p.shape().to_vec()).collect(),
        }
    }
}

/// An [`Mlp`] whose parameters live on a tape.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    vars: Vec<(Var, Var)>,
    hidden: Activation,
    output: Activation,
    in_dim: usize,
    shapes: Vec<Vec<usize>>,
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, input: Var) -> Result<Var, NnError> {
        let shape = tape.value(input).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.in_dim {
            return Err(NnError::Shape {
                op: "mlp forward",
                left: shape,
                right: self.shapes[0].clone(),
            });
        }
        let mut h = input;
        let n = self.vars.len();
        for (i, &(w, b)) in self.vars.iter().enumerate() {
            h = tape.linear(h, w, b)?;
            let act = if i + 1 == n { self.output } else { self.hidden };
            h = act.record(tape, h);
        }
        Ok(h)
    }

    pub fn param_vars(&self) -> Vec<Var> {
        self.vars.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    /// Gradients aligned with [`Mlp::params`]; absent gradients are zeros.
    pub fn grads(&self, g: &Gradients) -> Vec<Tensor> {
        self.param_vars()
            .into_iter()
            .zip(&self.shapes)
            .map(|(v, s)| g.get_or_zeros(v, s))
            .collect()
    }
}
