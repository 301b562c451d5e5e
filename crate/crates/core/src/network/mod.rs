//! Fully connected approximator `û(x; θ)`.
//!
//! `η₀ = x`, `η_ℓ = μ(W_ℓ η_{ℓ−1} + b_ℓ)` for the hidden layers and an affine
//! output layer. Two evaluation paths share one parameter layout:
//!
//! * [`BoundMlp`] runs on tape jets and is the reference implementation;
//! * [`batch::BatchEngine`] runs whole point batches with GEMM and
//!   hand-written adjoints, which is what training uses.
//!
//! Parameters are ordered layer by layer (`W_ℓ` row-major, then `b_ℓ`),
//! followed by the trainable raw activation coefficients.

pub mod batch;
mod checkpoint;

pub use batch::predict;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activations::{
    init_activation, ActivationError, ActivationName, ActivationSpec, BoundActivation, InitMode,
};
use crate::autodiff::{AdError, Jet2, Scalar, Tape};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("expected {expected} inputs, got {got}")]
    InputDim { expected: usize, got: usize },
    #[error("expected {expected} parameters, got {got}")]
    ParameterCount { expected: usize, got: usize },
    #[error(transparent)]
    Activation(#[from] ActivationError),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

fn default_layers() -> usize {
    4
}
fn default_width() -> usize {
    512
}
fn default_activation() -> ActivationName {
    ActivationName::TANH
}
fn default_seed() -> u64 {
    5
}
fn default_omega() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub in_dim: usize,
    pub out_dim: usize,
    #[serde(default = "default_layers")]
    pub hidden_layers: usize,
    #[serde(default = "default_width")]
    pub hidden_width: usize,
    #[serde(default = "default_activation")]
    pub activation: ActivationName,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_omega")]
    pub gabor_omega_init: f64,
    #[serde(default)]
    pub activation_init: InitMode,
    /// One coefficient set per hidden layer instead of a shared one.
    #[serde(default)]
    pub per_layer_activation: bool,
    /// Apply the activation to the output layer as well.
    #[serde(default)]
    pub output_activation: bool,
}

impl MlpConfig {
    pub fn new(in_dim: usize, out_dim: usize, activation: ActivationName) -> Self {
        MlpConfig {
            in_dim,
            out_dim,
            hidden_layers: default_layers(),
            hidden_width: default_width(),
            activation,
            seed: default_seed(),
            gabor_omega_init: default_omega(),
            activation_init: InitMode::Raw,
            per_layer_activation: false,
            output_activation: false,
        }
    }

    pub fn with_shape(mut self, hidden_layers: usize, hidden_width: usize) -> Self {
        self.hidden_layers = hidden_layers;
        self.hidden_width = hidden_width;
        self
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(NetworkError::Config(
                "hidden_layers and hidden_width must be at least 1".into(),
            ));
        }
        if !(1..=3).contains(&self.in_dim) || self.out_dim == 0 {
            return Err(NetworkError::Config(format!(
                "unsupported dims {} -> {}",
                self.in_dim, self.out_dim
            )));
        }
        Ok(())
    }

    /// Widths `[in, h, …, h, out]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.in_dim];
        w.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        w.push(self.out_dim);
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major `fan_out × fan_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Index into [`MlpModel::activations`], `None` for an affine layer.
    pub activation: Option<usize>,
}

impl Dense {
    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    config: MlpConfig,
    layers: Vec<Dense>,
    activations: Vec<ActivationSpec>,
}

/// Glorot-uniform weights, zero biases, seeded from `config.seed`.
pub fn init_model(config: &MlpConfig) -> Result<MlpModel, NetworkError> {
    config.validate()?;
    let spec = init_activation(
        config.activation,
        config.gabor_omega_init,
        config.activation_init,
    )?;
    let widths = config.widths();
    let n_layers = widths.len() - 1;
    let activated = |l: usize| l + 1 < n_layers || config.output_activation;
    let n_specs = if config.per_layer_activation {
        (0..n_layers).filter(|&l| activated(l)).count()
    } else {
        1
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut layers = Vec::with_capacity(n_layers);
    let mut next_spec = 0;
    for l in 0..n_layers {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        let activation = if activated(l) {
            let idx = next_spec;
            if config.per_layer_activation {
                next_spec += 1;
            }
            Some(idx)
        } else {
            None
        };
        layers.push(Dense {
            fan_in,
            fan_out,
            weights,
            bias: vec![0.0; fan_out],
            activation,
        });
    }
    Ok(MlpModel {
        config: config.clone(),
        layers,
        activations: vec![spec; n_specs],
    })
}

impl MlpModel {
    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn activations(&self) -> &[ActivationSpec] {
        &self.activations
    }

    pub fn in_dim(&self) -> usize {
        self.config.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.config.out_dim
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(Dense::parameter_count)
            .sum::<usize>()
            + self
                .activations
                .iter()
                .map(ActivationSpec::trainable_count)
                .sum::<usize>()
    }

    /// Flat parameter vector in registration order.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        for a in &self.activations {
            out.extend(a.trainable_raw());
        }
        out
    }

    pub fn set_parameters(&mut self, theta: &[f64]) -> Result<(), NetworkError> {
        let expected = self.parameter_count();
        if theta.len() != expected {
            return Err(NetworkError::ParameterCount {
                expected,
                got: theta.len(),
            });
        }
        let mut rest = theta;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            let (b, tail) = tail.split_at(l.bias.len());
            l.weights.copy_from_slice(w);
            l.bias.copy_from_slice(b);
            rest = tail;
        }
        for a in &mut self.activations {
            let (c, tail) = rest.split_at(a.trainable_count());
            a.set_trainable_raw(c)?;
            rest = tail;
        }
        Ok(())
    }

    /// Replaces the activation coefficient sets; shapes and trainable masks
    /// must agree with the current ones.
    pub fn set_activations(&mut self, specs: Vec<ActivationSpec>) -> Result<(), NetworkError> {
        let compatible = specs.len() == self.activations.len()
            && specs.iter().zip(&self.activations).all(|(a, b)| {
                a.name == b.name
                    && a.raw.len() == b.raw.len()
                    && a.trainable.len() == b.trainable.len()
            });
        if !compatible {
            return Err(NetworkError::Checkpoint(
                "activation specs do not match the configuration".into(),
            ));
        }
        self.activations = specs;
        Ok(())
    }

    /// Registers every parameter on `tape` in layout order.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundMlp<'t> {
        let leaves: Vec<Scalar<'t>> = self.parameters().iter().map(|&v| tape.param(v)).collect();
        self.bind_with(tape, &leaves)
            .expect("leaf count equals parameter count")
    }

    /// Builds the network on existing tape nodes, one per parameter in
    /// layout order. The stored parameter values are ignored.
    pub fn bind_with<'t>(
        &self,
        tape: &'t Tape,
        params: &[Scalar<'t>],
    ) -> Result<BoundMlp<'t>, NetworkError> {
        let expected = self.parameter_count();
        if params.len() != expected {
            return Err(NetworkError::ParameterCount {
                expected,
                got: params.len(),
            });
        }
        let mut rest = params;
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            let (b, tail) = tail.split_at(l.bias.len());
            rest = tail;
            layers.push(BoundDense {
                fan_in: l.fan_in,
                weights: w.to_vec(),
                bias: b.to_vec(),
                activation: l.activation,
            });
        }
        let mut activations = Vec::with_capacity(self.activations.len());
        for a in &self.activations {
            let (c, tail) = rest.split_at(a.trainable_count());
            rest = tail;
            activations.push(a.bind_with(tape, c)?);
        }
        Ok(BoundMlp {
            in_dim: self.in_dim(),
            out_dim: self.out_dim(),
            layers,
            activations,
        })
    }
}

/// Something that maps input jets to output jets.
pub trait Field<'t> {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn eval(&self, inputs: &[Jet2<'t>]) -> Result<Vec<Jet2<'t>>, NetworkError>;
}

pub(crate) fn check_inputs(expected: usize, inputs: &[Jet2<'_>]) -> Result<(), NetworkError> {
    if inputs.len() != expected {
        return Err(NetworkError::InputDim {
            expected,
            got: inputs.len(),
        });
    }
    Ok(())
}

struct BoundDense<'t> {
    fan_in: usize,
    weights: Vec<Scalar<'t>>,
    bias: Vec<Scalar<'t>>,
    activation: Option<usize>,
}

/// An [`MlpModel`] whose parameters are tape leaves.
pub struct BoundMlp<'t> {
    in_dim: usize,
    out_dim: usize,
    layers: Vec<BoundDense<'t>>,
    activations: Vec<BoundActivation<'t>>,
}

impl<'t> BoundMlp<'t> {
    pub fn forward(&self, inputs: &[Jet2<'t>]) -> Result<Vec<Jet2<'t>>, NetworkError> {
        check_inputs(self.in_dim, inputs)?;
        let mut h = inputs.to_vec();
        for layer in &self.layers {
            let mut next = Vec::with_capacity(layer.bias.len());
            for (row, &b) in layer.weights.chunks_exact(layer.fan_in).zip(&layer.bias) {
                let z = Jet2::affine(row, &h, b)?;
                next.push(match layer.activation {
                    Some(a) => self.activations[a].eval(&z),
                    None => z,
                });
            }
            h = next;
        }
        Ok(h)
    }
}

impl<'t> Field<'t> for BoundMlp<'t> {
    fn in_dim(&self) -> usize {
        self.in_dim
    }
    fn out_dim(&self) -> usize {
        self.out_dim
    }
    fn eval(&self, inputs: &[Jet2<'t>]) -> Result<Vec<Jet2<'t>>, NetworkError> {
        self.forward(inputs)
    }
}

/// A field that ignores its inputs.
#[derive(Debug, Clone)]
pub struct ConstantField {
    pub in_dim: usize,
    pub values: Vec<f64>,
}

impl<'t> Field<'t> for ConstantField {
    fn in_dim(&self) -> usize {
        self.in_dim
    }
    fn out_dim(&self) -> usize {
        self.values.len()
    }
    fn eval(&self, inputs: &[Jet2<'t>]) -> Result<Vec<Jet2<'t>>, NetworkError> {
        check_inputs(self.in_dim, inputs)?;
        let tape = inputs[0].tape();
        self.values
            .iter()
            .map(|&v| Ok(Jet2::constant(tape.constant(v), inputs[0].dim())?))
            .collect()
    }
}
