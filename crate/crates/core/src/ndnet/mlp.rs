use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layer::{Activation, DenseLayer};
use super::params::Parameters;
use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

/// Standard deviation of the normal weight initializer.
pub const INIT_STD: f64 = 0.1;

/// Feed-forward stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<S> {
    layers: Vec<DenseLayer<S>>,
}

/// Per-layer activations recorded by [`Mlp::forward_trace`]; entry 0 is the
/// network input and entry `i + 1` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct MlpTrace<S> {
    pub activations: Vec<Tensor2<S>>,
}

impl<S> MlpTrace<S> {
    pub fn output(&self) -> &Tensor2<S> {
        self.activations.last().expect("trace holds the input")
    }
}

impl<S: Scalar> Mlp<S> {
    pub fn from_layers(layers: Vec<DenseLayer<S>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].out_dim() != w[1].in_dim() {
                return shape_err(format!(
                    "layer {i} out_dim {} does not chain into layer {} in_dim {}",
                    w[0].out_dim(),
                    i + 1,
                    w[1].in_dim()
                ));
            }
        }
        Ok(Self { layers })
    }

    /// Random network over `dims` (input first) with ReLU hidden layers and
    /// an identity output layer, seeded deterministically.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with_rng(dims, Activation::Relu, Activation::Identity, &mut rng)
    }

    pub fn init_with_rng<R: rand::Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "layer-dimension list needs at least 2 entries, got {}",
                dims.len()
            )));
        }
        if let Some(d) = dims.iter().find(|&&d| d == 0) {
            return Err(Error::Config(format!("layer dims must be >= 1, got {d}")));
        }
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                DenseLayer::random(dims[i], dims[i + 1], act, INIT_STD, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[DenseLayer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer<S>] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Layer widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.in_dim()];
        d.extend(self.layers.iter().map(DenseLayer::out_dim));
        d
    }

    /// Same architecture with every parameter set to zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(DenseLayer::zeros_like).collect(),
        }
    }

    pub fn forward(&self, input: &Tensor2<S>) -> Result<Tensor2<S>> {
        let mut x = self.layers[0].forward(input)?;
        for layer in &self.layers[1..] {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &Tensor2<S>) -> Result<MlpTrace<S>> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for layer in &self.layers {
            let next = layer.forward(activations.last().expect("non-empty"))?;
            activations.push(next);
        }
        Ok(MlpTrace { activations })
    }

    /// Gradients of the scalar whose output-gradient is `upstream`.
    pub fn backward(&self, input: &Tensor2<S>, upstream: &Tensor2<S>) -> Result<(Self, Tensor2<S>)> {
        let trace = self.forward_trace(input)?;
        self.backward_trace(&trace, upstream)
    }

    /// Like [`Mlp::backward`], reusing activations from a prior forward pass.
    pub fn backward_trace(&self, trace: &MlpTrace<S>, upstream: &Tensor2<S>) -> Result<(Self, Tensor2<S>)> {
        if trace.activations.len() != self.layers.len() + 1 {
            return shape_err("trace does not belong to this network");
        }
        if upstream.shape() != trace.output().shape() {
            return shape_err(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.shape(),
                trace.output().shape()
            ));
        }
        let mut grads: Vec<DenseLayer<S>> = Vec::with_capacity(self.layers.len());
        let mut d = upstream.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (g, d_in) = layer.backward(&trace.activations[i], &trace.activations[i + 1], &d)?;
            grads.push(g);
            d = d_in;
        }
        grads.reverse();
        Ok((Self { layers: grads }, d))
    }

    /// `Σ ‖W‖²` over weight matrices (biases excluded).
    pub fn weight_sq_norm(&self) -> S {
        self.layers.iter().map(|l| l.weight.sum_sq()).sum()
    }

    /// Adds `coef · W` to the weight gradients of `grads`.
    pub fn add_weight_decay_grad(&self, grads: &mut Self, coef: S) {
        for (l, g) in self.layers.iter().zip(grads.layers.iter_mut()) {
            for (gw, &w) in g.weight.data_mut().iter_mut().zip(l.weight.data()) {
                *gw += coef * w;
            }
        }
    }

    pub fn cast<T: Scalar>(&self) -> Mlp<T> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weight: l.weight.cast(),
                    bias: l.bias.iter().map(|&b| T::lit(b.as_f64())).collect(),
                    activation: l.activation,
                })
                .collect(),
        }
    }
}

impl<S: Scalar> Parameters<S> for Mlp<S> {
    fn segments(&self) -> Vec<&[S]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }

    fn segments_mut(&mut self) -> Vec<&mut [S]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }

    fn segment_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("layer{i}.weight"), format!("layer{i}.bias")])
            .collect()
    }
}
