use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Identity => z,
            Activation::Relu => {
                if z > S::zero() {
                    z
                } else {
                    S::zero()
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn derivative_from_output<S: Scalar>(self, y: S) -> S {
        match self {
            Activation::Identity => S::one(),
            Activation::Relu => {
                if y > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Tanh => S::one() - y * y,
        }
    }
}

/// Affine map followed by an element-wise activation: `Y = act(X·W + b)`.
///
/// `weight` is `in_dim × out_dim`; `bias` has `out_dim` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<S> {
    pub(crate) weight: Tensor2<S>,
    pub(crate) bias: Vec<S>,
    pub(crate) activation: Activation,
}

impl<S: Scalar> DenseLayer<S> {
    pub fn new(weight: Tensor2<S>, bias: Vec<S>, activation: Activation) -> Result<Self> {
        if weight.rows() == 0 || weight.cols() == 0 {
            return Err(Error::Config("layer dims must be >= 1".into()));
        }
        if bias.len() != weight.cols() {
            return shape_err(format!(
                "bias length {} does not match out_dim {}",
                bias.len(),
                weight.cols()
            ));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    /// Weights i.i.d. `Normal(0, std²)`, zero bias.
    pub fn random<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config(format!(
                "layer dims must be >= 1, got {in_dim}x{out_dim}"
            )));
        }
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let data = (0..in_dim * out_dim)
            .map(|_| S::lit(normal.sample(rng)))
            .collect();
        Ok(Self {
            weight: Tensor2::from_vec(in_dim, out_dim, data)?,
            bias: vec![S::zero(); out_dim],
            activation,
        })
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight(&self) -> &Tensor2<S> {
        &self.weight
    }

    pub fn bias(&self) -> &[S] {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut Tensor2<S> {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut [S] {
        &mut self.bias
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Self {
            weight: Tensor2::zeros(self.in_dim(), self.out_dim()),
            bias: vec![S::zero(); self.out_dim()],
            activation: self.activation,
        }
    }

    pub fn forward(&self, input: &Tensor2<S>) -> Result<Tensor2<S>> {
        if input.cols() != self.in_dim() {
            return shape_err(format!(
                "input has {} columns, layer expects {}",
                input.cols(),
                self.in_dim()
            ));
        }
        let mut out = input.matmul(&self.weight)?;
        let act = self.activation;
        for r in 0..out.rows() {
            for (v, &b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *v = act.apply(*v + b);
            }
        }
        Ok(out)
    }

    /// Returns `(parameter gradients, input gradient)` given the layer input,
    /// its forward output and the upstream gradient w.r.t. that output.
    pub(crate) fn backward(
        &self,
        input: &Tensor2<S>,
        output: &Tensor2<S>,
        d_output: &Tensor2<S>,
    ) -> Result<(Self, Tensor2<S>)> {
        if d_output.shape() != output.shape() {
            return shape_err(format!(
                "upstream gradient {:?} does not match output {:?}",
                d_output.shape(),
                output.shape()
            ));
        }
        let act = self.activation;
        let mut d_pre = d_output.clone();
        if act != Activation::Identity {
            for (g, &y) in d_pre.data_mut().iter_mut().zip(output.data()) {
                *g *= act.derivative_from_output(y);
            }
        }
        let d_weight = input.t_matmul(&d_pre)?;
        let mut d_bias = vec![S::zero(); self.out_dim()];
        for r in 0..d_pre.rows() {
            for (b, &g) in d_bias.iter_mut().zip(d_pre.row(r)) {
                *b += g;
            }
        }
        let d_input = d_pre.matmul_t(&self.weight)?;
        Ok((
            Self {
                weight: d_weight,
                bias: d_bias,
                activation: act,
            },
            d_input,
        ))
    }
}
