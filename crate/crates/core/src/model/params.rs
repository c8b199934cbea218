use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{HeadInput, HyperConfig};
use crate::error::{shape_err, Error, Result};
use crate::losses::PropensityModel;
use crate::ndnet::{Activation, Mlp, Parameters, INIT_STD};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

/// Problem dimensions a parameter set is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub p: usize,
    pub k: usize,
    pub e: usize,
}

/// Every learned quantity of the network.
///
/// The propensity weights are refit rather than trained, so they are not
/// part of the [`Parameters`] segments.
#[derive(Debug, Clone, PartialEq)]
pub struct HiCiParams<S> {
    pub encoder: Mlp<S>,
    pub decoder: Mlp<S>,
    pub propensity: PropensityModel<S>,
    /// One `K × d_t` table per dosage level.
    pub treat_embed: Vec<Tensor2<S>>,
    /// One outcome head per dosage level.
    pub heads: Vec<Mlp<S>>,
    pub head_input: HeadInput,
}

fn stack(input: usize, width: usize, layers: usize, output: usize) -> Vec<usize> {
    let mut dims = vec![input];
    dims.extend(std::iter::repeat_n(width, layers - 1));
    dims.push(output);
    dims
}

impl<S: Scalar> HiCiParams<S> {
    /// Random-normal initialization drawn from `rng`.
    pub fn init<R: Rng + ?Sized>(
        config: &HyperConfig,
        dims: ModelDims,
        head_input: HeadInput,
        rng: &mut R,
    ) -> Result<Self> {
        let ModelDims { p, k, e } = dims;
        let l = config.latent_dim;
        if l >= p {
            return Err(Error::Config(format!("latent_dim {l} must be smaller than P = {p}")));
        }
        if k == 0 || e == 0 {
            return Err(Error::Config(format!("K and E must be >= 1, got {k} and {e}")));
        }
        let (relu, id) = (Activation::Relu, Activation::Identity);
        let encoder = Mlp::init_with_rng(&stack(p, config.encoder_width, config.encoder_layers, l), relu, id, rng)?;
        let decoder = Mlp::init_with_rng(&stack(l, config.decoder_width, config.decoder_layers, p), relu, id, rng)?;
        let feat = match head_input {
            HeadInput::Representation => l,
            HeadInput::Covariates => p,
        };
        let dt = config.treat_embed_dim;
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut treat_embed = Vec::with_capacity(e);
        let mut heads = Vec::with_capacity(e);
        for _ in 0..e {
            let table: Vec<S> = (0..k * dt).map(|_| S::lit(normal.sample(rng))).collect();
            treat_embed.push(Tensor2::from_vec(k, dt, table)?);
            heads.push(Mlp::init_with_rng(
                &stack(feat + dt, config.outcome_width, config.outcome_layers, 1),
                relu,
                id,
                rng,
            )?);
        }
        Ok(Self {
            encoder,
            decoder,
            propensity: PropensityModel::zeros(k, l),
            treat_embed,
            heads,
            head_input,
        })
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            p: self.encoder.in_dim(),
            k: self.treat_embed[0].rows(),
            e: self.heads.len(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    /// Checks that the pieces fit together.
    pub fn validate(&self) -> Result<()> {
        let l = self.encoder.out_dim();
        let p = self.encoder.in_dim();
        if self.decoder.in_dim() != l || self.decoder.out_dim() != p {
            return shape_err("decoder does not invert the encoder dimensions");
        }
        if self.heads.is_empty() || self.heads.len() != self.treat_embed.len() {
            return shape_err(format!(
                "{} heads for {} embedding tables",
                self.heads.len(),
                self.treat_embed.len()
            ));
        }
        let k = self.treat_embed[0].rows();
        let dt = self.treat_embed[0].cols();
        let feat = match self.head_input {
            HeadInput::Representation => l,
            HeadInput::Covariates => p,
        };
        for (tab, head) in self.treat_embed.iter().zip(&self.heads) {
            if tab.shape() != (k, dt) || head.in_dim() != feat + dt || head.out_dim() != 1 {
                return shape_err("embedding tables and heads disagree in shape");
            }
        }
        if self.propensity.k() != k || self.propensity.l() != l {
            return shape_err("propensity model does not match K × L");
        }
        Ok(())
    }

    /// Copy with every trainable entry zeroed (used as a gradient buffer).
    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.zeros_like(),
            decoder: self.decoder.zeros_like(),
            propensity: self.propensity.clone(),
            treat_embed: self.treat_embed.iter().map(|t| Tensor2::zeros(t.rows(), t.cols())).collect(),
            heads: self.heads.iter().map(Mlp::zeros_like).collect(),
            head_input: self.head_input,
        }
    }

    /// `Σ ‖W‖²` over network weights and embedding tables.
    pub fn weight_sq_norm(&self) -> S {
        self.encoder.weight_sq_norm()
            + self.decoder.weight_sq_norm()
            + self.treat_embed.iter().map(Tensor2::sum_sq).sum::<S>()
            + self.heads.iter().map(Mlp::weight_sq_norm).sum::<S>()
    }

    /// Adds the gradient of `coef/2 · Σ‖W‖²` to `grads`.
    pub fn add_weight_decay_grad(&self, grads: &mut Self, coef: S) {
        self.encoder.add_weight_decay_grad(&mut grads.encoder, coef);
        self.decoder.add_weight_decay_grad(&mut grads.decoder, coef);
        for (t, g) in self.treat_embed.iter().zip(grads.treat_embed.iter_mut()) {
            for (gv, &v) in g.data_mut().iter_mut().zip(t.data()) {
                *gv += coef * v;
            }
        }
        for (h, g) in self.heads.iter().zip(grads.heads.iter_mut()) {
            h.add_weight_decay_grad(g, coef);
        }
    }

    pub fn cast<T: Scalar>(&self) -> HiCiParams<T> {
        HiCiParams {
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
            propensity: self.propensity.cast(),
            treat_embed: self.treat_embed.iter().map(Tensor2::cast).collect(),
            heads: self.heads.iter().map(Mlp::cast).collect(),
            head_input: self.head_input,
        }
    }

    /// L2 norm over all trainable segments.
    pub fn grad_norm(&self) -> S {
        self.segments()
            .iter()
            .flat_map(|s| s.iter())
            .map(|&v| v * v)
            .sum::<S>()
            .sqrt()
    }
}

impl<S: Scalar> Parameters<S> for HiCiParams<S> {
    fn segments(&self) -> Vec<&[S]> {
        let mut s = self.encoder.segments();
        s.extend(self.decoder.segments());
        s.extend(self.treat_embed.iter().map(|t| t.data()));
        for h in &self.heads {
            s.extend(h.segments());
        }
        s
    }

    fn segments_mut(&mut self) -> Vec<&mut [S]> {
        let mut s = self.encoder.segments_mut();
        s.extend(self.decoder.segments_mut());
        s.extend(self.treat_embed.iter_mut().map(|t| t.data_mut()));
        for h in &mut self.heads {
            s.extend(h.segments_mut());
        }
        s
    }

    fn segment_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.encoder.segment_names().into_iter().map(|n| format!("encoder.{n}")).collect();
        names.extend(self.decoder.segment_names().into_iter().map(|n| format!("decoder.{n}")));
        names.extend((0..self.treat_embed.len()).map(|e| format!("treat_embed{e}")));
        for (e, h) in self.heads.iter().enumerate() {
            names.extend(h.segment_names().into_iter().map(|n| format!("head{e}.{n}")));
        }
        names
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(e: usize) -> HiCiParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        HiCiParams::init(
            &HyperConfig::default(),
            ModelDims { p: 8, k: 3, e },
            HeadInput::Representation,
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn init_shapes() {
        let p = params(2);
        p.validate().unwrap();
        assert_eq!(p.dims(), ModelDims { p: 8, k: 3, e: 2 });
        assert_eq!(p.encoder.dims(), vec![8, 64, 4]);
        assert_eq!(p.decoder.dims(), vec![4, 64, 64, 8]);
        assert_eq!(p.heads[1].dims(), vec![20, 64, 64, 1]);
        assert_eq!(p.segments().len(), p.segment_names().len());
    }

    #[test]
    fn latent_must_be_smaller_than_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = HyperConfig {
            latent_dim: 8,
            ..Default::default()
        };
        let r = HiCiParams::<f64>::init(&c, ModelDims { p: 8, k: 2, e: 1 }, HeadInput::Representation, &mut rng);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn weight_decay_gradient_matches_penalty() {
        let p = params(1);
        let mut g = p.zeros_like();
        p.add_weight_decay_grad(&mut g, 1.0);
        // ∂(½‖W‖²)/∂W = W, so ‖grad‖² equals the penalty norm
        let gn = g.grad_norm();
        assert!((gn * gn - p.weight_sq_norm()).abs() < 1e-10);
    }
}
