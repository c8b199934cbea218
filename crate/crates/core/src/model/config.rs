use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::SplitRatios;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::ndnet::LrSchedule;

/// Which loss assembly (and input wiring) a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Full objective.
    Hici,
    /// Outcome network on raw covariates, RMSE only.
    Onn,
    /// Cross-entropy plus reconstruction, no mixed-norm term.
    DeeptreatPlus,
    /// Mixed-norm plus reconstruction, no cross-entropy term.
    L21Ae,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Hici, Variant::Onn, Variant::DeeptreatPlus, Variant::L21Ae];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Hici => "hici",
            Variant::Onn => "onn",
            Variant::DeeptreatPlus => "deeptreat_plus",
            Variant::L21Ae => "l21_ae",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

/// Hyperparameters of one training run. Layer counts include the output
/// layer, so `encoder_layers = 1` maps covariates straight to the latent
/// space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperConfig {
    pub batch_size: usize,
    pub total_epochs: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub iterations_per_decay: usize,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    pub encoder_layers: usize,
    pub encoder_width: usize,
    pub decoder_layers: usize,
    pub decoder_width: usize,
    pub outcome_layers: usize,
    pub outcome_width: usize,
    pub latent_dim: usize,
    pub treat_embed_dim: usize,
    pub l2: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub propensity_reg: f64,
    pub variant: Variant,
    pub seed: u64,
    pub patience: usize,
    pub min_delta: f64,
}

impl Default for HyperConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            total_epochs: 1000,
            learning_rate: 0.003,
            lr_decay: 0.75,
            iterations_per_decay: 50,
            train_ratio: 0.6,
            val_ratio: 0.2,
            test_ratio: 0.2,
            encoder_layers: 2,
            encoder_width: 64,
            decoder_layers: 3,
            decoder_width: 64,
            outcome_layers: 3,
            outcome_width: 64,
            latent_dim: 4,
            treat_embed_dim: 16,
            l2: 1e-4,
            beta: 1.0,
            gamma: 1.0,
            lambda: 1.0,
            propensity_reg: 1e-3,
            variant: Variant::Hici,
            seed: 0,
            patience: 20,
            min_delta: 1e-4,
        }
    }
}

impl HyperConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            beta: self.beta,
            gamma: self.gamma,
            lambda: self.lambda,
        }
    }

    pub fn split_ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train_ratio,
            val: self.val_ratio,
            test: self.test_ratio,
        }
    }

    pub fn schedule(&self) -> Result<LrSchedule> {
        LrSchedule::new(self.learning_rate, self.lr_decay, self.iterations_per_decay)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.total_epochs == 0 {
            return bad("total_epochs must be >= 1".into());
        }
        for (name, v) in [
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("outcome_layers", self.outcome_layers),
            ("encoder_width", self.encoder_width),
            ("decoder_width", self.decoder_width),
            ("outcome_width", self.outcome_width),
            ("latent_dim", self.latent_dim),
            ("treat_embed_dim", self.treat_embed_dim),
        ] {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        for (name, v) in [("l2", self.l2), ("propensity_reg", self.propensity_reg), ("min_delta", self.min_delta)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        self.weights().validate()?;
        self.split_ratios().validate()?;
        self.schedule()?;
        Ok(())
    }
}

/// Effective coefficient of each loss addend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub ce: f64,
    pub ae: f64,
    pub l21: f64,
    pub rmse: f64,
}

/// Where the outcome heads read their sample features from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadInput {
    Representation,
    Covariates,
}

/// Loss assembly and wiring implied by a variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assembly {
    pub terms: LossTerms,
    pub head_input: HeadInput,
    pub refit_propensity: bool,
}

pub fn apply_variant(config: &HyperConfig) -> Assembly {
    let w = config.weights();
    let (ce, ae, l21) = match config.variant {
        Variant::Hici => (1.0, w.beta, w.gamma),
        Variant::Onn => (0.0, 0.0, 0.0),
        Variant::DeeptreatPlus => (1.0, w.beta, 0.0),
        Variant::L21Ae => (0.0, w.beta, w.gamma),
    };
    Assembly {
        terms: LossTerms {
            ce,
            ae,
            l21,
            rmse: w.lambda,
        },
        head_input: if config.variant == Variant::Onn {
            HeadInput::Covariates
        } else {
            HeadInput::Representation
        },
        refit_propensity: ce != 0.0,
    }
}
