use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{apply_variant, HyperConfig};
use super::forward::predict_all_counterfactuals;
use super::objective::{Batch, LossBreakdown, Objective, RmseForm};
use super::params::{HiCiParams, ModelDims};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::losses::{fit_propensity, treatment_marginal};
use crate::metrics::cf_rmse;
use crate::ndnet::{adam_step, AdamState};
use crate::scalar::Scalar;

/// Seed stream for the train/val/test split.
pub const STREAM_SPLIT: u64 = 1;
/// Seed stream for parameter initialization.
pub const STREAM_INIT: u64 = 2;
/// Seed stream for batch order.
pub const STREAM_BATCH: u64 = 3;

/// Independent ChaCha stream `stream` of the run seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed handed to the dataset splitter for run seed `seed`.
pub fn split_seed(seed: u64) -> u64 {
    stream_rng(seed, STREAM_SPLIT).next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossLog {
    pub ce: f64,
    pub ae: f64,
    pub l21: f64,
    pub rmse: f64,
    pub total: f64,
}

impl<S: Scalar> From<LossBreakdown<S>> for LossLog {
    fn from(l: LossBreakdown<S>) -> Self {
        LossLog {
            ce: l.ce.as_f64(),
            ae: l.ae.as_f64(),
            l21: l.l21.as_f64(),
            rmse: l.rmse.as_f64(),
            total: l.total.as_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean over the epoch's batches.
    pub train: LossLog,
    pub val: LossLog,
    /// Counterfactual RMSE on the validation set, when it has counterfactuals.
    pub cf_rmse: Option<f64>,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,L_ce,L_ae,L_21,L_rmse,L_total,lr";

    pub fn csv_line(&self) -> String {
        let t = &self.train;
        format!("{},{},{},{},{},{},{}", self.epoch, t.ce, t.ae, t.l21, t.rmse, t.total, self.lr)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult<S> {
    /// Parameters at the best validation loss.
    pub params: HiCiParams<S>,
    pub best_val_loss: f64,
    /// 1-based epoch the returned parameters come from.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub curve: Vec<EpochLog>,
}

impl<S> TrainResult<S> {
    pub fn cf_rmse_curve(&self) -> Vec<Option<f64>> {
        self.curve.iter().map(|e| e.cf_rmse).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrainOptions {
    pub rmse_form: RmseForm,
}

fn check_pair(train: &Dataset, val: &Dataset) -> Result<ModelDims> {
    let dims = ModelDims {
        p: train.x.cols(),
        k: train.k(),
        e: train.e_levels(),
    };
    if (val.x.cols(), val.k(), val.e_levels()) != (dims.p, dims.k, dims.e) {
        return Err(Error::Consistency("train and validation sets disagree in P, K or E".into()));
    }
    if train.n() == 0 || val.n() == 0 {
        return Err(Error::Domain("train and validation sets must be non-empty".into()));
    }
    let covered = train.unique_treatments(&(0..train.n()).collect::<Vec<_>>());
    if covered < dims.k {
        return Err(Error::Domain(format!("train set covers {covered} of {} treatments", dims.k)));
    }
    Ok(dims)
}

pub fn train<S: Scalar>(config: &HyperConfig, train: &Dataset, val: &Dataset) -> Result<TrainResult<S>> {
    train_with(config, train, val, TrainOptions::default())
}

/// Joint training with epoch-start propensity refits, Adam steps and
/// early stopping on the validation total loss.
pub fn train_with<S: Scalar>(
    config: &HyperConfig,
    train: &Dataset,
    val: &Dataset,
    options: TrainOptions,
) -> Result<TrainResult<S>> {
    config.validate()?;
    let dims = check_pair(train, val)?;
    let assembly = apply_variant(config);
    let schedule = config.schedule()?;
    let l2 = S::lit(config.l2);
    let reg = S::lit(config.propensity_reg);

    let mut params = HiCiParams::<S>::init(config, dims, assembly.head_input, &mut stream_rng(config.seed, STREAM_INIT))?;
    let mut batch_rng = stream_rng(config.seed, STREAM_BATCH);
    let mut adam = AdamState::new(&params);

    let whole_train = Batch::<S>::whole(train);
    let val_batch = Batch::<S>::whole(val);
    let val_x = val_batch.x.clone();
    let marginal = treatment_marginal::<S>(&train.t, dims.k)?;
    let objective = Objective {
        terms: assembly.terms,
        marginal: &marginal,
        rmse_form: options.rmse_form,
    };

    let mut order: Vec<usize> = (0..train.n()).collect();
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut stale = 0usize;
    let mut curve = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.total_epochs {
        if assembly.refit_propensity {
            let rep = params.encoder.forward(&whole_train.x)?;
            params.propensity = fit_propensity(&rep, &whole_train.t, dims.k, reg)?;
        }
        let lr = schedule.lr_at(epoch - 1);
        order.shuffle(&mut batch_rng);
        let mut sums = [0.0f64; 5];
        for chunk in order.chunks(config.batch_size) {
            let batch = Batch::<S>::from_dataset(train, chunk);
            let (loss, mut grads) = objective.loss_grad(&params, &batch)?;
            if let Some(component) = loss.non_finite() {
                return Err(Error::NonFiniteLoss {
                    component: component.into(),
                    epoch,
                });
            }
            let w = chunk.len() as f64;
            let log = LossLog::from(loss);
            for (s, v) in sums.iter_mut().zip([log.ce, log.ae, log.l21, log.rmse, log.total]) {
                *s += w * v;
            }
            if config.l2 > 0.0 {
                params.add_weight_decay_grad(&mut grads, l2);
            }
            adam_step(&mut params, &grads, &mut adam, S::lit(lr)).map_err(|e| match e {
                Error::Numeric(_) => Error::NonFiniteLoss {
                    component: "gradient".into(),
                    epoch,
                },
                other => other,
            })?;
        }
        let n = train.n() as f64;
        let train_log = LossLog {
            ce: sums[0] / n,
            ae: sums[1] / n,
            l21: sums[2] / n,
            rmse: sums[3] / n,
            total: sums[4] / n,
        };

        let val_loss = objective.loss(&params, &val_batch)?;
        if let Some(component) = val_loss.non_finite() {
            return Err(Error::NonFiniteLoss {
                component: format!("validation {component}"),
                epoch,
            });
        }
        let cf = match &val.y_full {
            Some(yf) => {
                let pred = predict_all_counterfactuals(&params, &val_x)?.cast::<f64>();
                cf_rmse(yf, &pred, &val.t, &val.e)?
            }
            None => None,
        };
        let val_log = LossLog::from(val_loss);
        curve.push(EpochLog {
            epoch,
            lr,
            train: train_log,
            val: val_log,
            cf_rmse: cf,
        });

        let v = val_log.total;
        if v < best.0 {
            if best.0 - v > config.min_delta {
                stale = 0;
            } else {
                stale += 1;
            }
            best = (v, params.clone(), epoch);
        } else {
            stale += 1;
        }
        if stale > 0 && stale >= config.patience && epoch < config.total_epochs {
            stopped_early = true;
            break;
        }
    }

    let (best_val_loss, params, best_epoch) = best;
    Ok(TrainResult {
        params,
        best_val_loss,
        best_epoch,
        epochs_run: curve.len(),
        stopped_early,
        curve,
    })
}

/// Total validation loss of `params` under `config`'s variant.
pub fn validation_loss<S: Scalar>(params: &HiCiParams<S>, config: &HyperConfig, train: &Dataset, val: &Dataset, options: TrainOptions) -> Result<f64> {
    let marginal = treatment_marginal::<S>(&train.t, train.k())?;
    let objective = Objective {
        terms: apply_variant(config).terms,
        marginal: &marginal,
        rmse_form: options.rmse_form,
    };
    Ok(objective.loss(params, &Batch::whole(val))?.total.as_f64())
}
