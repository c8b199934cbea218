use super::config::{HeadInput, LossTerms};
use super::forward::{check_indices, run_heads};
use super::params::HiCiParams;
use crate::datagen::Dataset;
use crate::error::Result;
use crate::losses::{loss_21_grad, loss_ae_grad, loss_ce_grad, loss_rmse_dosage_grad, loss_rmse_grad};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

/// Which RMSE form the objective uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RmseForm {
    /// Dosage form when the model has more than one dosage level.
    #[default]
    Auto,
    Discrete,
    Dosage,
}

/// Samples of one optimization step (or a whole evaluation split).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<S> {
    pub x: Tensor2<S>,
    pub t: Vec<usize>,
    pub e: Vec<usize>,
    pub y: Vec<S>,
}

impl<S: Scalar> Batch<S> {
    pub fn from_dataset(d: &Dataset, idx: &[usize]) -> Self {
        Batch {
            x: d.x.select_rows(idx).cast(),
            t: idx.iter().map(|&i| d.t[i]).collect(),
            e: idx.iter().map(|&i| d.e[i]).collect(),
            y: idx.iter().map(|&i| S::lit(d.y[i])).collect(),
        }
    }

    pub fn whole(d: &Dataset) -> Self {
        Batch {
            x: d.x.cast(),
            t: d.t.clone(),
            e: d.e.clone(),
            y: d.y.iter().map(|&v| S::lit(v)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Unweighted addends and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown<S> {
    pub ce: S,
    pub ae: S,
    pub l21: S,
    pub rmse: S,
    pub total: S,
}

impl<S: Scalar> LossBreakdown<S> {
    /// First non-finite component, named as in the loss log.
    pub fn non_finite(&self) -> Option<&'static str> {
        [
            ("L_ce", self.ce),
            ("L_ae", self.ae),
            ("L_21", self.l21),
            ("L_rmse", self.rmse),
            ("L_total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Everything about the objective that does not change within an epoch.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a, S> {
    pub terms: LossTerms,
    /// Treatment marginal of the training set.
    pub marginal: &'a [S],
    pub rmse_form: RmseForm,
}

impl<S: Scalar> Objective<'_, S> {
    /// Loss value only.
    pub fn loss(&self, params: &HiCiParams<S>, batch: &Batch<S>) -> Result<LossBreakdown<S>> {
        Ok(self.run(params, batch, false)?.0)
    }

    /// Loss value and gradient w.r.t. every trainable parameter (no L2 term).
    pub fn loss_grad(&self, params: &HiCiParams<S>, batch: &Batch<S>) -> Result<(LossBreakdown<S>, HiCiParams<S>)> {
        let (l, g) = self.run(params, batch, true)?;
        Ok((l, g.expect("gradient requested")))
    }

    fn run(&self, params: &HiCiParams<S>, batch: &Batch<S>, want_grad: bool) -> Result<(LossBreakdown<S>, Option<HiCiParams<S>>)> {
        let n = batch.len();
        check_indices(params, batch.x.rows(), &batch.t, &batch.e)?;
        let dims = params.dims();
        let c = |v: f64| S::lit(v);
        let terms = self.terms;

        let enc = params.encoder.forward_trace(&batch.x)?;
        let rep = enc.output();
        let dec = params.decoder.forward_trace(rep)?;
        let (ae, d_xhat) = loss_ae_grad(&batch.x, dec.output())?;
        let (ce, d_rep_ce, _) = loss_ce_grad(rep, &params.propensity, self.marginal)?;
        let (l21, d_rep_l21) = loss_21_grad(rep, &batch.t, dims.k)?;

        let feat = match params.head_input {
            HeadInput::Representation => rep,
            HeadInput::Covariates => &batch.x,
        };
        let (y_hat, passes) = run_heads(params, feat, &batch.t, &batch.e)?;
        let dosage = match self.rmse_form {
            RmseForm::Auto => dims.e > 1,
            RmseForm::Discrete => false,
            RmseForm::Dosage => true,
        };
        let (rmse, d_yhat) = if dosage {
            let mut y = Tensor2::zeros(n, dims.e);
            let mut yh = Tensor2::zeros(n, dims.e);
            let mut mask = vec![false; n * dims.e];
            for i in 0..n {
                y.set(i, batch.e[i], batch.y[i]);
                yh.set(i, batch.e[i], y_hat[i]);
                mask[i * dims.e + batch.e[i]] = true;
            }
            let (r, g) = loss_rmse_dosage_grad(&y, &yh, &mask)?;
            (r, (0..n).map(|i| g.get(i, batch.e[i])).collect::<Vec<S>>())
        } else {
            loss_rmse_grad(&batch.y, &y_hat)?
        };

        let total = c(terms.ce) * ce + c(terms.ae) * ae + c(terms.l21) * l21 + c(terms.rmse) * rmse;
        let breakdown = LossBreakdown { ce, ae, l21, rmse, total };
        if !want_grad {
            return Ok((breakdown, None));
        }

        let mut grads = params.zeros_like();
        let mut d_rep = Tensor2::zeros(n, rep.cols());
        let mut rep_used = false;
        if terms.rmse != 0.0 {
            let lam = c(terms.rmse);
            let fcols = feat.cols();
            for pass in &passes {
                let mut up = Tensor2::zeros(pass.rows.len(), 1);
                for (r, &i) in pass.rows.iter().enumerate() {
                    up.set(r, 0, lam * d_yhat[i]);
                }
                let (g_head, d_in) = params.heads[pass.level].backward_trace(&pass.trace, &up)?;
                grads.heads[pass.level] = g_head;
                let table = &mut grads.treat_embed[pass.level];
                for (r, &i) in pass.rows.iter().enumerate() {
                    let row = d_in.row(r);
                    for (g, &v) in table.row_mut(batch.t[i]).iter_mut().zip(&row[fcols..]) {
                        *g += v;
                    }
                    if params.head_input == HeadInput::Representation {
                        for (g, &v) in d_rep.row_mut(i).iter_mut().zip(&row[..fcols]) {
                            *g += v;
                        }
                    }
                }
            }
            rep_used |= params.head_input == HeadInput::Representation;
        }
        for (coef, d) in [(terms.ce, &d_rep_ce), (terms.l21, &d_rep_l21)] {
            if coef != 0.0 {
                for (g, &v) in d_rep.data_mut().iter_mut().zip(d.data()) {
                    *g += c(coef) * v;
                }
                rep_used = true;
            }
        }
        if terms.ae != 0.0 {
            let up = d_xhat.map(|v| c(terms.ae) * v);
            let (g_dec, d_rep_dec) = params.decoder.backward_trace(&dec, &up)?;
            grads.decoder = g_dec;
            for (g, &v) in d_rep.data_mut().iter_mut().zip(d_rep_dec.data()) {
                *g += v;
            }
            rep_used = true;
        }
        if rep_used {
            grads.encoder = params.encoder.backward_trace(&enc, &d_rep)?.0;
        }
        Ok((breakdown, Some(grads)))
    }
}
