use super::config::HeadInput;
use super::params::HiCiParams;
use crate::error::{shape_err, Error, Result};
use crate::ndnet::MlpTrace;
use crate::outcomes::OutcomeTensor;
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

/// Forward pass of one dosage head over the samples routed to it.
pub(crate) struct HeadPass<S> {
    pub level: usize,
    pub rows: Vec<usize>,
    pub trace: MlpTrace<S>,
}

pub(crate) fn check_indices<S: Scalar>(params: &HiCiParams<S>, n: usize, t: &[usize], e: &[usize]) -> Result<()> {
    if t.len() != n || e.len() != n {
        return shape_err(format!("{n} samples but {} treatments and {} dosages", t.len(), e.len()));
    }
    let dims = params.dims();
    if let Some(i) = t.iter().position(|&v| v >= dims.k) {
        return Err(Error::Domain(format!("sample {i}: treatment {} outside 0..{}", t[i], dims.k)));
    }
    if let Some(i) = e.iter().position(|&v| v >= dims.e) {
        return Err(Error::Domain(format!("sample {i}: dosage level {} outside 0..{}", e[i], dims.e)));
    }
    Ok(())
}

/// Head features `[feat_n, embed_e[t_r]]`, one row per entry of `rows`
/// with treatment `row_t[r]`.
fn head_input<S: Scalar>(feat: &Tensor2<S>, rows: &[usize], table: &Tensor2<S>, row_t: &[usize]) -> Result<Tensor2<S>> {
    let dt = table.cols();
    let mut emb = Tensor2::zeros(rows.len(), dt);
    for (r, &k) in row_t.iter().enumerate() {
        emb.row_mut(r).copy_from_slice(table.row(k));
    }
    feat.select_rows(rows).hcat(&emb)
}

/// Routes samples to their dosage head and runs each head once.
pub(crate) fn run_heads<S: Scalar>(
    params: &HiCiParams<S>,
    feat: &Tensor2<S>,
    t: &[usize],
    e: &[usize],
) -> Result<(Vec<S>, Vec<HeadPass<S>>)> {
    let levels = params.heads.len();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); levels];
    for (n, &lvl) in e.iter().enumerate() {
        groups[lvl].push(n);
    }
    let mut y_hat = vec![S::zero(); feat.rows()];
    let mut passes = Vec::new();
    for (level, rows) in groups.into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        let row_t: Vec<usize> = rows.iter().map(|&n| t[n]).collect();
        let input = head_input(feat, &rows, &params.treat_embed[level], &row_t)?;
        let trace = params.heads[level].forward_trace(&input)?;
        for (r, &n) in rows.iter().enumerate() {
            y_hat[n] = trace.output().get(r, 0);
        }
        passes.push(HeadPass { level, rows, trace });
    }
    Ok((y_hat, passes))
}

/// Per-sample features the heads consume.
pub(crate) fn features<S: Scalar>(params: &HiCiParams<S>, x: &Tensor2<S>) -> Result<Tensor2<S>> {
    match params.head_input {
        HeadInput::Representation => params.encoder.forward(x),
        HeadInput::Covariates => {
            if x.cols() != params.encoder.in_dim() {
                return shape_err(format!("covariates have {} columns, model expects {}", x.cols(), params.encoder.in_dim()));
            }
            Ok(x.clone())
        }
    }
}

/// Outcome prediction for each sample under its own `(t_n, e_n)`.
pub fn predict_outcome<S: Scalar>(params: &HiCiParams<S>, x: &Tensor2<S>, t: &[usize], e: &[usize]) -> Result<Vec<S>> {
    check_indices(params, x.rows(), t, e)?;
    let feat = features(params, x)?;
    Ok(run_heads(params, &feat, t, e)?.0)
}

/// Predictions for every sample under every treatment and dosage level.
pub fn predict_all_counterfactuals<S: Scalar>(params: &HiCiParams<S>, x: &Tensor2<S>) -> Result<OutcomeTensor<S>> {
    let dims = params.dims();
    let n = x.rows();
    let feat = features(params, x)?;
    let rows: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, dims.k)).collect();
    let t: Vec<usize> = (0..n).flat_map(|_| 0..dims.k).collect();
    let mut out = OutcomeTensor::zeros(n, dims.k, dims.e);
    for level in 0..dims.e {
        let input = head_input(&feat, &rows, &params.treat_embed[level], &t)?;
        let y = params.heads[level].forward(&input)?;
        for (r, (&i, &k)) in rows.iter().zip(&t).enumerate() {
            out.set(i, k, level, y.get(r, 0));
        }
    }
    Ok(out)
}
