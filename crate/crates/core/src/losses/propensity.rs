use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

/// Gradient-norm tolerance of [`fit_propensity`].
pub const PROPENSITY_GRAD_TOL: f64 = 1e-6;
/// Iteration cap of [`fit_propensity`].
pub const PROPENSITY_MAX_ITERS: usize = 500;

const ARMIJO_C: f64 = 0.5;
const MAX_HALVINGS: usize = 60;

/// Multinomial logistic model over a representation: one weight row per
/// treatment, no intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel<S> {
    theta: Tensor2<S>,
}

impl<S: Scalar> PropensityModel<S> {
    /// `theta` is `K × L`.
    pub fn new(theta: Tensor2<S>) -> Result<Self> {
        if theta.rows() == 0 {
            return Err(Error::Domain("propensity model needs K >= 1".into()));
        }
        if !theta.is_finite() {
            return Err(Error::Numeric("propensity weights are not finite".into()));
        }
        Ok(Self { theta })
    }

    pub fn zeros(k: usize, l: usize) -> Self {
        Self {
            theta: Tensor2::zeros(k.max(1), l),
        }
    }

    pub fn theta(&self) -> &Tensor2<S> {
        &self.theta
    }

    pub fn k(&self) -> usize {
        self.theta.rows()
    }

    pub fn l(&self) -> usize {
        self.theta.cols()
    }

    /// Logits `Φ(x_n)ᵀθ_k`, `N × K`.
    pub fn logits(&self, rep: &Tensor2<S>) -> Result<Tensor2<S>> {
        if rep.cols() != self.l() {
            return shape_err(format!(
                "representation has {} columns, propensity model expects {}",
                rep.cols(),
                self.l()
            ));
        }
        rep.matmul_t(&self.theta)
    }

    pub fn cast<T: Scalar>(&self) -> PropensityModel<T> {
        PropensityModel {
            theta: self.theta.cast(),
        }
    }
}

fn log_sum_exp<S: Scalar>(z: &[S]) -> S {
    let m = z.iter().copied().fold(S::neg_infinity(), S::max);
    let s: S = z.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}

fn softmax_rows<S: Scalar>(logits: &mut Tensor2<S>) {
    for r in 0..logits.rows() {
        let row = logits.row_mut(r);
        let m = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut s = S::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
}

/// Row-wise softmax of the logits, `N × K`.
pub fn propensity_probs<S: Scalar>(model: &PropensityModel<S>, rep: &Tensor2<S>) -> Result<Tensor2<S>> {
    let mut z = model.logits(rep)?;
    softmax_rows(&mut z);
    Ok(z)
}

/// Empirical frequencies of `t` over `k` treatments.
pub fn treatment_marginal<S: Scalar>(t: &[usize], k: usize) -> Result<Vec<S>> {
    if t.is_empty() {
        return Err(Error::Domain("treatment marginal of an empty batch".into()));
    }
    let mut counts = vec![0usize; k];
    for &ti in t {
        if ti >= k {
            return Err(Error::Domain(format!("treatment {ti} outside 0..{k}")));
        }
        counts[ti] += 1;
    }
    let n = S::from_usize_lossy(t.len());
    Ok(counts.into_iter().map(|c| S::from_usize_lossy(c) / n).collect())
}

/// Cross-entropy between the marginal and the per-sample conditional,
/// averaged over the batch.
pub fn loss_ce<S: Scalar>(rep: &Tensor2<S>, model: &PropensityModel<S>, marginal: &[S]) -> Result<S> {
    let z = model.logits(rep)?;
    check_marginal(marginal, model.k())?;
    let mut total = S::zero();
    for n in 0..z.rows() {
        let row = z.row(n);
        let lse = log_sum_exp(row);
        let dot: S = row.iter().zip(marginal).map(|(&a, &p)| a * p).sum();
        total += lse - dot;
    }
    Ok(total / S::from_usize_lossy(z.rows().max(1)))
}

/// [`loss_ce`] plus its gradients w.r.t. the representation (`N × L`) and
/// the propensity weights (`K × L`).
pub fn loss_ce_grad<S: Scalar>(
    rep: &Tensor2<S>,
    model: &PropensityModel<S>,
    marginal: &[S],
) -> Result<(S, Tensor2<S>, Tensor2<S>)> {
    let mut z = model.logits(rep)?;
    check_marginal(marginal, model.k())?;
    let nn = S::from_usize_lossy(z.rows().max(1));
    let mut total = S::zero();
    for n in 0..z.rows() {
        let row = z.row_mut(n);
        let lse = log_sum_exp(row);
        let dot: S = row.iter().zip(marginal).map(|(&a, &p)| a * p).sum();
        total += lse - dot;
        // Σ_k p̂_k = 1, so ∂/∂z_nk = softmax_nk − p̂_k
        for (v, &p) in row.iter_mut().zip(marginal) {
            *v = ((*v - lse).exp() - p) / nn;
        }
    }
    let d_rep = z.matmul(model.theta())?;
    let d_theta = z.t_matmul(rep)?;
    Ok((total / nn, d_rep, d_theta))
}

fn check_marginal<S: Scalar>(marginal: &[S], k: usize) -> Result<()> {
    if marginal.len() != k {
        return shape_err(format!("marginal has {} entries for K = {k}", marginal.len()));
    }
    let s: S = marginal.iter().copied().sum();
    if (s - S::one()).abs() > S::lit(1e-6) || marginal.iter().any(|&p| p < S::zero()) {
        return Err(Error::Domain(format!("marginal must be a distribution, sums to {s}")));
    }
    Ok(())
}

/// Mean negative log-likelihood plus `reg/2 ‖θ‖²`, and its gradient.
fn penalized_nll<S: Scalar>(rep: &Tensor2<S>, t: &[usize], theta: &Tensor2<S>, reg: S) -> Result<(S, Tensor2<S>)> {
    let mut z = rep.matmul_t(theta)?;
    let nn = S::from_usize_lossy(rep.rows());
    let mut nll = S::zero();
    for n in 0..z.rows() {
        let row = z.row_mut(n);
        let lse = log_sum_exp(row);
        nll += lse - row[t[n]];
        for v in row.iter_mut() {
            *v = (*v - lse).exp() / nn;
        }
        row[t[n]] -= S::one() / nn;
    }
    let mut grad = z.t_matmul(rep)?;
    for (g, &w) in grad.data_mut().iter_mut().zip(theta.data()) {
        *g += reg * w;
    }
    let half = S::lit(0.5);
    Ok((nll / nn + half * reg * theta.sum_sq(), grad))
}

/// Fits the propensity model by regularized maximum likelihood.
///
/// Gradient ascent on the mean log-likelihood minus `reg/2 ‖θ‖²` from
/// `θ = 0`, with Armijo backtracking, until the gradient norm drops below
/// [`PROPENSITY_GRAD_TOL`] or [`PROPENSITY_MAX_ITERS`] steps.
pub fn fit_propensity<S: Scalar>(rep: &Tensor2<S>, t: &[usize], k: usize, reg: S) -> Result<PropensityModel<S>> {
    if t.len() != rep.rows() {
        return shape_err(format!("{} treatments for {} representation rows", t.len(), rep.rows()));
    }
    if !(reg >= S::zero() && reg.is_finite()) {
        return Err(Error::Config(format!("propensity regularization must be >= 0, got {reg}")));
    }
    let mut present = vec![false; k];
    for &ti in t {
        if ti >= k {
            return Err(Error::Domain(format!("treatment {ti} outside 0..{k}")));
        }
        present[ti] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(Error::Domain(format!("treatment class {missing} absent from propensity data")));
    }
    let mut theta = Tensor2::zeros(k, rep.cols());
    if k == 1 {
        return PropensityModel::new(theta);
    }
    // Curvature bound of the softmax NLL: ½ tr(RᵀR)/N + reg.
    let lip = S::lit(0.5) * rep.sum_sq() / S::from_usize_lossy(rep.rows()) + reg;
    let mut step = if lip > S::zero() { S::one() / lip } else { S::one() };
    let (mut f, mut g) = penalized_nll(rep, t, &theta, reg)?;
    let tol = S::lit(PROPENSITY_GRAD_TOL);
    let c = S::lit(ARMIJO_C);
    for _ in 0..PROPENSITY_MAX_ITERS {
        let gsq = g.sum_sq();
        if gsq.sqrt() < tol {
            break;
        }
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let mut cand = theta.clone();
            for (w, &gi) in cand.data_mut().iter_mut().zip(g.data()) {
                *w -= step * gi;
            }
            let (fc, gc) = penalized_nll(rep, t, &cand, reg)?;
            if fc <= f - c * step * gsq {
                theta = cand;
                f = fc;
                g = gc;
                accepted = true;
                break;
            }
            step *= S::lit(0.5);
        }
        if !accepted {
            break;
        }
        step *= S::lit(2.0);
    }
    if !theta.is_finite() {
        return Err(Error::Numeric("propensity fit diverged".into()));
    }
    PropensityModel::new(theta)
}
