//! Loss components of the composite objective and their input gradients.
//!
//! Every `*_grad` function returns the loss value together with the
//! gradient w.r.t. the tensors the network produces, so the model can chain
//! them through its backward passes.

mod propensity;
mod regularizer;

pub use propensity::{
    fit_propensity, loss_ce, loss_ce_grad, propensity_probs, treatment_marginal, PropensityModel,
    PROPENSITY_GRAD_TOL, PROPENSITY_MAX_ITERS,
};
pub use regularizer::{loss_21, loss_21_grad, mean_diff_matrix, MeanDiffMatrix};

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

/// Weights of the composite objective: `β` (reconstruction), `γ` (mixed
/// norm) and `λ` (outcome RMSE).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            beta: 1.0,
            gamma: 1.0,
            lambda: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("beta", self.beta), ("gamma", self.gamma), ("lambda", self.lambda)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// `L_D = L_ce + β·L_ae + γ·L_21` with its unscaled addends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecorrLoss<S> {
    pub ce: S,
    pub ae: S,
    pub l21: S,
    pub total: S,
}

/// `L = L_D + λ·L_RMSE` with its addends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalLoss<S> {
    pub decorr: DecorrLoss<S>,
    pub rmse: S,
    pub total: S,
}

pub fn loss_decorr<S: Scalar>(ce: S, ae: S, l21: S, weights: &LossWeights) -> DecorrLoss<S> {
    DecorrLoss {
        ce,
        ae,
        l21,
        total: ce + S::lit(weights.beta) * ae + S::lit(weights.gamma) * l21,
    }
}

pub fn loss_total<S: Scalar>(decorr: DecorrLoss<S>, rmse: S, weights: &LossWeights) -> TotalLoss<S> {
    TotalLoss {
        decorr,
        rmse,
        total: decorr.total + S::lit(weights.lambda) * rmse,
    }
}

/// Mean squared reconstruction error `(1/(PN)) Σ (x − x̂)²`.
pub fn loss_ae<S: Scalar>(x: &Tensor2<S>, x_hat: &Tensor2<S>) -> Result<S> {
    Ok(loss_ae_grad(x, x_hat)?.0)
}

/// Reconstruction loss and its gradient w.r.t. `x_hat`.
pub fn loss_ae_grad<S: Scalar>(x: &Tensor2<S>, x_hat: &Tensor2<S>) -> Result<(S, Tensor2<S>)> {
    if x.shape() != x_hat.shape() {
        return shape_err(format!(
            "reconstruction {:?} does not match covariates {:?}",
            x_hat.shape(),
            x.shape()
        ));
    }
    let count = S::from_usize_lossy(x.data().len().max(1));
    let mut sum = S::zero();
    let mut grad = Tensor2::zeros(x.rows(), x.cols());
    let two = S::lit(2.0);
    for ((g, &a), &b) in grad.data_mut().iter_mut().zip(x.data()).zip(x_hat.data()) {
        let d = b - a;
        sum += d * d;
        *g = two * d / count;
    }
    Ok((sum / count, grad))
}

/// `√((1/N) Σ (y − ŷ)²)` over factual outcomes.
pub fn loss_rmse<S: Scalar>(y: &[S], y_hat: &[S]) -> Result<S> {
    Ok(loss_rmse_grad(y, y_hat)?.0)
}

/// RMSE and its gradient w.r.t. `y_hat` (zero where the loss is zero).
pub fn loss_rmse_grad<S: Scalar>(y: &[S], y_hat: &[S]) -> Result<(S, Vec<S>)> {
    if y.len() != y_hat.len() {
        return shape_err(format!(
            "{} targets but {} predictions",
            y.len(),
            y_hat.len()
        ));
    }
    if y.is_empty() {
        return Err(Error::Domain("RMSE of an empty batch".into()));
    }
    let mut sum = S::zero();
    for (&a, &b) in y.iter().zip(y_hat) {
        let d = a - b;
        sum += d * d;
    }
    let n = S::from_usize_lossy(y.len());
    let rmse = (sum / n).sqrt();
    let grad = if rmse > S::zero() {
        y.iter().zip(y_hat).map(|(&a, &b)| (b - a) / (n * rmse)).collect()
    } else {
        vec![S::zero(); y.len()]
    };
    Ok((rmse, grad))
}

/// Dosage-generalized RMSE `√((1/N) Σ_n Σ_e (y_ne − ŷ_ne)²)` over the
/// observed cells of `N × E` tables (`observed` is row-major, `N·E` long).
pub fn loss_rmse_dosage<S: Scalar>(y: &Tensor2<S>, y_hat: &Tensor2<S>, observed: &[bool]) -> Result<S> {
    Ok(loss_rmse_dosage_grad(y, y_hat, observed)?.0)
}

pub fn loss_rmse_dosage_grad<S: Scalar>(
    y: &Tensor2<S>,
    y_hat: &Tensor2<S>,
    observed: &[bool],
) -> Result<(S, Tensor2<S>)> {
    if y.shape() != y_hat.shape() || observed.len() != y.data().len() {
        return shape_err(format!(
            "dosage RMSE shapes disagree: y {:?}, ŷ {:?}, mask {}",
            y.shape(),
            y_hat.shape(),
            observed.len()
        ));
    }
    if y.rows() == 0 || y.cols() == 0 {
        return Err(Error::Domain("dosage RMSE needs N >= 1 and E >= 1".into()));
    }
    let mut sum = S::zero();
    for n in 0..y.rows() {
        for e in 0..y.cols() {
            if observed[n * y.cols() + e] {
                let d = y.get(n, e) - y_hat.get(n, e);
                sum += d * d;
            }
        }
    }
    let count = S::from_usize_lossy(y.rows());
    let rmse = (sum / count).sqrt();
    let mut grad = Tensor2::zeros(y.rows(), y.cols());
    if rmse > S::zero() {
        for (i, g) in grad.data_mut().iter_mut().enumerate() {
            if observed[i] {
                *g = (y_hat.data()[i] - y.data()[i]) / (count * rmse);
            }
        }
    }
    Ok((rmse, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ae_zero_at_identity() {
        let x = Tensor2::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
        assert_eq!(loss_ae(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn ae_hand_value() {
        let x = Tensor2::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(loss_ae(&x, &Tensor2::zeros(1, 2)).unwrap(), 2.5);
    }

    #[test]
    fn ae_quadratic_homogeneity() {
        let x = Tensor2::from_rows(&[vec![1.0, 2.0, 3.0], vec![0.0, -1.0, 4.0]]).unwrap();
        let xh = Tensor2::from_rows(&[vec![0.5, 2.5, 1.0], vec![1.0, -2.0, 4.5]]).unwrap();
        let xh2 = Tensor2::from_vec(
            2,
            3,
            x.data().iter().zip(xh.data()).map(|(a, b)| a + 2.0 * (b - a)).collect(),
        )
        .unwrap();
        let l1: f64 = loss_ae(&x, &xh).unwrap();
        let l2 = loss_ae(&x, &xh2).unwrap();
        assert!((l2 - 4.0 * l1).abs() < 1e-12);
    }

    #[test]
    fn ae_shape_mismatch() {
        assert!(loss_ae(&Tensor2::<f64>::zeros(2, 2), &Tensor2::zeros(2, 3)).is_err());
    }

    #[test]
    fn rmse_values() {
        assert_eq!(loss_rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let r = loss_rmse(&[0.0f64, 0.0], &[3.0, 4.0]).unwrap();
        assert!((r - 3.5355339059327378).abs() < 1e-12);
        assert!(loss_rmse(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn dosage_rmse_values() {
        let y = Tensor2::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let z = Tensor2::zeros(1, 2);
        let r = loss_rmse_dosage(&y, &z, &[true, true]).unwrap();
        assert!((r - 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(loss_rmse_dosage(&y, &y, &[true, true]).unwrap(), 0.0);
        // unobserved cells do not count
        let r = loss_rmse_dosage(&y, &z, &[true, false]).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn decorr_and_total_composition() {
        let w = LossWeights {
            beta: 0.5,
            gamma: 0.1,
            lambda: 2.0,
        };
        let d = loss_decorr(1.0f64, 2.0, 3.0, &w);
        assert!((d.total - 2.3).abs() < 1e-15);
        let zero = LossWeights {
            beta: 0.0,
            gamma: 0.0,
            lambda: 0.0,
        };
        assert_eq!(loss_decorr(1.7, 2.0, 3.0, &zero).total, 1.7);
        assert_eq!(loss_total(d, 9.0, &zero).total, d.total);
        let ones = LossWeights::default();
        assert_eq!(loss_total(loss_decorr(1.0, 1.0, 1.0, &ones), 1.0, &ones).total, 4.0);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        let bad = LossWeights {
            beta: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn dosage_rmse_with_one_level_equals_rmse(
            pairs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..40)
        ) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let yh: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let n = y.len();
            let a = loss_rmse(&y, &yh).unwrap();
            let b = loss_rmse_dosage(
                &Tensor2::from_vec(n, 1, y.clone()).unwrap(),
                &Tensor2::from_vec(n, 1, yh.clone()).unwrap(),
                &vec![true; n],
            ).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }

        #[test]
        fn rmse_is_permutation_invariant(
            pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..20),
            rot in 0usize..20
        ) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let yh: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let r = rot % y.len();
            let mut y2 = y.clone(); y2.rotate_left(r);
            let mut yh2 = yh.clone(); yh2.rotate_left(r);
            let a = loss_rmse(&y, &yh).unwrap();
            let b = loss_rmse(&y2, &yh2).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn total_is_strictly_increasing_in_rmse(r in 0.0f64..10.0, dr in 0.001f64..1.0, lambda in 0.01f64..10.0) {
            let w = LossWeights { beta: 1.0, gamma: 1.0, lambda };
            let d = loss_decorr(0.3, 0.2, 0.1, &w);
            prop_assert!(loss_total(d, r + dr, &w).total > loss_total(d, r, &w).total);
        }
    }
}
