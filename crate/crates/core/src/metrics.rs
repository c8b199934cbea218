//! Evaluation metrics over potential-outcome tensors.
//!
//! PEHE and MAPE_ATE treat every `(treatment, dosage)` arm as a separate
//! treatment; with one dosage level this is the usual `N × K` definition.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::outcomes::OutcomeTensor;
use crate::scalar::Scalar;

/// Below this magnitude an actual ATE is treated as zero.
pub const DEGENERATE_ATE: f64 = 1e-12;

fn same_shape<S: Scalar>(a: &OutcomeTensor<S>, b: &OutcomeTensor<S>) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(format!("outcome tensors differ: {:?} vs {:?}", a.shape(), b.shape()));
    }
    if a.n() == 0 {
        return Err(Error::Domain("metrics need N >= 1".into()));
    }
    Ok(())
}

/// `√ε̂_P`: root of the mean over unordered arm pairs of the mean squared
/// error of the pairwise effect.
pub fn pehe<S: Scalar>(y_full: &OutcomeTensor<S>, y_pred: &OutcomeTensor<S>) -> Result<S> {
    same_shape(y_full, y_pred)?;
    let yf = y_full.flatten_arms();
    let yp = y_pred.flatten_arms();
    let k = yf.k();
    if k < 2 {
        return Err(Error::Domain(format!("PEHE needs at least 2 arms, got {k}")));
    }
    let n = yf.n();
    let mut total = S::zero();
    for m in 0..k {
        for r in 0..m {
            let mut pair = S::zero();
            for i in 0..n {
                let d = (yf.get(i, m, 0) - yf.get(i, r, 0)) - (yp.get(i, m, 0) - yp.get(i, r, 0));
                pair += d * d;
            }
            total += pair / S::from_usize_lossy(n);
        }
    }
    Ok((total / S::from_usize_lossy(k * (k - 1) / 2)).sqrt())
}

/// Per-treatment relative ATE errors and their mean over non-degenerate
/// treatments.
#[derive(Debug, Clone, PartialEq)]
pub struct MapeAte<S> {
    pub per_k: Vec<Option<S>>,
    pub mean: Option<S>,
}

/// `ATE_k` of one `N × K` slice: outcome under `k` minus the mean over the
/// other treatments, averaged over samples.
fn ate_slice<S: Scalar>(y: &OutcomeTensor<S>, e: usize) -> Vec<S> {
    let (n, k) = (y.n(), y.k());
    let others = S::from_usize_lossy(k - 1);
    (0..k)
        .map(|kk| {
            let mut acc = S::zero();
            for i in 0..n {
                let mut rest = S::zero();
                for l in (0..k).filter(|&l| l != kk) {
                    rest += y.get(i, l, e);
                }
                acc += y.get(i, kk, e) - rest / others;
            }
            acc / S::from_usize_lossy(n)
        })
        .collect()
}

fn mape_from<S: Scalar>(actual: &[S], pred: &[S]) -> MapeAte<S> {
    let per_k: Vec<Option<S>> = actual
        .iter()
        .zip(pred)
        .map(|(&a, &p)| (a.abs() >= S::lit(DEGENERATE_ATE)).then(|| (a - p).abs() / a.abs()))
        .collect();
    let valid: Vec<S> = per_k.iter().flatten().copied().collect();
    let mean = (!valid.is_empty()).then(|| valid.iter().copied().sum::<S>() / S::from_usize_lossy(valid.len()));
    MapeAte { per_k, mean }
}

/// Relative ATE error per arm and averaged over arms.
pub fn mape_ate<S: Scalar>(y_full: &OutcomeTensor<S>, y_pred: &OutcomeTensor<S>) -> Result<MapeAte<S>> {
    same_shape(y_full, y_pred)?;
    let yf = y_full.flatten_arms();
    if yf.k() < 2 {
        return Err(Error::Domain("MAPE_ATE needs at least 2 arms".into()));
    }
    let yp = y_pred.flatten_arms();
    Ok(mape_from(&ate_slice(&yf, 0), &ate_slice(&yp, 0)))
}

/// `√MISE`, integrating the squared error over `dosage_grid` with the
/// trapezoid rule.
pub fn mise<S: Scalar>(y_full: &OutcomeTensor<S>, y_pred: &OutcomeTensor<S>, dosage_grid: &[f64]) -> Result<S> {
    same_shape(y_full, y_pred)?;
    let (n, k, e) = y_full.shape();
    if e < 2 {
        return Err(Error::Domain(format!("MISE needs at least 2 dosage levels, got {e}")));
    }
    if dosage_grid.len() != e {
        return shape_err(format!("dosage grid has {} points for E = {e}", dosage_grid.len()));
    }
    let half = S::lit(0.5);
    let mut total = S::zero();
    for i in 0..n {
        for kk in 0..k {
            let sq = |ee: usize| {
                let d = y_full.get(i, kk, ee) - y_pred.get(i, kk, ee);
                d * d
            };
            for ee in 0..e - 1 {
                let w = S::lit(dosage_grid[ee + 1] - dosage_grid[ee]);
                total += w * half * (sq(ee) + sq(ee + 1));
            }
        }
    }
    Ok((total / S::from_usize_lossy(n * k)).sqrt())
}

/// Relative error of the dosage-averaged ATE per treatment.
///
/// Every sample contributes at every level, so `N_E = N`.
pub fn mape_ate_dos<S: Scalar>(y_full: &OutcomeTensor<S>, y_pred: &OutcomeTensor<S>) -> Result<MapeAte<S>> {
    same_shape(y_full, y_pred)?;
    let (_, k, e) = y_full.shape();
    if k < 2 {
        return Err(Error::Domain("MAPE_ATE^Dos needs K >= 2".into()));
    }
    let dos = |y: &OutcomeTensor<S>| -> Vec<S> {
        let mut acc = vec![S::zero(); k];
        for ee in 0..e {
            for (a, v) in acc.iter_mut().zip(ate_slice(y, ee)) {
                *a += v;
            }
        }
        acc.into_iter().map(|a| a / S::from_usize_lossy(e)).collect()
    };
    Ok(mape_from(&dos(y_full), &dos(y_pred)))
}

/// RMSE over the non-factual cells; `None` when every cell is factual.
pub fn cf_rmse<S: Scalar>(
    y_full: &OutcomeTensor<S>,
    y_pred: &OutcomeTensor<S>,
    t: &[usize],
    e: &[usize],
) -> Result<Option<S>> {
    same_shape(y_full, y_pred)?;
    let (n, k, levels) = y_full.shape();
    if t.len() != n || e.len() != n {
        return shape_err(format!("factual indices for {}/{} samples, tensors have {n}", t.len(), e.len()));
    }
    let mut sum = S::zero();
    let mut count = 0usize;
    for i in 0..n {
        if t[i] >= k || e[i] >= levels {
            return Err(Error::Domain(format!("factual cell ({}, {}) out of range", t[i], e[i])));
        }
        for kk in 0..k {
            for ee in 0..levels {
                if kk == t[i] && ee == e[i] {
                    continue;
                }
                let d = y_full.get(i, kk, ee) - y_pred.get(i, kk, ee);
                sum += d * d;
                count += 1;
            }
        }
    }
    Ok((count > 0).then(|| (sum / S::from_usize_lossy(count)).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unavailable {
    pub metric: String,
    pub reason: String,
}

/// Test-set metrics; missing values are `null` with a reason in `unavailable`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub pehe_sqrt: Option<f64>,
    pub mape_ate: Option<f64>,
    pub mape_ate_per_k: Vec<Option<f64>>,
    pub mise_sqrt: Option<f64>,
    pub mape_ate_dos: Option<f64>,
    pub cf_rmse: Option<f64>,
    pub unavailable: Vec<Unavailable>,
}

impl MetricsReport {
    /// Computes every metric the inputs allow.
    pub fn compute(
        y_full: Option<&OutcomeTensor<f64>>,
        y_pred: &OutcomeTensor<f64>,
        t: &[usize],
        e: &[usize],
        dosage_grid: &[f64],
    ) -> Result<Self> {
        let mut r = MetricsReport {
            pehe_sqrt: None,
            mape_ate: None,
            mape_ate_per_k: Vec::new(),
            mise_sqrt: None,
            mape_ate_dos: None,
            cf_rmse: None,
            unavailable: Vec::new(),
        };
        let Some(yf) = y_full else {
            for m in ["pehe_sqrt", "mape_ate", "mise_sqrt", "mape_ate_dos", "cf_rmse"] {
                r.skip(m, "no counterfactual outcomes");
            }
            return Ok(r);
        };
        same_shape(yf, y_pred)?;
        let (_, k, levels) = yf.shape();

        if k * levels >= 2 {
            r.pehe_sqrt = Some(pehe(yf, y_pred)?);
            let m = mape_ate(yf, y_pred)?;
            r.mape_ate_per_k = m.per_k;
            match m.mean {
                Some(v) => r.mape_ate = Some(v),
                None => r.skip("mape_ate", "degenerate ATE"),
            }
        } else {
            r.skip("pehe_sqrt", "single treatment arm");
            r.skip("mape_ate", "single treatment arm");
        }

        if levels >= 2 {
            r.mise_sqrt = Some(mise(yf, y_pred, dosage_grid)?);
            if k >= 2 {
                match mape_ate_dos(yf, y_pred)?.mean {
                    Some(v) => r.mape_ate_dos = Some(v),
                    None => r.skip("mape_ate_dos", "degenerate ATE"),
                }
            } else {
                r.skip("mape_ate_dos", "single treatment");
            }
        } else {
            r.skip("mise_sqrt", "single dosage level");
            r.skip("mape_ate_dos", "single dosage level");
        }

        match cf_rmse(yf, y_pred, t, e)? {
            Some(v) => r.cf_rmse = Some(v),
            None => r.skip("cf_rmse", "no counterfactual cells"),
        }
        Ok(r)
    }

    fn skip(&mut self, metric: &str, reason: &str) {
        self.unavailable.push(Unavailable {
            metric: metric.into(),
            reason: reason.into(),
        });
    }

    /// Value of a named scalar metric, if available.
    pub fn get(&self, metric: &str) -> Option<f64> {
        match metric {
            "pehe_sqrt" => self.pehe_sqrt,
            "mape_ate" => self.mape_ate,
            "mise_sqrt" => self.mise_sqrt,
            "mape_ate_dos" => self.mape_ate_dos,
            "cf_rmse" => self.cf_rmse,
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    type Cube = Vec<Vec<Vec<f64>>>;

    fn cube(n: usize, k: usize, e: usize, rng: &mut ChaCha8Rng) -> Cube {
        (0..n)
            .map(|_| (0..k).map(|_| (0..e).map(|_| rng.sample(StandardNormal)).collect()).collect())
            .collect()
    }

    fn tensor(c: &Cube) -> OutcomeTensor<f64> {
        let (n, k, e) = (c.len(), c[0].len(), c[0][0].len());
        OutcomeTensor::from_vec(n, k, e, c.iter().flatten().flatten().copied().collect()).unwrap()
    }

    fn arms(c: &Cube) -> Vec<Vec<f64>> {
        c.iter().map(|r| r.iter().flatten().copied().collect()).collect()
    }

    fn oracle_pehe(y: &Cube, p: &Cube) -> f64 {
        let (y, p) = (arms(y), arms(p));
        let k = y[0].len();
        let mut pairs = Vec::new();
        for m in 0..k {
            for r in (m + 1)..k {
                let errs: Vec<f64> = (0..y.len())
                    .map(|i| ((y[i][m] - y[i][r]) - (p[i][m] - p[i][r])).powi(2))
                    .collect();
                pairs.push(errs.iter().sum::<f64>() / errs.len() as f64);
            }
        }
        (pairs.iter().sum::<f64>() / pairs.len() as f64).sqrt()
    }

    fn oracle_ate(y: &[Vec<f64>], k: usize) -> f64 {
        let kk = y[0].len();
        y.iter()
            .map(|row| row[k] - row.iter().enumerate().filter(|(l, _)| *l != k).map(|(_, v)| v).sum::<f64>() / (kk - 1) as f64)
            .sum::<f64>()
            / y.len() as f64
    }

    fn oracle_mape(y: &Cube, p: &Cube) -> f64 {
        let (y, p) = (arms(y), arms(p));
        let k = y[0].len();
        (0..k)
            .map(|j| {
                let a = oracle_ate(&y, j);
                (a - oracle_ate(&p, j)).abs() / a.abs()
            })
            .sum::<f64>()
            / k as f64
    }

    fn oracle_mise(y: &Cube, p: &Cube, grid: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..y.len() {
            for k in 0..y[0].len() {
                let f: Vec<f64> = (0..grid.len()).map(|e| (y[i][k][e] - p[i][k][e]).powi(2)).collect();
                for w in 0..grid.len() - 1 {
                    total += (grid[w + 1] - grid[w]) * (f[w] + f[w + 1]) / 2.0;
                }
            }
        }
        (total / (y.len() * y[0].len()) as f64).sqrt()
    }

    fn oracle_ate_dos(y: &Cube, k: usize) -> f64 {
        let (kk, e) = (y[0].len(), y[0][0].len());
        let mut per_level = Vec::new();
        for lvl in 0..e {
            let mut s = 0.0;
            for row in y {
                let others: f64 = (0..kk).filter(|&l| l != k).map(|l| row[l][lvl]).sum();
                s += row[k][lvl] - others / (kk - 1) as f64;
            }
            per_level.push(s / y.len() as f64);
        }
        per_level.iter().sum::<f64>() / e as f64
    }

    fn oracle_mape_dos(y: &Cube, p: &Cube) -> f64 {
        let k = y[0].len();
        (0..k)
            .map(|j| {
                let a = oracle_ate_dos(y, j);
                (a - oracle_ate_dos(p, j)).abs() / a.abs()
            })
            .sum::<f64>()
            / k as f64
    }

    fn oracle_cf(y: &Cube, p: &Cube, t: &[usize], e: &[usize]) -> f64 {
        let mut errs = Vec::new();
        for i in 0..y.len() {
            for k in 0..y[0].len() {
                for l in 0..y[0][0].len() {
                    if (k, l) != (t[i], e[i]) {
                        errs.push((y[i][k][l] - p[i][k][l]).powi(2));
                    }
                }
            }
        }
        (errs.iter().sum::<f64>() / errs.len() as f64).sqrt()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn pehe_hand_example() {
        let y = OutcomeTensor::from_rows(&[vec![1.0, 3.0]]).unwrap();
        let p = OutcomeTensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(pehe(&y, &p).unwrap(), 1.0);
        assert_eq!(pehe(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn pehe_rejects_single_arm() {
        let y = OutcomeTensor::from_rows(&[vec![1.0f64]]).unwrap();
        assert!(matches!(pehe(&y, &y), Err(Error::Domain(_))));
    }

    #[test]
    fn mape_hand_example() {
        let y = OutcomeTensor::from_rows(&[vec![2.0, 1.0]]).unwrap();
        let p = OutcomeTensor::from_rows(&[vec![2.0, 1.5]]).unwrap();
        let m = mape_ate(&y, &p).unwrap();
        assert_eq!(m.per_k, vec![Some(0.5), Some(0.5)]);
        assert_eq!(m.mean, Some(0.5));
    }

    #[test]
    fn mape_degenerate_is_unavailable() {
        let y = OutcomeTensor::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let p = OutcomeTensor::from_rows(&[vec![2.0, 1.0]]).unwrap();
        let m = mape_ate(&y, &p).unwrap();
        assert_eq!(m.mean, None);
        let r = MetricsReport::compute(Some(&y), &p, &[0], &[0], &[0.0]).unwrap();
        assert_eq!(r.mape_ate, None);
        assert!(r.unavailable.iter().any(|u| u.metric == "mape_ate" && u.reason == "degenerate ATE"));
    }

    #[test]
    fn mise_constant_error() {
        let y = OutcomeTensor::<f64>::zeros(3, 2, 4);
        let p = OutcomeTensor::from_vec(3, 2, 4, vec![-0.7; 24]).unwrap();
        let v = mise(&y, &p, &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]).unwrap();
        assert!((v - 0.7).abs() < 1e-12);
        assert!(mise(&y.dosage_slice(0), &p.dosage_slice(0), &[0.0]).is_err());
    }

    #[test]
    fn cf_rmse_single_cell() {
        let y = OutcomeTensor::from_rows(&[vec![5.0, 1.0]]).unwrap();
        let p = OutcomeTensor::from_rows(&[vec![-100.0, 4.0]]).unwrap();
        assert_eq!(cf_rmse(&y, &p, &[0], &[0]).unwrap(), Some(3.0));
        let one = OutcomeTensor::from_rows(&[vec![5.0]]).unwrap();
        assert_eq!(cf_rmse(&one, &one, &[0], &[0]).unwrap(), None);
    }

    #[test]
    fn report_without_counterfactuals() {
        let p = OutcomeTensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let r = MetricsReport::compute(None, &p, &[0], &[0], &[0.0]).unwrap();
        assert_eq!(r.pehe_sqrt, None);
        assert_eq!(r.unavailable.len(), 5);
    }

    #[test]
    fn report_json_has_exact_keys() {
        let y = OutcomeTensor::from_rows(&[vec![2.0, 1.0], vec![0.0, 3.0]]).unwrap();
        let r = MetricsReport::compute(Some(&y), &y, &[0, 1], &[0, 0], &[0.0]).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        let mut keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["cf_rmse", "mape_ate", "mape_ate_dos", "mape_ate_per_k", "mise_sqrt", "pehe_sqrt", "unavailable"]
        );
        let back: MetricsReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn zero_at_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = cube(5, 3, 3, &mut rng);
        let y = tensor(&c);
        let r = MetricsReport::compute(Some(&y), &y, &[0, 1, 2, 0, 1], &[0, 1, 2, 2, 0], &[0.0, 0.5, 1.0]).unwrap();
        for m in ["pehe_sqrt", "mape_ate", "mise_sqrt", "mape_ate_dos", "cf_rmse"] {
            assert_eq!(r.get(m), Some(0.0), "{m}");
        }
    }

    #[test]
    fn metrics_match_oracles_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(1..=8);
            let k = rng.random_range(2..=5);
            let e = rng.random_range(1..=4);
            let y = cube(n, k, e, &mut rng);
            let p = cube(n, k, e, &mut rng);
            let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let el: Vec<usize> = (0..n).map(|_| rng.random_range(0..e)).collect();
            let (yt, pt) = (tensor(&y), tensor(&p));
            assert!(close(pehe(&yt, &pt).unwrap(), oracle_pehe(&y, &p)));
            assert!(close(mape_ate(&yt, &pt).unwrap().mean.unwrap(), oracle_mape(&y, &p)));
            assert!(close(mape_ate_dos(&yt, &pt).unwrap().mean.unwrap(), oracle_mape_dos(&y, &p)));
            assert!(close(cf_rmse(&yt, &pt, &t, &el).unwrap().unwrap(), oracle_cf(&y, &p, &t, &el)));
            if e >= 2 {
                let grid: Vec<f64> = (0..e).map(|i| (i * i) as f64 / 7.0).collect();
                assert!(close(mise(&yt, &pt, &grid).unwrap(), oracle_mise(&y, &p, &grid)));
            }
        }
    }

    #[test]
    fn dosage_mape_with_one_level_equals_mape() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let y = tensor(&cube(6, 4, 1, &mut rng));
            let p = tensor(&cube(6, 4, 1, &mut rng));
            let a = mape_ate(&y, &p).unwrap();
            let b = mape_ate_dos(&y, &p).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn degradation_is_monotone_in_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = cube(8, 4, 1, &mut rng);
        let y = tensor(&c);
        let t: Vec<usize> = (0..8).map(|i| i % 4).collect();
        let e = vec![0; 8];
        let mut last = (0.0, 0.0);
        for scale in [0.01, 0.1, 0.5, 1.0, 3.0] {
            let mut pehes = Vec::new();
            let mut cfs = Vec::new();
            for _ in 0..20 {
                let noisy: Vec<f64> = y.data().iter().map(|v| v + scale * rng.sample::<f64, _>(StandardNormal)).collect();
                let p = OutcomeTensor::from_vec(8, 4, 1, noisy).unwrap();
                pehes.push(pehe(&y, &p).unwrap());
                cfs.push(cf_rmse(&y, &p, &t, &e).unwrap().unwrap());
            }
            pehes.sort_by(f64::total_cmp);
            cfs.sort_by(f64::total_cmp);
            let med = (pehes[10], cfs[10]);
            assert!(med.0 >= last.0 && med.1 >= last.1, "scale {scale}");
            last = med;
        }
    }

    proptest! {
        #[test]
        fn pehe_ignores_per_sample_shifts(seed in 0u64..1000, shift in -10.0f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = cube(4, 3, 1, &mut rng);
            let p = cube(4, 3, 1, &mut rng);
            let shifted: Cube = p.iter().enumerate()
                .map(|(i, row)| row.iter().map(|v| vec![v[0] + shift * i as f64]).collect())
                .collect();
            let a = pehe(&tensor(&y), &tensor(&p)).unwrap();
            let b = pehe(&tensor(&y), &tensor(&shifted)).unwrap();
            prop_assert!((a - b).abs() < 1e-10);
        }

        #[test]
        fn mape_is_scale_invariant(seed in 0u64..1000, c in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0]) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = tensor(&cube(5, 3, 1, &mut rng));
            let p = tensor(&cube(5, 3, 1, &mut rng));
            let scale = |t: &OutcomeTensor<f64>| OutcomeTensor::from_vec(5, 3, 1, t.data().iter().map(|v| v * c).collect()).unwrap();
            let a = mape_ate(&y, &p).unwrap().mean.unwrap();
            let b = mape_ate(&scale(&y), &scale(&p)).unwrap().mean.unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }

        #[test]
        fn reported_values_are_nonnegative(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = tensor(&cube(4, 3, 2, &mut rng));
            let p = tensor(&cube(4, 3, 2, &mut rng));
            let r = MetricsReport::compute(Some(&y), &p, &[0, 1, 2, 0], &[0, 1, 0, 1], &[0.0, 1.0]).unwrap();
            for m in ["pehe_sqrt", "mape_ate", "mise_sqrt", "mape_ate_dos", "cf_rmse"] {
                prop_assert!(r.get(m).is_none_or(|v| v >= 0.0));
            }
        }
    }
}
