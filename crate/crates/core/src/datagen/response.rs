//! Treatment assignment and potential-outcome model shared by the generators.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};

use super::dataset::{Dataset, DatasetMeta};
use crate::outcomes::OutcomeTensor;
use crate::tensor::Tensor2;

fn normal_matrix<R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(rng);
                    std * v
                })
                .collect()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Draws an index from `softmax(logits)`.
pub(crate) fn sample_softmax<R: Rng>(logits: &[f64], rng: &mut R) -> usize {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u: f64 = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Per-treatment response surfaces over a confounder block `z`:
/// `y(k, d) = (α_kᵀz + s_k·tanh(u_kᵀz) + c_k) · (1 + a_k·d − b_k·d²)`.
pub(crate) struct ResponseModel {
    alpha: Vec<Vec<f64>>,
    u: Vec<Vec<f64>>,
    s: Vec<f64>,
    c: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl ResponseModel {
    pub(crate) fn draw<R: Rng>(k: usize, dim: usize, nonlinearity: f64, rng: &mut R) -> Self {
        let unit = Uniform::new(0.5, 2.0).expect("valid range");
        let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
        let alpha = normal_matrix(k, dim, 1.0, rng);
        let u = normal_matrix(k, dim, 1.0 / (dim as f64).sqrt(), rng);
        let s = (0..k).map(|_| nonlinearity * std_normal.sample(rng)).collect();
        let c = (0..k).map(|_| std_normal.sample(rng)).collect();
        let a = (0..k).map(|_| unit.sample(rng)).collect();
        let b = (0..k).map(|_| unit.sample(rng)).collect();
        Self { alpha, u, s, c, a, b }
    }

    pub(crate) fn mean(&self, k: usize, dose: f64, z: &[f64]) -> f64 {
        let base = dot(&self.alpha[k], z) + self.s[k] * dot(&self.u[k], z).tanh() + self.c[k];
        base * (1.0 + self.a[k] * dose - self.b[k] * dose * dose)
    }
}

/// Linear assignment scores `κ·W z` for treatments (and optionally dosages).
pub(crate) struct Assignment {
    treat: Vec<Vec<f64>>,
    dose: Option<Vec<Vec<f64>>>,
    kappa: f64,
}

impl Assignment {
    pub(crate) fn draw<R: Rng>(meta: &DatasetMeta, dim: usize, rng: &mut R) -> Self {
        let std = 1.0 / (dim as f64).sqrt();
        let treat = normal_matrix(meta.k, dim, std, rng);
        let dose = meta
            .dosage_confounded
            .then(|| normal_matrix(meta.e_levels, dim, std, rng));
        Self {
            treat,
            dose,
            kappa: meta.kappa,
        }
    }

    /// Replaces the treatment score rows (e.g. with topic centroids).
    pub(crate) fn with_treatment_rows(mut self, rows: Vec<Vec<f64>>) -> Self {
        self.treat = rows;
        self
    }

    fn logits(&self, rows: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
        rows.iter().map(|w| self.kappa * dot(w, z)).collect()
    }

    pub(crate) fn sample<R: Rng>(&self, z: &[f64], e_levels: usize, rng: &mut R) -> (usize, usize) {
        let t = sample_softmax(&self.logits(&self.treat, z), rng);
        let e = match &self.dose {
            Some(rows) => sample_softmax(&self.logits(rows, z), rng),
            None => rng.random_range(0..e_levels),
        };
        (t, e)
    }
}

/// Samples assignments and every potential outcome from confounder rows `z`.
pub(crate) fn assemble<R: Rng>(
    meta: &DatasetMeta,
    x: Tensor2<f64>,
    z: &[Vec<f64>],
    assignment: &Assignment,
    response: &ResponseModel,
    rng: &mut R,
) -> Dataset {
    let (n, k, levels) = (meta.n, meta.k, meta.e_levels);
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let mut t = Vec::with_capacity(n);
    let mut e = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut y_full = OutcomeTensor::zeros(n, k, levels);
    for (i, zi) in z.iter().enumerate() {
        let (ti, ei) = assignment.sample(zi, levels, rng);
        for kk in 0..k {
            for (ee, &dose) in meta.dosage_grid.iter().enumerate() {
                let v = response.mean(kk, dose, zi) + meta.sigma * noise.sample(rng);
                y_full.set(i, kk, ee, v);
            }
        }
        t.push(ti);
        e.push(ei);
        y.push(y_full.get(i, ti, ei));
    }
    Dataset {
        x,
        t,
        e,
        y,
        y_full: Some(y_full),
        meta: meta.clone(),
    }
}
