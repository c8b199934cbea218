use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::outcomes::OutcomeTensor;
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "syn")]
    Syn,
    #[serde(rename = "news-like")]
    NewsLike,
    #[serde(rename = "external")]
    External,
}

impl Source {
    /// Base of the `<base><K>` dataset name.
    pub fn base_name(self) -> &'static str {
        match self {
            Source::Syn => "Syn",
            Source::NewsLike => "NEWS",
            Source::External => "Ext",
        }
    }
}

fn default_sparsity() -> f64 {
    0.8
}
fn default_nonlinearity() -> f64 {
    1.0
}
fn is_default_sparsity(v: &f64) -> bool {
    *v == default_sparsity()
}
fn is_default_nonlinearity(v: &f64) -> bool {
    *v == default_nonlinearity()
}
fn is_false(v: &bool) -> bool {
    !*v
}

/// Generator settings and dataset dimensions.
///
/// The three trailing knobs are only written to JSON when they differ from
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub e_levels: usize,
    pub n_confounders: usize,
    pub kappa: f64,
    pub sigma: f64,
    pub seed: u64,
    pub source: Source,
    pub dosage_grid: Vec<f64>,
    /// Target fraction of zero counts for news-like covariates.
    #[serde(default = "default_sparsity", skip_serializing_if = "is_default_sparsity")]
    pub sparsity: f64,
    /// Scale of the `tanh` outcome term; 0 gives outcomes linear in the confounders.
    #[serde(default = "default_nonlinearity", skip_serializing_if = "is_default_nonlinearity")]
    pub nonlinearity: f64,
    /// Lets the confounders drive dosage assignment too.
    #[serde(default, skip_serializing_if = "is_false")]
    pub dosage_confounded: bool,
}

/// `E` evenly spaced levels on `[0, 1]`; a single level sits at 0.
pub fn uniform_dosage_grid(levels: usize) -> Vec<f64> {
    match levels {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..levels)
            .map(|i| i as f64 / (levels - 1) as f64)
            .collect(),
    }
}

impl DatasetMeta {
    /// Synthetic defaults: 5 confounders (or P if fewer), κ = 2, σ = 0.5, E = 1.
    pub fn syn(n: usize, p: usize, k: usize, seed: u64) -> Self {
        Self {
            n,
            p,
            k,
            e_levels: 1,
            n_confounders: p.min(5),
            kappa: 2.0,
            sigma: 0.5,
            seed,
            source: Source::Syn,
            dosage_grid: uniform_dosage_grid(1),
            sparsity: default_sparsity(),
            nonlinearity: default_nonlinearity(),
            dosage_confounded: false,
        }
    }

    pub fn news_like(n: usize, p: usize, k: usize, seed: u64) -> Self {
        Self {
            source: Source::NewsLike,
            ..Self::syn(n, p, k, seed)
        }
    }

    pub fn with_dosage_levels(mut self, e_levels: usize) -> Self {
        self.e_levels = e_levels;
        self.dosage_grid = uniform_dosage_grid(e_levels);
        self
    }

    /// Dataset name `<base><K>`, e.g. `Syn35`.
    pub fn name(&self) -> String {
        format!("{}{}", self.source.base_name(), self.k)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n == 0 || self.p == 0 || self.k == 0 || self.e_levels == 0 {
            return bad(format!(
                "n, p, k, e_levels must be >= 1 (got {}, {}, {}, {})",
                self.n, self.p, self.k, self.e_levels
            ));
        }
        if self.n_confounders > self.p {
            return bad(format!(
                "n_confounders {} exceeds p {}",
                self.n_confounders, self.p
            ));
        }
        if self.source != Source::External && self.n_confounders == 0 {
            return bad("generated data needs at least one confounder".into());
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return bad(format!("kappa must be finite and >= 0, got {}", self.kappa));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return bad(format!("sparsity must be in [0, 1), got {}", self.sparsity));
        }
        if !self.nonlinearity.is_finite() {
            return bad("nonlinearity must be finite".into());
        }
        if self.dosage_grid.len() != self.e_levels {
            return bad(format!(
                "dosage_grid has {} levels, e_levels is {}",
                self.dosage_grid.len(),
                self.e_levels
            ));
        }
        if self.dosage_grid.iter().any(|d| !(0.0..=1.0).contains(d)) {
            return bad("dosage_grid values must lie in [0, 1]".into());
        }
        if self.dosage_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("dosage_grid must be strictly increasing".into());
        }
        Ok(())
    }
}

/// Observational dataset: covariates, factual assignments and outcomes, and
/// (for generated data) every potential outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Tensor2<f64>,
    /// Factual treatment per sample, `0..K`.
    pub t: Vec<usize>,
    /// Factual dosage level per sample, `0..E`.
    pub e: Vec<usize>,
    pub y: Vec<f64>,
    pub y_full: Option<OutcomeTensor<f64>>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn k(&self) -> usize {
        self.meta.k
    }

    pub fn e_levels(&self) -> usize {
        self.meta.e_levels
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.rows();
        if self.x.cols() != self.meta.p {
            return Err(Error::Consistency(format!(
                "covariates have {} columns, metadata says p = {}",
                self.x.cols(),
                self.meta.p
            )));
        }
        if self.t.len() != n || self.e.len() != n || self.y.len() != n || n != self.meta.n {
            return Err(Error::Consistency(format!(
                "sample counts disagree: x {n}, t {}, e {}, y {}, meta {}",
                self.t.len(),
                self.e.len(),
                self.y.len(),
                self.meta.n
            )));
        }
        if let Some(i) = self.t.iter().position(|&t| t >= self.meta.k) {
            return Err(Error::Consistency(format!(
                "sample {} has treatment {} outside 1..={}",
                i + 1,
                self.t[i] + 1,
                self.meta.k
            )));
        }
        if let Some(i) = self.e.iter().position(|&e| e >= self.meta.e_levels) {
            return Err(Error::Consistency(format!(
                "sample {} has dosage level {} outside 1..={}",
                i + 1,
                self.e[i] + 1,
                self.meta.e_levels
            )));
        }
        if let Some(yf) = &self.y_full {
            if yf.shape() != (n, self.meta.k, self.meta.e_levels) {
                return Err(Error::Consistency(format!(
                    "counterfactual tensor {:?} does not match ({n}, {}, {})",
                    yf.shape(),
                    self.meta.k,
                    self.meta.e_levels
                )));
            }
            for i in 0..n {
                if yf.get(i, self.t[i], self.e[i]) != self.y[i] {
                    return Err(Error::Consistency(format!(
                        "sample {}: factual outcome differs from counterfactual table",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sub-dataset over `idx` (metadata `n` updated accordingly).
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut meta = self.meta.clone();
        meta.n = idx.len();
        Dataset {
            x: self.x.select_rows(idx),
            t: idx.iter().map(|&i| self.t[i]).collect(),
            e: idx.iter().map(|&i| self.e[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            y_full: self.y_full.as_ref().map(|y| y.select_samples(idx)),
            meta,
        }
    }

    /// Number of distinct treatments among `idx`.
    pub fn unique_treatments(&self, idx: &[usize]) -> usize {
        let mut seen = vec![false; self.meta.k];
        for &i in idx {
            seen[self.t[i]] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }
}

/// Count-based `p̂(T_k)` over `subset`.
pub fn empirical_treatment_marginal(d: &Dataset, subset: &[usize]) -> Result<Vec<f64>> {
    if subset.is_empty() {
        return Err(Error::Domain("treatment marginal of an empty subset".into()));
    }
    let mut counts = vec![0usize; d.k()];
    for &i in subset {
        counts[d.t[i]] += 1;
    }
    let n = subset.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}
