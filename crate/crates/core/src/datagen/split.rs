use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// Redraws allowed before a split is declared infeasible.
pub const MAX_SPLIT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config(format!("split ratios must lie in [0, 1]: {parts:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must sum to 1: {parts:?}")));
        }
        Ok(())
    }

    /// Partition sizes for `n` samples; test takes the rounding remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = ((self.train * n as f64).round() as usize).min(n);
        let val = ((self.val * n as f64).round() as usize).min(n - train);
        (train, val, n - train - val)
    }
}

/// Disjoint train/validation/test index lists (0-based sample indices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Random split redrawn until the train partition holds every treatment.
pub fn split_dataset(d: &Dataset, ratios: SplitRatios, seed: u64) -> Result<Split> {
    ratios.validate()?;
    let n = d.n();
    let k = d.k();
    if n < k {
        return Err(Error::Infeasible(format!("{n} samples cannot cover {k} treatments")));
    }
    let (n_train, n_val, _) = ratios.sizes(n);
    let all: Vec<usize> = (0..n).collect();
    let present = d.unique_treatments(&all);
    if present < k || n_train < k {
        return Err(Error::Infeasible(format!(
            "train partition of {n_train} cannot cover {k} treatments ({present} present in data)"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = all;
    for _ in 0..MAX_SPLIT_ATTEMPTS {
        idx.shuffle(&mut rng);
        if d.unique_treatments(&idx[..n_train]) == k {
            return Ok(Split {
                train: idx[..n_train].to_vec(),
                val: idx[n_train..n_train + n_val].to_vec(),
                test: idx[n_train + n_val..].to_vec(),
            });
        }
    }
    Err(Error::Infeasible(format!(
        "no split in {MAX_SPLIT_ATTEMPTS} attempts put all {k} treatments in the train partition"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{DatasetMeta, Source};
    use crate::tensor::Tensor2;
    use proptest::prelude::*;

    fn toy(t: Vec<usize>, k: usize) -> Dataset {
        let n = t.len();
        let mut meta = DatasetMeta::syn(n, 1, k, 0);
        meta.source = Source::External;
        Dataset {
            x: Tensor2::zeros(n, 1),
            e: vec![0; n],
            y: vec![0.0; n],
            t,
            y_full: None,
            meta,
        }
    }

    #[test]
    fn sixty_twenty_twenty_sizes() {
        let d = toy((0..100).map(|i| i % 4).collect(), 4);
        let s = split_dataset(&d, SplitRatios::default(), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (60, 20, 20));
    }

    #[test]
    fn one_sample_per_treatment_is_infeasible() {
        let d = toy((0..10).collect(), 10);
        assert!(matches!(
            split_dataset(&d, SplitRatios::default(), 0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn bad_ratios_rejected() {
        let d = toy(vec![0, 1, 0, 1], 2);
        let r = SplitRatios {
            train: 0.5,
            val: 0.5,
            test: 0.5,
        };
        assert!(matches!(split_dataset(&d, r, 0), Err(Error::Config(_))));
    }

    #[test]
    fn absent_treatment_fails_fast() {
        let d = toy(vec![0, 1, 0, 1, 0, 1], 3);
        assert!(matches!(
            split_dataset(&d, SplitRatios::default(), 0),
            Err(Error::Infeasible(_))
        ));
    }

    proptest! {
        #[test]
        fn split_partitions_and_covers(n in 12usize..120, k in 2usize..5, seed in 0u64..1000) {
            let d = toy((0..n).map(|i| (i * 31 + 7) % k).collect(), k);
            let s = split_dataset(&d, SplitRatios::default(), seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(d.unique_treatments(&s.train), k);
        }
    }
}
