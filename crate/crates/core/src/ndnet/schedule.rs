use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inverse time decay: `base / (1 + (1 − decay_rate) · ⌊epoch / iterations_per_decay⌋)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    base_rate: f64,
    decay_rate: f64,
    iterations_per_decay: usize,
}

impl LrSchedule {
    pub fn new(base_rate: f64, decay_rate: f64, iterations_per_decay: usize) -> Result<Self> {
        if !(base_rate > 0.0 && base_rate.is_finite()) {
            return Err(Error::Config(format!("base learning rate must be > 0, got {base_rate}")));
        }
        if !(decay_rate > 0.0 && decay_rate <= 1.0) {
            return Err(Error::Config(format!("decay rate must be in (0, 1], got {decay_rate}")));
        }
        if iterations_per_decay == 0 {
            return Err(Error::Config("iterations per decay must be >= 1".into()));
        }
        Ok(Self {
            base_rate,
            decay_rate,
            iterations_per_decay,
        })
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let k = (epoch / self.iterations_per_decay) as f64;
        self.base_rate / (1.0 + (1.0 - self.decay_rate) * k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_zero_is_base_rate() {
        let s = LrSchedule::new(0.12, 0.7, 2).unwrap();
        assert_eq!(s.lr_at(0), 0.12);
        assert_eq!(s.lr_at(1), 0.12);
    }

    #[test]
    fn hand_evaluated_decay() {
        let s = LrSchedule::new(0.1, 0.6, 1).unwrap();
        assert!((s.lr_at(1) - 0.1 / 1.4).abs() < 1e-15);
        assert!((s.lr_at(5) - 0.1 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn grid_values_accepted() {
        for base in [0.06, 0.08, 0.1, 0.12, 0.14, 0.16] {
            for decay in [0.6, 0.65, 0.7, 0.75] {
                for ipd in [1, 2] {
                    assert!(LrSchedule::new(base, decay, ipd).is_ok());
                }
            }
        }
    }

    #[test]
    fn invalid_settings_rejected() {
        assert!(LrSchedule::new(0.0, 0.6, 1).is_err());
        assert!(LrSchedule::new(0.1, 0.0, 1).is_err());
        assert!(LrSchedule::new(0.1, 1.5, 1).is_err());
        assert!(LrSchedule::new(0.1, 0.6, 0).is_err());
    }

    #[test]
    fn decay_rate_one_is_constant() {
        let s = LrSchedule::new(0.05, 1.0, 1).unwrap();
        assert_eq!(s.lr_at(1000), 0.05);
    }
}
