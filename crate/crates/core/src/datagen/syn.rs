use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dataset::{Dataset, DatasetMeta, Source};
use super::response::{assemble, Assignment, ResponseModel};
use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Gaussian covariates; the first `n_confounders` columns drive both the
/// treatment softmax and the outcome surfaces, the rest are noise.
pub fn gen_syn(meta: &DatasetMeta) -> Result<Dataset> {
    if meta.source != Source::Syn {
        return Err(Error::Config(format!(
            "gen_syn called with source {:?}",
            meta.source
        )));
    }
    meta.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
    let (n, p, c) = (meta.n, meta.p, meta.n_confounders);

    let data: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x = Tensor2::from_vec(n, p, data)?;
    let z: Vec<Vec<f64>> = (0..n).map(|i| x.row(i)[..c].to_vec()).collect();

    let assignment = Assignment::draw(meta, c, &mut rng);
    let response = ResponseModel::draw(meta.k, c, meta.nonlinearity, &mut rng);
    let d = assemble(meta, x, &z, &assignment, &response, &mut rng);
    debug_assert!(d.validate().is_ok());
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factual_outcomes_match_table() {
        let meta = DatasetMeta::syn(200, 6, 3, 4).with_dosage_levels(3);
        let d = gen_syn(&meta).unwrap();
        d.validate().unwrap();
        let yf = d.y_full.as_ref().unwrap();
        for i in 0..d.n() {
            assert_eq!(yf.get(i, d.t[i], d.e[i]).to_bits(), d.y[i].to_bits());
        }
    }

    #[test]
    fn deterministic_without_noise() {
        let mut meta = DatasetMeta::syn(100, 5, 4, 9);
        meta.sigma = 0.0;
        assert_eq!(gen_syn(&meta).unwrap(), gen_syn(&meta).unwrap());
    }

    #[test]
    fn no_confounding_gives_uniform_assignment() {
        let mut meta = DatasetMeta::syn(4000, 6, 4, 2);
        meta.kappa = 0.0;
        let d = gen_syn(&meta).unwrap();
        let mut counts = [0usize; 4];
        for &t in &d.t {
            counts[t] += 1;
        }
        let expect = 1000.0;
        let sd = (4000.0f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - expect).abs() <= 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn unconfounded_dosage_is_roughly_uniform() {
        let meta = DatasetMeta::syn(3000, 6, 2, 8).with_dosage_levels(3);
        let d = gen_syn(&meta).unwrap();
        let mut counts = [0usize; 3];
        for &e in &d.e {
            counts[e] += 1;
        }
        let sd = (3000.0f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - 1000.0).abs() <= 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn wrong_source_rejected() {
        let meta = DatasetMeta::news_like(10, 5, 2, 0);
        assert!(matches!(gen_syn(&meta), Err(Error::Config(_))));
    }

    #[test]
    fn zero_treatments_rejected() {
        let meta = DatasetMeta::syn(10, 5, 0, 0);
        assert!(matches!(gen_syn(&meta), Err(Error::Config(_))));
    }
}
