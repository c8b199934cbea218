use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use super::dataset::{Dataset, DatasetMeta, Source};
use super::response::{assemble, Assignment, ResponseModel};
use crate::error::{Error, Result};
use crate::tensor::Tensor2;

const DOC_TOPIC_CONCENTRATION: f64 = 0.5;
const TOPIC_WORD_SHAPE: f64 = 0.3;

fn dirichlet<R: Rng>(dim: usize, concentration: f64, rng: &mut R) -> Vec<f64> {
    let g = Gamma::new(concentration, 1.0).expect("valid gamma");
    let mut v: Vec<f64> = (0..dim).map(|_| g.sample(rng)).collect();
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        v.iter_mut().for_each(|x| *x = 1.0 / dim as f64);
    }
    v
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn draw_from_cdf<R: Rng>(cdf: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Centers and scales topic proportions to unit spread.
fn standardize(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = rows[0].len();
    let center = 1.0 / dim as f64;
    let count = (rows.len() * dim) as f64;
    let var = rows
        .iter()
        .flatten()
        .map(|v| (v - center) * (v - center))
        .sum::<f64>()
        / count;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    rows.iter()
        .map(|r| r.iter().map(|v| (v - center) / scale).collect())
        .collect()
}

/// Bag-of-words style covariates from a topic-mixture count model.
///
/// `n_confounders` sets the number of topics; per-document topic scores
/// confound both assignment (softmax over similarity to K topic-space
/// centroids) and outcomes.
pub fn gen_news_like(meta: &DatasetMeta) -> Result<Dataset> {
    if meta.source != Source::NewsLike {
        return Err(Error::Config(format!(
            "gen_news_like called with source {:?}",
            meta.source
        )));
    }
    meta.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(meta.seed);
    let (n, p, topics) = (meta.n, meta.p, meta.n_confounders);

    let topic_word: Vec<Vec<f64>> = (0..topics)
        .map(|_| cumulative(&dirichlet(p, TOPIC_WORD_SHAPE, &mut rng)))
        .collect();
    let mean_len = ((1.0 - meta.sparsity) * p as f64).max(1.0);
    let doc_len = Poisson::new(mean_len).map_err(|e| Error::Config(e.to_string()))?;

    let mut x = Tensor2::zeros(n, p);
    let mut mixes = Vec::with_capacity(n);
    for i in 0..n {
        let mix = dirichlet(topics, DOC_TOPIC_CONCENTRATION, &mut rng);
        let mix_cdf = cumulative(&mix);
        let len = (doc_len.sample(&mut rng) as usize).max(1);
        let row = x.row_mut(i);
        for _ in 0..len {
            let topic = draw_from_cdf(&mix_cdf, &mut rng);
            let word = draw_from_cdf(&topic_word[topic], &mut rng);
            row[word] += 1.0;
        }
        mixes.push(mix);
    }
    let z = standardize(&mixes);

    let centroids: Vec<Vec<f64>> = (0..meta.k)
        .map(|_| dirichlet(topics, DOC_TOPIC_CONCENTRATION, &mut rng))
        .collect();
    let scale = 1.0 / (topics as f64).sqrt();
    let centroid_rows = standardize(&centroids)
        .into_iter()
        .map(|r| r.into_iter().map(|v| v * scale).collect())
        .collect();
    let assignment = Assignment::draw(meta, topics, &mut rng).with_treatment_rows(centroid_rows);
    let response = ResponseModel::draw(meta.k, topics, meta.nonlinearity, &mut rng);
    Ok(assemble(meta, x, &z, &assignment, &response, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> DatasetMeta {
        DatasetMeta::news_like(500, 100, 4, 13)
    }

    #[test]
    fn covariates_are_nonnegative_counts() {
        let d = gen_news_like(&meta()).unwrap();
        assert!(d.x.data().iter().all(|&v| v >= 0.0 && v.fract() == 0.0));
    }

    #[test]
    fn default_sparsity_gives_mostly_zeros() {
        let d = gen_news_like(&meta()).unwrap();
        let zeros = d.x.data().iter().filter(|&&v| v == 0.0).count();
        let frac = zeros as f64 / d.x.data().len() as f64;
        // observed for this seed
        assert!((frac - 0.8353).abs() < 5e-4, "zero fraction {frac}");
        assert!(frac >= 0.5);
    }

    #[test]
    fn same_seed_same_dataset() {
        assert_eq!(gen_news_like(&meta()).unwrap(), gen_news_like(&meta()).unwrap());
    }

    #[test]
    fn factual_consistency_holds() {
        let d = gen_news_like(&meta().with_dosage_levels(3)).unwrap();
        d.validate().unwrap();
    }
}
