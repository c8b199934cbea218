use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor2;

/// Scaled differences of treatment-group mean representations, one `L`-dim
/// column per ordered pair `(i, j)`, `i ≠ j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanDiffMatrix<S> {
    k: usize,
    l: usize,
    /// Row-major `K(K−1) × L`, pairs in [`MeanDiffMatrix::pairs`] order.
    columns: Vec<S>,
    absent: Vec<usize>,
}

impl<S: Scalar> MeanDiffMatrix<S> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn num_columns(&self) -> usize {
        self.k * self.k.saturating_sub(1)
    }

    /// Ordered pairs `(i, j)` in column order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let k = self.k;
        (0..k).flat_map(move |i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
    }

    fn pair_index(&self, i: usize, j: usize) -> usize {
        i * (self.k - 1) + if j < i { j } else { j - 1 }
    }

    pub fn column(&self, i: usize, j: usize) -> &[S] {
        assert!(i != j && i < self.k && j < self.k, "invalid pair ({i}, {j})");
        let p = self.pair_index(i, j);
        &self.columns[p * self.l..(p + 1) * self.l]
    }

    /// Treatments with no sample in the batch; their pairs are zero.
    pub fn absent_treatments(&self) -> &[usize] {
        &self.absent
    }

    pub fn warnings(&self) -> Vec<String> {
        self.absent
            .iter()
            .map(|t| format!("treatment {t} absent from batch; its pair columns are zero"))
            .collect()
    }
}

struct GroupMeans<S> {
    means: Tensor2<S>,
    counts: Vec<usize>,
}

fn group_means<S: Scalar>(rep: &Tensor2<S>, t: &[usize], k: usize) -> Result<GroupMeans<S>> {
    if t.len() != rep.rows() {
        return shape_err(format!("{} treatments for {} representation rows", t.len(), rep.rows()));
    }
    if k == 0 {
        return Err(Error::Domain("K must be >= 1".into()));
    }
    let mut means = Tensor2::zeros(k, rep.cols());
    let mut counts = vec![0usize; k];
    for (n, &ti) in t.iter().enumerate() {
        if ti >= k {
            return Err(Error::Domain(format!("treatment {ti} outside 0..{k}")));
        }
        counts[ti] += 1;
        for (m, &v) in means.row_mut(ti).iter_mut().zip(rep.row(n)) {
            *m += v;
        }
    }
    for (i, &c) in counts.iter().enumerate() {
        if c > 0 {
            let cs = S::from_usize_lossy(c);
            for m in means.row_mut(i) {
                *m /= cs;
            }
        }
    }
    Ok(GroupMeans { means, counts })
}

fn pair_scale<S: Scalar>(k: usize, l: usize) -> S {
    S::one() / S::from_usize_lossy((l * k * (k - 1)).max(1))
}

/// Builds the mean-difference matrix of a batch.
pub fn mean_diff_matrix<S: Scalar>(rep: &Tensor2<S>, t: &[usize], k: usize) -> Result<MeanDiffMatrix<S>> {
    let g = group_means(rep, t, k)?;
    let l = rep.cols();
    let scale = pair_scale::<S>(k, l);
    let mut m = MeanDiffMatrix {
        k,
        l,
        columns: Vec::with_capacity(k * k.saturating_sub(1) * l),
        absent: (0..k).filter(|&i| g.counts[i] == 0).collect(),
    };
    for i in 0..k {
        for j in (0..k).filter(|&j| j != i) {
            if g.counts[i] == 0 || g.counts[j] == 0 {
                m.columns.extend(std::iter::repeat_n(S::zero(), l));
            } else {
                let (a, b) = (g.means.row(i), g.means.row(j));
                m.columns.extend(a.iter().zip(b).map(|(&x, &y)| scale * (x - y)));
            }
        }
    }
    Ok(m)
}

/// Sum of the Euclidean norms of the pair columns.
pub fn loss_21<S: Scalar>(m: &MeanDiffMatrix<S>) -> S {
    if m.l == 0 {
        return S::zero();
    }
    m.columns
        .chunks(m.l)
        .map(|c| c.iter().map(|&v| v * v).sum::<S>().sqrt())
        .sum()
}

/// Mixed-norm loss of a batch and its gradient w.r.t. the representation.
/// Zero columns contribute a zero subgradient.
pub fn loss_21_grad<S: Scalar>(rep: &Tensor2<S>, t: &[usize], k: usize) -> Result<(S, Tensor2<S>)> {
    let m = mean_diff_matrix(rep, t, k)?;
    let l = rep.cols();
    let scale = pair_scale::<S>(k, l);
    let mut d_means = Tensor2::<S>::zeros(k, l);
    for (i, j) in m.pairs().collect::<Vec<_>>() {
        let col = m.column(i, j);
        let norm = col.iter().map(|&v| v * v).sum::<S>().sqrt();
        if norm > S::zero() {
            for c in 0..l {
                let g = scale * col[c] / norm;
                d_means.row_mut(i)[c] += g;
                d_means.row_mut(j)[c] -= g;
            }
        }
    }
    let mut counts = vec![0usize; k];
    for &ti in t {
        counts[ti] += 1;
    }
    let mut d_rep = Tensor2::zeros(rep.rows(), l);
    for (n, &ti) in t.iter().enumerate() {
        let cs = S::from_usize_lossy(counts[ti]);
        for (d, &g) in d_rep.row_mut(n).iter_mut().zip(d_means.row(ti)) {
            *d = g / cs;
        }
    }
    Ok((loss_21(&m), d_rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor2::from_vec(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
    }

    #[test]
    fn hand_example_two_treatments() {
        // group means (3,4) and (0,0)
        let rep = Tensor2::from_rows(&[vec![2.0, 4.0], vec![4.0, 4.0], vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap();
        let m = mean_diff_matrix(&rep, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(m.num_columns(), 2);
        assert_eq!(m.column(0, 1), &[0.75, 1.0]);
        assert_eq!(m.column(1, 0), &[-0.75, -1.0]);
        assert_eq!(loss_21(&m), 2.5);
    }

    #[test]
    fn equal_means_give_zero() {
        let rep = Tensor2::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let m = mean_diff_matrix(&rep, &[0, 1, 2], 3).unwrap();
        assert_eq!(m.num_columns(), 6);
        assert_eq!(loss_21(&m), 0.0);
    }

    #[test]
    fn absent_treatment_yields_zero_columns_and_warning() {
        let rep = random(4, 3, 1);
        let m = mean_diff_matrix(&rep, &[0, 0, 2, 2], 3).unwrap();
        assert_eq!(m.absent_treatments(), &[1]);
        assert_eq!(m.warnings().len(), 1);
        assert!(m.column(1, 0).iter().all(|&v| v == 0.0));
        assert!(m.column(2, 1).iter().all(|&v| v == 0.0));
        assert!(m.column(0, 2).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn out_of_range_treatment_rejected() {
        assert!(mean_diff_matrix(&random(2, 2, 2), &[0, 3], 3).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let rep = random(9, 3, 3);
        let t = [0, 1, 2, 0, 1, 2, 0, 0, 1];
        let (_, g) = loss_21_grad(&rep, &t, 3).unwrap();
        let f = |r: &Tensor2<f64>| loss_21(&mean_diff_matrix(r, &t, 3).unwrap());
        let h = 1e-6;
        for i in 0..rep.data().len() {
            let mut a = rep.clone();
            a.data_mut()[i] += h;
            let mut b = rep.clone();
            b.data_mut()[i] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            assert!((fd - g.data()[i]).abs() < 1e-8, "{i}: {fd} vs {}", g.data()[i]);
        }
    }

    proptest! {
        #[test]
        fn antisymmetric(seed in 0u64..1000, k in 2usize..6) {
            let n = 3 * k;
            let rep = random(n, 3, seed);
            let t: Vec<usize> = (0..n).map(|i| i % k).collect();
            let m = mean_diff_matrix(&rep, &t, k).unwrap();
            prop_assert_eq!(m.num_columns(), k * (k - 1));
            for (i, j) in m.pairs().collect::<Vec<_>>() {
                let a = m.column(i, j);
                let b = m.column(j, i);
                for (x, y) in a.iter().zip(b) {
                    prop_assert_eq!(*x, -*y);
                }
            }
        }

        #[test]
        fn invariant_under_relabeling(seed in 0u64..1000, shift in 1usize..4) {
            let k = 4;
            let rep = random(12, 2, seed);
            let t: Vec<usize> = (0..12).map(|i| (i * 5) % k).collect();
            let relabeled: Vec<usize> = t.iter().map(|&x| (x + shift) % k).collect();
            let a = loss_21(&mean_diff_matrix(&rep, &t, k).unwrap());
            let b = loss_21(&mean_diff_matrix(&rep, &relabeled, k).unwrap());
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
