use crate::error::{shape_err, Result};
use crate::scalar::Scalar;

/// Dense `N × K × E` tensor of potential outcomes, indexed `[sample][treatment][dosage]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTensor<S> {
    n: usize,
    k: usize,
    e: usize,
    data: Vec<S>,
}

impl<S: Scalar> OutcomeTensor<S> {
    pub fn zeros(n: usize, k: usize, e: usize) -> Self {
        Self {
            n,
            k,
            e,
            data: vec![S::zero(); n * k * e],
        }
    }

    pub fn from_vec(n: usize, k: usize, e: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != n * k * e {
            return shape_err(format!(
                "outcome data length {} does not match {n}x{k}x{e}",
                data.len()
            ));
        }
        Ok(Self { n, k, e, data })
    }

    /// `N × K` tensor (E = 1) from per-sample rows.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * k);
        for r in rows {
            if r.len() != k {
                return shape_err("ragged outcome rows");
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            n: rows.len(),
            k,
            e: 1,
            data,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn e(&self) -> usize {
        self.e
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n, self.k, self.e)
    }

    #[inline]
    fn index(&self, n: usize, k: usize, e: usize) -> usize {
        debug_assert!(n < self.n && k < self.k && e < self.e);
        (n * self.k + k) * self.e + e
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize, e: usize) -> S {
        self.data[self.index(n, k, e)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, k: usize, e: usize, v: S) {
        let i = self.index(n, k, e);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Rows for the listed samples, in order.
    pub fn select_samples(&self, idx: &[usize]) -> Self {
        let stride = self.k * self.e;
        let mut data = Vec::with_capacity(idx.len() * stride);
        for &i in idx {
            data.extend_from_slice(&self.data[i * stride..(i + 1) * stride]);
        }
        Self {
            n: idx.len(),
            k: self.k,
            e: self.e,
            data,
        }
    }

    /// The `N × K` slice at dosage level `e`.
    pub fn dosage_slice(&self, e: usize) -> Self {
        let mut out = Self::zeros(self.n, self.k, 1);
        for n in 0..self.n {
            for k in 0..self.k {
                out.set(n, k, 0, self.get(n, k, e));
            }
        }
        out
    }

    /// Merges treatment and dosage into `K·E` arms (E becomes 1).
    pub fn flatten_arms(&self) -> Self {
        Self {
            n: self.n,
            k: self.k * self.e,
            e: 1,
            data: self.data.clone(),
        }
    }

    pub fn cast<T: Scalar>(&self) -> OutcomeTensor<T> {
        OutcomeTensor {
            n: self.n,
            k: self.k,
            e: self.e,
            data: self.data.iter().map(|&v| T::lit(v.as_f64())).collect(),
        }
    }
}
