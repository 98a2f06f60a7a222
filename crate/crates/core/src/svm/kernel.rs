use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// `exp(-gamma * ||x - y||^2)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    Ok(rbf(x, y, gamma))
}

#[inline]
pub(crate) fn rbf(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let mut d2 = 0.0;
    for (a, b) in x.iter().zip(y) {
        let d = a - b;
        d2 += d * d;
    }
    (-gamma * d2).exp()
}

enum Store {
    Dense(Vec<f64>),
    Rows {
        slots: HashMap<usize, (u64, Vec<f64>)>,
        capacity: usize,
        tick: u64,
    },
}

/// Kernel rows for the SMO solver: the whole matrix when the sample count is
/// at most `dense_limit`, otherwise a least-recently-used row cache.
pub(crate) struct KernelCache<'a> {
    data: &'a [&'a [f64]],
    gamma: f64,
    store: Store,
    evaluations: u64,
}

impl<'a> KernelCache<'a> {
    pub fn new(data: &'a [&'a [f64]], gamma: f64, dense_limit: usize, cache_rows: usize) -> Self {
        let n = data.len();
        let store = if n <= dense_limit {
            let mut m = vec![0.0; n * n];
            m.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = rbf(data[i], data[j], gamma);
                }
            });
            Store::Dense(m)
        } else {
            Store::Rows {
                slots: HashMap::new(),
                capacity: cache_rows.max(2),
                tick: 0,
            }
        };
        Self {
            data,
            gamma,
            store,
            evaluations: 0,
        }
    }

    #[cfg(test)]
    pub fn is_dense(&self) -> bool {
        matches!(self.store, Store::Dense(_))
    }

    /// Makes row `i` available to [`KernelCache::row`]. With a row cache, the
    /// two most recently loaded rows are never evicted by this call.
    pub fn load(&mut self, i: usize) {
        let n = self.data.len();
        if let Store::Rows {
            slots,
            capacity,
            tick,
        } = &mut self.store
        {
            *tick += 1;
            if let Some(slot) = slots.get_mut(&i) {
                slot.0 = *tick;
                return;
            }
            if slots.len() >= *capacity {
                let oldest = slots
                    .iter()
                    .min_by_key(|(_, (t, _))| *t)
                    .map(|(k, _)| *k)
                    .expect("cache is non-empty");
                slots.remove(&oldest);
            }
            let xi = self.data[i];
            let row: Vec<f64> = (0..n).map(|j| rbf(xi, self.data[j], self.gamma)).collect();
            self.evaluations += n as u64;
            slots.insert(i, (*tick, row));
        }
    }

    /// Row `i`; must have been loaded.
    pub fn row(&self, i: usize) -> &[f64] {
        match &self.store {
            Store::Dense(m) => {
                let n = self.data.len();
                &m[i * n..(i + 1) * n]
            }
            Store::Rows { slots, .. } => &slots.get(&i).expect("row loaded before access").1,
        }
    }

    pub fn diag(&self, i: usize) -> f64 {
        match &self.store {
            Store::Dense(m) => m[i * self.data.len() + i],
            Store::Rows { .. } => rbf(self.data[i], self.data[i], self.gamma),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kernel_examples() {
        assert_eq!(rbf_kernel(&[0.3, -1.0], &[0.3, -1.0], 0.7).unwrap(), 1.0);
        let v = rbf_kernel(&[0.0], &[1.0], 1.0).unwrap();
        assert!((v - 0.367879).abs() < 1e-6);
        assert!(matches!(
            rbf_kernel(&[0.0], &[1.0, 2.0], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(rbf_kernel(&[0.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn row_cache_matches_dense() {
        let pts: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 * 0.3, (i * i) as f64 * 0.01]).collect();
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let dense = KernelCache::new(&refs, 0.5, 100, 0);
        let mut lru = KernelCache::new(&refs, 0.5, 4, 3);
        assert!(dense.is_dense() && !lru.is_dense());
        for i in [0, 5, 3, 0, 11, 7, 5, 2] {
            lru.load(i);
            assert_eq!(lru.row(i), dense.row(i));
            assert_eq!(lru.diag(i), dense.diag(i));
        }
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric_and_bounded(
            x in proptest::collection::vec(-3.0f64..3.0, 5),
            y in proptest::collection::vec(-3.0f64..3.0, 5),
            gamma in 0.001f64..2.0,
        ) {
            let a = rbf_kernel(&x, &y, gamma).unwrap();
            let b = rbf_kernel(&y, &x, gamma).unwrap();
            prop_assert!((a - b).abs() <= 1e-15);
            prop_assert!(a > 0.0 && a <= 1.0);
        }

        #[test]
        fn kernel_matrix_is_positive_semidefinite(
            pts in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 3), 20),
            gamma in 0.01f64..5.0,
        ) {
            // K + 1e-8 I admits a Cholesky factor iff its smallest eigenvalue exceeds -1e-8.
            let n = pts.len();
            let mut k = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    k[i * n + j] = rbf_kernel(&pts[i], &pts[j], gamma).unwrap() + if i == j { 1e-8 } else { 0.0 };
                }
            }
            let mut l = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let s: f64 = k[i * n + j] - (0..j).map(|m| l[i * n + m] * l[j * n + m]).sum::<f64>();
                    if i == j {
                        prop_assert!(s > 0.0, "pivot {} = {}", i, s);
                        l[i * n + i] = s.sqrt();
                    } else {
                        l[i * n + j] = s / l[j * n + j];
                    }
                }
            }
        }
    }
}
