//! Binary soft-margin SVM trained with sequential minimal optimization.
//!
//! The dual `min 1/2 a'Qa - e'a  s.t.  y'a = 0, 0 <= a_t <= C_t` with
//! `Q_ts = y_t y_s K(x_t, x_s)` is solved by repeatedly optimizing the
//! maximal-violating pair analytically. The solver stops once
//! `max_{I_up} -y_t G_t - min_{I_low} -y_t G_t < tol`, which places every
//! training point within `tol` of its KKT condition for the returned bias.

use log::warn;
use serde::{Deserialize, Serialize};

use super::kernel::{rbf, KernelCache};
use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfParams {
    pub c: f64,
    pub gamma: f64,
}

impl RbfParams {
    pub fn new(c: f64, gamma: f64) -> Result<Self> {
        let p = Self { c, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidParameter(format!("C must be positive, got {}", self.c)));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoOptions {
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    /// Cap on pair updates.
    pub max_iter: usize,
    /// Cache the whole kernel matrix up to this many samples.
    pub dense_limit: usize,
    /// Rows kept by the LRU cache above `dense_limit`.
    pub cache_rows: usize,
    /// Scale C per class by `n / (2 n_class)`.
    pub class_weight: bool,
}

impl Default for SmoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 1_000_000,
            dense_limit: 8000,
            cache_rows: 2000,
            class_weight: false,
        }
    }
}

/// A trained two-class machine. Labels are `+1` / `-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_t * y_t` for each support vector.
    pub dual_coef: Vec<f64>,
    /// Position of each support vector in the training set.
    pub support_indices: Vec<usize>,
    pub bias: f64,
    pub params: RbfParams,
    /// Per-class upper bounds `(C_+, C_-)` used in training.
    pub bounds: (f64, f64),
    pub iterations: usize,
    pub converged: bool,
}

impl BinarySvm {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    /// `d(x) = sum_t alpha_t y_t K(x_t, x) + b`.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if !self.support_vectors.is_empty() && x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let mut acc = 0.0;
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coef) {
            acc += coef * rbf(sv, x, self.params.gamma);
        }
        Ok(acc + self.bias)
    }

    /// `(+1 | -1, d(x))`; `d(x) = 0` maps to `+1`.
    pub fn predict(&self, x: &[f64]) -> Result<(i8, f64)> {
        let d = self.decision_value(x)?;
        Ok((if d >= 0.0 { 1 } else { -1 }, d))
    }

    /// Multipliers for every training point (zero off the support set).
    pub fn alphas(&self, n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n];
        for (&idx, coef) in self.support_indices.iter().zip(&self.dual_coef) {
            a[idx] = coef.abs();
        }
        a
    }

    /// Indices of training points whose KKT condition is violated by more
    /// than `tol`:
    /// `a = 0 => y d >= 1 - tol`, `0 < a < C => |y d - 1| <= tol`,
    /// `a = C => y d <= 1 + tol`.
    pub fn kkt_violations(&self, x: &[&[f64]], y: &[f64], tol: f64) -> Result<Vec<usize>> {
        let alphas = self.alphas(x.len());
        let mut bad = Vec::new();
        for (t, (&xt, &yt)) in x.iter().zip(y).enumerate() {
            let margin = yt * self.decision_value(xt)?;
            let upper = if yt > 0.0 { self.bounds.0 } else { self.bounds.1 };
            let a = alphas[t];
            let ok = if a <= 0.0 {
                margin >= 1.0 - tol
            } else if a >= upper {
                margin <= 1.0 + tol
            } else {
                (margin - 1.0).abs() <= tol
            };
            if !ok {
                bad.push(t);
            }
        }
        Ok(bad)
    }

    /// Dual objective `sum a - 1/2 a'Qa` in maximization form.
    pub fn dual_objective(&self) -> f64 {
        let gamma = self.params.gamma;
        let mut quad = 0.0;
        for (si, ci) in self.support_vectors.iter().zip(&self.dual_coef) {
            for (sj, cj) in self.support_vectors.iter().zip(&self.dual_coef) {
                quad += ci * cj * rbf(si, sj, gamma);
            }
        }
        self.dual_coef.iter().map(|c| c.abs()).sum::<f64>() - 0.5 * quad
    }
}

/// Trains a binary machine on `x` with labels `y` in `{+1, -1}`.
pub fn train_binary(x: &[&[f64]], y: &[f64], params: RbfParams, opts: &SmoOptions) -> Result<BinarySvm> {
    params.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {}", opts.tol)));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if let Some(bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidParameter(format!("binary labels must be +1 or -1, got {bad}")));
    }
    let n_pos = y.iter().filter(|&&v| v > 0.0).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassData);
    }
    let dim = x[0].len();
    if let Some(row) = x.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: row.len(),
        });
    }

    let n = x.len();
    let (c_pos, c_neg) = if opts.class_weight {
        let n = n as f64;
        (
            params.c * n / (2.0 * n_pos as f64),
            params.c * n / (2.0 * n_neg as f64),
        )
    } else {
        (params.c, params.c)
    };
    let upper: Vec<f64> = y.iter().map(|&v| if v > 0.0 { c_pos } else { c_neg }).collect();

    let mut cache = KernelCache::new(x, params.gamma, opts.dense_limit, opts.cache_rows);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let Some((i, j)) = select_pair(&alpha, &grad, y, &upper, opts.tol) else {
            converged = true;
            break;
        };
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        cache.load(i);
        cache.load(j);
        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let k_ij = cache.row(i)[j];
        let (q_ii, q_jj) = (cache.diag(i), cache.diag(j));

        if y[i] != y[j] {
            let mut quad = q_ii + q_jj - 2.0 * k_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let mut quad = q_ii + q_jj - 2.0 * k_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let d_i = (alpha[i] - old_i) * y[i];
        let d_j = (alpha[j] - old_j) * y[j];
        let (row_i, row_j) = (cache.row(i), cache.row(j));
        for t in 0..n {
            grad[t] += y[t] * (row_i[t] * d_i + row_j[t] * d_j);
        }
    }

    if !converged {
        warn!(
            "SMO stopped after {iterations} updates without reaching tol {}",
            opts.tol
        );
    }

    let bias = compute_bias(&alpha, &grad, y, &upper);
    let mut support_vectors = Vec::new();
    let mut dual_coef = Vec::new();
    let mut support_indices = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.push(x[t].to_vec());
            dual_coef.push(alpha[t] * y[t]);
            support_indices.push(t);
        }
    }
    Ok(BinarySvm {
        support_vectors,
        dual_coef,
        support_indices,
        bias,
        params,
        bounds: (c_pos, c_neg),
        iterations,
        converged,
    })
}

fn in_up(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Maximal violating pair, or `None` once the violation is below `tol`.
fn select_pair(alpha: &[f64], grad: &[f64], y: &[f64], upper: &[f64], tol: f64) -> Option<(usize, usize)> {
    let mut g_max = f64::NEG_INFINITY;
    let mut g_min = f64::INFINITY;
    let (mut i, mut j) = (usize::MAX, usize::MAX);
    for t in 0..alpha.len() {
        let v = -y[t] * grad[t];
        if in_up(alpha[t], y[t], upper[t]) && v > g_max {
            g_max = v;
            i = t;
        }
        if in_low(alpha[t], y[t], upper[t]) && v < g_min {
            g_min = v;
            j = t;
        }
    }
    if i == usize::MAX || j == usize::MAX || g_max - g_min < tol {
        None
    } else {
        Some((i, j))
    }
}

/// Bias from the free multipliers, or the midpoint of the feasible interval
/// when every multiplier sits at a bound.
fn compute_bias(alpha: &[f64], grad: &[f64], y: &[f64], upper: &[f64]) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= upper[t] {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    -rho
}
