//! Vector primitives shared by the coders and the dictionary update.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on bisection steps. With `eps_lambda >= 1e-12` the width test
/// fires well before this whenever the lower bound has moved off zero.
pub const MAX_SEARCH_ITERATIONS: usize = 64;

/// Desired number of non-zeros and the tolerances of the lambda search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityTarget {
    pub beta: usize,
    pub eps_beta: usize,
    pub eps_lambda: f64,
}

impl SparsityTarget {
    pub const DEFAULT_EPS_BETA: usize = 0;
    pub const DEFAULT_EPS_LAMBDA: f64 = 1e-3;

    pub fn new(beta: usize) -> Self {
        SparsityTarget {
            beta,
            eps_beta: Self::DEFAULT_EPS_BETA,
            eps_lambda: Self::DEFAULT_EPS_LAMBDA,
        }
    }

    pub fn with_tolerances(beta: usize, eps_beta: usize, eps_lambda: f64) -> Self {
        SparsityTarget {
            beta,
            eps_beta,
            eps_lambda,
        }
    }

    pub(crate) fn count_ok(&self, nnz: usize) -> bool {
        nnz.abs_diff(self.beta) <= self.eps_beta
    }
}

/// Why a lambda search stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchStop {
    /// Achieved count is within `eps_beta` of the target.
    Count,
    /// Relative interval width fell below `eps_lambda`.
    Width,
    /// Input was all zeros; lambda = 0.
    ZeroInput,
    /// [`MAX_SEARCH_ITERATIONS`] reached (target unreachable, e.g. zeros in the input).
    IterationCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearch {
    pub lambda: f64,
    /// Non-zeros surviving `prox_l1(u, lambda)`.
    pub nnz: usize,
    pub iterations: usize,
    pub stop: SearchStop,
}

pub fn ensure_finite(u: ArrayView1<f64>, what: &str) -> Result<()> {
    if let Some(i) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "{what}: non-finite value at index {i}"
        )));
    }
    Ok(())
}

pub fn l2_norm(u: ArrayView1<f64>) -> f64 {
    u.dot(&u).sqrt()
}

pub fn l1_norm(u: ArrayView1<f64>) -> f64 {
    u.iter().map(|v| v.abs()).sum()
}

pub fn nnz(u: ArrayView1<f64>) -> usize {
    u.iter().filter(|v| **v != 0.0).count()
}

#[inline]
pub fn soft_threshold(v: f64, lambda: f64) -> f64 {
    let mag = v.abs() - lambda;
    if mag > 0.0 {
        mag.copysign(v)
    } else {
        0.0
    }
}

/// Proximal operator of `lambda * ||.||_1`: `sign(u) * max(|u| - lambda, 0)`.
pub fn prox_l1(u: ArrayView1<f64>, lambda: f64) -> Result<Array1<f64>> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidInput(format!(
            "prox_l1: lambda must be finite and >= 0, got {lambda}"
        )));
    }
    ensure_finite(u, "prox_l1")?;
    Ok(u.mapv(|v| soft_threshold(v, lambda)))
}

fn count_above(abs: &[f64], lambda: f64) -> usize {
    abs.iter().filter(|a| **a - lambda > 0.0).count()
}

/// Bisection on the soft-threshold level so that `prox_l1(u, lambda)` keeps
/// about `target.beta` non-zeros.
///
/// The interval starts at `[0, max|u|]`. Each step probes the midpoint and
/// returns it once the count is within `eps_beta` or the relative width
/// `(hi - lo) / hi` drops below `eps_lambda`.
pub fn binary_search_lambda(u: ArrayView1<f64>, target: &SparsityTarget) -> Result<LambdaSearch> {
    if target.beta > u.len() {
        return Err(Error::InvalidTarget {
            beta: target.beta,
            len: u.len(),
        });
    }
    ensure_finite(u, "binary_search_lambda")?;
    let abs: Vec<f64> = u.iter().map(|v| v.abs()).collect();
    let mut hi = abs.iter().copied().fold(0.0_f64, f64::max);
    let mut lo = 0.0_f64;
    if hi == 0.0 {
        return Ok(LambdaSearch {
            lambda: 0.0,
            nnz: 0,
            iterations: 0,
            stop: SearchStop::ZeroInput,
        });
    }

    let mut mid = 0.5 * (lo + hi);
    let mut count = count_above(&abs, mid);
    for iteration in 1..=MAX_SEARCH_ITERATIONS {
        mid = 0.5 * (lo + hi);
        count = count_above(&abs, mid);
        let narrow = (hi - lo).abs() / hi < target.eps_lambda;
        if narrow || target.count_ok(count) {
            return Ok(LambdaSearch {
                lambda: mid,
                nnz: count,
                iterations: iteration,
                stop: if target.count_ok(count) {
                    SearchStop::Count
                } else {
                    SearchStop::Width
                },
            });
        }
        match count.cmp(&target.beta) {
            std::cmp::Ordering::Greater => lo = mid,
            std::cmp::Ordering::Less => hi = mid,
            std::cmp::Ordering::Equal => {
                return Err(Error::Internal(format!(
                    "lambda search reached an exact count {count} that failed the count test \
                     (beta = {}, eps_beta = {})",
                    target.beta, target.eps_beta
                )))
            }
        }
    }
    Ok(LambdaSearch {
        lambda: mid,
        nnz: count,
        iterations: MAX_SEARCH_ITERATIONS,
        stop: SearchStop::IterationCap,
    })
}

/// Group (l1/l2) shrinkage: `v * max(1 - lambda_g / ||v||_2, 0)`.
pub fn group_shrink(v: ArrayView1<f64>, lambda_g: f64) -> Result<Array1<f64>> {
    if !(0.0..=1.0).contains(&lambda_g) {
        return Err(Error::InvalidInput(format!(
            "group_shrink: lambda_g must lie in [0, 1], got {lambda_g}"
        )));
    }
    ensure_finite(v, "group_shrink")?;
    Ok(group_shrink_unchecked(v, lambda_g))
}

pub(crate) fn group_shrink_unchecked(v: ArrayView1<f64>, lambda_g: f64) -> Array1<f64> {
    if lambda_g == 0.0 {
        return v.to_owned();
    }
    let norm = l2_norm(v);
    if norm <= lambda_g {
        return Array1::zeros(v.len());
    }
    let factor = 1.0 - lambda_g / norm;
    v.mapv(|x| x * factor)
}

/// Projection onto the unit l2 ball: `w / max(1, ||w||_2)`.
pub fn normalize_column(w: ArrayView1<f64>) -> Array1<f64> {
    let norm = l2_norm(w);
    if norm > 1.0 {
        w.mapv(|x| x / norm)
    } else {
        w.to_owned()
    }
}
