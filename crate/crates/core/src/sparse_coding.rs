//! Per-sample LASSO coding against a fixed dictionary.
//!
//! The solver is cyclic coordinate descent on the covariance form of the
//! problem: the Gram matrix `D^T D` is built once per dictionary snapshot and
//! each coordinate update only touches one of its columns.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::numerics::{
    ensure_finite, l2_norm, soft_threshold, SparsityTarget, MAX_SEARCH_ITERATIONS,
};

/// A sparse code for one sample and the l1 weight it was solved with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Code {
    pub alpha: Array1<f64>,
    pub lambda_c: f64,
}

impl Code {
    pub fn zeros(k: usize, lambda_c: f64) -> Self {
        Code {
            alpha: Array1::zeros(k),
            lambda_c,
        }
    }

    pub fn nnz(&self) -> usize {
        self.alpha.iter().filter(|v| **v != 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoSettings {
    /// Converged once no coefficient moves more than this over a sweep.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoSettings {
    fn default() -> Self {
        LassoSettings {
            tol: 1e-8,
            max_sweeps: 10_000,
        }
    }
}

/// `0.5 * ||x - D alpha||^2 + lambda * ||alpha||_1`.
pub fn lasso_objective(
    d: ArrayView2<f64>,
    x: ArrayView1<f64>,
    alpha: ArrayView1<f64>,
    lambda: f64,
) -> f64 {
    let r = &x - &d.dot(&alpha);
    0.5 * r.dot(&r) + lambda * alpha.iter().map(|a| a.abs()).sum::<f64>()
}

/// Coder bound to one dictionary snapshot.
///
/// With `normalize` set, every non-zero column is rescaled to unit norm for
/// the solve and the coefficients are mapped back, so `D * alpha` is the
/// reconstruction either way.
#[derive(Debug, Clone)]
pub struct Encoder<'a> {
    dict: ArrayView2<'a, f64>,
    /// Per-column factor applied to the stored column before solving.
    scale: Option<Array1<f64>>,
    gram: Array2<f64>,
    settings: LassoSettings,
}

impl<'a> Encoder<'a> {
    pub fn new(dict: ArrayView2<'a, f64>, normalize: bool) -> Self {
        Self::with_settings(dict, normalize, LassoSettings::default())
    }

    pub fn with_settings(
        dict: ArrayView2<'a, f64>,
        normalize: bool,
        settings: LassoSettings,
    ) -> Self {
        let mut gram = dict.t().dot(&dict);
        let scale = normalize.then(|| {
            let s: Array1<f64> = dict
                .axis_iter(Axis(1))
                .map(|c| {
                    let n = l2_norm(c);
                    if n > 0.0 {
                        1.0 / n
                    } else {
                        0.0
                    }
                })
                .collect();
            for ((i, j), g) in gram.indexed_iter_mut() {
                *g *= s[i] * s[j];
            }
            s
        });
        Encoder {
            dict,
            scale,
            gram,
            settings,
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.dict.ncols()
    }

    pub fn dim(&self) -> usize {
        self.dict.nrows()
    }

    fn check_sample(&self, x: ArrayView1<f64>) -> Result<()> {
        check_len(self.dim(), x.len(), "sample length vs dictionary rows")?;
        ensure_finite(x, "sample")
    }

    /// `D^T x` in the (possibly rescaled) solve space.
    fn correlations(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut c = self.dict.t().dot(&x);
        if let Some(s) = &self.scale {
            c *= s;
        }
        c
    }

    fn to_stored(&self, mut alpha: Array1<f64>) -> Array1<f64> {
        if let Some(s) = &self.scale {
            alpha *= s;
        }
        alpha
    }

    /// Coordinate descent from a warm start; returns the sweeps used.
    fn descend(&self, corr: &Array1<f64>, lambda: f64, alpha: &mut Array1<f64>) -> usize {
        let k = alpha.len();
        let mut grad = corr - &self.gram.dot(&*alpha);
        for sweep in 1..=self.settings.max_sweeps {
            let mut max_delta = 0.0_f64;
            for j in 0..k {
                let gjj = self.gram[[j, j]];
                if gjj <= 0.0 {
                    continue;
                }
                let old = alpha[j];
                let updated = soft_threshold(grad[j] + gjj * old, lambda) / gjj;
                let delta = updated - old;
                if delta != 0.0 {
                    alpha[j] = updated;
                    grad.scaled_add(-delta, &self.gram.column(j));
                    max_delta = max_delta.max(delta.abs());
                }
            }
            if max_delta < self.settings.tol {
                return sweep;
            }
        }
        self.settings.max_sweeps
    }

    /// Solve `min 0.5 ||x - D a||^2 + lambda_c ||a||_1`.
    pub fn lasso(&self, x: ArrayView1<f64>, lambda_c: f64) -> Result<Code> {
        if !lambda_c.is_finite() || lambda_c < 0.0 {
            return Err(Error::InvalidInput(format!(
                "lasso: lambda_c must be finite and >= 0, got {lambda_c}"
            )));
        }
        self.check_sample(x)?;
        let corr = self.correlations(x);
        let mut alpha = Array1::zeros(self.n_atoms());
        self.descend(&corr, lambda_c, &mut alpha);
        Ok(Code {
            alpha: self.to_stored(alpha),
            lambda_c,
        })
    }

    /// Code with about `target.beta` non-zeros, found by bisecting `lambda_c`
    /// over `[0, ||D^T x||_inf]` and solving a warm-started LASSO per probe.
    ///
    /// Returns the probe whose count is closest to the target (the latest one
    /// on ties). When the target allows every non-zero column to be active,
    /// the penalty is not binding and the unpenalized solve is returned.
    pub fn encode_target_nnz(&self, x: ArrayView1<f64>, target: &SparsityTarget) -> Result<Code> {
        let k = self.n_atoms();
        if target.beta > k {
            return Err(Error::InvalidTarget {
                beta: target.beta,
                len: k,
            });
        }
        self.check_sample(x)?;
        let corr = self.correlations(x);
        let lmax = corr.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        if lmax == 0.0 || target.beta == 0 {
            return Ok(Code::zeros(k, lmax));
        }
        let usable = (0..k).filter(|&j| self.gram[[j, j]] > 0.0).count();
        let mut alpha = Array1::zeros(k);
        if target.beta >= usable {
            self.descend(&corr, 0.0, &mut alpha);
            return Ok(Code {
                alpha: self.to_stored(alpha),
                lambda_c: 0.0,
            });
        }

        let (mut lo, mut hi) = (0.0_f64, lmax);
        let mut best: Option<(usize, f64, Array1<f64>)> = None;
        for _ in 0..MAX_SEARCH_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            self.descend(&corr, mid, &mut alpha);
            let count = alpha.iter().filter(|v| **v != 0.0).count();
            let miss = count.abs_diff(target.beta);
            if best.as_ref().is_none_or(|(b, _, _)| miss <= *b) {
                best = Some((miss, mid, alpha.clone()));
            }
            if (hi - lo) / hi < target.eps_lambda || target.count_ok(count) {
                break;
            }
            if count > target.beta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (_, lambda_c, alpha) = best.expect("at least one probe runs");
        Ok(Code {
            alpha: self.to_stored(alpha),
            lambda_c,
        })
    }

    /// Encode every row of `samples` against this snapshot; rows are independent
    /// and solved in parallel.
    pub fn encode_rows(
        &self,
        samples: ArrayView2<f64>,
        target: &SparsityTarget,
    ) -> Result<Vec<Code>> {
        (0..samples.nrows())
            .into_par_iter()
            .map(|i| self.encode_target_nnz(samples.row(i), target))
            .collect()
    }

    pub fn reconstruct(&self, code: &Code) -> Result<Array1<f64>> {
        reconstruct(self.dict, code.alpha.view())
    }
}

pub fn lasso(d: ArrayView2<f64>, x: ArrayView1<f64>, lambda_c: f64) -> Result<Code> {
    Encoder::new(d, false).lasso(x, lambda_c)
}

pub fn encode_target_nnz(
    d: ArrayView2<f64>,
    x: ArrayView1<f64>,
    target: &SparsityTarget,
) -> Result<Code> {
    Encoder::new(d, false).encode_target_nnz(x, target)
}

/// `D * alpha`.
pub fn reconstruct(d: ArrayView2<f64>, alpha: ArrayView1<f64>) -> Result<Array1<f64>> {
    check_len(d.ncols(), alpha.len(), "code length vs dictionary columns")?;
    Ok(d.dot(&alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::prox_l1;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, k: usize) -> Array2<f64> {
        Array2::from_shape_fn((m, k), |_| rng.random_range(-1.0..1.0))
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
        Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0))
    }

    /// ISTA with step 1/L, run far past convergence.
    fn proximal_gradient(d: &Array2<f64>, x: &Array1<f64>, lambda: f64) -> Array1<f64> {
        let mut l = 0.0;
        for row in d.t().dot(d).rows() {
            l += row.iter().map(|v| v * v).sum::<f64>();
        }
        let step = 1.0 / l.sqrt().max(1e-12);
        let mut a = Array1::<f64>::zeros(d.ncols());
        for _ in 0..200_000 {
            let grad = d.t().dot(&(d.dot(&a) - x));
            let z = &a - &(grad * step);
            a = z.mapv(|v| soft_threshold(v, lambda * step));
        }
        a
    }

    fn solve_linear(mut a: Array2<f64>, mut b: Array1<f64>) -> Array1<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))
                .unwrap();
            for c in 0..n {
                a.swap([col, c], [piv, c]);
            }
            b.swap(col, piv);
            for r in col + 1..n {
                let f = a[[r, col]] / a[[col, col]];
                for c in col..n {
                    a[[r, c]] -= f * a[[col, c]];
                }
                b[r] -= f * b[col];
            }
        }
        let mut out = Array1::zeros(n);
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|c| a[[r, c]] * out[c]).sum();
            out[r] = (b[r] - s) / a[[r, r]];
        }
        out
    }

    #[test]
    fn identity_design_is_soft_threshold() {
        let d = Array2::eye(4);
        let x = array![0.8, -0.3, 0.05, -1.2];
        let code = lasso(d.view(), x.view(), 0.1).unwrap();
        let expected = prox_l1(x.view(), 0.1).unwrap();
        for (a, b) in code.alpha.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn large_lambda_gives_zero_code() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_matrix(&mut rng, 6, 4);
        let x = random_vec(&mut rng, 6);
        let lmax = d.t().dot(&x).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert_eq!(lasso(d.view(), x.view(), lmax).unwrap().nnz(), 0);
        assert_eq!(lasso(d.view(), x.view(), 2.0 * lmax).unwrap().nnz(), 0);
    }

    #[test]
    fn matches_proximal_gradient_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = random_matrix(&mut rng, 6, 4);
        let x = random_vec(&mut rng, 6);
        let code = lasso(d.view(), x.view(), 0.1).unwrap();
        let reference = proximal_gradient(&d, &x, 0.1);
        let ours = lasso_objective(d.view(), x.view(), code.alpha.view(), 0.1);
        let theirs = lasso_objective(d.view(), x.view(), reference.view(), 0.1);
        assert!((ours - theirs).abs() <= 1e-8, "{ours} vs {theirs}");
    }

    #[test]
    fn kkt_holds_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let m = rng.random_range(2..=10);
            let k = rng.random_range(1..=15);
            let d = random_matrix(&mut rng, m, k);
            let x = random_vec(&mut rng, m);
            let lambda = rng.random_range(0.01..0.5);
            let code = lasso(d.view(), x.view(), lambda).unwrap();
            let grad = d.t().dot(&(&x - &d.dot(&code.alpha)));
            for j in 0..k {
                let a = code.alpha[j];
                let resid = if a != 0.0 {
                    (grad[j] - lambda * a.signum()).abs()
                } else {
                    (grad[j].abs() - lambda).max(0.0)
                };
                assert!(resid <= 1e-6, "KKT residual {resid}");
            }
            let zero_obj = 0.5 * x.dot(&x);
            assert!(
                lasso_objective(d.view(), x.view(), code.alpha.view(), lambda) <= zero_obj + 1e-12
            );
        }
    }

    #[test]
    fn zero_columns_keep_zero_coefficients() {
        let d = array![[1.0, 0.0, 0.5], [0.0, 0.0, 0.5], [0.0, 0.0, 0.0]];
        let x = array![1.0, 1.0, 0.0];
        let code = lasso(d.view(), x.view(), 0.01).unwrap();
        assert_eq!(code.alpha[1], 0.0);
        let enc = Encoder::new(d.view(), true)
            .encode_target_nnz(x.view(), &SparsityTarget::new(3))
            .unwrap();
        assert_eq!(enc.alpha[1], 0.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let d = Array2::<f64>::eye(3);
        assert!(matches!(
            lasso(d.view(), array![1.0, 2.0].view(), 0.1),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(reconstruct(d.view(), array![1.0].view()).is_err());
    }

    #[test]
    fn target_nnz_on_identity_keeps_largest_entries() {
        let d = Array2::eye(3);
        let x = array![0.9, 0.5, 0.1];
        // Brute force over a lambda grid: every lambda yielding two non-zeros
        // keeps coordinates 0 and 1.
        for step in 1..1000 {
            let lambda = step as f64 * 0.001;
            let a = prox_l1(x.view(), lambda).unwrap();
            if a.iter().filter(|v| **v != 0.0).count() == 2 {
                assert!(a[0] != 0.0 && a[1] != 0.0);
            }
        }
        let code = encode_target_nnz(d.view(), x.view(), &SparsityTarget::new(2)).unwrap();
        assert_eq!(code.nnz(), 2);
        assert!(code.alpha[0] != 0.0 && code.alpha[1] != 0.0 && code.alpha[2] == 0.0);
    }

    #[test]
    fn target_nnz_zero_sample_and_zero_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = random_matrix(&mut rng, 5, 4);
        let x0 = Array1::zeros(5);
        for beta in 0..=4 {
            let code = encode_target_nnz(d.view(), x0.view(), &SparsityTarget::new(beta)).unwrap();
            assert_eq!(code.nnz(), 0);
        }
        let x = random_vec(&mut rng, 5);
        assert_eq!(
            encode_target_nnz(d.view(), x.view(), &SparsityTarget::new(0))
                .unwrap()
                .nnz(),
            0
        );
        assert!(encode_target_nnz(d.view(), x.view(), &SparsityTarget::new(5)).is_err());
    }

    #[test]
    fn full_target_on_square_dictionary_is_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = Array2::<f64>::eye(4) + random_matrix(&mut rng, 4, 4) * 0.2;
        let x = random_vec(&mut rng, 4);
        let exact = solve_linear(d.clone(), x.clone());
        let code = encode_target_nnz(d.view(), x.view(), &SparsityTarget::new(4)).unwrap();
        for (a, b) in code.alpha.iter().zip(exact.iter()) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn normalized_coding_reconstructs_in_stored_units() {
        let d = array![[2.0, 0.0], [0.0, 0.5]];
        let x = array![1.0, 1.0];
        let enc = Encoder::new(d.view(), true);
        let code = enc.lasso(x.view(), 0.0).unwrap();
        let xhat = enc.reconstruct(&code).unwrap();
        assert!((xhat[0] - 1.0).abs() < 1e-9 && (xhat[1] - 1.0).abs() < 1e-9);
        assert!((code.alpha[0] - 0.5).abs() < 1e-9 && (code.alpha[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn reconstruct_matches_naive_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = random_matrix(&mut rng, 4, 3);
        let a = random_vec(&mut rng, 3);
        let out = reconstruct(d.view(), a.view()).unwrap();
        for i in 0..4 {
            let mut s = 0.0;
            for j in 0..3 {
                s += d[[i, j]] * a[j];
            }
            assert!((out[i] - s).abs() < 1e-15);
        }
        assert_eq!(
            reconstruct(d.view(), Array1::zeros(3).view()).unwrap(),
            Array1::<f64>::zeros(4)
        );
        let x = array![1.0, 2.0, 3.0];
        assert_eq!(reconstruct(Array2::eye(3).view(), x.view()).unwrap(), x);
    }

    #[test]
    fn nnz_non_increasing_along_lambda_grid_for_orthogonal_columns() {
        // With correlated columns the lasso path may drop and re-add variables,
        // so the count is only monotone for orthogonal designs.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let mut d = Array2::zeros((8, 4));
            for j in 0..4 {
                d[[2 * j, j]] = 0.5 + rng.random::<f64>();
            }
            let x = random_vec(&mut rng, 8);
            let enc = Encoder::new(d.view(), false);
            let mut last = usize::MAX;
            for step in 0..=40 {
                let lambda = step as f64 * 0.05;
                let count = enc.lasso(x.view(), lambda).unwrap().nnz();
                assert!(count <= last, "nnz grew at lambda {lambda}");
                last = count;
            }
        }
    }
}
