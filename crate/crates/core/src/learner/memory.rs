use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};

/// Running sums `A = sum(alpha alpha^T)` (k x k) and `B = sum(x alpha^T)` (m x k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Memory {
    a: Array2<f64>,
    b: Array2<f64>,
}

impl Memory {
    pub fn zeros(m: usize, k: usize) -> Self {
        Memory {
            a: Array2::zeros((k, k)),
            b: Array2::zeros((m, k)),
        }
    }

    pub fn from_parts(a: Array2<f64>, b: Array2<f64>) -> Result<Self> {
        check_len(a.nrows(), a.ncols(), "A must be square")?;
        check_len(a.ncols(), b.ncols(), "B columns vs A size")?;
        Ok(Memory { a, b })
    }

    pub fn a(&self) -> ArrayView2<'_, f64> {
        self.a.view()
    }

    pub fn b(&self) -> ArrayView2<'_, f64> {
        self.b.view()
    }

    pub fn k(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.nrows()
    }

    /// Rank-one accumulation of one coded sample.
    pub fn update(&mut self, x: ArrayView1<f64>, alpha: ArrayView1<f64>) -> Result<()> {
        check_len(self.m(), x.len(), "sample length vs memory rows")?;
        check_len(self.k(), alpha.len(), "code length vs memory size")?;
        let support: Vec<usize> = (0..alpha.len()).filter(|&j| alpha[j] != 0.0).collect();
        for &i in &support {
            for &j in &support {
                self.a[[i, j]] += alpha[i] * alpha[j];
            }
            self.b.column_mut(i).scaled_add(alpha[i], &x);
        }
        Ok(())
    }

    /// Zero-pad for `n` new elements: `A <- [[A, 0], [0, 0]]`, `B <- [B, 0]`.
    pub fn expand(&mut self, n: usize) {
        let k = self.k();
        let mut a = Array2::zeros((k + n, k + n));
        a.slice_mut(s![..k, ..k]).assign(&self.a);
        let mut b = Array2::zeros((self.m(), k + n));
        b.slice_mut(s![.., ..k]).assign(&self.b);
        self.a = a;
        self.b = b;
    }

    /// Keep only the listed elements, in order.
    pub fn retain(&mut self, keep: &[usize]) {
        self.a = self.a.select(Axis(0), keep).select(Axis(1), keep);
        self.b = self.b.select(Axis(1), keep);
    }

    /// Forget all history of element `j`.
    pub fn clear(&mut self, j: usize) {
        self.a.row_mut(j).fill(0.0);
        self.a.column_mut(j).fill(0.0);
        self.b.column_mut(j).fill(0.0);
    }
}
