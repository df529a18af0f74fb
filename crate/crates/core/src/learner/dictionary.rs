use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::numerics::{binary_search_lambda, l2_norm, soft_threshold, SparsityTarget};

/// Column dictionary `D` (m x k) with per-element bookkeeping.
///
/// `ages` holds the batch index at which each element was created and `ids`
/// a run-unique identifier, so codes logged under an older layout can be
/// matched to the current columns after births, deaths and re-draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    atoms: Array2<f64>,
    ages: Vec<usize>,
    ids: Vec<u64>,
}

impl Dictionary {
    pub fn empty(m: usize) -> Self {
        Dictionary {
            atoms: Array2::zeros((m, 0)),
            ages: Vec::new(),
            ids: Vec::new(),
        }
    }

    pub fn from_parts(atoms: Array2<f64>, ages: Vec<usize>, ids: Vec<u64>) -> Result<Self> {
        check_len(atoms.ncols(), ages.len(), "element ages")?;
        check_len(atoms.ncols(), ids.len(), "element ids")?;
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "dictionary has non-finite entries".into(),
            ));
        }
        Ok(Dictionary { atoms, ages, ids })
    }

    /// Wrap a matrix, numbering its columns `0..k` with age 0.
    pub fn from_matrix(atoms: Array2<f64>) -> Result<Self> {
        let k = atoms.ncols();
        Self::from_parts(atoms, vec![0; k], (0..k as u64).collect())
    }

    /// `k` random elements over `m` dimensions, reproducible from `seed`.
    pub fn random(m: usize, k: usize, beta_d: Option<usize>, seed: u64) -> Result<Self> {
        if let Some(b) = beta_d {
            if b > m {
                return Err(Error::InvalidConfig(format!(
                    "beta_d = {b} exceeds m = {m}"
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = beta_d.filter(|&b| b < m).map(SparsityTarget::new);
        let atoms = random_atoms(&mut rng, m, k, target.as_ref())?;
        Self::from_matrix(atoms)
    }

    pub fn m(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn k(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn atoms(&self) -> ArrayView2<'_, f64> {
        self.atoms.view()
    }

    pub(crate) fn atoms_mut(&mut self) -> &mut Array2<f64> {
        &mut self.atoms
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.atoms.column(j)
    }

    pub fn ages(&self) -> &[usize] {
        &self.ages
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.atoms.axis_iter(Axis(1)).map(l2_norm).collect()
    }

    /// Indices of columns whose entries are all exactly zero.
    pub fn dead_columns(&self) -> Vec<usize> {
        self.atoms
            .axis_iter(Axis(1))
            .enumerate()
            .filter(|(_, c)| c.iter().all(|v| *v == 0.0))
            .map(|(j, _)| j)
            .collect()
    }

    pub(crate) fn append(
        &mut self,
        fresh: Array2<f64>,
        age: usize,
        ids: impl IntoIterator<Item = u64>,
    ) {
        let k = self.k();
        let n = fresh.ncols();
        let mut atoms = Array2::zeros((self.m(), k + n));
        atoms.slice_mut(s![.., ..k]).assign(&self.atoms);
        atoms.slice_mut(s![.., k..]).assign(&fresh);
        self.atoms = atoms;
        self.ages.extend(std::iter::repeat_n(age, n));
        self.ids.extend(ids);
        debug_assert_eq!(self.ids.len(), self.k());
    }

    pub(crate) fn retain(&mut self, keep: &[usize]) {
        self.atoms = self.atoms.select(Axis(1), keep);
        self.ages = keep.iter().map(|&j| self.ages[j]).collect();
        self.ids = keep.iter().map(|&j| self.ids[j]).collect();
    }

    pub(crate) fn replace(&mut self, j: usize, column: ArrayView1<f64>, age: usize, id: u64) {
        self.atoms.column_mut(j).assign(&column);
        self.ages[j] = age;
        self.ids[j] = id;
    }
}

/// Standard-normal columns, soft-thresholded down to the target count when
/// one is given, then scaled to unit l2 norm.
pub(crate) fn random_atoms(
    rng: &mut ChaCha8Rng,
    m: usize,
    count: usize,
    target: Option<&SparsityTarget>,
) -> Result<Array2<f64>> {
    let mut atoms = Array2::zeros((m, count));
    for mut col in atoms.axis_iter_mut(Axis(1)) {
        let mut u: Array1<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
        if let Some(t) = target {
            let lambda = binary_search_lambda(u.view(), t)?.lambda;
            u.mapv_inplace(|v| soft_threshold(v, lambda));
        }
        let norm = l2_norm(u.view());
        if norm > 0.0 {
            u /= norm;
        }
        col.assign(&u);
    }
    Ok(atoms)
}
