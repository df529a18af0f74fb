use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dictionary::{random_atoms, Dictionary};
use super::memory::Memory;
use super::LearnerConfig;
use crate::error::{check_len, Error, Result};
use crate::metrics::{self, MetricRecord};
use crate::numerics::{
    binary_search_lambda, group_shrink_unchecked, l1_norm, l2_norm, normalize_column,
    soft_threshold,
};
use crate::sparse_coding::{Code, Encoder};

/// Number of elements to add for a batch whose average correlation is `pc_avg`.
///
/// Zero above the threshold; otherwise `ceil((1 - pc_avg) * c_k)` clamped to
/// `[1, min(c_k, batch_size)]`.
pub fn neurogenesis_count(pc_avg: f64, gamma: f64, c_k: usize, batch_size: usize) -> usize {
    let cap = c_k.min(batch_size);
    if pc_avg > gamma || cap == 0 {
        return 0;
    }
    let raw = ((1.0 - pc_avg) * c_k as f64).ceil();
    if raw.is_nan() {
        return cap;
    }
    (raw.max(1.0) as usize).clamp(1, cap)
}

/// Result of one block-coordinate dictionary update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub sweeps: usize,
    /// Largest column l2 change in the final sweep.
    pub max_change: f64,
    /// Surrogate objective after each sweep.
    pub objective_trace: Vec<f64>,
    /// Per-column l1 thresholds chosen on the first sweep (0 when dense).
    pub column_lambdas: Vec<f64>,
}

/// Per-batch summary, one row of `trace.csv`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchMetrics {
    pub batch: usize,
    pub n_samples: usize,
    pub k_before: usize,
    pub k_after: usize,
    pub p_c_pre: f64,
    pub p_c_post: f64,
    pub k_n: usize,
    pub killed: usize,
    pub reinitialized: usize,
    pub sweeps: usize,
    pub mse: f64,
    pub pearson: f64,
    pub spearman: f64,
    pub empty: bool,
}

/// Everything a caller may want from one batch: the metrics row plus the
/// codes that went into memory, keyed by element id.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub metrics: BatchMetrics,
    pub update: UpdateStats,
    pub code_ids: Vec<u64>,
    pub codes: Vec<Array1<f64>>,
}

/// Single-owner learner: dictionary, memory, resolved config and RNG.
#[derive(Debug, Clone)]
pub struct LearnerState {
    dictionary: Dictionary,
    memory: Memory,
    config: LearnerConfig,
    batches_seen: usize,
    rng: ChaCha8Rng,
    next_id: u64,
}

impl LearnerState {
    /// Fresh learner with `k` random elements over `m` dimensions.
    pub fn new(m: usize, k: usize, config: &LearnerConfig) -> Result<Self> {
        config.validate()?;
        if m < 2 {
            return Err(Error::InvalidConfig(format!(
                "input dimension must be >= 2, got {m}"
            )));
        }
        if let Some(b) = config.beta_d {
            if b > m {
                return Err(Error::InvalidConfig(format!(
                    "beta_d = {b} exceeds m = {m}"
                )));
            }
        }
        let config = config.resolved();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let atoms = random_atoms(&mut rng, m, k, config.dict_target(m).as_ref())?;
        let dictionary = Dictionary::from_matrix(atoms)?;
        Ok(LearnerState {
            dictionary,
            memory: Memory::zeros(m, k),
            config,
            batches_seen: 0,
            rng,
            next_id: k as u64,
        })
    }

    /// Learner over an existing dictionary and memory.
    pub fn from_parts(
        dictionary: Dictionary,
        memory: Memory,
        config: &LearnerConfig,
    ) -> Result<Self> {
        config.validate()?;
        check_len(
            dictionary.k(),
            memory.k(),
            "memory size vs dictionary columns",
        )?;
        check_len(dictionary.m(), memory.m(), "memory rows vs dictionary rows")?;
        let config = config.resolved();
        let next_id = dictionary.ids().iter().max().map_or(0, |v| v + 1);
        Ok(LearnerState {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            dictionary,
            memory,
            config,
            batches_seen: 0,
            next_id,
        })
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dictionary
    }

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn batches_seen(&self) -> usize {
        self.batches_seen
    }

    pub fn m(&self) -> usize {
        self.dictionary.m()
    }

    pub fn k(&self) -> usize {
        self.dictionary.k()
    }

    pub fn encoder(&self) -> Encoder<'_> {
        Encoder::new(self.dictionary.atoms(), self.config.normalize_for_coding)
    }

    /// Encode rows of `samples` with the configured code sparsity.
    pub fn encode(&self, samples: ArrayView2<f64>) -> Result<Vec<Code>> {
        check_len(
            self.m(),
            samples.ncols(),
            "sample length vs dictionary rows",
        )?;
        self.encoder()
            .encode_rows(samples, &self.config.code_target(self.k()))
    }

    fn fresh_atoms(&mut self, count: usize) -> Result<Array2<f64>> {
        let target = self.config.dict_target(self.m());
        let m = self.m();
        random_atoms(&mut self.rng, m, count, target.as_ref())
    }

    /// Append `k_n` random elements and zero-pad the memory for them.
    pub fn add_elements(&mut self, k_n: usize) -> Result<()> {
        if k_n == 0 {
            return Ok(());
        }
        let fresh = self.fresh_atoms(k_n)?;
        let ids = self.next_id..self.next_id + k_n as u64;
        self.next_id += k_n as u64;
        self.dictionary.append(fresh, self.batches_seen, ids);
        self.memory.expand(k_n);
        Ok(())
    }

    pub fn memory_update(
        &mut self,
        x: ndarray::ArrayView1<f64>,
        alpha: ndarray::ArrayView1<f64>,
    ) -> Result<()> {
        self.memory.update(x, alpha)
    }

    /// Block-coordinate descent on the surrogate objective.
    ///
    /// Each column update computes `u_j = (b_j - D a_j + d_j a_jj) / a_jj`,
    /// soft-thresholds it to about `beta_d` non-zeros, applies group
    /// shrinkage with `lambda_g` and projects onto the unit ball. That is the
    /// exact minimizer over `d_j` of
    ///
    /// `0.5 tr(D^T D A) - tr(D^T B) + sum_j a_jj (lambda_g ||d_j||_2 + lambda_j ||d_j||_1)`
    ///
    /// for fixed thresholds, so the per-column `lambda_j` are searched on the
    /// first sweep and held for the rest of the call; the objective is then
    /// non-increasing from sweep to sweep. Columns with `a_jj = 0` are left as
    /// they are.
    pub fn dictionary_update(&mut self) -> UpdateStats {
        let k = self.k();
        let m = self.m();
        if k == 0 {
            return UpdateStats::default();
        }
        let target = self.config.dict_target(m);
        let lambda_g = self.config.lambda_g;
        let a = self.memory.a().to_owned();
        let b = self.memory.b();
        let d = self.dictionary.atoms_mut();
        // D A, kept in sync column by column.
        let mut da = d.dot(&a);
        let mut lambdas = vec![0.0; k];
        let mut stats = UpdateStats::default();

        for sweep in 1..=self.config.bcd_max_sweeps {
            let mut max_change = 0.0_f64;
            for j in 0..k {
                let ajj = a[[j, j]];
                if ajj <= 0.0 {
                    continue;
                }
                let mut u = Array1::zeros(m);
                Zip::from(&mut u)
                    .and(b.column(j))
                    .and(da.column(j))
                    .and(d.column(j))
                    .for_each(|u, &bj, &daj, &dj| *u = (bj - daj + dj * ajj) / ajj);
                if let Some(t) = &target {
                    if sweep == 1 {
                        // u is finite: a_jj > 0 and all inputs are finite.
                        lambdas[j] = binary_search_lambda(u.view(), t)
                            .map(|s| s.lambda)
                            .unwrap_or(0.0);
                    }
                    let lj = lambdas[j];
                    u.mapv_inplace(|v| soft_threshold(v, lj));
                }
                let w = group_shrink_unchecked(u.view(), lambda_g);
                let new = normalize_column(w.view());
                let delta = &new - &d.column(j);
                let change = l2_norm(delta.view());
                if change > 0.0 {
                    let a_row = a.row(j);
                    for (i, &di) in delta.iter().enumerate() {
                        if di != 0.0 {
                            da.row_mut(i).scaled_add(di, &a_row);
                        }
                    }
                    d.column_mut(j).assign(&new);
                    max_change = max_change.max(change);
                }
            }
            stats.sweeps = sweep;
            stats.max_change = max_change;
            stats.objective_trace.push(surrogate_objective(
                d.view(),
                da.view(),
                a.view(),
                b,
                lambda_g,
                &lambdas,
            ));
            if max_change < self.config.bcd_tol {
                break;
            }
        }
        stats.column_lambdas = lambdas;
        stats
    }

    /// Apply the variant's treatment of zero-norm columns. Returns
    /// `(removed, redrawn)`.
    pub fn handle_dead_elements(&mut self) -> Result<(usize, usize)> {
        let dead = self.dictionary.dead_columns();
        if dead.is_empty() {
            return Ok((0, 0));
        }
        if self.config.prunes_dead() {
            let keep: Vec<usize> = (0..self.k()).filter(|j| !dead.contains(j)).collect();
            self.dictionary.retain(&keep);
            self.memory.retain(&keep);
            return Ok((dead.len(), 0));
        }
        if self.config.reinits_dead() {
            let fresh = self.fresh_atoms(dead.len())?;
            for (col, &j) in fresh.axis_iter(Axis(1)).zip(&dead) {
                let id = self.next_id;
                self.next_id += 1;
                self.dictionary.replace(j, col, self.batches_seen, id);
                self.memory.clear(j);
            }
            return Ok((0, dead.len()));
        }
        Ok((0, 0))
    }

    /// One full online iteration on a batch (rows are samples).
    pub fn process_batch(&mut self, batch: ArrayView2<f64>) -> Result<BatchOutcome> {
        check_len(self.m(), batch.ncols(), "sample length vs dictionary rows")?;
        let n = batch.nrows();
        let k_before = self.k();
        let mut metrics = BatchMetrics {
            batch: self.batches_seen,
            n_samples: n,
            k_before,
            k_after: k_before,
            ..Default::default()
        };
        if n == 0 {
            log::warn!("batch {} is empty; nothing to learn", self.batches_seen);
            metrics.empty = true;
            return Ok(BatchOutcome {
                metrics,
                update: UpdateStats::default(),
                code_ids: self.dictionary.ids().to_vec(),
                codes: Vec::new(),
            });
        }

        let mut codes = self.encode(batch)?;
        let mut recon = self.reconstructions(&codes)?;
        metrics.p_c_pre = self.mean_pearson(batch, &recon)?;
        metrics.p_c_post = metrics.p_c_pre;

        let k_n = neurogenesis_count(metrics.p_c_pre, self.config.gamma, self.config.c_k, n);
        if k_n > 0 {
            self.add_elements(k_n)?;
            codes = self.encode(batch)?;
            recon = self.reconstructions(&codes)?;
            metrics.p_c_post = self.mean_pearson(batch, &recon)?;
        }
        metrics.k_n = k_n;

        let quality =
            MetricRecord::from_pairs(batch.axis_iter(Axis(0)).zip(recon.iter().map(|r| r.view())))?;
        metrics.mse = quality.mse;
        metrics.pearson = quality.pearson;
        metrics.spearman = quality.spearman;

        for (x, code) in batch.axis_iter(Axis(0)).zip(&codes) {
            self.memory.update(x, code.alpha.view())?;
        }
        let code_ids = self.dictionary.ids().to_vec();

        let update = self.dictionary_update();
        metrics.sweeps = update.sweeps;
        let (killed, reinitialized) = self.handle_dead_elements()?;
        metrics.killed = killed;
        metrics.reinitialized = reinitialized;
        metrics.k_after = self.k();
        self.batches_seen += 1;

        Ok(BatchOutcome {
            metrics,
            update,
            code_ids,
            codes: codes.into_iter().map(|c| c.alpha).collect(),
        })
    }

    fn reconstructions(&self, codes: &[Code]) -> Result<Vec<Array1<f64>>> {
        let enc = self.encoder();
        codes.iter().map(|c| enc.reconstruct(c)).collect()
    }

    fn mean_pearson(&self, batch: ArrayView2<f64>, recon: &[Array1<f64>]) -> Result<f64> {
        let values = batch
            .axis_iter(Axis(0))
            .zip(recon)
            .map(|(x, r)| metrics::pearson(x, r.view()))
            .collect::<Result<Vec<_>>>()?;
        Ok(metrics::mean(&values))
    }
}

/// `0.5 tr(D^T D A) - tr(D^T B) + sum_j a_jj (lambda_g ||d_j||_2 + lambda_j ||d_j||_1)`,
/// using a precomputed `D A`.
pub(crate) fn surrogate_objective(
    d: ArrayView2<f64>,
    da: ArrayView2<f64>,
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    lambda_g: f64,
    lambdas: &[f64],
) -> f64 {
    let mut total = 0.0;
    for j in 0..d.ncols() {
        let dj = d.column(j);
        total += 0.5 * dj.dot(&da.column(j)) - dj.dot(&b.column(j));
        let ajj = a[[j, j]];
        if ajj > 0.0 {
            total += ajj * (lambda_g * l2_norm(dj) + lambdas[j] * l1_norm(dj));
        }
    }
    total
}

/// Surrogate objective computed from scratch.
pub fn objective(
    d: ArrayView2<f64>,
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    lambda_g: f64,
    lambdas: &[f64],
) -> f64 {
    let da = d.dot(&a);
    surrogate_objective(d, da.view(), a, b, lambda_g, lambdas)
}
