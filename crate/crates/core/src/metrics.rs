//! Reconstruction quality measures.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

fn check_pair(x: ArrayView1<f64>, xhat: ArrayView1<f64>) -> Result<()> {
    check_len(x.len(), xhat.len(), "reconstruction length")?;
    if x.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "correlation needs at least 2 entries, got {}",
            x.len()
        )));
    }
    Ok(())
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Sample Pearson correlation; 0 when either side has zero variance.
pub fn pearson(x: ArrayView1<f64>, xhat: ArrayView1<f64>) -> Result<f64> {
    check_pair(x, xhat)?;
    let a: Vec<f64> = x.iter().copied().collect();
    let b: Vec<f64> = xhat.iter().copied().collect();
    Ok(correlation(&a, &b))
}

/// Ranks starting at 1, ties share their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation (Pearson of average ranks).
pub fn spearman(x: ArrayView1<f64>, xhat: ArrayView1<f64>) -> Result<f64> {
    check_pair(x, xhat)?;
    let a = average_ranks(&x.to_vec());
    let b = average_ranks(&xhat.to_vec());
    Ok(correlation(&a, &b))
}

/// Mean squared error per dimension, `||x - xhat||^2 / m`.
pub fn mse(x: ArrayView1<f64>, xhat: ArrayView1<f64>) -> Result<f64> {
    check_len(x.len(), xhat.len(), "reconstruction length")?;
    if x.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = x
        .iter()
        .zip(xhat.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(s / x.len() as f64)
}

/// Per-sample metrics averaged over a set of samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricRecord {
    pub pearson: f64,
    pub spearman: f64,
    pub mse: f64,
    pub n_samples: usize,
}

impl MetricRecord {
    pub fn from_pairs<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (ArrayView1<'a, f64>, ArrayView1<'a, f64>)>,
    {
        let mut rec = MetricRecord::default();
        for (x, xhat) in pairs {
            rec.pearson += pearson(x, xhat)?;
            rec.spearman += spearman(x, xhat)?;
            rec.mse += mse(x, xhat)?;
            rec.n_samples += 1;
        }
        if rec.n_samples > 0 {
            let n = rec.n_samples as f64;
            rec.pearson /= n;
            rec.spearman /= n;
            rec.mse /= n;
        }
        Ok(rec)
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}
