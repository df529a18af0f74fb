//! Two-domain synthetic streams with disjoint supports.

use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand::{seq::index, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::io::{write_json, write_matrix_csv};

/// Ordered samples, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub samples: Array2<f64>,
}

impl SampleSet {
    pub fn new(samples: Array2<f64>) -> Self {
        SampleSet { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn m(&self) -> usize {
        self.samples.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.samples.row(i)
    }

    pub fn select(&self, order: &[usize]) -> SampleSet {
        SampleSet::new(self.samples.select(Axis(0), order))
    }
}

/// Parameters of the block-diagonal synthetic data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub m: usize,
    pub nnz_per_sample: usize,
    /// Half-open index range `[start, end)` of domain 1.
    pub domain1_dims: [usize; 2],
    pub domain2_dims: [usize; 2],
    pub n_train_per_domain: usize,
    pub n_test_per_domain: usize,
    /// Non-zero magnitudes are uniform on `[magnitude_low, magnitude_high]`.
    pub magnitude_low: f64,
    pub magnitude_high: f64,
    pub random_sign: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            m: 1024,
            nnz_per_sample: 50,
            domain1_dims: [0, 512],
            domain2_dims: [512, 1024],
            n_train_per_domain: 100,
            n_test_per_domain: 100,
            magnitude_low: 0.2,
            magnitude_high: 1.0,
            random_sign: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: [SampleSet; 2],
    pub test: [SampleSet; 2],
}

fn width(r: [usize; 2]) -> usize {
    r[1].saturating_sub(r[0])
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (name, r) in [
            ("domain1_dims", self.domain1_dims),
            ("domain2_dims", self.domain2_dims),
        ] {
            if r[0] >= r[1] || r[1] > self.m {
                return bad(format!(
                    "{name} = {r:?} is not a non-empty range within [0, {})",
                    self.m
                ));
            }
            if self.nnz_per_sample > width(r) {
                return bad(format!(
                    "nnz_per_sample = {} exceeds the width of {name} ({})",
                    self.nnz_per_sample,
                    width(r)
                ));
            }
        }
        let [a0, a1] = self.domain1_dims;
        let [b0, b1] = self.domain2_dims;
        if a0 < b1 && b0 < a1 {
            return bad("domain ranges overlap".into());
        }
        if !(self.magnitude_low > 0.0 && self.magnitude_low <= self.magnitude_high)
            || !self.magnitude_high.is_finite()
        {
            return bad(format!(
                "magnitude range [{}, {}] must be positive and ordered",
                self.magnitude_low, self.magnitude_high
            ));
        }
        Ok(())
    }

    pub fn domain_dims(&self, domain: usize) -> [usize; 2] {
        if domain == 0 {
            self.domain1_dims
        } else {
            self.domain2_dims
        }
    }

    fn sample_set(&self, rng: &mut ChaCha8Rng, range: [usize; 2], n: usize) -> SampleSet {
        let mut samples = Array2::zeros((n, self.m));
        for mut row in samples.axis_iter_mut(Axis(0)) {
            let mut support = index::sample(rng, width(range), self.nnz_per_sample).into_vec();
            support.sort_unstable();
            for i in support {
                let mut v = rng.random_range(self.magnitude_low..=self.magnitude_high);
                if self.random_sign && rng.random_bool(0.5) {
                    v = -v;
                }
                row[range[0] + i] = v;
            }
        }
        SampleSet::new(samples)
    }

    /// Draw train and test sets for both domains, in that order, from one RNG.
    pub fn generate(&self) -> Result<SyntheticData> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let train1 = self.sample_set(&mut rng, self.domain1_dims, self.n_train_per_domain);
        let train2 = self.sample_set(&mut rng, self.domain2_dims, self.n_train_per_domain);
        let test1 = self.sample_set(&mut rng, self.domain1_dims, self.n_test_per_domain);
        let test2 = self.sample_set(&mut rng, self.domain2_dims, self.n_test_per_domain);
        Ok(SyntheticData {
            train: [train1, train2],
            test: [test1, test2],
        })
    }
}

pub const TRAIN_FILES: [&str; 2] = ["train_d1.csv", "train_d2.csv"];
pub const TEST_FILES: [&str; 2] = ["test_d1.csv", "test_d2.csv"];
pub const MANIFEST_FILE: &str = "manifest.json";

impl SyntheticData {
    /// Write the four sample sets as CSV plus a JSON manifest of the spec.
    pub fn write(&self, spec: &SyntheticSpec, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (set, name) in self.train.iter().zip(TRAIN_FILES) {
            write_matrix_csv(&dir.join(name), set.samples.view())?;
        }
        for (set, name) in self.test.iter().zip(TEST_FILES) {
            write_matrix_csv(&dir.join(name), set.samples.view())?;
        }
        write_json(&dir.join(MANIFEST_FILE), spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_have_exact_supports() {
        let spec = SyntheticSpec::default();
        let data = spec.generate().unwrap();
        for d in 0..2 {
            assert_eq!(data.train[d].len(), 100);
            assert_eq!(data.test[d].len(), 100);
            let [lo, hi] = spec.domain_dims(d);
            for set in [&data.train[d], &data.test[d]] {
                assert_eq!(set.m(), 1024);
                for row in set.samples.rows() {
                    let support: Vec<usize> = (0..1024).filter(|&i| row[i] != 0.0).collect();
                    assert_eq!(support.len(), 50);
                    assert!(support.iter().all(|&i| i >= lo && i < hi));
                    assert!(row.iter().all(|v| *v == 0.0 || (0.2..=1.0).contains(v)));
                }
            }
        }
    }

    #[test]
    fn cross_domain_pairs_are_orthogonal() {
        let data = SyntheticSpec {
            seed: 5,
            ..Default::default()
        }
        .generate()
        .unwrap();
        for a in data.train[0]
            .samples
            .rows()
            .into_iter()
            .chain(data.test[0].samples.rows())
        {
            for b in data.train[1]
                .samples
                .rows()
                .into_iter()
                .chain(data.test[1].samples.rows())
            {
                assert_eq!(a.dot(&b), 0.0);
            }
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let spec = SyntheticSpec {
            seed: 77,
            m: 64,
            domain1_dims: [0, 32],
            domain2_dims: [32, 64],
            nnz_per_sample: 4,
            ..Default::default()
        };
        assert_eq!(spec.generate().unwrap(), spec.generate().unwrap());
        let other = SyntheticSpec {
            seed: 78,
            ..spec.clone()
        };
        assert_ne!(spec.generate().unwrap(), other.generate().unwrap());
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            SyntheticSpec {
                domain2_dims: [500, 1024],
                ..Default::default()
            },
            SyntheticSpec {
                nnz_per_sample: 600,
                ..Default::default()
            },
            SyntheticSpec {
                domain2_dims: [512, 2000],
                ..Default::default()
            },
            SyntheticSpec {
                magnitude_low: 0.0,
                ..Default::default()
            },
        ];
        for spec in bad {
            assert!(matches!(spec.generate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn random_signs_when_enabled() {
        let spec = SyntheticSpec {
            random_sign: true,
            ..Default::default()
        };
        let data = spec.generate().unwrap();
        assert!(data.train[0].samples.iter().any(|v| *v < 0.0));
    }
}
