//! Non-stationary experiments: train on domain 1, then domain 2, then score
//! held-out reconstructions of every domain.

pub mod io;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{SampleSet, SyntheticSpec};
use crate::error::{Error, Result};
use crate::learner::snapshot::write_snapshot;
use crate::learner::{BatchMetrics, Dictionary, LearnerConfig, LearnerState, Variant};
use crate::metrics::MetricRecord;
use crate::sparse_coding::Encoder;

pub use io::load_matrix_csv;

pub const REPORT_FILE: &str = "report.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const DICTIONARY_FILE: &str = "dictionary.csv";
pub const FINAL_FILE: &str = "final.csv";
pub const LEMMA1_FILE: &str = "lemma1.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    /// One training and one test CSV per domain, streamed in list order.
    Csv {
        train: Vec<PathBuf>,
        test: Vec<PathBuf>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Drives every random choice: data, initial dictionary, births, stream order.
    pub seed: u64,
    pub initial_k: usize,
    pub learner: LearnerConfig,
    pub data: DataSource,
    /// Score the test sets every this many batches (0: only at the end).
    pub eval_every: usize,
    /// Shuffle the training order within each domain.
    pub shuffle: bool,
    /// Log every code and check the memory against a re-accumulation at the end.
    pub audit: bool,
    /// Also score an untrained dense random dictionary of `initial_k` elements.
    pub random_baseline: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            initial_k: 200,
            learner: LearnerConfig::default(),
            data: DataSource::default(),
            eval_every: 0,
            shuffle: true,
            audit: true,
            random_baseline: true,
            output_dir: None,
        }
    }
}

fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer over (seed, tag)
    let mut z = seed.wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl ExperimentConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.learner.variant = variant;
        self
    }

    /// Push the experiment seed into the data and learner configs and apply
    /// the variant's fixed parameters.
    pub fn resolved(&self) -> ExperimentConfig {
        let mut c = self.clone();
        if let DataSource::Synthetic(spec) = &mut c.data {
            spec.seed = c.seed;
        }
        c.learner.seed = derive_seed(c.seed, 1);
        c.learner = c.learner.resolved();
        c
    }

    fn shuffle_seed(&self) -> u64 {
        derive_seed(self.seed, 2)
    }

    fn baseline_seed(&self) -> u64 {
        derive_seed(self.seed, 3)
    }

    pub fn validate(&self) -> Result<()> {
        self.learner.validate()?;
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        if let DataSource::Csv { train, test } = &self.data {
            if train.is_empty() || train.len() != test.len() {
                return Err(Error::InvalidConfig(format!(
                    "csv data needs one train and one test file per domain (got {} and {})",
                    train.len(),
                    test.len()
                )));
            }
        }
        Ok(())
    }
}

/// Train/test sample sets, one pair per domain.
#[derive(Debug, Clone)]
pub struct Domains {
    pub train: Vec<SampleSet>,
    pub test: Vec<SampleSet>,
}

impl Domains {
    pub fn m(&self) -> usize {
        self.train.first().map_or(0, |s| s.m())
    }
}

pub fn load_domains(source: &DataSource) -> Result<Domains> {
    match source {
        DataSource::Synthetic(spec) => {
            let data = spec.generate()?;
            let [t1, t2] = data.train;
            let [e1, e2] = data.test;
            Ok(Domains {
                train: vec![t1, t2],
                test: vec![e1, e2],
            })
        }
        DataSource::Csv { train, test } => Ok(Domains {
            train: train
                .iter()
                .map(|p| load_matrix_csv(p))
                .collect::<Result<_>>()?,
            test: test
                .iter()
                .map(|p| load_matrix_csv(p))
                .collect::<Result<_>>()?,
        }),
    }
}

/// One row of `trace.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub batch: usize,
    pub variant: Variant,
    pub k: usize,
    pub p_c_pre: f64,
    pub p_c_post: f64,
    pub k_n: usize,
    pub killed: usize,
    pub mse: f64,
    pub pearson: f64,
    pub spearman: f64,
}

impl TraceRow {
    fn new(variant: Variant, m: &BatchMetrics) -> Self {
        TraceRow {
            batch: m.batch,
            variant,
            k: m.k_after,
            p_c_pre: m.p_c_pre,
            p_c_post: m.p_c_post,
            k_n: m.k_n,
            killed: m.killed,
            mse: m.mse,
            pearson: m.pearson,
            spearman: m.spearman,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainResult {
    /// 1-based domain number.
    pub domain: usize,
    pub metrics: MetricRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub after_batch: usize,
    pub k: usize,
    pub results: Vec<DomainResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub variant: Variant,
    pub config: ExperimentConfig,
    pub m: usize,
    pub initial_k: usize,
    pub final_k: usize,
    /// Dictionary size after each batch.
    pub size_trace: Vec<usize>,
    /// First batch index of each domain.
    pub domain_starts: Vec<usize>,
    pub batches: Vec<BatchMetrics>,
    pub final_metrics: Vec<DomainResult>,
    pub evaluations: Vec<Evaluation>,
    pub random_baseline: Option<Vec<DomainResult>>,
    /// Largest elementwise gap between the learner memory and a re-accumulation
    /// of the logged codes.
    pub audit_max_deviation: Option<f64>,
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    pub fn trace_rows(&self) -> Vec<TraceRow> {
        self.batches
            .iter()
            .map(|b| TraceRow::new(self.variant, b))
            .collect()
    }

    pub fn final_for(&self, domain: usize) -> Option<&MetricRecord> {
        self.final_metrics
            .iter()
            .find(|r| r.domain == domain)
            .map(|r| &r.metrics)
    }

    /// Final test metrics per domain, for the trained dictionary and the
    /// random baseline when present.
    pub fn write_final(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            dictionary: &'a str,
            domain: usize,
            pearson: f64,
            spearman: f64,
            mse: f64,
            n_samples: usize,
        }
        let mut w = csv::Writer::from_path(path)?;
        let trained = self.final_metrics.iter().map(|r| (self.variant.name(), r));
        let baseline = self
            .random_baseline
            .iter()
            .flatten()
            .map(|r| ("random-D", r));
        for (dictionary, r) in trained.chain(baseline) {
            w.serialize(Row {
                dictionary,
                domain: r.domain,
                pearson: r.metrics.pearson,
                spearman: r.metrics.spearman,
                mse: r.metrics.mse,
                n_samples: r.metrics.n_samples,
            })?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_trace(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in self.trace_rows() {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// A code that went into memory, stored sparsely by element id.
#[derive(Debug, Clone)]
struct LoggedCode {
    domain: usize,
    row: usize,
    entries: Vec<(u64, f64)>,
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub report: ExperimentReport,
    pub state: LearnerState,
    pub domains: Domains,
}

/// Score reconstructions of `set` under the learner's current dictionary.
pub fn evaluate(state: &LearnerState, set: &SampleSet) -> Result<MetricRecord> {
    let codes = state.encode(set.samples.view())?;
    let enc = state.encoder();
    let recon = codes
        .iter()
        .map(|c| enc.reconstruct(c))
        .collect::<Result<Vec<_>>>()?;
    MetricRecord::from_pairs(
        set.samples
            .axis_iter(Axis(0))
            .zip(recon.iter().map(|r| r.view())),
    )
}

fn evaluate_all(state: &LearnerState, domains: &Domains) -> Result<Vec<DomainResult>> {
    domains
        .test
        .iter()
        .enumerate()
        .map(|(d, set)| {
            Ok(DomainResult {
                domain: d + 1,
                metrics: evaluate(state, set)?,
            })
        })
        .collect()
}

/// Untrained dense random dictionary of `k` elements, scored on every test set.
pub fn random_dictionary_baseline(
    config: &ExperimentConfig,
    domains: &Domains,
    k: usize,
) -> Result<Vec<DomainResult>> {
    let m = domains.m();
    let dict = Dictionary::random(m, k, None, config.baseline_seed())?;
    let enc = Encoder::new(dict.atoms(), config.learner.normalize_for_coding);
    let target = config.learner.code_target(k);
    domains
        .test
        .iter()
        .enumerate()
        .map(|(d, set)| {
            let codes = enc.encode_rows(set.samples.view(), &target)?;
            let recon = codes
                .iter()
                .map(|c| enc.reconstruct(c))
                .collect::<Result<Vec<_>>>()?;
            Ok(DomainResult {
                domain: d + 1,
                metrics: MetricRecord::from_pairs(
                    set.samples
                        .axis_iter(Axis(0))
                        .zip(recon.iter().map(|r| r.view())),
                )?,
            })
        })
        .collect()
}

fn check_domains(config: &ExperimentConfig, domains: &Domains) -> Result<()> {
    let m = domains.m();
    for (d, set) in domains.train.iter().chain(&domains.test).enumerate() {
        if set.m() != m {
            return Err(Error::InvalidConfig(format!(
                "sample set {} has dimension {} but the first training set has {m}",
                d + 1,
                set.m()
            )));
        }
    }
    for (d, set) in domains.train.iter().enumerate() {
        if config.learner.batch_size > set.len() {
            return Err(Error::InvalidConfig(format!(
                "batch_size {} exceeds the {} training samples of domain {}",
                config.learner.batch_size,
                set.len(),
                d + 1
            )));
        }
    }
    Ok(())
}

/// Re-accumulate `A` and `B` from logged codes for the elements still present.
fn audit_memory(state: &LearnerState, domains: &Domains, log: &[LoggedCode]) -> f64 {
    let ids = state.dictionary().ids();
    let index: HashMap<u64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let k = ids.len();
    let m = state.m();
    let mut a = Array2::<f64>::zeros((k, k));
    let mut b = Array2::<f64>::zeros((m, k));
    for entry in log {
        let x = domains.train[entry.domain].row(entry.row);
        let live: Vec<(usize, f64)> = entry
            .entries
            .iter()
            .filter_map(|(id, v)| index.get(id).map(|&i| (i, *v)))
            .collect();
        for &(i, vi) in &live {
            for &(j, vj) in &live {
                a[[i, j]] += vi * vj;
            }
            b.column_mut(i).scaled_add(vi, &x);
        }
    }
    let mem = state.memory();
    let da = (&a - &mem.a())
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let db = (&b - &mem.b())
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    da.max(db)
}

/// Train on every domain in order and score the result, without writing files.
pub fn train(config: &ExperimentConfig) -> Result<TrainedRun> {
    let started = Instant::now();
    config.validate()?;
    let config = config.resolved();
    let domains = load_domains(&config.data)?;
    check_domains(&config, &domains)?;
    let m = domains.m();
    let mut state = LearnerState::new(m, config.initial_k, &config.learner)?;

    let mut order_rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed());
    let mut log = Vec::new();
    let mut batches = Vec::new();
    let mut evaluations = Vec::new();
    let mut domain_starts = Vec::new();
    let batch_size = config.learner.batch_size;

    for (d, set) in domains.train.iter().enumerate() {
        domain_starts.push(batches.len());
        let mut order: Vec<usize> = (0..set.len()).collect();
        if config.shuffle {
            order.shuffle(&mut order_rng);
        }
        for chunk in order.chunks(batch_size) {
            let batch = set.samples.select(Axis(0), chunk);
            let outcome = state.process_batch(batch.view())?;
            if config.audit {
                for (&row, code) in chunk.iter().zip(&outcome.codes) {
                    let entries = code
                        .iter()
                        .zip(&outcome.code_ids)
                        .filter(|(v, _)| **v != 0.0)
                        .map(|(v, id)| (*id, *v))
                        .collect();
                    log.push(LoggedCode {
                        domain: d,
                        row,
                        entries,
                    });
                }
            }
            log::debug!(
                "batch {} domain {} k {} p_c {:.4} births {} deaths {}",
                outcome.metrics.batch,
                d + 1,
                outcome.metrics.k_after,
                outcome.metrics.p_c_pre,
                outcome.metrics.k_n,
                outcome.metrics.killed
            );
            batches.push(outcome.metrics);
            if config.eval_every > 0 && batches.len() % config.eval_every == 0 {
                evaluations.push(Evaluation {
                    after_batch: batches.len() - 1,
                    k: state.k(),
                    results: evaluate_all(&state, &domains)?,
                });
            }
        }
    }

    let final_metrics = evaluate_all(&state, &domains)?;
    let random_baseline = if config.random_baseline {
        Some(random_dictionary_baseline(
            &config,
            &domains,
            config.initial_k,
        )?)
    } else {
        None
    };
    let audit_max_deviation = config.audit.then(|| audit_memory(&state, &domains, &log));

    let report = ExperimentReport {
        variant: config.learner.variant,
        m,
        initial_k: config.initial_k,
        final_k: state.k(),
        size_trace: batches.iter().map(|b| b.k_after).collect(),
        domain_starts,
        batches,
        final_metrics,
        evaluations,
        random_baseline,
        audit_max_deviation,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        config,
    };
    Ok(TrainedRun {
        report,
        state,
        domains,
    })
}

/// Write `report.json`, `trace.csv`, `final.csv` and the dictionary snapshot into `dir`.
pub fn write_outputs(dir: &Path, run: &TrainedRun) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_json(&dir.join(REPORT_FILE), &run.report)?;
    run.report.write_trace(&dir.join(TRACE_FILE))?;
    run.report.write_final(&dir.join(FINAL_FILE))?;
    write_snapshot(&dir.join(DICTIONARY_FILE), &run.state)
}

/// Run one configured experiment, writing outputs when `output_dir` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let run = train(config)?;
    if let Some(dir) = &config.output_dir {
        write_outputs(dir, &run)?;
    }
    Ok(run.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub pass: bool,
    pub max_offsupport_magnitude: f64,
    /// Dictionary entries outside the first domain's dimensions that are non-zero.
    pub offsupport_nonzeros: usize,
    pub support: [usize; 2],
    pub initial_k: usize,
    pub final_k: usize,
    pub domain2_test_pearson: f64,
    pub wall_clock_secs: f64,
}

/// Train as configured and measure how much dictionary mass lies outside the
/// first domain's dimensions. No preconditions are checked.
pub fn check_support_preservation(config: &ExperimentConfig) -> Result<Lemma1Report> {
    let DataSource::Synthetic(spec) = &config.data else {
        return Err(Error::InvalidConfig(
            "the support check needs synthetic data".into(),
        ));
    };
    let [lo, hi] = spec.domain1_dims;
    let run = train(config)?;
    let d = run.state.dictionary().atoms();
    let mut max_off = 0.0_f64;
    let mut off_nnz = 0;
    for (i, row) in d.axis_iter(Axis(0)).enumerate() {
        if (lo..hi).contains(&i) {
            continue;
        }
        for v in row {
            if *v != 0.0 {
                off_nnz += 1;
                max_off = max_off.max(v.abs());
            }
        }
    }
    Ok(Lemma1Report {
        pass: off_nnz == 0,
        max_offsupport_magnitude: max_off,
        offsupport_nonzeros: off_nnz,
        support: [lo, hi],
        initial_k: config.initial_k,
        final_k: run.state.k(),
        domain2_test_pearson: run.report.final_for(2).map_or(0.0, |r| r.pearson),
        wall_clock_secs: run.report.wall_clock_secs,
    })
}

/// Support preservation of fixed-size learning on disjoint-support domains:
/// with sparse elements and codes computed on the stored columns, training on
/// the second domain never moves any element off the first domain's support.
///
/// Refuses configurations outside that setting.
pub fn verify_lemma1(config: &ExperimentConfig) -> Result<Lemma1Report> {
    let bad = |msg: &str| Err(Error::InvalidConfig(format!("support check: {msg}")));
    let DataSource::Synthetic(spec) = &config.data else {
        return bad("data must be synthetic with disjoint domain supports");
    };
    spec.validate()?;
    if config.learner.variant != Variant::Odl {
        return bad("variant must be ODL");
    }
    match config.learner.beta_d {
        Some(b) if b < spec.m => {}
        _ => return bad("dictionary elements must be sparse (beta_d < m)"),
    }
    if config.learner.normalize_for_coding {
        return bad("normalize_for_coding must be off");
    }
    check_support_preservation(config)
}

/// Config for the support check on the default synthetic stream.
pub fn lemma1_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        learner: LearnerConfig {
            variant: Variant::Odl,
            normalize_for_coding: false,
            ..LearnerConfig::default()
        },
        random_baseline: false,
        ..ExperimentConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(variant: Variant) -> ExperimentConfig {
        ExperimentConfig {
            seed: 4,
            initial_k: 6,
            learner: LearnerConfig {
                variant,
                beta_c: 4,
                beta_d: Some(4),
                batch_size: 5,
                c_k: 4,
                lambda_g: 0.05,
                ..Default::default()
            },
            data: DataSource::Synthetic(SyntheticSpec {
                m: 40,
                nnz_per_sample: 5,
                domain1_dims: [0, 20],
                domain2_dims: [20, 40],
                n_train_per_domain: 20,
                n_test_per_domain: 10,
                ..Default::default()
            }),
            ..Default::default()
        }
    }

    #[test]
    fn odl_keeps_size_and_reports_every_domain() {
        let report = run_experiment(&small_config(Variant::Odl)).unwrap();
        assert!(report.size_trace.iter().all(|&k| k == 6));
        assert_eq!(report.final_metrics.len(), 2);
        assert_eq!(report.batches.len(), 8);
        assert_eq!(report.domain_starts, vec![0, 4]);
        assert_eq!(report.random_baseline.as_ref().unwrap().len(), 2);
        assert!(report.audit_max_deviation.unwrap() <= 1e-8);
    }

    #[test]
    fn same_config_same_report_values() {
        let a = run_experiment(&small_config(Variant::Nodl)).unwrap();
        let b = run_experiment(&small_config(Variant::Nodl)).unwrap();
        assert_eq!(a.batches, b.batches);
        assert_eq!(a.final_metrics, b.final_metrics);
    }

    #[test]
    fn batch_larger_than_domain_is_rejected_before_training() {
        let mut c = small_config(Variant::Odl);
        c.learner.batch_size = 21;
        assert!(matches!(run_experiment(&c), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn lemma1_preconditions() {
        let mut c = lemma1_config(0);
        c.learner.normalize_for_coding = true;
        assert!(matches!(verify_lemma1(&c), Err(Error::InvalidConfig(_))));
        let mut c = lemma1_config(0);
        c.learner.variant = Variant::Nodl;
        assert!(verify_lemma1(&c).is_err());
        let mut c = lemma1_config(0);
        c.learner.beta_d = None;
        assert!(verify_lemma1(&c).is_err());
    }

    #[test]
    fn lemma1_vacuous_with_empty_dictionary() {
        let mut c = small_config(Variant::Odl);
        c.initial_k = 0;
        c.learner.normalize_for_coding = false;
        let r = verify_lemma1(&c).unwrap();
        assert!(r.pass);
        assert_eq!(r.max_offsupport_magnitude, 0.0);
    }

    #[test]
    fn csv_source_matches_synthetic_source() {
        let dir = tempfile::tempdir().unwrap();
        let c = small_config(Variant::Nodl).resolved();
        let DataSource::Synthetic(spec) = &c.data else {
            unreachable!()
        };
        spec.generate().unwrap().write(spec, dir.path()).unwrap();
        let mut csv_cfg = c.clone();
        csv_cfg.data = DataSource::Csv {
            train: crate::datagen::TRAIN_FILES
                .iter()
                .map(|f| dir.path().join(f))
                .collect(),
            test: crate::datagen::TEST_FILES
                .iter()
                .map(|f| dir.path().join(f))
                .collect(),
        };
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&csv_cfg).unwrap();
        assert_eq!(a.batches, b.batches);
        assert_eq!(a.final_metrics, b.final_metrics);
    }

    #[test]
    fn csv_source_needs_matching_lists() {
        let mut c = small_config(Variant::Odl);
        c.data = DataSource::Csv {
            train: vec!["a.csv".into()],
            test: vec![],
        };
        assert!(matches!(run_experiment(&c), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn outputs_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small_config(Variant::OdlStar);
        c.output_dir = Some(dir.path().to_owned());
        c.eval_every = 2;
        let report = run_experiment(&c).unwrap();
        assert_eq!(report.evaluations.len(), 4);
        for f in [
            REPORT_FILE,
            TRACE_FILE,
            FINAL_FILE,
            DICTIONARY_FILE,
            "dictionary.json",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let trace = std::fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap();
        assert_eq!(
            trace.lines().next().unwrap(),
            "batch,variant,k,p_c_pre,p_c_post,k_n,killed,mse,pearson,spearman"
        );
        assert_eq!(trace.lines().count(), 9);
        let back: ExperimentReport = io::read_json(&dir.path().join(REPORT_FILE)).unwrap();
        assert_eq!(back.batches, report.batches);
    }
}
