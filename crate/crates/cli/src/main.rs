//! `nodl`: generate synthetic streams, train ODL/NODL variants, check support
//! preservation, sweep one parameter, and encode data with a saved dictionary.
//!
//! Exit status: 0 on success, 1 on a runtime failure (or a failed support
//! check), 2 on a configuration error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::{Array2, Axis};
use nodl_core::datagen::{MANIFEST_FILE, TEST_FILES, TRAIN_FILES};
use nodl_core::harness::{self, io, lemma1_config, LEMMA1_FILE};
use nodl_core::learner::snapshot::read_snapshot;
use nodl_core::{DataSource, Encoder, Error, ExperimentConfig, MetricRecord, Result, Variant};
use rayon::prelude::*;

#[derive(Parser, Debug)]
#[command(
    name = "nodl",
    version,
    about = "Online dictionary learning with neurogenesis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON experiment config; missing keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment seed; determines data, initial dictionary and stream order.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "nodl-out")]
    out: PathBuf,
    /// Config overrides, `key=value` (flat key or dotted path).
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the two-domain synthetic train/test CSVs and a manifest to --out.
    Synth(Common),
    /// Train one variant; outputs go to <out>/<variant>/.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        variant: Option<Variant>,
        /// Directory written by `synth`; trains on its CSVs instead of regenerating.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Check that fixed-size learning keeps every element on the first domain's support.
    Lemma1(Common),
    /// Train once per value of one parameter; outputs go to <out>/sweep_<param>_<value>/.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        variant: Option<Variant>,
        /// Config key to vary.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Encode a CSV of samples with a saved dictionary; writes codes.csv and metrics.json.
    Export {
        /// Dictionary snapshot CSV (with its JSON sidecar next to it).
        #[arg(long)]
        dictionary: PathBuf,
        /// Samples to encode, one per row.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "nodl-out")]
        out: PathBuf,
    },
}

fn load_config(
    base: ExperimentConfig,
    common: &Common,
    extra: &[(&str, serde_json::Value)],
) -> Result<ExperimentConfig> {
    let mut tree = config::build(&base, common.config.as_deref(), &common.overrides)?;
    for (key, value) in extra {
        config::set(&mut tree, key, value.clone())?;
    }
    if let Some(seed) = common.seed {
        config::set(&mut tree, "seed", seed.into())?;
    }
    config::finish(tree)
}

fn variant_override(variant: Option<Variant>) -> Vec<(&'static str, serde_json::Value)> {
    variant
        .map(|v| vec![("learner.variant", v.name().into())])
        .unwrap_or_default()
}

fn data_dir_source(dir: &Path) -> DataSource {
    DataSource::Csv {
        train: TRAIN_FILES.iter().map(|f| dir.join(f)).collect(),
        test: TEST_FILES.iter().map(|f| dir.join(f)).collect(),
    }
}

fn print_summary(dir: &Path, report: &nodl_core::ExperimentReport) {
    println!(
        "{}: k {} -> {} over {} batches in {:.1}s; outputs in {}",
        report.variant,
        report.initial_k,
        report.final_k,
        report.batches.len(),
        report.wall_clock_secs,
        dir.display()
    );
    for r in &report.final_metrics {
        println!(
            "  domain {} test: pearson {:.4} spearman {:.4} mse {:.6}",
            r.domain, r.metrics.pearson, r.metrics.spearman, r.metrics.mse
        );
    }
    for r in report.random_baseline.iter().flatten() {
        println!(
            "  domain {} random-D: pearson {:.4}",
            r.domain, r.metrics.pearson
        );
    }
}

fn synth(common: &Common) -> Result<ExitCode> {
    let config = load_config(ExperimentConfig::default(), common, &[])?.resolved();
    let DataSource::Synthetic(spec) = &config.data else {
        return Err(Error::InvalidConfig(
            "synth needs a synthetic data section".into(),
        ));
    };
    spec.generate()?.write(spec, &common.out)?;
    println!(
        "wrote {} and {} to {}",
        TRAIN_FILES.join(", "),
        MANIFEST_FILE,
        common.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn train(common: &Common, variant: Option<Variant>, data: Option<&Path>) -> Result<ExitCode> {
    let mut config = load_config(
        ExperimentConfig::default(),
        common,
        &variant_override(variant),
    )?;
    if let Some(dir) = data {
        config.data = data_dir_source(dir);
    }
    let dir = common.out.join(config.learner.variant.name());
    config.output_dir = Some(dir.clone());
    let report = nodl_core::run_experiment(&config)?;
    print_summary(&dir, &report);
    Ok(ExitCode::SUCCESS)
}

fn lemma1(common: &Common) -> Result<ExitCode> {
    let config = load_config(lemma1_config(0), common, &[])?;
    let report = nodl_core::verify_lemma1(&config)?;
    std::fs::create_dir_all(&common.out)
        .map_err(|e| Error::Internal(format!("{}: {e}", common.out.display())))?;
    io::write_json(&common.out.join(LEMMA1_FILE), &report)?;
    println!(
        "support check {}: max off-support magnitude {:e}, {} off-support non-zeros, k = {}",
        if report.pass { "passed" } else { "FAILED" },
        report.max_offsupport_magnitude,
        report.offsupport_nonzeros,
        report.final_k
    );
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn sweep_threads() -> Result<usize> {
    match std::env::var("NODL_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::InvalidConfig(format!(
                "NODL_THREADS must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn sweep(
    common: &Common,
    variant: Option<Variant>,
    param: &str,
    values: &[String],
) -> Result<ExitCode> {
    // Build every setting first so a bad value fails before any training.
    let mut settings = Vec::new();
    for value in values {
        let mut extra = variant_override(variant);
        extra.push((param, config::parse_value(value)));
        let mut config = load_config(ExperimentConfig::default(), common, &extra)?;
        let dir = common.out.join(format!("sweep_{param}_{value}"));
        config.output_dir = Some(dir.clone());
        settings.push((value.clone(), dir, config));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sweep_threads()?)
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    let reports = pool.install(|| {
        settings
            .par_iter()
            .map(|(_, _, config)| nodl_core::run_experiment(config))
            .collect::<Result<Vec<_>>>()
    })?;

    let summary = common.out.join("sweep_summary.csv");
    let mut text = format!("{param},variant,final_k,pearson_d1,pearson_d2\n");
    for ((value, dir, _), report) in settings.iter().zip(&reports) {
        let p = |d| report.final_for(d).map_or(f64::NAN, |r| r.pearson);
        text.push_str(&format!(
            "{value},{},{},{},{}\n",
            report.variant,
            report.final_k,
            p(1),
            p(2)
        ));
        print_summary(dir, report);
    }
    std::fs::write(&summary, text)
        .map_err(|e| Error::Internal(format!("{}: {e}", summary.display())))?;
    Ok(ExitCode::SUCCESS)
}

fn export(dictionary: &Path, input: &Path, out: &Path) -> Result<ExitCode> {
    let (dict, meta) = read_snapshot(dictionary)?;
    let samples = harness::load_matrix_csv(input)?;
    if samples.m() != dict.m() {
        return Err(Error::DimensionMismatch {
            expected: dict.m(),
            got: samples.m(),
            context: "input columns vs dictionary rows",
        });
    }
    let enc = Encoder::new(dict.atoms(), meta.config.normalize_for_coding);
    let target = nodl_core::SparsityTarget::with_tolerances(
        meta.config.beta_c.min(dict.k()),
        meta.config.eps_beta,
        meta.config.eps_lambda,
    );
    let codes = enc.encode_rows(samples.samples.view(), &target)?;
    let recon = codes
        .iter()
        .map(|c| enc.reconstruct(c))
        .collect::<Result<Vec<_>>>()?;
    let metrics = MetricRecord::from_pairs(
        samples
            .samples
            .axis_iter(Axis(0))
            .zip(recon.iter().map(|r| r.view())),
    )?;

    std::fs::create_dir_all(out).map_err(|e| Error::Internal(format!("{}: {e}", out.display())))?;
    let mut matrix = Array2::zeros((codes.len(), dict.k()));
    for (mut row, code) in matrix.axis_iter_mut(Axis(0)).zip(&codes) {
        row.assign(&code.alpha);
    }
    io::write_matrix_csv(&out.join("codes.csv"), matrix.view())?;
    io::write_json(&out.join("metrics.json"), &metrics)?;
    println!(
        "encoded {} samples with {} elements: pearson {:.4} spearman {:.4} mse {:.6}",
        samples.len(),
        dict.k(),
        metrics.pearson,
        metrics.spearman,
        metrics.mse
    );
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Synth(common) => synth(common),
        Command::Train {
            common,
            variant,
            data,
        } => train(common, *variant, data.as_deref()),
        Command::Lemma1(common) => lemma1(common),
        Command::Sweep {
            common,
            variant,
            param,
            values,
        } => sweep(common, *variant, param, values),
        Command::Export {
            dictionary,
            input,
            out,
        } => export(dictionary, input, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
