use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use super::config::{parse_schema, DataSource, ExperimentConfig, ModelConfig, CONFIG_KEYS};
use super::emit::{emit_correlation_csv, emit_scatter_svg, metrics_row, write_file, METRICS_HEADER};
use super::pipeline::{load_data, prepare, run_pipeline, verify_outputs};
use crate::baselines::load_classifier_file;
use crate::dataset::{class_counts, load_csv_detected, write_csv, DetectedSchema, LabeledDataset, SyntheticKind, SyntheticSpec};
use crate::dimred::{pca_2d, truncated_svd_2d, tsne_2d, TsneConfig};
use crate::metrics::evaluate;
use crate::numerics::{derive_seed, Rng};
use crate::preprocess::{
    balance_undersample, histogram, pearson_correlation, remove_outliers_iqr, FitOn, Standardizer,
};
use crate::Error;

const EXIT_OK: i32 = 0;
const EXIT_USAGE: i32 = 1;
const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "fraudbench", version, about = "Tabular fraud-detection pipeline and benchmark harness")]
struct Cli {
    /// Experiment config file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the pipeline seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a CSV and print a summary
    Ingest {
        path: PathBuf,
        #[arg(long, default_value = "auto")]
        schema: String,
    },
    /// Balance and remove outliers; write the processed CSV and reports
    Preprocess {
        path: Option<PathBuf>,
        #[arg(long, default_value = "auto")]
        schema: String,
        /// Undersample the majority class
        #[arg(long)]
        balance: bool,
        /// Comma-separated features for IQR outlier removal
        #[arg(long, value_delimiter = ',')]
        outlier_features: Vec<String>,
        /// Rows the quartiles are fitted on: fraud or all
        #[arg(long, default_value = "fraud")]
        fit_on: String,
        #[arg(long, default_value_t = 50)]
        bins: usize,
    },
    /// Two-dimensional embedding (tsne, pca, tsvd) plus a scatter SVG
    Reduce {
        path: Option<PathBuf>,
        #[arg(long, default_value = "auto")]
        schema: String,
        #[arg(long, default_value = "tsne")]
        method: String,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        /// Random subsample size before embedding
        #[arg(long, default_value_t = 2000)]
        max_rows: usize,
        #[arg(long)]
        balance: bool,
        /// z-score features first
        #[arg(long)]
        standardize: bool,
    },
    /// Fit one model on the training split and save it
    Train {
        path: Option<PathBuf>,
        #[arg(long, default_value = "auto")]
        schema: String,
        #[arg(long)]
        model: String,
    },
    /// Score a dataset with a saved model
    Evaluate {
        model_file: PathBuf,
        path: PathBuf,
        #[arg(long, default_value = "auto")]
        schema: String,
        /// scaler.csv written next to the model at training time
        #[arg(long)]
        scaler: Option<PathBuf>,
    },
    /// Run the full pipeline from --config
    Benchmark,
    /// Write a synthetic fixture to <out>/synth.csv
    Synth {
        /// blobs or xor
        #[arg(long, default_value = "blobs")]
        kind: String,
        /// Rows per class
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        features: usize,
        #[arg(long, default_value_t = 3.0)]
        mu: f64,
    },
    /// Recompute metrics.csv from the ROC CSVs in a benchmark output directory
    #[command(hide = true)]
    Verify { dir: Option<PathBuf> },
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn config_help() -> String {
    let mut s = String::from("Config file keys, by [section]:\n");
    for (section, keys) in CONFIG_KEYS {
        let _ = writeln!(s, "  [{section}] {}", keys.join(", "));
    }
    s.push_str("\nExit codes: 0 success, 1 usage error, 2 runtime failure.");
    s
}

/// Parses `argv` (program name first), runs the command and returns the process exit code.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cmd = Cli::command().after_long_help(config_help());
    let cli = match cmd.try_get_matches_from(argv).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `fraudbench --help` for usage");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {}", error_chain(&e));
            EXIT_RUNTIME
        }
    }
}

fn error_chain(e: &Error) -> String {
    let mut s = e.to_string();
    let mut source = std::error::Error::source(e);
    while let Some(inner) = source {
        // thiserror already folds Stage sources into the message
        if !s.contains(&inner.to_string()) {
            let _ = write!(s, ": {inner}");
        }
        source = inner.source();
    }
    s
}

fn load_config(cli: &Cli) -> CliResult<Option<ExperimentConfig>> {
    let Some(path) = &cli.config else { return Ok(None) };
    if !path.is_file() {
        return Err(Failure::Usage(format!("config file not found: {}", path.display())));
    }
    let mut cfg = ExperimentConfig::load(path)
        .map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(Some(cfg))
}

fn schema_arg(s: &str) -> CliResult<crate::dataset::Schema> {
    parse_schema(s).map_err(|e| Failure::Usage(e.to_string()))
}

/// Data from the positional path if given, else from the config's `[data]`.
fn data_source(path: Option<&Path>, schema: &str, cfg: Option<&ExperimentConfig>) -> CliResult<DataSource> {
    match (path, cfg) {
        (Some(p), _) => Ok(DataSource::File {
            path: p.to_path_buf(),
            schema: schema_arg(schema)?,
        }),
        (None, Some(c)) => Ok(c.data.clone()),
        (None, None) => Err(Failure::Usage("give a data path or --config".into())),
    }
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.map(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = load_config(&cli)?;
    let seed = cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let out = out_dir(&cli, cfg.as_ref());
    match &cli.command {
        Command::Ingest { path, schema } => ingest(path, schema_arg(schema)?),
        Command::Preprocess {
            path,
            schema,
            balance,
            outlier_features,
            fit_on,
            bins,
        } => {
            let source = data_source(path.as_deref(), schema, cfg.as_ref())?;
            let (balance, features, fit_on) = match &cfg {
                Some(c) if path.is_none() => (c.balance, c.outlier_features.clone(), c.outlier_fit_on),
                _ => {
                    let fit_on = match fit_on.as_str() {
                        "fraud" => FitOn::FraudClassOnly,
                        "all" => FitOn::AllRows,
                        other => return Err(Failure::Usage(format!("unknown --fit-on '{other}' (fraud or all)"))),
                    };
                    (*balance, outlier_features.clone(), fit_on)
                }
            };
            preprocess(&source, balance, &features, fit_on, *bins, seed, &out)
        }
        Command::Reduce {
            path,
            schema,
            method,
            perplexity,
            iters,
            max_rows,
            balance,
            standardize,
        } => {
            let source = data_source(path.as_deref(), schema, cfg.as_ref())?;
            let tsne = TsneConfig {
                perplexity: *perplexity,
                n_iter: *iters,
                seed,
                ..Default::default()
            };
            if !["tsne", "pca", "tsvd"].contains(&method.as_str()) {
                return Err(Failure::Usage(format!("unknown --method '{method}' (tsne, pca, tsvd)")));
            }
            reduce(&source, method, &tsne, *max_rows, *balance, *standardize, seed, &out)
        }
        Command::Train { path, schema, model } => {
            let source = data_source(path.as_deref(), schema, cfg.as_ref())?;
            let mut run_cfg = match &cfg {
                Some(c) => ExperimentConfig { data: source, ..c.clone() },
                None => ExperimentConfig::minimal(source),
            };
            run_cfg.seed = seed;
            let spec = match run_cfg.models.iter().find(|m| m.config.name() == model) {
                Some(s) => s.clone(),
                None => super::config::ModelSpec {
                    config: ModelConfig::default_for(model).map_err(|e| Failure::Usage(e.to_string()))?,
                    standardize: None,
                },
            };
            train(&run_cfg, &spec, &out)
        }
        Command::Evaluate {
            model_file,
            path,
            schema,
            scaler,
        } => evaluate_saved(model_file, path, schema_arg(schema)?, scaler.as_deref(), &out),
        Command::Benchmark => {
            let cfg = cfg.ok_or_else(|| Failure::Usage("benchmark needs --config <path>".into()))?;
            let table = run_pipeline(&cfg)?;
            print!("{}", table.markdown());
            println!("\nwrote {}", cfg.output_dir.display());
            Ok(())
        }
        Command::Synth { kind, n, features, mu } => {
            let kind = match kind.as_str() {
                "blobs" => SyntheticKind::GaussianBlobs { mu: *mu },
                "xor" => SyntheticKind::XorQuadrants,
                other => return Err(Failure::Usage(format!("unknown --kind '{other}' (blobs or xor)"))),
            };
            let ds = crate::dataset::generate_synthetic(&SyntheticSpec {
                kind,
                n_per_class: *n,
                n_features: *features,
                seed,
            })?;
            let path = out.join("synth.csv");
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_csv(&ds, &path)?;
            println!("wrote {} ({} rows)", path.display(), ds.n_rows());
            Ok(())
        }
        Command::Verify { dir } => {
            let dir = dir.clone().unwrap_or(out);
            for line in verify_outputs(&dir)? {
                println!("{line}");
            }
            Ok(())
        }
    }
}

fn ingest(path: &Path, schema: crate::dataset::Schema) -> CliResult<()> {
    let (ds, detected) = load_csv_detected(path, schema)?;
    let c = class_counts(&ds);
    let layout = match detected {
        DetectedSchema::Legacy2013 => "2013",
        DetectedSchema::Modern2023 => "2023",
        DetectedSchema::Generic => "generic",
    };
    println!("file: {}", path.display());
    println!("schema: {layout}");
    println!("rows: {}", ds.n_rows());
    println!("features: {}", ds.n_cols());
    println!("fraud: {}", c.n_fraud);
    println!("legit: {}", c.n_legit);
    println!("fraud_ratio: {}", c.fraud_ratio);
    Ok(())
}

fn preprocess(
    source: &DataSource,
    balance: bool,
    features: &[String],
    fit_on: FitOn,
    bins: usize,
    seed: u64,
    out: &Path,
) -> CliResult<()> {
    let (raw, _) = load_data(source)?;
    let mut ds = raw.clone();
    if balance {
        ds = balance_undersample(&ds, derive_seed(seed, "balance"))?;
    }
    let before = ds.clone();
    let names: Vec<&str> = features.iter().map(String::as_str).collect();
    if !names.is_empty() {
        let (kept, report) = remove_outliers_iqr(&ds, &names, fit_on)?;
        write_file(&out.join("outliers.csv"), report.to_csv())?;
        println!("outlier removal dropped {} of {} rows", report.rows_removed, ds.n_rows());
        ds = kept;
    }
    emit_correlation_csv(&pearson_correlation(&raw)?, out.join("correlation_before.csv"))?;
    emit_correlation_csv(&pearson_correlation(&ds)?, out.join("correlation_after.csv"))?;

    let hist_cols: Vec<String> = if names.is_empty() {
        ds.columns().iter().map(|c| c.to_string()).collect()
    } else {
        features.to_vec()
    };
    let mut hist = String::from("feature,stage,bin_lo,bin_hi,count\n");
    for name in &hist_cols {
        let b = before.column_values(name)?;
        let lo = b.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / bins.max(1) as f64;
        for (label, values) in [("before", b.clone()), ("after", ds.column_values(name)?)] {
            for (k, count) in histogram(&values, lo, hi, bins.max(1)).iter().enumerate() {
                let _ = writeln!(hist, "{name},{label},{},{},{count}", lo + k as f64 * width, lo + (k + 1) as f64 * width);
            }
        }
    }
    write_file(&out.join("histograms.csv"), hist)?;
    write_csv(&ds, out.join("processed.csv"))?;
    let c = class_counts(&ds);
    println!("wrote {} ({} rows: {} fraud, {} legit)", out.join("processed.csv").display(), ds.n_rows(), c.n_fraud, c.n_legit);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn reduce(
    source: &DataSource,
    method: &str,
    tsne: &TsneConfig,
    max_rows: usize,
    balance: bool,
    standardize: bool,
    seed: u64,
    out: &Path,
) -> CliResult<()> {
    let (mut ds, _) = load_data(source)?;
    if balance {
        ds = balance_undersample(&ds, derive_seed(seed, "balance"))?;
    }
    if ds.n_rows() > max_rows {
        let mut idx = Rng::derive(seed, "reduce/subsample").sample_indices(ds.n_rows(), max_rows);
        idx.sort_unstable();
        ds = ds.select_rows(&idx);
    }
    if standardize {
        ds = Standardizer::fit(&ds)?.transform(&ds)?;
    }
    let emb = match method {
        "pca" => pca_2d(&ds)?,
        "tsvd" => truncated_svd_2d(&ds)?,
        _ => tsne_2d(&ds, tsne)?,
    };
    emit_scatter_svg(&emb, out.join("embedding.svg"))?;
    for (k, v) in &emb.diagnostics {
        let values: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
        println!("{k}: {}", values.join(", "));
    }
    println!("wrote {} ({} points)", out.join("embedding.svg").display(), emb.n_points());
    Ok(())
}

fn train(cfg: &ExperimentConfig, spec: &super::config::ModelSpec, out: &Path) -> CliResult<()> {
    let data = prepare(cfg)?;
    let name = spec.config.name();
    let standardized = cfg.uses_standardization(spec);
    let (train_ds, test_ds) = if standardized {
        let scaler = Standardizer::fit(&data.train)?;
        write_file(&out.join("scaler.csv"), scaler.to_csv())?;
        (scaler.transform(&data.train)?, scaler.transform(&data.test)?)
    } else {
        (data.train.clone(), data.test.clone())
    };
    let mut model = spec.config.build();
    model
        .fit(&train_ds, derive_seed(cfg.seed, &format!("model/{name}")))
        .map_err(|e| Error::in_stage(format!("fit {name}"), e))?;
    let path = out.join(format!("{name}.bin"));
    write_file(&path, model.to_bytes()?)?;
    let scores = model.score_dataset(&test_ds)?;
    let report = evaluate(&scores, test_ds.labels(), model.threshold())?;
    println!("model: {name} ({})", model.describe());
    println!("train rows: {}, held-out rows: {}", train_ds.n_rows(), test_ds.n_rows());
    println!("held-out macro F1: {:.4}, ROC AUC: {:.4}", report.macro_avg.f1, report.roc_auc);
    println!("wrote {}", path.display());
    Ok(())
}

fn evaluate_saved(
    model_file: &Path,
    path: &Path,
    schema: crate::dataset::Schema,
    scaler: Option<&Path>,
    out: &Path,
) -> CliResult<()> {
    let model = load_classifier_file(model_file)?;
    let (mut ds, _): (LabeledDataset, _) = load_csv_detected(path, schema)?;
    if let Some(s) = scaler {
        let text = std::fs::read_to_string(s).map_err(|e| Error::io(s, e))?;
        ds = Standardizer::from_csv(&text)?.transform(&ds)?;
    }
    let scores = model.score_dataset(&ds)?;
    let report = evaluate(&scores, ds.labels(), model.threshold())?;
    let name = model.name();
    write_file(
        &out.join("metrics.csv"),
        format!("{METRICS_HEADER}\n{}\n", metrics_row(name, &report, scaler.is_some())),
    )?;
    write_file(&out.join(format!("roc_{name}.csv")), report.roc_csv())?;
    let m = &report.macro_avg;
    println!(
        "{name}: precision {:.4} recall {:.4} f1 {:.4} roc_auc {:.4} ({} rows)",
        m.precision,
        m.recall,
        m.f1,
        report.roc_auc,
        ds.n_rows()
    );
    Ok(())
}
