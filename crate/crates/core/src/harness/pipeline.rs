use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{DataSource, ExperimentConfig, StageOrder};
use super::emit::{metrics_row, write_file, METRICS_HEADER};
use crate::dataset::{generate_synthetic, load_csv_detected, DetectedSchema, LabeledDataset};
use crate::metrics::{
    confusion_from_curve, evaluate, macro_average, parse_roc_csv, precision_recall_f1, trapezoid_area, EvalReport,
};
use crate::numerics::derive_seed;
use crate::preprocess::{apply_iqr_bounds, balance_undersample, fit_iqr_bounds, stratified_split, OutlierRemovalReport, Standardizer};
use crate::{Error, Result};

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::in_stage(name, e))
}

pub fn load_data(source: &DataSource) -> Result<(LabeledDataset, Option<DetectedSchema>)> {
    match source {
        DataSource::File { path, schema } => {
            let (ds, detected) = load_csv_detected(path, *schema)?;
            Ok((ds, Some(detected)))
        }
        DataSource::Synthetic(spec) => Ok((generate_synthetic(spec)?, None)),
    }
}

/// Train/test data after every configured preprocessing stage except scaling.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub outliers: Option<OutlierRemovalReport>,
    pub rows_loaded: usize,
    pub schema: Option<DetectedSchema>,
}

fn remove_outliers(cfg: &ExperimentConfig, ds: &LabeledDataset) -> Result<(LabeledDataset, OutlierRemovalReport)> {
    let names: Vec<&str> = cfg.outlier_features.iter().map(String::as_str).collect();
    let bounds = fit_iqr_bounds(ds, &names, cfg.outlier_fit_on)?;
    apply_iqr_bounds(ds, &bounds)
}

/// Runs load, column drops, balancing, outlier removal and the split in the configured order.
pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (ds, schema) = stage("load", load_data(&cfg.data))?;
    let rows_loaded = ds.n_rows();
    let drop: Vec<&str> = cfg.drop_columns.iter().map(String::as_str).collect();
    let ds = stage("drop_columns", ds.drop_columns(&drop))?;
    let balance_seed = derive_seed(cfg.seed, "balance");
    let split_seed = derive_seed(cfg.seed, "split");
    let outliers_on = !cfg.outlier_features.is_empty();

    let (train, test, outliers) = match cfg.order {
        StageOrder::BalanceFirst => {
            let ds = if cfg.balance {
                stage("balance", balance_undersample(&ds, balance_seed))?
            } else {
                ds
            };
            let (ds, report) = if outliers_on {
                let (d, r) = stage("outliers", remove_outliers(cfg, &ds))?;
                (d, Some(r))
            } else {
                (ds, None)
            };
            let (train, test) = stage("split", stratified_split(&ds, cfg.test_fraction, split_seed))?;
            (train, test, report)
        }
        StageOrder::LeakFree => {
            let (train, test) = stage("split", stratified_split(&ds, cfg.test_fraction, split_seed))?;
            let train = if cfg.balance {
                stage("balance", balance_undersample(&train, balance_seed))?
            } else {
                train
            };
            let (train, report) = if outliers_on {
                let (d, r) = stage("outliers", remove_outliers(cfg, &train))?;
                (d, Some(r))
            } else {
                (train, None)
            };
            (train, test, report)
        }
    };
    Ok(PreparedData {
        train,
        test,
        outliers,
        rows_loaded,
        schema,
    })
}

#[derive(Debug, Clone)]
pub struct BenchmarkRow {
    pub model: String,
    pub standardized: bool,
    /// Hyperparameters as reported by the classifier.
    pub description: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
    pub fingerprint: String,
    pub stage_order: StageOrder,
    pub n_train: usize,
    pub n_test: usize,
}

impl BenchmarkTable {
    pub fn row(&self, model: &str) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = format!("{METRICS_HEADER}\n");
        for r in &self.rows {
            out.push_str(&metrics_row(&r.model, &r.report, r.standardized));
            out.push('\n');
        }
        out
    }

    pub fn markdown(&self) -> String {
        let mut s = String::from("# Benchmark\n\n");
        let _ = writeln!(s, "- config fingerprint: `{}`", self.fingerprint);
        let _ = writeln!(s, "- stage order: {}", self.stage_order.name());
        let _ = writeln!(s, "- rows: {} train, {} test", self.n_train, self.n_test);
        s.push_str("- precision, recall and F1 are macro averages over both classes; per-class and weighted values are in metrics.csv\n");
        s.push_str("- precision and recall with an empty denominator are reported as 0\n\n");
        s.push_str("| Model | Precision | Recall | F1 Score | ROC AUC |\n|---|---|---|---|---|\n");
        for r in &self.rows {
            let m = &r.report.macro_avg;
            let _ = writeln!(
                s,
                "| {} | {:.4} | {:.4} | {:.4} | {:.4} |",
                r.model, m.precision, m.recall, m.f1, r.report.roc_auc
            );
        }
        s.push_str("\n## Hyperparameters\n\n");
        for r in &self.rows {
            let _ = writeln!(s, "- {}: {} standardized={}", r.model, r.description, r.standardized);
        }
        s
    }
}

/// Files produced by a run, written together once every stage succeeded.
struct Outputs {
    dir: PathBuf,
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, rel: impl AsRef<Path>, bytes: impl Into<Vec<u8>>) {
        self.files.push((self.dir.join(rel), bytes.into()));
    }

    /// Writes every file; on failure removes whatever was written.
    fn commit(self) -> Result<()> {
        let mut written: Vec<&Path> = Vec::new();
        let dir_existed = self.dir.exists();
        for (path, bytes) in &self.files {
            if let Err(e) = write_file(path, bytes) {
                for p in written {
                    let _ = fs::remove_file(p);
                }
                if !dir_existed {
                    let _ = fs::remove_dir_all(&self.dir);
                }
                return Err(Error::in_stage("write", e));
            }
            written.push(path);
        }
        Ok(())
    }
}

/// The end-to-end benchmark. Outputs land in `cfg.output_dir`:
/// `metrics.csv`, `table.md`, `roc_<model>.csv`, `models/<model>.bin`,
/// `scaler.csv`, `outliers.csv` and `config.resolved.cfg`.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<BenchmarkTable> {
    let data = prepare(cfg)?;
    let mut out = Outputs {
        dir: cfg.output_dir.clone(),
        files: Vec::new(),
    };

    let needs_scaling = cfg.models.iter().any(|m| cfg.uses_standardization(m));
    let scaled = if needs_scaling {
        let scaler = stage("standardize", Standardizer::fit(&data.train))?;
        let train = stage("standardize", scaler.transform(&data.train))?;
        let test = stage("standardize", scaler.transform(&data.test))?;
        out.add("scaler.csv", scaler.to_csv());
        Some((train, test))
    } else {
        None
    };

    let mut rows = Vec::new();
    for spec in &cfg.models {
        let name = spec.config.name();
        let standardized = cfg.uses_standardization(spec);
        let (train, test) = match (&scaled, standardized) {
            (Some((tr, te)), true) => (tr, te),
            _ => (&data.train, &data.test),
        };
        let mut model = spec.config.build();
        let fit_stage = format!("fit {name}");
        stage(&fit_stage, model.fit(train, derive_seed(cfg.seed, &format!("model/{name}"))))?;
        let eval_stage = format!("evaluate {name}");
        let scores = stage(&eval_stage, model.score_dataset(test))?;
        let report = stage(&eval_stage, evaluate(&scores, test.labels(), model.threshold()))?;
        out.add(format!("roc_{name}.csv"), report.roc_csv());
        out.add(format!("models/{name}.bin"), stage(&fit_stage, model.to_bytes())?);
        rows.push(BenchmarkRow {
            model: name.to_string(),
            standardized,
            description: model.describe(),
            report,
        });
    }

    let table = BenchmarkTable {
        rows,
        fingerprint: cfg.fingerprint(),
        stage_order: cfg.order,
        n_train: data.train.n_rows(),
        n_test: data.test.n_rows(),
    };
    out.add("metrics.csv", table.metrics_csv());
    out.add("table.md", table.markdown());
    out.add("config.resolved.cfg", cfg.resolved_text());
    if let Some(r) = &data.outliers {
        out.add("outliers.csv", r.to_csv());
    }
    out.commit()?;
    Ok(table)
}

/// Recomputes each metrics row from its ROC CSV, threshold and class totals.
/// Returns one line per model; any disagreement is an error.
pub fn verify_outputs(dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    let metrics_path = dir.join("metrics.csv");
    let text = fs::read_to_string(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("metrics.csv has no '{name}' column"),
            })
    };
    let mut report = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        let num = |name: &str| -> Result<f64> {
            let c = cells.get(col(name)?).ok_or_else(|| Error::Parse {
                line: i + 2,
                message: "short row".into(),
            })?;
            c.parse().map_err(|_| Error::Parse {
                line: i + 2,
                message: format!("bad number '{c}' in {name}"),
            })
        };
        let model = cells[0];
        let roc_path = dir.join(format!("roc_{model}.csv"));
        let roc_text = fs::read_to_string(&roc_path).map_err(|e| Error::io(&roc_path, e))?;
        let points = parse_roc_csv(&roc_text)?;
        let (n_pos, n_neg) = (num("n_pos")? as usize, num("n_neg")? as usize);
        let cm = confusion_from_curve(&points, num("threshold")?, n_pos, n_neg);
        let fraud = precision_recall_f1(&cm);
        let legit = precision_recall_f1(&cm.swapped());
        let macro_avg = macro_average(&legit, &fraud);
        let checks = [
            ("tp", cm.tp as f64),
            ("fp", cm.fp as f64),
            ("tn", cm.tn as f64),
            ("fn", cm.fn_ as f64),
            ("precision_macro", macro_avg.precision),
            ("recall_macro", macro_avg.recall),
            ("f1_macro", macro_avg.f1),
            ("precision_fraud", fraud.precision),
            ("recall_fraud", fraud.recall),
            ("f1_fraud", fraud.f1),
            ("roc_auc", trapezoid_area(&points)),
        ];
        for (name, recomputed) in checks {
            let stored = num(name)?;
            if (stored - recomputed).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "{model}: {name} is {stored} in metrics.csv but {recomputed} from its ROC curve"
                )));
            }
        }
        report.push(format!("{model}: ok ({} values recomputed)", checks.len()));
    }
    if report.is_empty() {
        return Err(Error::invalid(format!("{} lists no models", metrics_path.display())));
    }
    Ok(report)
}
