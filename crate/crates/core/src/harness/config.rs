//! Experiment configuration: bracketed sections of `key = value` lines.
//!
//! ```text
//! [data]
//! path = data/creditcard.csv      # or: synthetic = blobs | xor
//! schema = 2013                   # auto | 2013 | 2023
//! drop_columns =
//!
//! [pipeline]
//! seed = 42
//! order = balance_first           # balance_first | leak_free
//! balance = true
//! outlier_features = V14, V12, V10
//! outlier_fit_on = fraud          # fraud | all
//! test_fraction = 0.2
//! standardize = auto              # auto | on | off
//!
//! [models]
//! list = logistic, knn, svm, tree, mlp, transformer
//!
//! [transformer]
//! d_model = 32
//!
//! [output]
//! dir = out/run
//! ```
//!
//! `#` starts a comment. Unknown sections and keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::baselines::{Classifier, DecisionTree, Knn, LinearSvm, LogisticRegression, Mlp, MODEL_NAMES};
use crate::dataset::{Schema, SyntheticKind, SyntheticSpec};
use crate::numerics::TrainConfig;
use crate::preprocess::FitOn;
use crate::transformer::{TransformerClassifier, TransformerHyper};
use crate::{Error, Result};

/// Every accepted key, by section. Printed by `--help`.
pub const CONFIG_KEYS: &[(&str, &[&str])] = &[
    ("data", &["path", "schema", "drop_columns", "synthetic", "n_per_class", "n_features", "mu", "seed"]),
    (
        "pipeline",
        &["seed", "order", "balance", "outlier_features", "outlier_fit_on", "test_fraction", "standardize"],
    ),
    ("models", &["list"]),
    ("output", &["dir"]),
    ("logistic", &["epochs", "batch_size", "lr", "l2", "shuffle", "standardize"]),
    ("svm", &["epochs", "batch_size", "lr", "l2", "shuffle", "standardize"]),
    ("mlp", &["epochs", "batch_size", "lr", "l2", "shuffle", "standardize"]),
    ("knn", &["k", "standardize"]),
    ("tree", &["max_depth", "min_samples_split", "standardize"]),
    (
        "transformer",
        &[
            "d_model", "n_heads", "n_layers", "d_ff", "dropout", "epochs", "batch_size", "lr", "l2", "shuffle",
            "standardize",
        ],
    ),
];

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File { path: PathBuf, schema: Schema },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StageOrder {
    /// balance, outlier removal, split, standardize
    #[default]
    BalanceFirst,
    /// split first; balancing, outlier bounds and scaling see training rows only
    LeakFree,
}

impl StageOrder {
    pub fn name(&self) -> &'static str {
        match self {
            StageOrder::BalanceFirst => "balance_first",
            StageOrder::LeakFree => "leak_free",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StandardizeMode {
    /// on for knn, svm, mlp and transformer; off for logistic and tree
    #[default]
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    Logistic(TrainConfig),
    Knn { k: usize },
    Svm(TrainConfig),
    Tree { max_depth: Option<usize>, min_samples_split: usize },
    Mlp(TrainConfig),
    Transformer { hyper: TransformerHyper, train: TrainConfig },
}

impl ModelConfig {
    pub fn default_for(name: &str) -> Result<ModelConfig> {
        Ok(match name {
            "logistic" => ModelConfig::Logistic(LogisticRegression::default().config),
            "knn" => ModelConfig::Knn { k: Knn::default().k },
            "svm" => ModelConfig::Svm(LinearSvm::default().config),
            "tree" => {
                let t = DecisionTree::default();
                ModelConfig::Tree {
                    max_depth: t.max_depth,
                    min_samples_split: t.min_samples_split,
                }
            }
            "mlp" => ModelConfig::Mlp(Mlp::default().config),
            "transformer" => ModelConfig::Transformer {
                hyper: TransformerHyper::for_features(1),
                train: TrainConfig::default(),
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown model '{other}' (expected one of {})",
                    MODEL_NAMES.join(", ")
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Logistic(_) => "logistic",
            ModelConfig::Knn { .. } => "knn",
            ModelConfig::Svm(_) => "svm",
            ModelConfig::Tree { .. } => "tree",
            ModelConfig::Mlp(_) => "mlp",
            ModelConfig::Transformer { .. } => "transformer",
        }
    }

    /// Unfitted classifier with these hyperparameters.
    pub fn build(&self) -> Box<dyn Classifier> {
        match self {
            ModelConfig::Logistic(c) => Box::new(LogisticRegression::new(c.clone())),
            ModelConfig::Knn { k } => Box::new(Knn::new(*k)),
            ModelConfig::Svm(c) => Box::new(LinearSvm::new(c.clone())),
            ModelConfig::Tree {
                max_depth,
                min_samples_split,
            } => Box::new(DecisionTree::new(*max_depth, *min_samples_split)),
            ModelConfig::Mlp(c) => Box::new(Mlp::new(c.clone())),
            ModelConfig::Transformer { hyper, train } => Box::new(TransformerClassifier::new(*hyper, train.clone())),
        }
    }

    fn default_standardize(&self) -> bool {
        !matches!(self, ModelConfig::Logistic(_) | ModelConfig::Tree { .. })
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self {
            ModelConfig::Logistic(c) | ModelConfig::Svm(c) | ModelConfig::Mlp(c) => set_train(c, key, value),
            ModelConfig::Knn { k } => {
                *k = parse_num(key, value)?;
                Ok(())
            }
            ModelConfig::Tree {
                max_depth,
                min_samples_split,
            } => {
                match key {
                    "max_depth" => {
                        *max_depth = match value {
                            "none" => None,
                            v => Some(parse_num(key, v)?),
                        }
                    }
                    _ => *min_samples_split = parse_num(key, value)?,
                }
                Ok(())
            }
            ModelConfig::Transformer { hyper, train } => match key {
                "d_model" => parse_into(&mut hyper.d_model, key, value),
                "n_heads" => parse_into(&mut hyper.n_heads, key, value),
                "n_layers" => parse_into(&mut hyper.n_layers, key, value),
                "d_ff" => parse_into(&mut hyper.d_ff, key, value),
                "dropout" => parse_into(&mut hyper.dropout_rate, key, value),
                _ => set_train(train, key, value),
            },
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Logistic(c) | ModelConfig::Svm(c) | ModelConfig::Mlp(c) => c.validate(),
            ModelConfig::Knn { k } if *k == 0 => Err(Error::Config("knn k must be >= 1".into())),
            ModelConfig::Transformer { hyper, train } => {
                hyper.validate()?;
                train.validate()
            }
            _ => Ok(()),
        }
    }

    fn write(&self, out: &mut String) {
        let train = |out: &mut String, c: &TrainConfig| {
            let _ = writeln!(out, "epochs = {}", c.epochs);
            let _ = writeln!(out, "batch_size = {}", c.batch_size);
            let _ = writeln!(out, "lr = {}", c.lr);
            let _ = writeln!(out, "l2 = {}", c.l2);
            let _ = writeln!(out, "shuffle = {}", c.shuffle_each_epoch);
        };
        match self {
            ModelConfig::Logistic(c) | ModelConfig::Svm(c) | ModelConfig::Mlp(c) => train(out, c),
            ModelConfig::Knn { k } => {
                let _ = writeln!(out, "k = {k}");
            }
            ModelConfig::Tree {
                max_depth,
                min_samples_split,
            } => {
                let depth = max_depth.map_or("none".to_string(), |d| d.to_string());
                let _ = writeln!(out, "max_depth = {depth}");
                let _ = writeln!(out, "min_samples_split = {min_samples_split}");
            }
            ModelConfig::Transformer { hyper, train: t } => {
                let _ = writeln!(out, "d_model = {}", hyper.d_model);
                let _ = writeln!(out, "n_heads = {}", hyper.n_heads);
                let _ = writeln!(out, "n_layers = {}", hyper.n_layers);
                let _ = writeln!(out, "d_ff = {}", hyper.d_ff);
                let _ = writeln!(out, "dropout = {}", hyper.dropout_rate);
                train(out, t);
            }
        }
    }
}

fn set_train(c: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "epochs" => parse_into(&mut c.epochs, key, value),
        "batch_size" => parse_into(&mut c.batch_size, key, value),
        "lr" => parse_into(&mut c.lr, key, value),
        "l2" => parse_into(&mut c.l2, key, value),
        _ => {
            c.shuffle_each_epoch = parse_bool(key, value)?;
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub config: ModelConfig,
    /// Per-model override of the pipeline-wide standardization mode.
    pub standardize: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub drop_columns: Vec<String>,
    pub seed: u64,
    pub order: StageOrder,
    pub balance: bool,
    pub outlier_features: Vec<String>,
    pub outlier_fit_on: FitOn,
    pub test_fraction: f64,
    pub standardize: StandardizeMode,
    pub models: Vec<ModelSpec>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// A config around `data` with no balancing, no outlier removal, a 20% split and no models.
    pub fn minimal(data: DataSource) -> Self {
        ExperimentConfig {
            data,
            drop_columns: Vec::new(),
            seed: 0,
            order: StageOrder::BalanceFirst,
            balance: false,
            outlier_features: Vec::new(),
            outlier_fit_on: FitOn::FraudClassOnly,
            test_fraction: 0.2,
            standardize: StandardizeMode::Auto,
            models: Vec::new(),
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let sections = split_sections(text)?;
        let get = |section: &str, key: &str| sections.get(section).and_then(|s| s.get(key)).map(|(_, v)| v.as_str());

        let data = if let Some(kind) = get("data", "synthetic") {
            if get("data", "path").is_some() {
                return Err(Error::Config("[data] takes either path or synthetic, not both".into()));
            }
            let kind = match kind {
                "blobs" => SyntheticKind::GaussianBlobs {
                    mu: get("data", "mu").map_or(Ok(3.0), |v| parse_num("mu", v))?,
                },
                "xor" => SyntheticKind::XorQuadrants,
                other => return Err(Error::Config(format!("unknown synthetic kind '{other}' (blobs or xor)"))),
            };
            if matches!(kind, SyntheticKind::XorQuadrants) && get("data", "mu").is_some() {
                return Err(Error::Config("mu only applies to synthetic = blobs".into()));
            }
            DataSource::Synthetic(SyntheticSpec {
                kind,
                n_per_class: get("data", "n_per_class").map_or(Ok(500), |v| parse_num("n_per_class", v))?,
                n_features: get("data", "n_features").map_or(Ok(2), |v| parse_num("n_features", v))?,
                seed: get("data", "seed").map_or(Ok(0), |v| parse_num("seed", v))?,
            })
        } else if let Some(path) = get("data", "path") {
            for k in ["n_per_class", "n_features", "mu", "seed"] {
                if get("data", k).is_some() {
                    return Err(Error::Config(format!("[data] {k} only applies to synthetic data")));
                }
            }
            DataSource::File {
                path: PathBuf::from(path),
                schema: parse_schema(get("data", "schema").unwrap_or("auto"))?,
            }
        } else {
            return Err(Error::Config("[data] needs a path or a synthetic kind".into()));
        };

        let mut cfg = ExperimentConfig::minimal(data);
        cfg.drop_columns = get("data", "drop_columns").map(parse_list).unwrap_or_default();
        if let Some(v) = get("pipeline", "seed") {
            cfg.seed = parse_num("seed", v)?;
        }
        if let Some(v) = get("pipeline", "order") {
            cfg.order = match v {
                "balance_first" => StageOrder::BalanceFirst,
                "leak_free" => StageOrder::LeakFree,
                other => return Err(Error::Config(format!("unknown order '{other}' (balance_first or leak_free)"))),
            };
        }
        cfg.balance = get("pipeline", "balance").map_or(Ok(false), |v| parse_bool("balance", v))?;
        cfg.outlier_features = get("pipeline", "outlier_features").map(parse_list).unwrap_or_default();
        if let Some(v) = get("pipeline", "outlier_fit_on") {
            cfg.outlier_fit_on = match v {
                "fraud" => FitOn::FraudClassOnly,
                "all" => FitOn::AllRows,
                other => return Err(Error::Config(format!("unknown outlier_fit_on '{other}' (fraud or all)"))),
            };
        }
        if let Some(v) = get("pipeline", "test_fraction") {
            cfg.test_fraction = parse_num("test_fraction", v)?;
        }
        if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction must lie in (0, 1), got {}", cfg.test_fraction)));
        }
        if let Some(v) = get("pipeline", "standardize") {
            cfg.standardize = match v {
                "auto" => StandardizeMode::Auto,
                "on" | "true" => StandardizeMode::On,
                "off" | "false" => StandardizeMode::Off,
                other => return Err(Error::Config(format!("unknown standardize '{other}' (auto, on, off)"))),
            };
        }
        if let Some(v) = get("output", "dir") {
            cfg.output_dir = PathBuf::from(v);
        }

        let list = get("models", "list").map(parse_list).unwrap_or_default();
        if list.is_empty() {
            return Err(Error::Config("[models] list must name at least one model".into()));
        }
        for name in &list {
            if cfg.models.iter().any(|m| m.config.name() == name) {
                return Err(Error::Config(format!("model '{name}' listed twice")));
            }
            let mut spec = ModelSpec {
                config: ModelConfig::default_for(name)?,
                standardize: None,
            };
            if let Some(section) = sections.get(name.as_str()) {
                for (key, (line, value)) in section {
                    let at_line = |e: Error| Error::Config(format!("line {line}: {e}"));
                    if key == "standardize" {
                        spec.standardize = Some(parse_bool(key, value).map_err(at_line)?);
                    } else {
                        spec.config.set(key, value).map_err(at_line)?;
                    }
                }
            }
            spec.config.validate()?;
            cfg.models.push(spec);
        }
        Ok(cfg)
    }

    pub fn uses_standardization(&self, spec: &ModelSpec) -> bool {
        spec.standardize.unwrap_or(match self.standardize {
            StandardizeMode::Auto => spec.config.default_standardize(),
            StandardizeMode::On => true,
            StandardizeMode::Off => false,
        })
    }

    /// Canonical form with every default filled in. Re-parses to the same config.
    pub fn resolved_text(&self) -> String {
        let mut out = String::from("[data]\n");
        match &self.data {
            DataSource::File { path, schema } => {
                let _ = writeln!(out, "path = {}", path.display());
                let schema = match schema {
                    Schema::Legacy2013 => "2013",
                    Schema::Modern2023 => "2023",
                    Schema::AutoDetect => "auto",
                };
                let _ = writeln!(out, "schema = {schema}");
            }
            DataSource::Synthetic(s) => {
                match s.kind {
                    SyntheticKind::GaussianBlobs { mu } => {
                        let _ = writeln!(out, "synthetic = blobs\nmu = {mu}");
                    }
                    SyntheticKind::XorQuadrants => out.push_str("synthetic = xor\n"),
                }
                let _ = writeln!(out, "n_per_class = {}\nn_features = {}\nseed = {}", s.n_per_class, s.n_features, s.seed);
            }
        }
        let _ = writeln!(out, "drop_columns = {}", self.drop_columns.join(", "));
        out.push_str("\n[pipeline]\n");
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "order = {}", self.order.name());
        let _ = writeln!(out, "balance = {}", self.balance);
        let _ = writeln!(out, "outlier_features = {}", self.outlier_features.join(", "));
        let fit_on = match self.outlier_fit_on {
            FitOn::FraudClassOnly => "fraud",
            FitOn::AllRows => "all",
        };
        let _ = writeln!(out, "outlier_fit_on = {fit_on}");
        let _ = writeln!(out, "test_fraction = {}", self.test_fraction);
        let mode = match self.standardize {
            StandardizeMode::Auto => "auto",
            StandardizeMode::On => "on",
            StandardizeMode::Off => "off",
        };
        let _ = writeln!(out, "standardize = {mode}");
        out.push_str("\n[models]\n");
        let names: Vec<&str> = self.models.iter().map(|m| m.config.name()).collect();
        let _ = writeln!(out, "list = {}", names.join(", "));
        for m in &self.models {
            let _ = writeln!(out, "\n[{}]", m.config.name());
            m.config.write(&mut out);
            let _ = writeln!(out, "standardize = {}", self.uses_standardization(m));
        }
        let _ = writeln!(out, "\n[output]\ndir = {}", self.output_dir.display());
        out
    }

    /// SHA-256 of [`resolved_text`](Self::resolved_text), hex encoded.
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.resolved_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

fn split_sections(text: &str) -> Result<Sections> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            if !CONFIG_KEYS.iter().any(|(s, _)| *s == name) {
                return Err(Error::Config(format!("line {line_no}: unknown section [{name}]")));
            }
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {line_no}: expected 'key = value', got '{line}'")));
        };
        let Some(section) = current.as_ref() else {
            return Err(Error::Config(format!("line {line_no}: key outside of any [section]")));
        };
        let key = key.trim();
        let allowed = CONFIG_KEYS.iter().find(|(s, _)| s == section).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(Error::Config(format!(
                "line {line_no}: unknown key '{key}' in [{section}] (allowed: {})",
                allowed.join(", ")
            )));
        }
        let entries = sections.get_mut(section).expect("section inserted above");
        if entries.insert(key.to_string(), (line_no, value.trim().to_string())).is_some() {
            return Err(Error::Config(format!("line {line_no}: duplicate key '{key}' in [{section}]")));
        }
    }
    Ok(sections)
}

fn parse_list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_into<T: std::str::FromStr>(slot: &mut T, key: &str, v: &str) -> Result<()> {
    *slot = parse_num(key, v)?;
    Ok(())
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{v}'"))),
    }
}

pub fn parse_schema(v: &str) -> Result<Schema> {
    match v {
        "auto" => Ok(Schema::AutoDetect),
        "2013" => Ok(Schema::Legacy2013),
        "2023" => Ok(Schema::Modern2023),
        other => Err(Error::Config(format!("unknown schema '{other}' (auto, 2013, 2023)"))),
    }
}
