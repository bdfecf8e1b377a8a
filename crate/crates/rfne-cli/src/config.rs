//! Declarative run configuration.
//!
//! Everything that shapes a run — data location, split, model parameters,
//! grids, discovery settings — lives in one TOML file so runs are auditable
//! from the config alone. Flags only override paths and seeds. Unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use rfne_core::{
    CsvOptions, EmbedConfig, Error, ForestParams, Regularization, Result, RfneConfig, SchemaMode,
    SchemaSpec, WalkParams,
};
use serde::Deserialize;

/// Parsed contents of a run-configuration file, with paths resolved
/// relative to the file's own directory.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for model fitting in `train` and `evaluate`.
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub data: DataSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub rf: RfSection,
    #[serde(default)]
    pub knn: KnnSection,
    #[serde(default)]
    pub logistic: LogisticSection,
    #[serde(default)]
    pub rfne: RfneSection,
    #[serde(default)]
    pub gridsearch: Option<GridSection>,
    #[serde(default)]
    pub discover: Option<DiscoverSection>,
    #[serde(default)]
    pub apply: Option<ApplySection>,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_seed() -> u64 {
    42
}

/// Where the data lives and how to read it. Either `schema` points at a
/// schema file, or `target`/`positive` (plus optional `delimiter` and
/// `missing`) select inference mode.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub csv: PathBuf,
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub positive: Option<String>,
    #[serde(default)]
    pub delimiter: Option<String>,
    #[serde(default)]
    pub missing: Option<Vec<String>>,
}

/// Train/test split used by `evaluate` and `gridsearch`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { train_fraction: 0.8, seed: 42 }
    }
}

/// Random-forest baseline parameters.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RfSection {
    pub trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub features_per_split: Option<usize>,
}

impl Default for RfSection {
    fn default() -> Self {
        let p = ForestParams::default();
        RfSection {
            trees: p.k,
            max_depth: p.max_depth,
            min_samples_leaf: p.min_samples_leaf,
            features_per_split: p.features_per_split,
        }
    }
}

impl RfSection {
    pub fn params(&self) -> ForestParams {
        ForestParams {
            k: self.trees,
            max_depth: self.max_depth,
            features_per_split: self.features_per_split,
            min_samples_leaf: self.min_samples_leaf,
        }
    }
}

/// k-nearest-neighbors baseline parameters.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnnSection {
    pub k: usize,
}

impl Default for KnnSection {
    fn default() -> Self {
        KnnSection { k: 3 }
    }
}

/// Logistic-regression parameters, shared by the baseline and the
/// downstream fit on embedding features.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticSection {
    /// `"l2"` or `"none"`.
    pub regularization: String,
    pub lambda: f64,
    pub max_iter: usize,
}

impl Default for LogisticSection {
    fn default() -> Self {
        LogisticSection { regularization: "l2".to_string(), lambda: 1.0, max_iter: 200 }
    }
}

impl LogisticSection {
    pub fn regularization(&self) -> Result<Regularization> {
        match self.regularization.as_str() {
            "none" => Ok(Regularization::None),
            "l2" => Ok(Regularization::L2 { lambda: self.lambda }),
            other => Err(Error::config(format!(
                "unknown regularization {other:?}; available: none, l2"
            ))),
        }
    }
}

/// Full embedding-pipeline parameters.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RfneSection {
    pub trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub features_per_split: Option<usize>,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub p: f64,
    pub q: f64,
    pub d: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub include_original: bool,
}

impl Default for RfneSection {
    fn default() -> Self {
        let forest = ForestParams::default();
        let walk = WalkParams::default();
        let embed = EmbedConfig::default();
        RfneSection {
            trees: forest.k,
            max_depth: forest.max_depth,
            min_samples_leaf: forest.min_samples_leaf,
            features_per_split: forest.features_per_split,
            walk_length: walk.l,
            walks_per_node: walk.r,
            p: walk.p,
            q: walk.q,
            d: embed.d,
            window: embed.window,
            negatives: embed.negatives,
            epochs: embed.epochs,
            lr_start: embed.lr_start,
            lr_end: embed.lr_end,
            include_original: true,
        }
    }
}

impl RfneSection {
    pub fn config(&self, master_seed: u64) -> RfneConfig {
        RfneConfig {
            forest: ForestParams {
                k: self.trees,
                max_depth: self.max_depth,
                features_per_split: self.features_per_split,
                min_samples_leaf: self.min_samples_leaf,
            },
            walk: WalkParams {
                l: self.walk_length,
                r: self.walks_per_node,
                p: self.p,
                q: self.q,
            },
            embed: EmbedConfig {
                d: self.d,
                window: self.window,
                negatives: self.negatives,
                epochs: self.epochs,
                lr_start: self.lr_start,
                lr_end: self.lr_end,
            },
            master_seed,
            include_original: self.include_original,
        }
    }
}

/// Cross-validated grid search. Axes that do not apply to the chosen
/// method are rejected; absent axes fall back to the base section's value.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// `"rf"`, `"knn"`, `"logistic"`, or `"rfne"`.
    pub method: String,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub trees: Option<Vec<usize>>,
    #[serde(default)]
    pub max_depth: Option<Vec<usize>>,
    #[serde(default)]
    pub k: Option<Vec<usize>>,
    #[serde(default)]
    pub lambda: Option<Vec<f64>>,
    #[serde(default)]
    pub d: Option<Vec<usize>>,
    #[serde(default)]
    pub walk_length: Option<Vec<usize>>,
    #[serde(default)]
    pub walks_per_node: Option<Vec<usize>>,
}

fn default_folds() -> usize {
    5
}

impl GridSection {
    /// Rejects grid axes that do not belong to the chosen method.
    pub fn validate(&self) -> Result<()> {
        let allowed: &[&str] = match self.method.as_str() {
            "rf" => &["trees", "max_depth"],
            "knn" => &["k"],
            "logistic" => &["lambda"],
            "rfne" => &["trees", "max_depth", "d", "walk_length", "walks_per_node"],
            other => {
                return Err(Error::config(format!(
                    "unknown gridsearch method {other:?}; available: rf, knn, logistic, rfne"
                )))
            }
        };
        let present: &[(&str, bool)] = &[
            ("trees", self.trees.is_some()),
            ("max_depth", self.max_depth.is_some()),
            ("k", self.k.is_some()),
            ("lambda", self.lambda.is_some()),
            ("d", self.d.is_some()),
            ("walk_length", self.walk_length.is_some()),
            ("walks_per_node", self.walks_per_node.is_some()),
        ];
        for (name, given) in present {
            if *given && !allowed.contains(name) {
                return Err(Error::config(format!(
                    "grid axis {name:?} does not apply to method {:?}",
                    self.method
                )));
            }
        }
        Ok(())
    }
}

/// Segment discovery: which column to explain and the pipeline fitted
/// around it. Defaults suit a small discovery forest.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscoverSection {
    pub target: String,
    pub positive: String,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_discover_trees")]
    pub trees: usize,
    #[serde(default = "default_discover_depth")]
    pub max_depth: usize,
    #[serde(default = "default_min_samples_leaf")]
    pub min_samples_leaf: usize,
    #[serde(default)]
    pub features_per_split: Option<usize>,
    #[serde(default = "default_discover_walk_length")]
    pub walk_length: usize,
    #[serde(default = "default_discover_walks")]
    pub walks_per_node: usize,
    #[serde(default = "default_one")]
    pub p: f64,
    #[serde(default = "default_one")]
    pub q: f64,
    #[serde(default = "default_discover_d")]
    pub d: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_negatives")]
    pub negatives: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr_start")]
    pub lr_start: f64,
    #[serde(default = "default_lr_end")]
    pub lr_end: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_alpha() -> f64 {
    0.05
}
fn default_discover_trees() -> usize {
    10
}
fn default_discover_depth() -> usize {
    5
}
fn default_min_samples_leaf() -> usize {
    1
}
fn default_discover_walk_length() -> usize {
    5
}
fn default_discover_walks() -> usize {
    50
}
fn default_one() -> f64 {
    1.0
}
fn default_discover_d() -> usize {
    10
}
fn default_window() -> usize {
    EmbedConfig::default().window
}
fn default_negatives() -> usize {
    EmbedConfig::default().negatives
}
fn default_epochs() -> usize {
    EmbedConfig::default().epochs
}
fn default_lr_start() -> f64 {
    EmbedConfig::default().lr_start
}
fn default_lr_end() -> f64 {
    EmbedConfig::default().lr_end
}

impl DiscoverSection {
    pub fn config(&self, master_seed: u64) -> RfneConfig {
        RfneConfig {
            forest: ForestParams {
                k: self.trees,
                max_depth: self.max_depth,
                features_per_split: self.features_per_split,
                min_samples_leaf: self.min_samples_leaf,
            },
            walk: WalkParams {
                l: self.walk_length,
                r: self.walks_per_node,
                p: self.p,
                q: self.q,
            },
            embed: EmbedConfig {
                d: self.d,
                window: self.window,
                negatives: self.negatives,
                epochs: self.epochs,
                lr_start: self.lr_start,
                lr_end: self.lr_end,
            },
            master_seed,
            include_original: false,
        }
    }
}

/// Outcome column summarized by `apply`; defaults to the dataset target.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplySection {
    pub outcome: String,
    #[serde(default)]
    pub positive: Option<String>,
}

/// Where reports and artifacts are written.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("rfne-out") }
    }
}

impl RunConfig {
    /// Reads and validates a config file. Data paths inside the file are
    /// resolved relative to the file's directory; the output directory is
    /// resolved relative to the working directory.
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        if !path.is_file() {
            return Err(Error::config(format!("config file {} does not exist", path.display())));
        }
        let text = std::fs::read_to_string(path)?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;

        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.data.csv = resolve(base, &config.data.csv);
        config.data.schema = config.data.schema.as_deref().map(|p| resolve(base, p));

        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        let d = &self.data;
        match (&d.schema, &d.target, &d.positive) {
            (Some(_), None, None) => {
                if d.delimiter.is_some() || d.missing.is_some() {
                    return Err(Error::config(
                        "delimiter and missing markers belong in the schema file when \
                         data.schema is set"
                            .to_string(),
                    ));
                }
            }
            (None, Some(_), Some(_)) => {}
            _ => {
                return Err(Error::config(
                    "data section needs either schema, or both target and positive".to_string(),
                ))
            }
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction < 1.0) {
            return Err(Error::config(format!(
                "split.train_fraction must be in (0, 1), got {}",
                self.split.train_fraction
            )));
        }
        if let Some(grid) = &self.gridsearch {
            grid.validate()?;
        }
        Ok(())
    }

    /// Schema mode for loading the CSV.
    pub fn schema_mode(&self) -> Result<SchemaMode> {
        let d = &self.data;
        if let Some(schema_path) = &d.schema {
            if !schema_path.is_file() {
                return Err(Error::config(format!(
                    "schema file {} does not exist",
                    schema_path.display()
                )));
            }
            return Ok(SchemaMode::Declared(SchemaSpec::from_toml_file(schema_path)?));
        }
        let mut options = CsvOptions::default();
        if let Some(delim) = &d.delimiter {
            let bytes = delim.as_bytes();
            if bytes.len() != 1 {
                return Err(Error::config(format!("delimiter must be one byte, got {delim:?}")));
            }
            options.delimiter = bytes[0];
        }
        if let Some(missing) = &d.missing {
            options.missing_markers = missing.clone();
        }
        Ok(SchemaMode::Infer {
            target: d.target.clone().expect("validated"),
            positive: d.positive.clone().expect("validated"),
            options,
        })
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
