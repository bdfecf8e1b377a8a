//! Tabular data loading, validation, encoding, imputation, and splitting.
//!
//! Datasets mix numeric and categorical features and carry a binary target.
//! Categorical features one-hot encode with an explicit synthetic "missing"
//! indicator per feature; numeric features median-impute. The encoding is
//! invertible per column, which the rule-decoding machinery relies on.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, STREAM_SPLIT};
use rand::Rng;

/// Kind of a raw feature column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

/// One raw feature: name, kind, and (for categoricals) the category roster.
#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
    /// Categories in encoding order; empty for numeric features.
    pub categories: Vec<String>,
}

/// Dataset schema: ordered features plus the binary target description.
#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    pub features: Vec<Feature>,
    pub target_name: String,
    pub positive_label: String,
}

impl Schema {
    /// Index of a feature by name.
    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }
}

/// One raw column stored column-major; `None` marks a missing value.
#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    /// Values are indices into the owning feature's category roster.
    Categorical(Vec<Option<u32>>),
}

/// Raw dataset: schema, columns, and binary target.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub schema: Schema,
    pub columns: Vec<Column>,
    pub target: Vec<u8>,
}

/// CSV parsing options.
#[derive(Clone, Debug)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub missing_markers: Vec<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            missing_markers: vec!["".into(), "NA".into(), "unknown".into()],
        }
    }
}

/// Declarative schema file contents (TOML).
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaSpec {
    #[serde(default)]
    pub delimiter: Option<String>,
    #[serde(default)]
    pub missing: Option<Vec<String>>,
    pub target: TargetSpec,
    #[serde(default, rename = "feature")]
    pub features: Vec<FeatureSpec>,
}

/// Target declaration inside a schema file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub name: String,
    pub positive: String,
}

/// One feature declaration inside a schema file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: String,
    #[serde(default)]
    pub categories: Option<Vec<String>>,
}

impl SchemaSpec {
    /// Parses a schema file.
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        toml::from_str(&text).map_err(|e| Error::config(format!("schema file: {e}")))
    }

    fn csv_options(&self) -> Result<CsvOptions> {
        let mut opts = CsvOptions::default();
        if let Some(d) = &self.delimiter {
            let bytes = d.as_bytes();
            if bytes.len() != 1 {
                return Err(Error::config(format!("delimiter must be one byte, got {d:?}")));
            }
            opts.delimiter = bytes[0];
        }
        if let Some(m) = &self.missing {
            opts.missing_markers = m.clone();
        }
        Ok(opts)
    }
}

/// How `load_csv` determines the schema.
#[derive(Clone, Debug)]
pub enum SchemaMode {
    /// Kinds and categories declared explicitly.
    Declared(SchemaSpec),
    /// Kinds inferred from the data: a column is categorical iff any
    /// non-missing value fails numeric parsing or it has at most
    /// [`INFER_CATEGORICAL_MAX_DISTINCT`] distinct values.
    Infer { target: String, positive: String, options: CsvOptions },
}

/// Distinct-value cutoff for inferring a column as categorical.
pub const INFER_CATEGORICAL_MAX_DISTINCT: usize = 20;

/// Loads a delimited text file with a header row into a [`Dataset`].
pub fn load_csv(path: impl AsRef<Path>, mode: &SchemaMode) -> Result<Dataset> {
    let path = path.as_ref();
    let options = match mode {
        SchemaMode::Declared(spec) => spec.csv_options()?,
        SchemaMode::Infer { options, .. } => options.clone(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let header: Vec<String> =
        reader.headers().map_err(|e| Error::data(format!("{}: {e}", path.display())))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        if record.len() != header.len() {
            return Err(Error::data(format!(
                "row {} has {} fields, header has {}",
                row_idx + 1,
                record.len(),
                header.len()
            )));
        }
        for (col, value) in record.iter().enumerate() {
            cells[col].push(value.trim().to_string());
        }
    }

    match mode {
        SchemaMode::Declared(spec) => build_declared(&header, cells, spec, &options),
        SchemaMode::Infer { target, positive, .. } => {
            build_inferred(&header, cells, target, positive, &options)
        }
    }
}

fn is_missing(value: &str, options: &CsvOptions) -> bool {
    options.missing_markers.iter().any(|m| m == value)
}

fn parse_numeric_column(
    name: &str,
    raw: &[String],
    options: &CsvOptions,
) -> Result<Vec<Option<f64>>> {
    raw.iter()
        .enumerate()
        .map(|(i, v)| {
            if is_missing(v, options) {
                Ok(None)
            } else {
                v.parse::<f64>().map(Some).map_err(|_| {
                    Error::data(format!(
                        "feature {name:?} row {}: {v:?} is not numeric",
                        i + 1
                    ))
                })
            }
        })
        .collect()
}

fn parse_categorical_column(
    raw: &[String],
    categories: &[String],
    options: &CsvOptions,
) -> Vec<Option<u32>> {
    raw.iter()
        .map(|v| {
            if is_missing(v, options) {
                None
            } else {
                categories.iter().position(|c| c == v).map(|i| i as u32)
            }
        })
        .collect()
}

fn observed_categories(raw: &[String], options: &CsvOptions) -> Vec<String> {
    let set: BTreeSet<&String> =
        raw.iter().filter(|v| !is_missing(v, options)).collect();
    set.into_iter().cloned().collect()
}

fn parse_target(
    name: &str,
    raw: &[String],
    positive: &str,
    options: &CsvOptions,
) -> Result<Vec<u8>> {
    let distinct: BTreeSet<&String> =
        raw.iter().filter(|v| !is_missing(v, options)).collect();
    if distinct.len() > 2 {
        return Err(Error::data(format!(
            "non-binary target {name:?}: {} distinct labels",
            distinct.len()
        )));
    }
    raw.iter()
        .enumerate()
        .map(|(i, v)| {
            if is_missing(v, options) {
                Err(Error::data(format!("target {name:?} row {} is missing", i + 1)))
            } else {
                Ok(u8::from(v == positive))
            }
        })
        .collect()
}

fn build_declared(
    header: &[String],
    mut cells: Vec<Vec<String>>,
    spec: &SchemaSpec,
    options: &CsvOptions,
) -> Result<Dataset> {
    let target_pos = header
        .iter()
        .position(|h| *h == spec.target.name)
        .ok_or_else(|| Error::data(format!("target column {:?} absent", spec.target.name)))?;
    let target = parse_target(&spec.target.name, &cells[target_pos], &spec.target.positive, options)?;

    let mut features = Vec::new();
    let mut columns = Vec::new();
    for decl in &spec.features {
        if decl.name == spec.target.name {
            return Err(Error::config(format!(
                "target {:?} also declared as a feature",
                decl.name
            )));
        }
        if features.iter().any(|f: &Feature| f.name == decl.name) {
            return Err(Error::config(format!("feature {:?} declared twice", decl.name)));
        }
        let pos = header
            .iter()
            .position(|h| *h == decl.name)
            .ok_or_else(|| Error::data(format!("declared feature {:?} absent from header", decl.name)))?;
        let raw = std::mem::take(&mut cells[pos]);
        match decl.kind.as_str() {
            "numeric" => {
                columns.push(Column::Numeric(parse_numeric_column(&decl.name, &raw, options)?));
                features.push(Feature {
                    name: decl.name.clone(),
                    kind: FeatureKind::Numeric,
                    categories: Vec::new(),
                });
            }
            "categorical" => {
                let categories = match &decl.categories {
                    Some(c) => c.clone(),
                    None => observed_categories(&raw, options),
                };
                if categories.is_empty() {
                    return Err(Error::data(format!(
                        "categorical feature {:?} has no observed categories",
                        decl.name
                    )));
                }
                columns.push(Column::Categorical(parse_categorical_column(&raw, &categories, options)));
                features.push(Feature {
                    name: decl.name.clone(),
                    kind: FeatureKind::Categorical,
                    categories,
                });
            }
            other => {
                return Err(Error::config(format!(
                    "feature {:?}: unknown kind {other:?} (expected \"numeric\" or \"categorical\")",
                    decl.name
                )))
            }
        }
    }
    if features.is_empty() {
        return Err(Error::data("schema declares no features".to_string()));
    }

    Ok(Dataset {
        schema: Schema {
            features,
            target_name: spec.target.name.clone(),
            positive_label: spec.target.positive.clone(),
        },
        columns,
        target,
    })
}

fn build_inferred(
    header: &[String],
    mut cells: Vec<Vec<String>>,
    target: &str,
    positive: &str,
    options: &CsvOptions,
) -> Result<Dataset> {
    let target_pos = header
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::data(format!("target column {target:?} absent")))?;
    let target_values = parse_target(target, &cells[target_pos], positive, options)?;

    let mut features = Vec::new();
    let mut columns = Vec::new();
    for (pos, name) in header.iter().enumerate() {
        if pos == target_pos {
            continue;
        }
        let raw = std::mem::take(&mut cells[pos]);
        let non_missing: Vec<&String> =
            raw.iter().filter(|v| !is_missing(v, options)).collect();
        let all_numeric = non_missing.iter().all(|v| v.parse::<f64>().is_ok());
        let distinct: BTreeSet<&&String> = non_missing.iter().collect();
        let categorical = !all_numeric || distinct.len() <= INFER_CATEGORICAL_MAX_DISTINCT;
        if categorical {
            let categories = observed_categories(&raw, options);
            if categories.is_empty() {
                return Err(Error::data(format!(
                    "categorical feature {name:?} has no observed categories"
                )));
            }
            columns.push(Column::Categorical(parse_categorical_column(&raw, &categories, options)));
            features.push(Feature {
                name: name.clone(),
                kind: FeatureKind::Categorical,
                categories,
            });
        } else {
            columns.push(Column::Numeric(parse_numeric_column(name, &raw, options)?));
            features.push(Feature { name: name.clone(), kind: FeatureKind::Numeric, categories: Vec::new() });
        }
    }
    if features.is_empty() {
        return Err(Error::data("no feature columns besides the target".to_string()));
    }

    Ok(Dataset {
        schema: Schema {
            features,
            target_name: target.to_string(),
            positive_label: positive.to_string(),
        },
        columns,
        target: target_values,
    })
}

impl Dataset {
    /// Number of rows.
    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    /// Re-targets the dataset onto one of its own features: the feature is
    /// removed from the feature list and its values become the binary target
    /// (missing values count as negative). Used by discovery, where the
    /// variable of interest is a regular column of the data.
    pub fn with_feature_as_target(&self, name: &str, positive: &str) -> Result<Dataset> {
        let idx = self
            .schema
            .feature_index(name)
            .ok_or_else(|| Error::data(format!("unknown target column {name:?}")))?;
        let feature = &self.schema.features[idx];
        let target: Vec<u8> = match &self.columns[idx] {
            Column::Categorical(values) => {
                let positive_idx = feature.categories.iter().position(|c| c == positive);
                values
                    .iter()
                    .map(|v| u8::from(positive_idx.is_some() && *v == positive_idx.map(|p| p as u32)))
                    .collect()
            }
            Column::Numeric(values) => {
                let positive_value: f64 = positive
                    .parse()
                    .map_err(|_| Error::config(format!("positive label {positive:?} is not numeric")))?;
                values.iter().map(|v| u8::from(*v == Some(positive_value))).collect()
            }
        };
        if target.iter().all(|&t| t == 0) || target.iter().all(|&t| t == 1) {
            return Err(Error::data(format!(
                "target {name:?} with positive {positive:?} is constant"
            )));
        }
        let mut features = self.schema.features.clone();
        features.remove(idx);
        let mut columns = self.columns.clone();
        columns.remove(idx);
        Ok(Dataset {
            schema: Schema {
                features,
                target_name: name.to_string(),
                positive_label: positive.to_string(),
            },
            columns,
            target,
        })
    }
}

/// One encoded column and how it maps back to its source feature.
#[derive(Clone, Debug, PartialEq)]
pub enum EncodedColumn {
    /// Numeric passthrough with the recorded imputation value.
    Numeric { feature: usize, impute: f64 },
    /// One-hot indicator; `category` indexes the feature's roster and
    /// `None` is the synthetic "missing" indicator.
    Indicator { feature: usize, category: Option<u32> },
}

/// Fitted encoding: ordered encoded-column descriptors over a schema.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingMap {
    pub schema: Schema,
    pub columns: Vec<EncodedColumn>,
}

impl EncodingMap {
    /// Number of encoded columns.
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Human-readable name of an encoded column.
    pub fn column_name(&self, col: usize) -> String {
        match &self.columns[col] {
            EncodedColumn::Numeric { feature, .. } => self.schema.features[*feature].name.clone(),
            EncodedColumn::Indicator { feature, category } => {
                let f = &self.schema.features[*feature];
                match category {
                    Some(c) => format!("{}={}", f.name, f.categories[*c as usize]),
                    None => format!("{}=missing", f.name),
                }
            }
        }
    }
}

/// Encoded dataset: dense matrix, binary target, and the fitted map.
#[derive(Clone, Debug)]
pub struct EncodedDataset {
    pub matrix: Matrix,
    pub target: Vec<u8>,
    pub map: EncodingMap,
}

impl EncodedDataset {
    /// Number of rows.
    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    /// New dataset containing the given rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> EncodedDataset {
        EncodedDataset {
            matrix: self.matrix.select_rows(rows),
            target: rows.iter().map(|&r| self.target[r]).collect(),
            map: self.map.clone(),
        }
    }
}

/// Fits an encoding over a dataset: one column per numeric feature (median
/// impute recorded) and one indicator per (categorical feature, category)
/// pair plus a "missing" indicator.
pub fn fit_encoding(dataset: &Dataset) -> Result<EncodingMap> {
    if dataset.n_rows() == 0 {
        return Err(Error::data("cannot fit encoding on a zero-row dataset".to_string()));
    }
    let mut columns = Vec::new();
    for (idx, feature) in dataset.schema.features.iter().enumerate() {
        match (&feature.kind, &dataset.columns[idx]) {
            (FeatureKind::Numeric, Column::Numeric(values)) => {
                columns.push(EncodedColumn::Numeric { feature: idx, impute: median(values) });
            }
            (FeatureKind::Categorical, Column::Categorical(_)) => {
                for c in 0..feature.categories.len() {
                    columns.push(EncodedColumn::Indicator { feature: idx, category: Some(c as u32) });
                }
                columns.push(EncodedColumn::Indicator { feature: idx, category: None });
            }
            _ => {
                return Err(Error::data(format!(
                    "feature {:?}: kind and storage disagree",
                    feature.name
                )))
            }
        }
    }
    Ok(EncodingMap { schema: dataset.schema.clone(), columns })
}

/// Median of the non-missing values; 0.0 when every value is missing.
fn median(values: &[Option<f64>]) -> f64 {
    let mut present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return 0.0;
    }
    present.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = present.len();
    if n % 2 == 1 {
        present[n / 2]
    } else {
        (present[n / 2 - 1] + present[n / 2]) / 2.0
    }
}

/// Applies a fitted encoding to a dataset.
pub fn encode(dataset: &Dataset, map: &EncodingMap) -> Result<EncodedDataset> {
    for (a, b) in dataset.schema.features.iter().zip(&map.schema.features) {
        if a.name != b.name || a.kind != b.kind {
            return Err(Error::data(format!(
                "schema mismatch: expected feature {:?} ({:?}), got {:?} ({:?})",
                b.name, b.kind, a.name, a.kind
            )));
        }
    }
    if dataset.schema.features.len() != map.schema.features.len() {
        return Err(Error::data(format!(
            "schema mismatch: {} features, encoding expects {}",
            dataset.schema.features.len(),
            map.schema.features.len()
        )));
    }

    let n = dataset.n_rows();
    let mut matrix = Matrix::zeros(n, map.width());
    for (col_idx, col) in map.columns.iter().enumerate() {
        match col {
            EncodedColumn::Numeric { feature, impute } => {
                let Column::Numeric(values) = &dataset.columns[*feature] else {
                    return Err(Error::data("numeric column expected".to_string()));
                };
                for (row, v) in values.iter().enumerate() {
                    matrix.set(row, col_idx, v.unwrap_or(*impute));
                }
            }
            EncodedColumn::Indicator { feature, category } => {
                let Column::Categorical(values) = &dataset.columns[*feature] else {
                    return Err(Error::data("categorical column expected".to_string()));
                };
                let roster_len = map.schema.features[*feature].categories.len() as u32;
                for (row, v) in values.iter().enumerate() {
                    // Values outside the fitted roster fold into "missing".
                    let effective = v.filter(|&c| c < roster_len);
                    let hit = match category {
                        Some(c) => effective == Some(*c),
                        None => effective.is_none(),
                    };
                    if hit {
                        matrix.set(row, col_idx, 1.0);
                    }
                }
            }
        }
    }
    Ok(EncodedDataset { matrix, target: dataset.target.clone(), map: map.clone() })
}

/// Stratified train/test split with largest-remainder per-class allocation.
pub fn split(
    dataset: &EncodedDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(EncodedDataset, EncodedDataset)> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::config(format!(
            "train_fraction must be in (0, 1], got {train_fraction}"
        )));
    }
    let n = dataset.n_rows();
    if train_fraction < 1.0 && n < 2 {
        return Err(Error::data("need at least 2 rows to split".to_string()));
    }

    let mut class_rows: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &t) in dataset.target.iter().enumerate() {
        class_rows[t as usize].push(i);
    }
    for (class, rows) in class_rows.iter_mut().enumerate() {
        let mut rng = rng::rng_for(seed, STREAM_SPLIT, class as u64);
        // Fisher-Yates over the class's row list.
        for i in (1..rows.len()).rev() {
            let j = rng.gen_range(0..=i);
            rows.swap(i, j);
        }
    }

    let target_total = (train_fraction * n as f64).round() as usize;
    let quotas: Vec<f64> =
        class_rows.iter().map(|rows| train_fraction * rows.len() as f64).collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut remaining = target_total.saturating_sub(take.iter().sum::<usize>());
    let mut order: Vec<usize> = (0..take.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &class in &order {
        if remaining == 0 {
            break;
        }
        if take[class] < class_rows[class].len() {
            take[class] += 1;
            remaining -= 1;
        }
    }

    let mut train_rows = Vec::with_capacity(target_total);
    let mut test_rows = Vec::with_capacity(n - target_total);
    for (class, rows) in class_rows.iter().enumerate() {
        train_rows.extend_from_slice(&rows[..take[class]]);
        test_rows.extend_from_slice(&rows[take[class]..]);
    }
    train_rows.sort_unstable();
    test_rows.sort_unstable();

    Ok((dataset.select_rows(&train_rows), dataset.select_rows(&test_rows)))
}

/// Synthetic mixed-type dataset with a target independent of every feature.
/// Fixture for tests, benchmarks, and the null-discovery simulation.
pub fn synthetic_noise(n_rows: usize, n_numeric: usize, n_categorical: usize, seed: u64) -> Dataset {
    let mut rng = rng::rng_for(seed, 0, 0);
    let roster = ["a", "b", "c"];
    let mut features = Vec::new();
    let mut columns = Vec::new();
    for i in 0..n_numeric {
        features.push(Feature {
            name: format!("num_{i}"),
            kind: FeatureKind::Numeric,
            categories: Vec::new(),
        });
        columns.push(Column::Numeric((0..n_rows).map(|_| Some(rng.gen::<f64>())).collect()));
    }
    for i in 0..n_categorical {
        features.push(Feature {
            name: format!("cat_{i}"),
            kind: FeatureKind::Categorical,
            categories: roster.iter().map(|s| s.to_string()).collect(),
        });
        columns.push(Column::Categorical(
            (0..n_rows).map(|_| Some(rng.gen_range(0..roster.len() as u32))).collect(),
        ));
    }
    let target = (0..n_rows).map(|_| u8::from(rng.gen::<bool>())).collect();
    Dataset {
        schema: Schema {
            features,
            target_name: "target".to_string(),
            positive_label: "1".to_string(),
        },
        columns,
        target,
    }
}

/// Synthetic dataset whose target is a noisy function of the first two
/// numeric features (positive inside `x0 <= 0.3 && x1 > 0.7`).
pub fn synthetic_planted(n_rows: usize, seed: u64) -> Dataset {
    let mut dataset = synthetic_noise(n_rows, 4, 2, seed);
    let mut rng = rng::rng_for(seed, 0, 1);
    let (x0, x1) = match (&dataset.columns[0], &dataset.columns[1]) {
        (Column::Numeric(a), Column::Numeric(b)) => (a.clone(), b.clone()),
        _ => unreachable!(),
    };
    for i in 0..n_rows {
        let inside = x0[i].unwrap() <= 0.3 && x1[i].unwrap() > 0.7;
        let p = if inside { 0.9 } else { 0.02 };
        dataset.target[i] = u8::from(rng.gen::<f64>() < p);
    }
    dataset
}
