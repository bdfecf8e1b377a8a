//! Random-forest node embeddings.
//!
//! A random forest is fitted on encoded tabular data, each tree is read as
//! an undirected graph, biased random walks over that graph feed per-tree
//! skip-gram embeddings, and each row is represented by the concatenated
//! embeddings of the leaves it reaches. The crate also ships the downstream
//! models used to evaluate those features and a statistical procedure that
//! decodes a significant tree into a human-readable segment rule.
//!
//! Everything is deterministic given a master seed: per-tree, per-walk, and
//! per-fold generators derive from it, so results do not depend on thread
//! count.

pub mod data;
pub mod discover;
pub mod embed;
pub mod error;
pub mod forest;
pub mod graphwalk;
pub mod matrix;
pub mod models;
pub mod pipeline;
pub mod rng;

#[cfg(test)]
pub(crate) mod testutil;

pub use data::{
    encode, fit_encoding, load_csv, split, Column, CsvOptions, Dataset, EncodedDataset,
    EncodingMap, Feature, FeatureKind, Schema, SchemaMode, SchemaSpec,
};
pub use discover::{
    apply_rule, chi_square, discover_rule, extract_rule, nearest_leaf, ChiSquareTest,
    ContingencyTable, Discovery, DiscoveryReport, Predicate, SegmentRule,
};
pub use embed::{train_skipgram, EmbedConfig, EmbeddingModel};
pub use error::{Error, Result};
pub use forest::{
    apply_leaf, fit_forest, predict_majority, predict_proba, DecisionTree, Forest, ForestParams,
};
pub use graphwalk::{generate_walks, tree_to_graph, TreeGraph, WalkCorpus, WalkParams};
pub use matrix::Matrix;
pub use models::{
    auc, cross_validate, fit_knn, fit_logistic, knn_score, logistic_inference, predict_logistic,
    stratified_folds, CvReport, InferenceRow, InferenceTable, KnnModel, LogisticModel,
    Regularization, Standardizer,
};
pub use pipeline::{
    fit_rfne, load_model, save_model, transform, transform_features, ColumnProvenance,
    FeatureMatrix, RfneConfig, RfneModel,
};
