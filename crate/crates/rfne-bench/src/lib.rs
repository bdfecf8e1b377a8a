//! Shared fixtures for the pipeline benchmarks.

use rfne_core::data::synthetic_planted;
use rfne_core::{
    encode, fit_encoding, fit_rfne, EmbedConfig, EncodedDataset, ForestParams, RfneConfig,
    RfneModel, WalkParams,
};

/// Encodes a synthetic planted-signal dataset of the requested size.
pub fn encoded_fixture(n_rows: usize, seed: u64) -> EncodedDataset {
    let dataset = synthetic_planted(n_rows, seed);
    let map = fit_encoding(&dataset).expect("synthetic dataset encodes");
    encode(&dataset, &map).expect("encoding applies to its own data")
}

/// Pipeline configuration sized for benchmarking: `k` trees of depth 5,
/// fifty 5-step walks per node, and `d`-dimensional embeddings.
pub fn bench_config(k: usize, d: usize) -> RfneConfig {
    RfneConfig {
        forest: ForestParams { k, max_depth: 5, ..ForestParams::default() },
        walk: WalkParams { l: 5, r: 50, p: 1.0, q: 1.0 },
        embed: EmbedConfig { d, ..EmbedConfig::default() },
        master_seed: 7,
        include_original: false,
    }
}

/// Fits the full pipeline on the fixture under [`bench_config`].
pub fn fitted_model(data: &EncodedDataset, k: usize, d: usize) -> RfneModel {
    fit_rfne(data, &bench_config(k, d)).expect("pipeline fits on the fixture")
}
