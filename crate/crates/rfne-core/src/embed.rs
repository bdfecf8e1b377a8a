//! Skip-gram-with-negative-sampling embeddings over walk corpora.
//!
//! Training follows the classic word2vec recipe: input vectors initialized
//! uniformly in [-0.5/d, 0.5/d), context vectors at zero, negatives drawn
//! from the unigram distribution raised to 0.75, a fixed context window, and
//! a learning rate that decays linearly over all (epoch, pair) updates.
//! Training is single-threaded so results depend only on the seed.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graphwalk::WalkCorpus;
use crate::rng;

/// Embedding hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbedConfig {
    /// Embedding dimension.
    pub d: usize,
    /// Context window half-width in walk positions.
    pub window: usize,
    /// Negative samples drawn per (center, context) pair.
    pub negatives: usize,
    /// Passes over the corpus.
    pub epochs: usize,
    /// Initial learning rate.
    pub lr_start: f64,
    /// Final learning rate.
    pub lr_end: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            d: 16,
            window: 5,
            negatives: 5,
            epochs: 5,
            lr_start: 0.025,
            lr_end: 0.0001,
        }
    }
}

impl EmbedConfig {
    fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::config("embedding dimension must be at least 1".to_string()));
        }
        if self.window < 1 {
            return Err(Error::config("context window must be at least 1".to_string()));
        }
        if self.negatives < 1 {
            return Err(Error::config("negative sample count must be at least 1".to_string()));
        }
        if self.epochs < 1 {
            return Err(Error::config("epoch count must be at least 1".to_string()));
        }
        if !(self.lr_end > 0.0) || !(self.lr_start >= self.lr_end) {
            return Err(Error::config(format!(
                "learning rates must satisfy lr_start >= lr_end > 0, got {} and {}",
                self.lr_start, self.lr_end
            )));
        }
        Ok(())
    }
}

/// Trained node embeddings (the input-side vectors) for one tree.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingModel {
    /// Embedding dimension.
    pub d: usize,
    /// Row-major `n_nodes x d` input vectors indexed by node id.
    pub vectors: Vec<f64>,
    /// Mean per-pair loss for each epoch.
    pub epoch_losses: Vec<f64>,
}

impl EmbeddingModel {
    /// Number of embedded nodes.
    pub fn n_nodes(&self) -> usize {
        self.vectors.len() / self.d
    }

    /// The embedding vector for a node id.
    pub fn lookup(&self, node: u32) -> Result<&[f64]> {
        let idx = node as usize;
        if idx >= self.n_nodes() {
            return Err(Error::data(format!(
                "node {} out of range for embedding over {} nodes",
                node,
                self.n_nodes()
            )));
        }
        Ok(&self.vectors[idx * self.d..(idx + 1) * self.d])
    }
}

fn ln_sigmoid(x: f64) -> f64 {
    if x > 30.0 {
        0.0
    } else if x < -30.0 {
        x
    } else {
        -(-x).exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Loss of one skip-gram pair with explicit negatives:
/// `-ln s(u.v) - sum ln s(-u.v_neg)` where `u` is the center's input vector
/// and `v` are context-side vectors.
pub fn pair_loss(
    input: &[f64],
    context: &[f64],
    d: usize,
    center: usize,
    context_node: usize,
    negatives: &[usize],
) -> f64 {
    let u = &input[center * d..(center + 1) * d];
    let dot = |v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let pos = &context[context_node * d..(context_node + 1) * d];
    let mut loss = -ln_sigmoid(dot(pos));
    for &neg in negatives {
        let v = &context[neg * d..(neg + 1) * d];
        loss -= ln_sigmoid(-dot(v));
    }
    loss
}

/// One stochastic-gradient step on a skip-gram pair with explicit negatives.
///
/// Context-side rows are updated immediately per target while the center's
/// accumulated update lands after all targets, matching the word2vec update
/// order. Returns the pair loss before the update.
pub fn pair_step(
    input: &mut [f64],
    context: &mut [f64],
    d: usize,
    center: usize,
    context_node: usize,
    negatives: &[usize],
    lr: f64,
    scratch: &mut Vec<f64>,
) -> f64 {
    scratch.clear();
    scratch.resize(d, 0.0);
    let mut loss = 0.0;
    for (target, label) in std::iter::once((context_node, 1.0))
        .chain(negatives.iter().map(|&n| (n, 0.0)))
    {
        let u = &input[center * d..(center + 1) * d];
        let v = &mut context[target * d..(target + 1) * d];
        let dot: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        loss -= if label > 0.5 { ln_sigmoid(dot) } else { ln_sigmoid(-dot) };
        let g = (label - sigmoid(dot)) * lr;
        for k in 0..d {
            scratch[k] += g * v[k];
            v[k] += g * u[k];
        }
    }
    let u = &mut input[center * d..(center + 1) * d];
    for k in 0..d {
        u[k] += scratch[k];
    }
    loss
}

fn noise_cumulative(counts: &[u64]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(counts.len());
    let mut total = 0.0;
    for &c in counts {
        total += (c as f64).powf(0.75);
        cum.push(total);
    }
    cum
}

fn sample_node(cum: &[f64], rng: &mut impl Rng) -> usize {
    let total = *cum.last().expect("non-empty noise table");
    let u = rng.gen::<f64>() * total;
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

/// Trains embeddings for every node id appearing in the corpus.
pub fn train_skipgram(corpus: &WalkCorpus, config: &EmbedConfig, seed: u64) -> Result<EmbeddingModel> {
    config.validate()?;
    if corpus.walks.is_empty() {
        return Err(Error::data("cannot train embeddings on an empty corpus".to_string()));
    }
    let n_nodes = corpus
        .walks
        .iter()
        .flat_map(|w| w.iter())
        .map(|&t| t as usize + 1)
        .max()
        .unwrap_or(0);
    if n_nodes == 0 {
        return Err(Error::data("corpus contains only empty walks".to_string()));
    }

    let d = config.d;
    let mut counts = vec![0u64; n_nodes];
    let mut pairs_per_epoch: u64 = 0;
    for walk in &corpus.walks {
        for (i, &token) in walk.iter().enumerate() {
            counts[token as usize] += 1;
            let lo = i.saturating_sub(config.window);
            let hi = (i + config.window).min(walk.len() - 1);
            pairs_per_epoch += (hi - lo) as u64;
        }
    }
    let cum = noise_cumulative(&counts);

    let mut rng = rng::rng_for(seed, 0, 0);
    let mut input = vec![0.0; n_nodes * d];
    for v in &mut input {
        *v = (rng.gen::<f64>() - 0.5) / d as f64;
    }
    let mut context = vec![0.0; n_nodes * d];

    let total_updates = pairs_per_epoch * config.epochs as u64;
    let mut update: u64 = 0;
    let mut scratch = Vec::with_capacity(d);
    let mut negs = Vec::with_capacity(config.negatives);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut epoch_loss = 0.0;
        for walk in &corpus.walks {
            for i in 0..walk.len() {
                let lo = i.saturating_sub(config.window);
                let hi = (i + config.window).min(walk.len() - 1);
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let center = walk[i] as usize;
                    let ctx = walk[j] as usize;
                    negs.clear();
                    for _ in 0..config.negatives {
                        let neg = sample_node(&cum, &mut rng);
                        if neg != ctx {
                            negs.push(neg);
                        }
                    }
                    let lr = config.lr_start
                        + (config.lr_end - config.lr_start)
                            * (update as f64 / total_updates as f64);
                    epoch_loss +=
                        pair_step(&mut input, &mut context, d, center, ctx, &negs, lr, &mut scratch);
                    update += 1;
                }
            }
        }
        let denom = pairs_per_epoch.max(1) as f64;
        epoch_losses.push(epoch_loss / denom);
    }

    Ok(EmbeddingModel { d, vectors: input, epoch_losses })
}
