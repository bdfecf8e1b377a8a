//! End-to-end embedding pipeline: forest, per-tree walks and embeddings,
//! feature construction, and the versioned model file.
//!
//! Embedding feature `f` (within the embedding block) comes from tree
//! `f / d`, dimension `f % d`; a row's block for tree `t` is the embedding of
//! the leaf that row reaches in `t`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;

use crate::data::{EncodedColumn, EncodedDataset, EncodingMap, Feature, FeatureKind, Schema};
use crate::embed::{train_skipgram, EmbedConfig, EmbeddingModel};
use crate::error::{Error, Result};
use crate::forest::{
    apply_leaf, fit_forest, DecisionTree, Forest, ForestParams, SplitPredicate, TreeNode,
};
use crate::graphwalk::{generate_walks, tree_to_graph, WalkParams};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, STREAM_EMBED, STREAM_WALK};

const MODEL_MAGIC: &[u8; 4] = b"RFNE";
const MODEL_VERSION: u32 = 1;
/// Upper bound on any element count read from a model file; larger values
/// mean the file is corrupt rather than merely large.
const MAX_COUNT: u64 = 1 << 28;

/// Full pipeline configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RfneConfig {
    pub forest: ForestParams,
    pub walk: WalkParams,
    pub embed: EmbedConfig,
    /// Seed from which all per-tree walk and embedding seeds derive.
    pub master_seed: u64,
    /// Whether transformed features keep the encoded columns ahead of the
    /// embedding block.
    pub include_original: bool,
}

impl Default for RfneConfig {
    fn default() -> Self {
        RfneConfig {
            forest: ForestParams::default(),
            walk: WalkParams::default(),
            embed: EmbedConfig::default(),
            master_seed: 42,
            include_original: true,
        }
    }
}

/// Where a transformed feature column comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnProvenance {
    /// Pass-through of an encoded input column.
    Original { column: usize },
    /// Dimension `dim` of tree `tree`'s leaf embedding.
    Embedding { tree: usize, dim: usize },
}

/// Transformed feature matrix with per-column provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub matrix: Matrix,
    pub provenance: Vec<ColumnProvenance>,
}

/// A fitted pipeline: forest, one embedding per tree, and the encoding the
/// forest was trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct RfneModel {
    pub forest: Forest,
    pub embeddings: Vec<EmbeddingModel>,
    pub encoding: EncodingMap,
    pub config: RfneConfig,
}

impl RfneModel {
    /// Width of the embedding block: trees times dimension.
    pub fn embedding_width(&self) -> usize {
        self.forest.trees.len() * self.config.embed.d
    }
}

/// Fits the full pipeline on an encoded training set.
pub fn fit_rfne(train: &EncodedDataset, config: &RfneConfig) -> Result<RfneModel> {
    let forest = fit_forest(&train.matrix, &train.target, &config.forest, config.master_seed)?;
    let embeddings: Vec<EmbeddingModel> = forest
        .trees
        .par_iter()
        .enumerate()
        .map(|(i, tree)| {
            let graph = tree_to_graph(tree);
            let corpus = generate_walks(
                &graph,
                &config.walk,
                derive_seed(config.master_seed, STREAM_WALK, i as u64),
            )?;
            train_skipgram(
                &corpus,
                &config.embed,
                derive_seed(config.master_seed, STREAM_EMBED, i as u64),
            )
        })
        .collect::<Result<_>>()?;
    Ok(RfneModel { forest, embeddings, encoding: train.map.clone(), config: *config })
}

/// Transforms an encoded dataset with the model's own `include_original`
/// setting. The dataset must carry the encoding the model was fitted with.
pub fn transform(model: &RfneModel, data: &EncodedDataset) -> Result<FeatureMatrix> {
    if data.map != model.encoding {
        return Err(Error::data(
            "dataset encoding does not match the encoding the model was trained on".to_string(),
        ));
    }
    transform_features(model, &data.matrix, model.config.include_original)
}

/// Transforms a raw encoded matrix, overriding `include_original`.
pub fn transform_features(
    model: &RfneModel,
    matrix: &Matrix,
    include_original: bool,
) -> Result<FeatureMatrix> {
    let width = model.encoding.width();
    if matrix.n_cols() != width {
        return Err(Error::data(format!(
            "matrix width {} does not match encoding width {}",
            matrix.n_cols(),
            width
        )));
    }
    let d = model.config.embed.d;
    let k = model.forest.trees.len();
    let base = if include_original { width } else { 0 };
    let out_cols = base + k * d;

    let mut provenance = Vec::with_capacity(out_cols);
    if include_original {
        provenance.extend((0..width).map(|column| ColumnProvenance::Original { column }));
    }
    for tree in 0..k {
        provenance.extend((0..d).map(move |dim| ColumnProvenance::Embedding { tree, dim }));
    }

    let n_rows = matrix.n_rows();
    let mut data = vec![0.0; n_rows * out_cols];
    data.par_chunks_mut(out_cols.max(1))
        .enumerate()
        .take(n_rows)
        .try_for_each(|(i, out_row)| -> Result<()> {
            let row = matrix.row(i);
            if include_original {
                out_row[..width].copy_from_slice(row);
            }
            for (t, tree) in model.forest.trees.iter().enumerate() {
                let leaf = apply_leaf(tree, row)?;
                let vector = model.embeddings[t].lookup(leaf)?;
                out_row[base + t * d..base + (t + 1) * d].copy_from_slice(vector);
            }
            Ok(())
        })?;
    Ok(FeatureMatrix { matrix: Matrix::from_vec(n_rows, out_cols, data)?, provenance })
}

fn eof(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::CorruptModel("unexpected end of file".to_string())
    } else {
        Error::Io(e)
    }
}

fn write_count<W: Write>(w: &mut W, v: usize) -> Result<()> {
    w.write_u64::<LittleEndian>(v as u64)?;
    Ok(())
}

fn read_count<R: Read>(r: &mut R) -> Result<usize> {
    let v = r.read_u64::<LittleEndian>().map_err(eof)?;
    if v > MAX_COUNT {
        return Err(Error::CorruptModel(format!("implausible element count {v}")));
    }
    Ok(v as usize)
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>().map_err(eof)? as usize;
    if len > (1 << 24) {
        return Err(Error::CorruptModel(format!("implausible string length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(eof)?;
    String::from_utf8(buf).map_err(|_| Error::CorruptModel("invalid utf-8 string".to_string()))
}

fn write_bool<W: Write>(w: &mut W, v: bool) -> Result<()> {
    w.write_u8(u8::from(v))?;
    Ok(())
}

fn read_bool<R: Read>(r: &mut R) -> Result<bool> {
    match r.read_u8().map_err(eof)? {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(Error::CorruptModel(format!("invalid boolean byte {v}"))),
    }
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_f64::<LittleEndian>(v)?;
    Ok(())
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    r.read_f64::<LittleEndian>().map_err(eof)
}

fn write_config<W: Write>(w: &mut W, c: &RfneConfig) -> Result<()> {
    write_count(w, c.forest.k)?;
    write_count(w, c.forest.max_depth)?;
    write_bool(w, c.forest.features_per_split.is_some())?;
    write_count(w, c.forest.features_per_split.unwrap_or(0))?;
    write_count(w, c.forest.min_samples_leaf)?;
    write_count(w, c.walk.l)?;
    write_count(w, c.walk.r)?;
    write_f64(w, c.walk.p)?;
    write_f64(w, c.walk.q)?;
    write_count(w, c.embed.d)?;
    write_count(w, c.embed.window)?;
    write_count(w, c.embed.negatives)?;
    write_count(w, c.embed.epochs)?;
    write_f64(w, c.embed.lr_start)?;
    write_f64(w, c.embed.lr_end)?;
    w.write_u64::<LittleEndian>(c.master_seed)?;
    write_bool(w, c.include_original)?;
    Ok(())
}

fn read_config<R: Read>(r: &mut R) -> Result<RfneConfig> {
    let k = read_count(r)?;
    let max_depth = read_count(r)?;
    let has_fps = read_bool(r)?;
    let fps = read_count(r)?;
    let min_samples_leaf = read_count(r)?;
    let forest = ForestParams {
        k,
        max_depth,
        features_per_split: has_fps.then_some(fps),
        min_samples_leaf,
    };
    let walk = WalkParams {
        l: read_count(r)?,
        r: read_count(r)?,
        p: read_f64(r)?,
        q: read_f64(r)?,
    };
    let embed = EmbedConfig {
        d: read_count(r)?,
        window: read_count(r)?,
        negatives: read_count(r)?,
        epochs: read_count(r)?,
        lr_start: read_f64(r)?,
        lr_end: read_f64(r)?,
    };
    let master_seed = r.read_u64::<LittleEndian>().map_err(eof)?;
    let include_original = read_bool(r)?;
    Ok(RfneConfig { forest, walk, embed, master_seed, include_original })
}

fn write_encoding<W: Write>(w: &mut W, map: &EncodingMap) -> Result<()> {
    write_str(w, &map.schema.target_name)?;
    write_str(w, &map.schema.positive_label)?;
    write_count(w, map.schema.features.len())?;
    for f in &map.schema.features {
        write_str(w, &f.name)?;
        w.write_u8(match f.kind {
            FeatureKind::Numeric => 0,
            FeatureKind::Categorical => 1,
        })?;
        write_count(w, f.categories.len())?;
        for c in &f.categories {
            write_str(w, c)?;
        }
    }
    write_count(w, map.columns.len())?;
    for col in &map.columns {
        match col {
            EncodedColumn::Numeric { feature, impute } => {
                w.write_u8(0)?;
                write_count(w, *feature)?;
                write_f64(w, *impute)?;
            }
            EncodedColumn::Indicator { feature, category } => {
                w.write_u8(1)?;
                write_count(w, *feature)?;
                write_bool(w, category.is_some())?;
                w.write_u32::<LittleEndian>(category.unwrap_or(0))?;
            }
        }
    }
    Ok(())
}

fn read_encoding<R: Read>(r: &mut R) -> Result<EncodingMap> {
    let target_name = read_str(r)?;
    let positive_label = read_str(r)?;
    let n_features = read_count(r)?;
    let mut features = Vec::with_capacity(n_features);
    for _ in 0..n_features {
        let name = read_str(r)?;
        let kind = match r.read_u8().map_err(eof)? {
            0 => FeatureKind::Numeric,
            1 => FeatureKind::Categorical,
            v => return Err(Error::CorruptModel(format!("invalid feature kind {v}"))),
        };
        let n_cats = read_count(r)?;
        let mut categories = Vec::with_capacity(n_cats);
        for _ in 0..n_cats {
            categories.push(read_str(r)?);
        }
        features.push(Feature { name, kind, categories });
    }
    let n_cols = read_count(r)?;
    let mut columns = Vec::with_capacity(n_cols);
    for _ in 0..n_cols {
        columns.push(match r.read_u8().map_err(eof)? {
            0 => EncodedColumn::Numeric { feature: read_count(r)?, impute: read_f64(r)? },
            1 => {
                let feature = read_count(r)?;
                let has_cat = read_bool(r)?;
                let cat = r.read_u32::<LittleEndian>().map_err(eof)?;
                EncodedColumn::Indicator { feature, category: has_cat.then_some(cat) }
            }
            v => return Err(Error::CorruptModel(format!("invalid encoded-column tag {v}"))),
        });
    }
    Ok(EncodingMap { schema: Schema { features, target_name, positive_label }, columns })
}

fn write_tree<W: Write>(w: &mut W, tree: &DecisionTree) -> Result<()> {
    write_count(w, tree.n_cols)?;
    write_count(w, tree.nodes.len())?;
    for node in &tree.nodes {
        w.write_u32::<LittleEndian>(node.id)?;
        w.write_u16::<LittleEndian>(node.depth)?;
        write_bool(w, node.split.is_some())?;
        if let Some(split) = &node.split {
            write_count(w, split.column)?;
            write_f64(w, split.threshold)?;
        }
        write_bool(w, node.children.is_some())?;
        if let Some((l, r)) = node.children {
            w.write_u32::<LittleEndian>(l)?;
            w.write_u32::<LittleEndian>(r)?;
        }
        w.write_u32::<LittleEndian>(node.class_counts.0)?;
        w.write_u32::<LittleEndian>(node.class_counts.1)?;
    }
    Ok(())
}

fn read_tree<R: Read>(r: &mut R) -> Result<DecisionTree> {
    let n_cols = read_count(r)?;
    let n_nodes = read_count(r)?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let id = r.read_u32::<LittleEndian>().map_err(eof)?;
        let depth = r.read_u16::<LittleEndian>().map_err(eof)?;
        let split = if read_bool(r)? {
            Some(SplitPredicate { column: read_count(r)?, threshold: read_f64(r)? })
        } else {
            None
        };
        let children = if read_bool(r)? {
            let l = r.read_u32::<LittleEndian>().map_err(eof)?;
            let rr = r.read_u32::<LittleEndian>().map_err(eof)?;
            Some((l, rr))
        } else {
            None
        };
        let neg = r.read_u32::<LittleEndian>().map_err(eof)?;
        let pos = r.read_u32::<LittleEndian>().map_err(eof)?;
        nodes.push(TreeNode { id, depth, split, children, class_counts: (neg, pos) });
    }
    Ok(DecisionTree { nodes, n_cols })
}

fn write_embedding<W: Write>(w: &mut W, e: &EmbeddingModel) -> Result<()> {
    write_count(w, e.d)?;
    write_count(w, e.n_nodes())?;
    for &v in &e.vectors {
        write_f64(w, v)?;
    }
    write_count(w, e.epoch_losses.len())?;
    for &v in &e.epoch_losses {
        write_f64(w, v)?;
    }
    Ok(())
}

fn read_embedding<R: Read>(r: &mut R) -> Result<EmbeddingModel> {
    let d = read_count(r)?;
    let n_nodes = read_count(r)?;
    let mut vectors = Vec::with_capacity(n_nodes * d);
    for _ in 0..n_nodes * d {
        vectors.push(read_f64(r)?);
    }
    let n_losses = read_count(r)?;
    let mut epoch_losses = Vec::with_capacity(n_losses);
    for _ in 0..n_losses {
        epoch_losses.push(read_f64(r)?);
    }
    Ok(EmbeddingModel { d, vectors, epoch_losses })
}

/// Writes the model to a file. The bytes are a pure function of the model,
/// so identically fitted models produce identical files.
pub fn save_model(model: &RfneModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    w.write_u32::<LittleEndian>(MODEL_VERSION)?;
    write_config(&mut w, &model.config)?;
    write_encoding(&mut w, &model.encoding)?;
    write_count(&mut w, model.forest.trees.len())?;
    for tree in &model.forest.trees {
        write_tree(&mut w, tree)?;
    }
    for embedding in &model.embeddings {
        write_embedding(&mut w, embedding)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a model file, rejecting corrupt or future-versioned files.
pub fn load_model(path: impl AsRef<Path>) -> Result<RfneModel> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::CorruptModel("bad magic bytes".to_string()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(eof)?;
    if version != MODEL_VERSION {
        return Err(Error::ModelVersion { found: version, supported: MODEL_VERSION });
    }
    let config = read_config(&mut r)?;
    let encoding = read_encoding(&mut r)?;
    let n_trees = read_count(&mut r)?;
    if n_trees != config.forest.k {
        return Err(Error::CorruptModel(format!(
            "tree count {} does not match configured {}",
            n_trees, config.forest.k
        )));
    }
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        trees.push(read_tree(&mut r)?);
    }
    let mut embeddings = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        embeddings.push(read_embedding(&mut r)?);
    }
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => return Err(Error::CorruptModel("trailing data after model".to_string())),
        Err(e) => return Err(Error::Io(e)),
    }
    Ok(RfneModel {
        forest: Forest { trees, params: config.forest, master_seed: config.master_seed },
        embeddings,
        encoding,
        config,
    })
}
