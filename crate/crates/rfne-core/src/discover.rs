//! Statistical rule discovery over embedding features.
//!
//! The procedure regresses a binary target on the embedding features with an
//! unpenalized logistic fit, keeps features that are significantly positive,
//! picks the tree whose candidate features carry the largest total log-odds,
//! finds the leaf nearest the positive rows' center of mass in that tree's
//! embedding space, decodes the leaf's root-to-leaf path into a readable
//! rule, and verifies the resulting segment with a chi-square test.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::{Column, Dataset, EncodedColumn, EncodedDataset, EncodingMap, FeatureKind, Schema};
use crate::embed::EmbeddingModel;
use crate::error::{Error, Result};
use crate::forest::{apply_leaf, DecisionTree};
use crate::matrix::Matrix;
use crate::models::{fit_logistic, logistic_inference, InferenceTable, Regularization};
use crate::pipeline::{transform_features, RfneModel};

/// Embedding columns with standard deviation at or below this are dropped
/// before the discovery fit.
const VARIANCE_FLOOR: f64 = 1e-12;
const DISCOVERY_MAX_ITER: usize = 500;

/// One condition on a raw feature. Category sets may contain `None`, the
/// synthetic "missing" member produced by the missing-value indicator.
#[derive(Clone, Debug, PartialEq)]
pub enum Predicate {
    /// `low < value <= high`; `None` means unbounded on that side. A missing
    /// value never satisfies an interval.
    NumericInterval { feature: usize, low: Option<f64>, high: Option<f64> },
    /// Value is one of the listed categories; a missing value never
    /// satisfies it.
    CategoryIn { feature: usize, categories: BTreeSet<Option<u32>> },
    /// Value is none of the listed categories; a missing value always
    /// satisfies it.
    CategoryNot { feature: usize, categories: BTreeSet<Option<u32>> },
}

impl Predicate {
    /// Index of the raw feature the predicate constrains.
    pub fn feature(&self) -> usize {
        match self {
            Predicate::NumericInterval { feature, .. }
            | Predicate::CategoryIn { feature, .. }
            | Predicate::CategoryNot { feature, .. } => *feature,
        }
    }
}

/// Conjunction of per-feature predicates decoded from one root-to-leaf path.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentRule {
    pub predicates: Vec<Predicate>,
}

impl SegmentRule {
    /// Human-readable form, e.g. `pdays <= 9.5 and marital != 'single'`.
    pub fn render(&self, schema: &Schema) -> String {
        if self.predicates.is_empty() {
            return "(all rows)".to_string();
        }
        let label = |feature: usize, c: &Option<u32>| match c {
            Some(i) => format!("'{}'", schema.features[feature].categories[*i as usize]),
            None => "missing".to_string(),
        };
        let set = |feature: usize, cats: &BTreeSet<Option<u32>>| {
            cats.iter().map(|c| label(feature, c)).collect::<Vec<_>>().join(", ")
        };
        self.predicates
            .iter()
            .map(|p| match p {
                Predicate::NumericInterval { feature, low, high } => {
                    let name = &schema.features[*feature].name;
                    match (low, high) {
                        (Some(l), Some(h)) => format!("{l} < {name} <= {h}"),
                        (Some(l), None) => format!("{name} > {l}"),
                        (None, Some(h)) => format!("{name} <= {h}"),
                        (None, None) => format!("{name} is anything"),
                    }
                }
                Predicate::CategoryIn { feature, categories } => {
                    let name = &schema.features[*feature].name;
                    if categories.len() == 1 {
                        format!("{name} = {}", set(*feature, categories))
                    } else {
                        format!("{name} in {{{}}}", set(*feature, categories))
                    }
                }
                Predicate::CategoryNot { feature, categories } => {
                    let name = &schema.features[*feature].name;
                    if categories.len() == 1 {
                        format!("{name} != {}", set(*feature, categories))
                    } else {
                        format!("{name} not in {{{}}}", set(*feature, categories))
                    }
                }
            })
            .collect::<Vec<_>>()
            .join(" and ")
    }
}

/// Decodes the root-to-leaf path of `leaf` into one predicate per raw
/// feature touched along the path.
pub fn extract_rule(tree: &DecisionTree, leaf: u32, map: &EncodingMap) -> Result<SegmentRule> {
    let idx = leaf as usize;
    if idx >= tree.n_nodes() {
        return Err(Error::data(format!("node {leaf} does not exist in the tree")));
    }
    if !tree.nodes[idx].is_leaf() {
        return Err(Error::data(format!("node {leaf} is not a leaf")));
    }

    let parents = tree.parents();
    let mut path = Vec::new();
    let mut cursor = leaf;
    while let Some((parent, went_left)) = parents[cursor as usize] {
        path.push((parent, went_left));
        cursor = parent;
    }
    path.reverse();

    let mut intervals: BTreeMap<usize, (Option<f64>, Option<f64>)> = BTreeMap::new();
    let mut ins: BTreeMap<usize, BTreeSet<Option<u32>>> = BTreeMap::new();
    let mut nots: BTreeMap<usize, BTreeSet<Option<u32>>> = BTreeMap::new();
    for (node, went_left) in path {
        let split = tree.nodes[node as usize]
            .split
            .as_ref()
            .ok_or_else(|| Error::data(format!("internal node {node} lacks a split")))?;
        if split.column >= map.columns.len() {
            return Err(Error::data(format!(
                "split column {} is outside the encoding of width {}",
                split.column,
                map.columns.len()
            )));
        }
        match &map.columns[split.column] {
            EncodedColumn::Numeric { feature, .. } => {
                let entry = intervals.entry(*feature).or_insert((None, None));
                if went_left {
                    entry.1 = Some(match entry.1 {
                        Some(h) => h.min(split.threshold),
                        None => split.threshold,
                    });
                } else {
                    entry.0 = Some(match entry.0 {
                        Some(l) => l.max(split.threshold),
                        None => split.threshold,
                    });
                }
            }
            EncodedColumn::Indicator { feature, category } => {
                if went_left {
                    nots.entry(*feature).or_default().insert(*category);
                } else {
                    ins.entry(*feature).or_default().insert(*category);
                }
            }
        }
    }

    let mut by_feature: BTreeMap<usize, Predicate> = BTreeMap::new();
    for (feature, (low, high)) in intervals {
        by_feature.insert(feature, Predicate::NumericInterval { feature, low, high });
    }
    for (feature, categories) in nots {
        by_feature.insert(feature, Predicate::CategoryNot { feature, categories });
    }
    // A matched category is strictly stronger than any excluded ones on the
    // same feature, so it replaces them.
    for (feature, categories) in ins {
        by_feature.insert(feature, Predicate::CategoryIn { feature, categories });
    }
    Ok(SegmentRule { predicates: by_feature.into_values().collect() })
}

/// Evaluates a rule against raw (pre-encoding) rows.
///
/// A missing categorical value is a first-class category: `None` inside a
/// predicate's set matches (or, for [`Predicate::CategoryNot`], excludes)
/// exactly the missing rows. A missing numeric value satisfies no interval,
/// so segment counts can differ from the model's internal routing, which
/// imputes the training median, on rows with missing numeric features.
pub fn apply_rule(dataset: &Dataset, rule: &SegmentRule) -> Result<Vec<bool>> {
    for p in &rule.predicates {
        let feature = p.feature();
        let Some(f) = dataset.schema.features.get(feature) else {
            return Err(Error::data(format!("rule references unknown feature {feature}")));
        };
        let want_numeric = matches!(p, Predicate::NumericInterval { .. });
        let is_numeric = f.kind == FeatureKind::Numeric;
        if want_numeric != is_numeric {
            return Err(Error::data(format!(
                "rule kind does not match feature '{}'",
                f.name
            )));
        }
    }
    let mut mask = vec![true; dataset.n_rows()];
    for p in &rule.predicates {
        match p {
            Predicate::NumericInterval { feature, low, high } => {
                let Column::Numeric(values) = &dataset.columns[*feature] else {
                    unreachable!("kind checked above");
                };
                for (m, v) in mask.iter_mut().zip(values) {
                    *m &= match v {
                        Some(v) => {
                            low.map_or(true, |l| *v > l) && high.map_or(true, |h| *v <= h)
                        }
                        None => false,
                    };
                }
            }
            Predicate::CategoryIn { feature, categories } => {
                let Column::Categorical(values) = &dataset.columns[*feature] else {
                    unreachable!("kind checked above");
                };
                for (m, v) in mask.iter_mut().zip(values) {
                    *m &= categories.contains(v);
                }
            }
            Predicate::CategoryNot { feature, categories } => {
                let Column::Categorical(values) = &dataset.columns[*feature] else {
                    unreachable!("kind checked above");
                };
                for (m, v) in mask.iter_mut().zip(values) {
                    *m &= !categories.contains(v);
                }
            }
        }
    }
    Ok(mask)
}

/// 2x2 segment-by-target counts: `counts[in_segment][target]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    pub counts: [[u64; 2]; 2],
}

impl ContingencyTable {
    /// Tabulates segment membership against a binary target.
    pub fn from_masks(in_segment: &[bool], target: &[u8]) -> Result<ContingencyTable> {
        if in_segment.len() != target.len() {
            return Err(Error::data(format!(
                "{} segment flags for {} targets",
                in_segment.len(),
                target.len()
            )));
        }
        let mut counts = [[0u64; 2]; 2];
        for (&s, &t) in in_segment.iter().zip(target) {
            if t > 1 {
                return Err(Error::data("target values must be 0 or 1".to_string()));
            }
            counts[usize::from(s)][usize::from(t)] += 1;
        }
        Ok(ContingencyTable { counts })
    }
}

/// Pearson chi-square test result on a 2x2 table (1 degree of freedom, no
/// continuity correction).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub p_value: f64,
    pub expected: [[f64; 2]; 2],
}

/// Pearson chi-square test of independence for a 2x2 table.
pub fn chi_square(table: &ContingencyTable) -> Result<ChiSquareTest> {
    let c = &table.counts;
    let row = [c[0][0] + c[0][1], c[1][0] + c[1][1]];
    let col = [c[0][0] + c[1][0], c[0][1] + c[1][1]];
    let total = row[0] + row[1];
    if row.contains(&0) || col.contains(&0) {
        return Err(Error::data(
            "chi-square is undefined when a row or column marginal is zero".to_string(),
        ));
    }
    let mut expected = [[0.0; 2]; 2];
    let mut statistic = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = row[i] as f64 * col[j] as f64 / total as f64;
            expected[i][j] = e;
            let d = c[i][j] as f64 - e;
            statistic += d * d / e;
        }
    }
    let dist = ChiSquared::new(1.0).expect("chi-square with 1 df");
    Ok(ChiSquareTest { statistic, p_value: dist.sf(statistic), expected })
}

/// Leaf of `tree` whose embedding vector is nearest the query in Euclidean
/// distance; ties go to the smaller leaf id. Returns `(leaf id, distance)`.
pub fn nearest_leaf(
    tree: &DecisionTree,
    embedding: &EmbeddingModel,
    query: &[f64],
) -> Result<(u32, f64)> {
    if query.len() != embedding.d {
        return Err(Error::data(format!(
            "query length {} does not match embedding dimension {}",
            query.len(),
            embedding.d
        )));
    }
    let mut best: Option<(u32, f64)> = None;
    for leaf in tree.leaf_ids() {
        let v = embedding.lookup(leaf)?;
        let d2: f64 = query.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.map_or(true, |(_, bd)| d2 < bd) {
            best = Some((leaf, d2));
        }
    }
    let (leaf, d2) = best.ok_or_else(|| Error::data("tree has no leaves".to_string()))?;
    Ok((leaf, d2.sqrt()))
}

/// Everything found for a significant segment.
#[derive(Clone, Debug)]
pub struct DiscoveryReport {
    /// Inference table over the embedding features that entered the fit.
    pub inference: InferenceTable,
    /// Global embedding-feature indices that entered the fit (constant
    /// columns are dropped).
    pub kept_features: Vec<usize>,
    /// Features significant at alpha with positive log-odds.
    pub candidates: Vec<usize>,
    /// Selected tree index.
    pub tree: usize,
    /// Sum of candidate log-odds within the selected tree.
    pub tree_score: f64,
    /// Center of mass of positive rows in the selected tree's embedding.
    pub center: Vec<f64>,
    /// Leaf nearest the center, and its distance.
    pub leaf: u32,
    pub leaf_distance: f64,
    /// Decoded root-to-leaf rule.
    pub rule: SegmentRule,
    /// Segment-by-target counts and the verification test.
    pub table: ContingencyTable,
    pub chi_square: f64,
    pub p_value: f64,
    /// Rows inside the segment, and positive rates inside, outside, and
    /// overall.
    pub n_in: usize,
    pub rate_in: f64,
    pub rate_out: f64,
    pub rate_overall: f64,
    /// `rate_in / rate_overall`.
    pub lift: f64,
}

/// Outcome of `discover_rule`: either no embedding feature is significant at
/// alpha, or a decoded and verified segment.
#[derive(Clone, Debug)]
pub enum Discovery {
    NoSignificantTree { inference: InferenceTable },
    Found(Box<DiscoveryReport>),
}

/// Runs the discovery procedure for a binary `target` over `data`, which
/// must carry the encoding the model was trained with.
pub fn discover_rule(
    model: &RfneModel,
    data: &EncodedDataset,
    target: &[u8],
    alpha: f64,
) -> Result<Discovery> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!("alpha must be in (0, 1), got {alpha}")));
    }
    if target.len() != data.n_rows() {
        return Err(Error::data(format!(
            "{} targets for {} rows",
            target.len(),
            data.n_rows()
        )));
    }
    if !target.contains(&0) || !target.contains(&1) {
        return Err(Error::data("discovery target has a single class".to_string()));
    }
    if data.map != model.encoding {
        return Err(Error::data(
            "dataset encoding does not match the encoding the model was trained on".to_string(),
        ));
    }

    let d = model.config.embed.d;
    let features = transform_features(model, &data.matrix, false)?;
    let f = &features.matrix;

    let n = f.n_rows() as f64;
    let mut mean = vec![0.0; f.n_cols()];
    for row in f.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; f.n_cols()];
    for row in f.rows() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let kept: Vec<usize> =
        (0..f.n_cols()).filter(|&j| var[j].sqrt() > VARIANCE_FLOOR).collect();
    if kept.is_empty() {
        return Err(Error::data(
            "all embedding features are constant; nothing to test".to_string(),
        ));
    }

    let mut sub_data = Vec::with_capacity(f.n_rows() * kept.len());
    for row in f.rows() {
        sub_data.extend(kept.iter().map(|&j| row[j]));
    }
    let sub = Matrix::from_vec(f.n_rows(), kept.len(), sub_data)?;
    let names: Vec<String> = kept.iter().map(|j| format!("feature_{j}")).collect();

    let logit = fit_logistic(&sub, target, Regularization::None, DISCOVERY_MAX_ITER)?;
    let inference = logistic_inference(&logit, &sub, target, &names)?;

    let candidates: Vec<usize> = inference
        .rows
        .iter()
        .skip(1)
        .zip(&kept)
        .filter(|(row, _)| row.p_value < alpha && row.log_odds > 0.0)
        .map(|(_, &j)| j)
        .collect();
    if candidates.is_empty() {
        return Ok(Discovery::NoSignificantTree { inference });
    }

    let log_odds_of: BTreeMap<usize, f64> = inference
        .rows
        .iter()
        .skip(1)
        .zip(&kept)
        .map(|(row, &j)| (j, row.log_odds))
        .collect();
    let mut tree_scores: BTreeMap<usize, f64> = BTreeMap::new();
    for &j in &candidates {
        *tree_scores.entry(j / d).or_insert(0.0) += log_odds_of[&j];
    }
    let (&tree, &tree_score) = tree_scores
        .iter()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(a.0)))
        .expect("candidates exist");

    let mut center = vec![0.0; d];
    let mut n_pos = 0.0;
    for (i, row) in f.rows().enumerate() {
        if target[i] == 1 {
            n_pos += 1.0;
            for (c, v) in center.iter_mut().zip(&row[tree * d..(tree + 1) * d]) {
                *c += v;
            }
        }
    }
    for c in &mut center {
        *c /= n_pos;
    }

    let tree_model = &model.forest.trees[tree];
    let (leaf, leaf_distance) = nearest_leaf(tree_model, &model.embeddings[tree], &center)?;
    let rule = extract_rule(tree_model, leaf, &model.encoding)?;

    let in_segment: Vec<bool> = (0..data.n_rows())
        .into_par_iter()
        .map(|i| apply_leaf(tree_model, data.matrix.row(i)).map(|l| l == leaf))
        .collect::<Result<_>>()?;
    let table = ContingencyTable::from_masks(&in_segment, target)?;
    let test = chi_square(&table)?;

    let n_in = (table.counts[1][0] + table.counts[1][1]) as usize;
    let n_out = (table.counts[0][0] + table.counts[0][1]) as usize;
    let rate_in = table.counts[1][1] as f64 / n_in as f64;
    let rate_out = table.counts[0][1] as f64 / n_out as f64;
    let rate_overall =
        (table.counts[0][1] + table.counts[1][1]) as f64 / target.len() as f64;

    Ok(Discovery::Found(Box::new(DiscoveryReport {
        inference,
        kept_features: kept,
        candidates,
        tree,
        tree_score,
        center,
        leaf,
        leaf_distance,
        rule,
        table,
        chi_square: test.statistic,
        p_value: test.p_value,
        n_in,
        rate_in,
        rate_out,
        rate_overall,
        lift: rate_in / rate_overall,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{encode, fit_encoding, synthetic_noise, synthetic_planted, Feature};
    use crate::embed::EmbedConfig;
    use crate::forest::{fit_forest, ForestParams, SplitPredicate, TreeNode};
    use crate::graphwalk::WalkParams;
    use crate::pipeline::{fit_rfne, RfneConfig};
    use crate::testutil::full_binary_tree;

    #[test]
    fn chi_square_known_values() {
        let uniform = ContingencyTable { counts: [[10, 10], [10, 10]] };
        let t = chi_square(&uniform).unwrap();
        assert!(t.statistic.abs() < 1e-12);
        assert!((t.p_value - 1.0).abs() < 1e-12);

        let skewed = ContingencyTable { counts: [[20, 30], [30, 20]] };
        let t = chi_square(&skewed).unwrap();
        assert_eq!(t.statistic, 4.0);
        assert!((t.p_value - 0.0455).abs() < 1e-3);
        assert_eq!(t.expected, [[25.0, 25.0], [25.0, 25.0]]);

        let degenerate = ContingencyTable { counts: [[0, 0], [5, 5]] };
        assert!(chi_square(&degenerate).is_err());
    }

    #[test]
    fn chi_square_is_orientation_invariant() {
        let a = ContingencyTable { counts: [[13, 29], [41, 7]] };
        let b = ContingencyTable { counts: [[13, 41], [29, 7]] };
        let c = ContingencyTable { counts: [[7, 41], [29, 13]] };
        let sa = chi_square(&a).unwrap().statistic;
        assert!((sa - chi_square(&b).unwrap().statistic).abs() < 1e-12);
        assert!((sa - chi_square(&c).unwrap().statistic).abs() < 1e-12);
    }

    #[test]
    fn nearest_leaf_exact_and_tied() {
        let tree = full_binary_tree(2);
        let mut vectors = vec![0.0; 7 * 2];
        for (i, v) in [(3usize, [1.0, 0.0]), (4, [0.0, 1.0]), (5, [-1.0, 0.0]), (6, [3.0, 3.0])] {
            vectors[i * 2..i * 2 + 2].copy_from_slice(&v);
        }
        let emb = EmbeddingModel { d: 2, vectors, epoch_losses: vec![] };
        let (leaf, dist) = nearest_leaf(&tree, &emb, &[-1.0, 0.0]).unwrap();
        assert_eq!((leaf, dist), (5, 0.0));
        // Equidistant from leaves 3 and 4; the smaller id wins.
        let (leaf, _) = nearest_leaf(&tree, &emb, &[0.5, 0.5]).unwrap();
        assert_eq!(leaf, 3);
        assert!(nearest_leaf(&tree, &emb, &[0.0]).is_err());
    }

    fn numeric_map(names: &[&str]) -> EncodingMap {
        EncodingMap {
            schema: Schema {
                features: names
                    .iter()
                    .map(|n| Feature {
                        name: n.to_string(),
                        kind: FeatureKind::Numeric,
                        categories: vec![],
                    })
                    .collect(),
                target_name: "y".to_string(),
                positive_label: "1".to_string(),
            },
            columns: (0..names.len())
                .map(|feature| EncodedColumn::Numeric { feature, impute: 0.0 })
                .collect(),
        }
    }

    #[test]
    fn extract_rule_merges_numeric_bounds() {
        // Root splits x at 2.0; its left child splits x again at 1.0. The
        // leaf on the right of the child is the segment 1.0 < x <= 2.0.
        let nodes = vec![
            TreeNode {
                id: 0,
                depth: 0,
                split: Some(SplitPredicate { column: 0, threshold: 2.0 }),
                children: Some((1, 2)),
                class_counts: (4, 4),
            },
            TreeNode {
                id: 1,
                depth: 1,
                split: Some(SplitPredicate { column: 0, threshold: 1.0 }),
                children: Some((3, 4)),
                class_counts: (2, 2),
            },
            TreeNode { id: 2, depth: 1, split: None, children: None, class_counts: (2, 2) },
            TreeNode { id: 3, depth: 2, split: None, children: None, class_counts: (1, 1) },
            TreeNode { id: 4, depth: 2, split: None, children: None, class_counts: (1, 1) },
        ];
        let tree = DecisionTree { nodes, n_cols: 1 };
        let map = numeric_map(&["x"]);

        let rule = extract_rule(&tree, 4, &map).unwrap();
        assert_eq!(
            rule.predicates,
            vec![Predicate::NumericInterval { feature: 0, low: Some(1.0), high: Some(2.0) }]
        );
        assert_eq!(rule.render(&map.schema), "1 < x <= 2");

        let rule = extract_rule(&tree, 3, &map).unwrap();
        assert_eq!(
            rule.predicates,
            vec![Predicate::NumericInterval { feature: 0, low: None, high: Some(1.0) }]
        );
        assert_eq!(rule.render(&map.schema), "x <= 1");

        let rule = extract_rule(&tree, 2, &map).unwrap();
        assert_eq!(rule.render(&map.schema), "x > 2");

        assert!(extract_rule(&tree, 1, &map).is_err());
        assert!(extract_rule(&tree, 99, &map).is_err());
    }

    fn categorical_map() -> EncodingMap {
        EncodingMap {
            schema: Schema {
                features: vec![Feature {
                    name: "loan".to_string(),
                    kind: FeatureKind::Categorical,
                    categories: vec!["no".to_string(), "yes".to_string()],
                }],
                target_name: "y".to_string(),
                positive_label: "1".to_string(),
            },
            columns: vec![
                EncodedColumn::Indicator { feature: 0, category: Some(0) },
                EncodedColumn::Indicator { feature: 0, category: Some(1) },
                EncodedColumn::Indicator { feature: 0, category: None },
            ],
        }
    }

    #[test]
    fn extract_rule_decodes_indicators() {
        // Root splits on the 'yes' indicator; left goes to a split on the
        // 'no' indicator.
        let nodes = vec![
            TreeNode {
                id: 0,
                depth: 0,
                split: Some(SplitPredicate { column: 1, threshold: 0.5 }),
                children: Some((1, 2)),
                class_counts: (4, 4),
            },
            TreeNode {
                id: 1,
                depth: 1,
                split: Some(SplitPredicate { column: 0, threshold: 0.5 }),
                children: Some((3, 4)),
                class_counts: (2, 2),
            },
            TreeNode { id: 2, depth: 1, split: None, children: None, class_counts: (2, 2) },
            TreeNode { id: 3, depth: 2, split: None, children: None, class_counts: (1, 1) },
            TreeNode { id: 4, depth: 2, split: None, children: None, class_counts: (1, 1) },
        ];
        let tree = DecisionTree { nodes, n_cols: 3 };
        let map = categorical_map();

        // Right of the root: the category is 'yes'.
        let rule = extract_rule(&tree, 2, &map).unwrap();
        assert_eq!(rule.render(&map.schema), "loan = 'yes'");

        // Left then left: neither 'yes' nor 'no'.
        let rule = extract_rule(&tree, 3, &map).unwrap();
        assert_eq!(
            rule.predicates,
            vec![Predicate::CategoryNot {
                feature: 0,
                categories: [Some(0), Some(1)].into_iter().collect(),
            }]
        );
        assert_eq!(rule.render(&map.schema), "loan not in {'no', 'yes'}");

        // Left then right: 'no' matched; the earlier exclusion of 'yes' is
        // implied and dropped.
        let rule = extract_rule(&tree, 4, &map).unwrap();
        assert_eq!(
            rule.predicates,
            vec![Predicate::CategoryIn {
                feature: 0,
                categories: [Some(0)].into_iter().collect(),
            }]
        );
        assert_eq!(rule.render(&map.schema), "loan = 'no'");
    }

    fn raw_dataset() -> Dataset {
        Dataset {
            schema: Schema {
                features: vec![
                    Feature {
                        name: "age".to_string(),
                        kind: FeatureKind::Numeric,
                        categories: vec![],
                    },
                    Feature {
                        name: "job".to_string(),
                        kind: FeatureKind::Categorical,
                        categories: vec!["admin".to_string(), "tech".to_string()],
                    },
                ],
                target_name: "y".to_string(),
                positive_label: "1".to_string(),
            },
            columns: vec![
                Column::Numeric(vec![Some(1.0), Some(2.0), None, Some(3.0)]),
                Column::Categorical(vec![Some(0), None, Some(1), Some(1)]),
            ],
            target: vec![0, 1, 0, 1],
        }
    }

    #[test]
    fn apply_rule_missing_semantics() {
        let data = raw_dataset();
        let interval = SegmentRule {
            predicates: vec![Predicate::NumericInterval {
                feature: 0,
                low: None,
                high: Some(2.5),
            }],
        };
        // The missing numeric value in row 2 fails the interval.
        assert_eq!(apply_rule(&data, &interval).unwrap(), vec![true, true, false, false]);

        let is_tech = SegmentRule {
            predicates: vec![Predicate::CategoryIn {
                feature: 1,
                categories: [Some(1)].into_iter().collect(),
            }],
        };
        // The missing category in row 1 fails CategoryIn.
        assert_eq!(apply_rule(&data, &is_tech).unwrap(), vec![false, false, true, true]);

        let not_tech = SegmentRule {
            predicates: vec![Predicate::CategoryNot {
                feature: 1,
                categories: [Some(1)].into_iter().collect(),
            }],
        };
        // The missing category in row 1 satisfies CategoryNot.
        assert_eq!(apply_rule(&data, &not_tech).unwrap(), vec![true, true, false, false]);

        let is_missing = SegmentRule {
            predicates: vec![Predicate::CategoryIn {
                feature: 1,
                categories: [None].into_iter().collect(),
            }],
        };
        // `None` in the set selects exactly the missing rows.
        assert_eq!(apply_rule(&data, &is_missing).unwrap(), vec![false, true, false, false]);

        let known_not_tech = SegmentRule {
            predicates: vec![Predicate::CategoryNot {
                feature: 1,
                categories: [Some(1), None].into_iter().collect(),
            }],
        };
        // `None` in the excluded set rules the missing row out as well.
        assert_eq!(apply_rule(&data, &known_not_tech).unwrap(), vec![true, false, false, false]);

        let empty = SegmentRule { predicates: vec![] };
        assert_eq!(apply_rule(&data, &empty).unwrap(), vec![true; 4]);
    }

    #[test]
    fn apply_rule_rejects_bad_references() {
        let data = raw_dataset();
        let unknown = SegmentRule {
            predicates: vec![Predicate::NumericInterval { feature: 9, low: None, high: None }],
        };
        assert!(apply_rule(&data, &unknown).is_err());
        let mismatched = SegmentRule {
            predicates: vec![Predicate::NumericInterval { feature: 1, low: None, high: None }],
        };
        assert!(apply_rule(&data, &mismatched).is_err());
    }

    #[test]
    fn rules_reproduce_leaf_membership_on_complete_data() {
        let dataset = synthetic_noise(150, 3, 2, 31);
        let map = fit_encoding(&dataset).unwrap();
        let encoded = encode(&dataset, &map).unwrap();
        let params =
            ForestParams { k: 5, max_depth: 4, features_per_split: None, min_samples_leaf: 1 };
        let forest = fit_forest(&encoded.matrix, &encoded.target, &params, 77).unwrap();
        for tree in &forest.trees {
            let leaves: Vec<u32> = (0..encoded.n_rows())
                .map(|i| apply_leaf(tree, encoded.matrix.row(i)).unwrap())
                .collect();
            for leaf in tree.leaf_ids() {
                let rule = extract_rule(tree, leaf, &map).unwrap();
                let mask = apply_rule(&dataset, &rule).unwrap();
                for (i, &m) in mask.iter().enumerate() {
                    assert_eq!(
                        m,
                        leaves[i] == leaf,
                        "row {i}, leaf {leaf}, rule: {}",
                        rule.render(&map.schema)
                    );
                }
            }
        }
    }

    #[test]
    fn rules_reproduce_leaf_membership_with_missing_categories() {
        use rand::Rng;

        let mut dataset = synthetic_noise(200, 2, 2, 47);
        let mut rng = crate::rng::rng_for(47, 0, 9);
        let n = dataset.n_rows();
        let mut gaps = vec![false; n];
        let Column::Categorical(values) = &mut dataset.columns[2] else { unreachable!() };
        for (v, gap) in values.iter_mut().zip(&mut gaps) {
            if rng.gen::<f64>() < 0.3 {
                *v = None;
                *gap = true;
            }
        }
        // Tie the target to missingness so the forest splits on the missing
        // indicator and the decoded rules mention it.
        for (t, &gap) in dataset.target.iter_mut().zip(&gaps) {
            *t = u8::from(gap != (rng.gen::<f64>() < 0.1));
        }

        let map = fit_encoding(&dataset).unwrap();
        let encoded = encode(&dataset, &map).unwrap();
        let params =
            ForestParams { k: 5, max_depth: 4, features_per_split: None, min_samples_leaf: 1 };
        let forest = fit_forest(&encoded.matrix, &encoded.target, &params, 78).unwrap();

        let mut constrained_missing = false;
        for tree in &forest.trees {
            let leaves: Vec<u32> = (0..n)
                .map(|i| apply_leaf(tree, encoded.matrix.row(i)).unwrap())
                .collect();
            for leaf in tree.leaf_ids() {
                let rule = extract_rule(tree, leaf, &map).unwrap();
                constrained_missing |= rule.predicates.iter().any(|p| match p {
                    Predicate::CategoryIn { categories, .. }
                    | Predicate::CategoryNot { categories, .. } => categories.contains(&None),
                    Predicate::NumericInterval { .. } => false,
                });
                let mask = apply_rule(&dataset, &rule).unwrap();
                for (i, &m) in mask.iter().enumerate() {
                    assert_eq!(
                        m,
                        leaves[i] == leaf,
                        "row {i}, leaf {leaf}, rule: {}",
                        rule.render(&map.schema)
                    );
                }
            }
        }
        assert!(constrained_missing, "no decoded rule constrained the missing category");
    }

    fn small_rfne(k: usize, d: usize) -> RfneConfig {
        RfneConfig {
            forest: ForestParams { k, max_depth: 3, features_per_split: None, min_samples_leaf: 1 },
            walk: WalkParams { l: 5, r: 20, p: 1.0, q: 1.0 },
            embed: EmbedConfig { d, window: 2, epochs: 3, ..EmbedConfig::default() },
            master_seed: 5,
            include_original: false,
        }
    }

    #[test]
    fn planted_signal_is_discovered() {
        let dataset = synthetic_planted(3000, 11);
        let map = fit_encoding(&dataset).unwrap();
        let encoded = encode(&dataset, &map).unwrap();
        let config = RfneConfig { master_seed: 3, ..small_rfne(5, 4) };
        let model = fit_rfne(&encoded, &config).unwrap();
        let found = discover_rule(&model, &encoded, &encoded.target, 0.05).unwrap();
        match found {
            Discovery::Found(report) => {
                assert!(!report.candidates.is_empty());
                assert!(report.tree_score > 0.0);
                assert!(report.candidates.iter().any(|&j| j / 4 == report.tree));
                assert_eq!(report.center.len(), 4);
                assert!(!report.rule.predicates.is_empty());
                assert!(report.lift > 1.5, "lift {}", report.lift);
                assert!(report.rate_in > report.rate_out);
                assert!(report.p_value < 0.05, "p {}", report.p_value);
                let expected_in =
                    (report.table.counts[1][1] as f64 / report.n_in as f64 - report.rate_in).abs();
                assert!(expected_in < 1e-12);
            }
            Discovery::NoSignificantTree { .. } => panic!("planted signal was not found"),
        }
    }

    #[test]
    fn noise_rarely_yields_a_discovery() {
        // Null setup: the model is trained on the dataset's own target while
        // the discovery target is a fresh independent draw, so the
        // embeddings carry no information about it.
        use rand::Rng;
        let mut quiet = 0;
        for seed in 0..20 {
            let dataset = synthetic_noise(400, 3, 1, 1000 + seed);
            let map = fit_encoding(&dataset).unwrap();
            let encoded = encode(&dataset, &map).unwrap();
            let config = RfneConfig { master_seed: seed, ..small_rfne(2, 2) };
            let model = fit_rfne(&encoded, &config).unwrap();
            let mut rng = crate::rng::rng_for(7000 + seed, 0, 0);
            let target: Vec<u8> = (0..400).map(|_| u8::from(rng.gen::<f64>() < 0.5)).collect();
            match discover_rule(&model, &encoded, &target, 0.05).unwrap() {
                Discovery::NoSignificantTree { inference } => {
                    assert!(!inference.rows.is_empty());
                    quiet += 1;
                }
                Discovery::Found(_) => {}
            }
        }
        assert!(quiet >= 16, "only {quiet} of 20 null runs stayed quiet");
    }

    #[test]
    fn discover_rejects_bad_inputs() {
        let dataset = synthetic_noise(80, 2, 0, 3);
        let map = fit_encoding(&dataset).unwrap();
        let encoded = encode(&dataset, &map).unwrap();
        let model = fit_rfne(&encoded, &small_rfne(2, 2)).unwrap();
        assert!(discover_rule(&model, &encoded, &encoded.target, 0.0).is_err());
        assert!(discover_rule(&model, &encoded, &encoded.target, 1.0).is_err());
        assert!(discover_rule(&model, &encoded, &vec![0; 80], 0.05).is_err());
        assert!(discover_rule(&model, &encoded, &vec![0, 1], 0.05).is_err());

        let other = synthetic_noise(50, 3, 1, 4);
        let other_map = fit_encoding(&other).unwrap();
        let other_enc = encode(&other, &other_map).unwrap();
        assert!(discover_rule(&model, &other_enc, &other_enc.target, 0.05).is_err());
    }
}
