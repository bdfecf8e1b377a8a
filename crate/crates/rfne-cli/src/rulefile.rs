//! Segment rules on disk. Rules are stored as JSON with feature and
//! category *names* so a rule written against one dataset can be applied to
//! any dataset whose schema contains those features. A `null` category is
//! the synthetic "missing" member.

use std::collections::BTreeSet;
use std::path::Path;

use rfne_core::{Error, Predicate, Result, Schema, SegmentRule};
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    predicates: Vec<PredicateFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PredicateFile {
    Interval { feature: String, low: Option<f64>, high: Option<f64> },
    In { feature: String, categories: Vec<Option<String>> },
    NotIn { feature: String, categories: Vec<Option<String>> },
}

/// Writes a rule as JSON, naming features and categories via the schema.
pub fn write_rule(path: &Path, rule: &SegmentRule, schema: &Schema) -> Result<()> {
    let name_of = |feature: usize| schema.features[feature].name.clone();
    let labels = |feature: usize, categories: &BTreeSet<Option<u32>>| {
        categories
            .iter()
            .map(|c| c.map(|i| schema.features[feature].categories[i as usize].clone()))
            .collect::<Vec<_>>()
    };
    let predicates = rule
        .predicates
        .iter()
        .map(|p| match p {
            Predicate::NumericInterval { feature, low, high } => {
                PredicateFile::Interval { feature: name_of(*feature), low: *low, high: *high }
            }
            Predicate::CategoryIn { feature, categories } => PredicateFile::In {
                feature: name_of(*feature),
                categories: labels(*feature, categories),
            },
            Predicate::CategoryNot { feature, categories } => PredicateFile::NotIn {
                feature: name_of(*feature),
                categories: labels(*feature, categories),
            },
        })
        .collect();
    let text = serde_json::to_string_pretty(&RuleFile { predicates })
        .expect("rule serialization cannot fail");
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Reads a rule file and resolves its names against a schema.
pub fn read_rule(path: &Path, schema: &Schema) -> Result<SegmentRule> {
    let text = std::fs::read_to_string(path)?;
    let file: RuleFile = serde_json::from_str(&text)
        .map_err(|e| Error::data(format!("rule file {}: {e}", path.display())))?;

    let feature_of = |name: &str| {
        schema
            .feature_index(name)
            .ok_or_else(|| Error::data(format!("rule references unknown feature {name:?}")))
    };
    let resolve = |feature: usize, categories: &[Option<String>]| -> Result<BTreeSet<Option<u32>>> {
        let roster = &schema.features[feature].categories;
        categories
            .iter()
            .map(|c| match c {
                None => Ok(None),
                Some(label) => roster
                    .iter()
                    .position(|r| r == label)
                    .map(|i| Some(i as u32))
                    .ok_or_else(|| {
                        Error::data(format!(
                            "unknown category {label:?} for feature {:?}",
                            schema.features[feature].name
                        ))
                    }),
            })
            .collect()
    };

    let mut predicates = Vec::with_capacity(file.predicates.len());
    for p in &file.predicates {
        predicates.push(match p {
            PredicateFile::Interval { feature, low, high } => {
                let feature = feature_of(feature)?;
                Predicate::NumericInterval { feature, low: *low, high: *high }
            }
            PredicateFile::In { feature, categories } => {
                let feature = feature_of(feature)?;
                Predicate::CategoryIn { feature, categories: resolve(feature, categories)? }
            }
            PredicateFile::NotIn { feature, categories } => {
                let feature = feature_of(feature)?;
                Predicate::CategoryNot { feature, categories: resolve(feature, categories)? }
            }
        });
    }
    Ok(SegmentRule { predicates })
}
