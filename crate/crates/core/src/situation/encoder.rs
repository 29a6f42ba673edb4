use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{FeatureMapping, SituationTable};
use crate::event_log::{AttributeValue, FeatureName};
use crate::{Error, Result};

pub const OTHER: &str = "OTHER";
pub const MISSING: &str = "MISSING";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric { mean: f64, std: f64 },
    OneHot { category: String },
    Other,
    MissingIndicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub name: String,
    pub source: FeatureName,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

/// Maps feature mappings to fixed-length numeric vectors.
///
/// Text and boolean features become one-hot blocks over the training
/// categories plus an OTHER column that absorbs unseen and missing values.
/// Numeric features are standardized; when training rows had missing values
/// a `<name>_MISSING` indicator column follows and missing inputs are imputed
/// with the training mean. Timestamp-valued features are not encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    columns: Vec<EncodedColumn>,
}

enum Observed {
    Numeric(Vec<f64>),
    Categorical(BTreeSet<String>),
}

fn category_of(value: &AttributeValue) -> Option<String> {
    match value {
        AttributeValue::Timestamp(_) => None,
        other => Some(other.to_string()),
    }
}

impl FeatureEncoder {
    pub fn fit(table: &SituationTable) -> Result<FeatureEncoder> {
        if table.is_empty() {
            return Err(Error::Empty("cannot fit an encoder on an empty situation table".into()));
        }
        let rows: Vec<&FeatureMapping> = table.rows.iter().map(|r| &r.features).collect();
        Ok(Self::fit_mappings(&table.feature_names(), &rows))
    }

    pub fn fit_mappings(names: &[FeatureName], rows: &[&FeatureMapping]) -> FeatureEncoder {
        let mut columns = Vec::new();
        for name in names {
            let values: Vec<&AttributeValue> = rows
                .iter()
                .filter_map(|r| r.get(name))
                .filter(|v| !matches!(v, AttributeValue::Timestamp(_)))
                .collect();
            if values.is_empty() {
                continue;
            }
            let observed = if values.iter().all(|v| v.as_f64().is_some()) {
                Observed::Numeric(values.iter().filter_map(|v| v.as_f64()).collect())
            } else {
                Observed::Categorical(values.iter().filter_map(|v| category_of(v)).collect())
            };
            match observed {
                Observed::Numeric(xs) => {
                    let n = xs.len() as f64;
                    let mean = xs.iter().sum::<f64>() / n;
                    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                    let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
                    columns.push(EncodedColumn {
                        name: name.clone(),
                        source: name.clone(),
                        kind: ColumnKind::Numeric { mean, std },
                    });
                    if xs.len() < rows.len() {
                        columns.push(EncodedColumn {
                            name: format!("{name}_{MISSING}"),
                            source: name.clone(),
                            kind: ColumnKind::MissingIndicator,
                        });
                    }
                }
                Observed::Categorical(categories) => {
                    for category in categories {
                        columns.push(EncodedColumn {
                            name: format!("{name}_{category}"),
                            source: name.clone(),
                            kind: ColumnKind::OneHot { category },
                        });
                    }
                    columns.push(EncodedColumn {
                        name: format!("{name}_{OTHER}"),
                        source: name.clone(),
                        kind: ColumnKind::Other,
                    });
                }
            }
        }
        FeatureEncoder { columns }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[EncodedColumn] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Source features in column order, each once.
    pub fn sources(&self) -> Vec<FeatureName> {
        let mut seen = BTreeSet::new();
        self.columns
            .iter()
            .filter(|c| seen.insert(c.source.clone()))
            .map(|c| c.source.clone())
            .collect()
    }

    /// Column indices of each source feature, in column order.
    pub fn source_groups(&self) -> Vec<(FeatureName, Vec<usize>)> {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, c) in self.columns.iter().enumerate() {
            groups.entry(&c.source).or_default().push(i);
        }
        let mut out: Vec<(FeatureName, Vec<usize>)> =
            groups.into_iter().map(|(s, idx)| (s.to_string(), idx)).collect();
        out.sort_by_key(|(_, idx)| idx[0]);
        out
    }

    pub fn has_source(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c.source == name)
    }

    pub fn transform(&self, fmap: &FeatureMapping) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.columns.len());
        // Whether the current one-hot block matched; its OTHER column closes it.
        let mut block_hit = false;
        for c in &self.columns {
            let value = fmap.get(&c.source);
            let x = match &c.kind {
                ColumnKind::Numeric { mean, std } => match value.and_then(AttributeValue::as_f64) {
                    Some(v) => (v - mean) / std,
                    None => 0.0,
                },
                ColumnKind::MissingIndicator => {
                    if value.and_then(AttributeValue::as_f64).is_some() {
                        0.0
                    } else {
                        1.0
                    }
                }
                ColumnKind::OneHot { category } => {
                    let hit = value.and_then(category_of).as_deref() == Some(category.as_str());
                    block_hit |= hit;
                    if hit {
                        1.0
                    } else {
                        0.0
                    }
                }
                ColumnKind::Other => {
                    let x = if block_hit { 0.0 } else { 1.0 };
                    block_hit = false;
                    x
                }
            };
            out.push(x);
        }
        out
    }

    pub fn transform_table(&self, table: &SituationTable) -> Vec<Vec<f64>> {
        table.rows.iter().map(|r| self.transform(&r.features)).collect()
    }

    /// Human-readable value of column `i` for an instance: the raw feature
    /// value when present.
    pub fn raw_value(&self, i: usize, fmap: &FeatureMapping) -> Option<String> {
        fmap.get(&self.columns[i].source).map(|v| v.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("encoder serializes")
    }

    pub fn from_json(input: &str) -> Result<FeatureEncoder> {
        Ok(serde_json::from_str(input)?)
    }
}
