use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Categorical(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Labels {
    Regression(Vec<f64>),
    Classification { classes: Vec<usize>, n_classes: usize },
    Unlabeled,
}

/// A supervised tabular dataset stored row-major.
///
/// Optional row weights turn the dataset into a weighted sample space, which
/// is how an enumerated discrete joint distribution is represented (weights
/// are the cell probabilities).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    features: Vec<f64>,
    labels: Labels,
    kinds: Vec<FeatureKind>,
    weights: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Labels, kinds: Vec<FeatureKind>) -> Result<Self> {
        let d = kinds.len();
        let n = rows.len();
        let mut features = Vec::with_capacity(n * d);
        for row in &rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: row.len(),
                });
            }
            features.extend_from_slice(row);
        }
        let data = Self {
            n,
            d,
            features,
            labels,
            kinds,
            weights: None,
        };
        data.validate()?;
        Ok(data)
    }

    /// Continuous-feature dataset with real labels.
    pub fn regression(rows: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        Self::new(rows, Labels::Regression(y), vec![FeatureKind::Continuous; d])
    }

    pub fn classification(rows: Vec<Vec<f64>>, y: Vec<usize>, n_classes: usize) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        Self::new(
            rows,
            Labels::Classification {
                classes: y,
                n_classes,
            },
            vec![FeatureKind::Continuous; d],
        )
    }

    pub fn unlabeled(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        Self::new(rows, Labels::Unlabeled, vec![FeatureKind::Continuous; d])
    }

    pub fn with_kinds(mut self, kinds: Vec<FeatureKind>) -> Result<Self> {
        if kinds.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: kinds.len(),
            });
        }
        self.kinds = kinds;
        self.validate()?;
        Ok(self)
    }

    /// Attaches non-negative row weights; they are normalized to sum to one.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("row weights must be finite and non-negative"));
        }
        let total: f64 = crate::numeric::compensated_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(Error::invalid("row weights sum to zero"));
        }
        self.weights = Some(weights.into_iter().map(|w| w / total).collect());
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let label_len = match &self.labels {
            Labels::Regression(y) => Some(y.len()),
            Labels::Classification { classes, n_classes } => {
                if let Some(bad) = classes.iter().find(|&&c| c >= *n_classes) {
                    return Err(Error::invalid(format!(
                        "class label {bad} outside [0, {n_classes})"
                    )));
                }
                Some(classes.len())
            }
            Labels::Unlabeled => None,
        };
        if let Some(len) = label_len {
            if len != self.n {
                return Err(Error::DimensionMismatch {
                    expected: self.n,
                    actual: len,
                });
            }
        }
        for (j, kind) in self.kinds.iter().enumerate() {
            if let FeatureKind::Categorical(card) = kind {
                for i in 0..self.n {
                    let v = self.features[i * self.d + j];
                    if v.fract() != 0.0 || v < 0.0 || v >= *card as f64 {
                        return Err(Error::invalid(format!(
                            "row {i}, feature {}: categorical value {v} outside [0, {card})",
                            j + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n).map(move |i| self.row(i))
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Probability mass of row `i`: its normalized weight, or `1/n`.
    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0 / self.n as f64,
        }
    }

    pub fn n_classes(&self) -> Option<usize> {
        match &self.labels {
            Labels::Classification { n_classes, .. } => Some(*n_classes),
            _ => None,
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.features[i * self.d + j]).collect()
    }

    /// Keeps only the columns in `s`, preserving labels and weights.
    pub fn select_columns(&self, s: Mask) -> Dataset {
        let cols = s.indices();
        let features = (0..self.n)
            .flat_map(|i| cols.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.features[i * self.d + j])
            .collect();
        Dataset {
            n: self.n,
            d: cols.len(),
            features,
            labels: self.labels.clone(),
            kinds: cols.iter().map(|&j| self.kinds[j]).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Loads a CSV file with a header row, using a schema for the label
    /// column and categorical declarations.
    pub fn from_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        let label_col = schema
            .label
            .as_ref()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Config(format!("label column `{name}` not in CSV header")))
            })
            .transpose()?;
        for name in schema.categorical.keys() {
            if !headers.contains(name) {
                return Err(Error::Config(format!(
                    "categorical column `{name}` not in CSV header"
                )));
            }
        }
        let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| Some(c) != label_col).collect();
        let kinds = feature_cols
            .iter()
            .map(|&c| match schema.categorical.get(&headers[c]) {
                Some(&card) => FeatureKind::Categorical(card),
                None => FeatureKind::Continuous,
            })
            .collect();

        let mut rows = Vec::new();
        let mut raw_labels = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let parse = |c: usize| -> Result<f64> {
                record[c].trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!(
                        "line {}: column `{}` is not a number: `{}`",
                        line + 2,
                        headers[c],
                        &record[c]
                    ))
                })
            };
            rows.push(feature_cols.iter().map(|&c| parse(c)).collect::<Result<Vec<_>>>()?);
            if let Some(c) = label_col {
                raw_labels.push(parse(c)?);
            }
        }
        let labels = match (label_col, schema.task) {
            (None, _) => Labels::Unlabeled,
            (Some(_), TaskKind::Regression) => Labels::Regression(raw_labels),
            (Some(_), TaskKind::Classification) => {
                let n_classes = schema
                    .classes
                    .ok_or_else(|| Error::Config("classification schema needs `classes`".into()))?;
                let classes = raw_labels
                    .iter()
                    .map(|&v| {
                        if v.fract() == 0.0 && v >= 0.0 {
                            Ok(v as usize)
                        } else {
                            Err(Error::Config(format!("class label {v} is not a non-negative integer")))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Labels::Classification { classes, n_classes }
            }
        };
        Dataset::new(rows, labels, kinds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[default]
    Regression,
    Classification,
}

/// Sidecar JSON describing a CSV dataset.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub label: Option<String>,
    #[serde(default)]
    pub task: TaskKind,
    pub classes: Option<usize>,
    #[serde(default)]
    pub categorical: BTreeMap<String, usize>,
}

impl DatasetSchema {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
