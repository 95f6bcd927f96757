use serde::{Deserialize, Serialize};

use super::schema::{SchemaConfig, TargetTransform};
use super::table::RawTable;
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Tensor2};

/// Widest embedding used for a categorical column.
pub const MAX_EMBEDDING_WIDTH: usize = 10;

/// Embedding width for a column with `k` distinct training values.
pub fn embedding_width(k: usize) -> usize {
    k.min(MAX_EMBEDDING_WIDTH)
}

/// Training-split categories of one column, in sorted order. Index `len()`
/// is reserved for values never seen in training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub name: String,
    pub values: Vec<String>,
    pub width: usize,
}

impl Vocabulary {
    pub fn unknown_index(&self) -> usize {
        self.values.len()
    }

    /// Rows in the embedding table, including the unknown slot.
    pub fn table_rows(&self) -> usize {
        self.values.len() + 1
    }

    pub fn encode(&self, value: &str) -> usize {
        self.values
            .binary_search_by(|v| v.as_str().cmp(value))
            .unwrap_or(self.unknown_index())
    }

    pub fn decode(&self, index: usize) -> Option<&str> {
        self.values.get(index).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    /// Whether a 0/1 missing-value indicator column follows this column.
    pub missing_indicator: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub transform: TargetTransform,
    pub mean: f64,
    pub std: f64,
}

impl TargetStats {
    /// Raw target to the standardized scale the network is trained on.
    pub fn encode(&self, y: f64) -> Option<f64> {
        let t = match self.transform {
            TargetTransform::None => y,
            TargetTransform::Log if y > 0.0 => y.ln(),
            TargetTransform::Log => return None,
        };
        Some((t - self.mean) / self.std)
    }

    pub fn decode(&self, z: f64) -> f64 {
        let t = z * self.std + self.mean;
        match self.transform {
            TargetTransform::None => t,
            TargetTransform::Log => t.exp(),
        }
    }
}

/// Encoders fitted on the training split only. Serializable so evaluation
/// data can be encoded exactly as training data was.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub schema: SchemaConfig,
    pub vocabularies: Vec<Vocabulary>,
    pub continuous: Vec<ContinuousStats>,
    pub target: TargetStats,
}

const MIN_STD: f64 = 1e-12;

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count().max(1) as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Encoder {
    /// Fits vocabularies and normalization statistics on `train` rows only.
    pub fn fit(table: &RawTable, schema: &SchemaConfig, train: &[usize]) -> Result<Self> {
        schema.validate()?;
        if train.is_empty() {
            return Err(Error::Split("training split is empty".into()));
        }
        if let Some(&bad) = train.iter().find(|&&i| i >= table.n_rows()) {
            return Err(Error::Split(format!("training index {bad} out of range")));
        }

        let vocabularies = table
            .categorical
            .iter()
            .map(|col| {
                let mut values: Vec<String> =
                    train.iter().map(|&i| col.values[i].clone()).collect();
                values.sort();
                values.dedup();
                Vocabulary {
                    name: col.name.clone(),
                    width: embedding_width(values.len()),
                    values,
                }
            })
            .collect();

        let continuous = table
            .continuous
            .iter()
            .map(|col| {
                let present = train.iter().filter_map(|&i| col.values[i]);
                let (mean, mut std) = mean_std(present.clone());
                if present.clone().count() == 0 {
                    log::warn!("column {:?} has no training values", col.name);
                }
                if std < MIN_STD {
                    log::warn!(
                        "column {:?} has zero variance on the training split",
                        col.name
                    );
                    std = 1.0;
                }
                ContinuousStats {
                    name: col.name.clone(),
                    mean,
                    std,
                    missing_indicator: train.iter().any(|&i| col.values[i].is_none()),
                }
            })
            .collect();

        let transformed = train
            .iter()
            .map(|&i| {
                let y = table.target.values[i];
                match schema.target_transform {
                    TargetTransform::None => Ok(y),
                    TargetTransform::Log if y > 0.0 => Ok(y.ln()),
                    TargetTransform::Log => Err(Error::Row {
                        row: i + 1,
                        message: format!("log target transform needs a positive target, got {y}"),
                    }),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let (mean, mut std) = mean_std(transformed.iter().copied());
        if std < MIN_STD {
            log::warn!("target has zero variance on the training split");
            std = 1.0;
        }

        Ok(Self {
            schema: schema.clone(),
            vocabularies,
            continuous,
            target: TargetStats {
                transform: schema.target_transform,
                mean,
                std,
            },
        })
    }

    pub fn transform(&self, table: &RawTable) -> Result<EncodedDataset> {
        if table.categorical.len() != self.vocabularies.len()
            || table.continuous.len() != self.continuous.len()
        {
            return Err(Error::Schema(
                "table columns do not match the fitted encoder".into(),
            ));
        }
        let rows = table.n_rows();

        let categorical = table
            .categorical
            .iter()
            .zip(&self.vocabularies)
            .map(|(col, vocab)| col.values.iter().map(|v| vocab.encode(v)).collect())
            .collect();

        let width = self.continuous_width();
        let mut continuous = Tensor2::zeros(rows, width);
        let mut offset = 0;
        for (col, stats) in table.continuous.iter().zip(&self.continuous) {
            for (r, v) in col.values.iter().enumerate() {
                let out = continuous.row_mut(r);
                out[offset] = v.map_or(0.0, |v| (v - stats.mean) / stats.std);
                if stats.missing_indicator {
                    out[offset + 1] = f64::from(v.is_none());
                }
            }
            offset += 1 + usize::from(stats.missing_indicator);
        }

        let target = table
            .target
            .values
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                self.target.encode(y).ok_or_else(|| Error::Row {
                    row: i + 1,
                    message: format!("log target transform needs a positive target, got {y}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(EncodedDataset {
            encoder: self.clone(),
            categorical,
            continuous,
            target,
        })
    }

    /// Continuous input columns after adding missing-value indicators.
    pub fn continuous_width(&self) -> usize {
        self.continuous
            .iter()
            .map(|c| 1 + usize::from(c.missing_indicator))
            .sum()
    }
}

/// Numeric form of a table: categorical indices, z-scored continuous values
/// and the standardized target.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub encoder: Encoder,
    categorical: Vec<Vec<usize>>,
    continuous: Tensor2,
    target: Vec<f64>,
}

/// Fits encoders on `train` and encodes every row of `table`.
pub fn fit_encoders(
    table: &RawTable,
    schema: &SchemaConfig,
    train: &[usize],
) -> Result<EncodedDataset> {
    Encoder::fit(table, schema, train)?.transform(table)
}

impl EncodedDataset {
    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn categorical(&self) -> &[Vec<usize>] {
        &self.categorical
    }

    pub fn continuous(&self) -> &Tensor2 {
        &self.continuous
    }

    /// Standardized targets of all rows.
    pub fn targets(&self) -> &[f64] {
        &self.target
    }

    pub fn targets_of(&self, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&i| self.target[i]).collect()
    }

    /// Width of a network input batch: one index column per categorical
    /// feature followed by the continuous block.
    pub fn batch_width(&self) -> usize {
        self.categorical.len() + self.continuous.cols()
    }

    /// Width after embedding lookup, i.e. the first Linear layer's input.
    pub fn encoded_width(&self) -> usize {
        self.encoder
            .vocabularies
            .iter()
            .map(|v| v.width)
            .sum::<usize>()
            + self.continuous.cols()
    }

    /// Embedding layers, one per categorical column, to prepend to a core.
    pub fn embedding_layers(&self) -> Vec<LayerSpec> {
        self.encoder
            .vocabularies
            .iter()
            .map(|v| LayerSpec::embedding(v.table_rows(), v.width))
            .collect()
    }

    /// Network input for the given rows.
    pub fn batch(&self, rows: &[usize]) -> Tensor2 {
        let mut out = Tensor2::zeros(rows.len(), self.batch_width());
        let e = self.categorical.len();
        for (r, &i) in rows.iter().enumerate() {
            let dst = out.row_mut(r);
            for (d, col) in dst[..e].iter_mut().zip(&self.categorical) {
                *d = col[i] as f64;
            }
            dst[e..].copy_from_slice(self.continuous.row(i));
        }
        out
    }
}
