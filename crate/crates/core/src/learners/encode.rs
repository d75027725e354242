use serde::{Deserialize, Serialize};

use crate::data::{Column, Dataset};
use crate::error::{Error, Result};

/// Indicator name suffix for categories not seen during training.
pub const UNSEEN: &str = "__unseen";

/// One source column and how it expands into model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EncodedSource {
    Numeric { column: String },
    /// One indicator per training category plus a trailing unseen bucket.
    OneHot { column: String, vocab: Vec<String> },
}

impl EncodedSource {
    pub fn column(&self) -> &str {
        match self {
            EncodedSource::Numeric { column } | EncodedSource::OneHot { column, .. } => column,
        }
    }

    fn width(&self) -> usize {
        match self {
            EncodedSource::Numeric { .. } => 1,
            EncodedSource::OneHot { vocab, .. } => vocab.len() + 1,
        }
    }
}

/// Train-fitted expansion of dataset columns into a dense numeric matrix.
/// Missing cells become NaN; a missing category makes all its indicators NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub sources: Vec<EncodedSource>,
}

/// Column-major matrix; `cols[j][i]` is input `j` of the `i`-th requested row.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub n_rows: usize,
    pub cols: Vec<Vec<f64>>,
}

impl Matrix {
    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }
}

impl Encoder {
    /// Categorical vocabularies are the sorted tokens observed on `train`.
    pub fn fit(dataset: &Dataset, train: &[usize]) -> Encoder {
        let sources = dataset
            .feature_names()
            .iter()
            .enumerate()
            .map(|(j, name)| match dataset.column_at(j) {
                Column::Numeric(_) => EncodedSource::Numeric { column: name.clone() },
                Column::Categorical { codes, vocab } => {
                    let mut seen = vec![false; vocab.len()];
                    for &r in train {
                        if let Some(c) = codes[r] {
                            seen[c as usize] = true;
                        }
                    }
                    let mut tokens: Vec<String> = vocab
                        .iter()
                        .zip(&seen)
                        .filter(|(_, &s)| s)
                        .map(|(t, _)| t.clone())
                        .collect();
                    tokens.sort();
                    EncodedSource::OneHot {
                        column: name.clone(),
                        vocab: tokens,
                    }
                }
            })
            .collect();
        Encoder { sources }
    }

    pub fn columns(&self) -> Vec<String> {
        self.sources.iter().map(|s| s.column().to_string()).collect()
    }

    pub fn width(&self) -> usize {
        self.sources.iter().map(EncodedSource::width).sum()
    }

    /// Names of the encoded inputs, in matrix column order.
    pub fn input_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.width());
        for s in &self.sources {
            match s {
                EncodedSource::Numeric { column } => out.push(column.clone()),
                EncodedSource::OneHot { column, vocab } => {
                    out.extend(vocab.iter().map(|t| format!("{column}={t}")));
                    out.push(format!("{column}={UNSEEN}"));
                }
            }
        }
        out
    }

    pub fn encode(&self, dataset: &Dataset, rows: &[usize]) -> Result<Matrix> {
        let mut cols = Vec::with_capacity(self.width());
        for s in &self.sources {
            let column = dataset
                .column(s.column())
                .ok_or_else(|| Error::Data(format!("model feature `{}` absent from dataset", s.column())))?;
            match (s, column) {
                (EncodedSource::Numeric { .. }, Column::Numeric(v)) => {
                    cols.push(rows.iter().map(|&r| v[r].unwrap_or(f64::NAN)).collect());
                }
                (EncodedSource::OneHot { vocab, .. }, Column::Categorical { codes, vocab: dv }) => {
                    let slot: Vec<usize> = dv
                        .iter()
                        .map(|t| vocab.binary_search(t).unwrap_or(vocab.len()))
                        .collect();
                    let mut block = vec![vec![0.0; rows.len()]; vocab.len() + 1];
                    for (i, &r) in rows.iter().enumerate() {
                        match codes[r] {
                            Some(c) => block[slot[c as usize]][i] = 1.0,
                            None => block.iter_mut().for_each(|b| b[i] = f64::NAN),
                        }
                    }
                    cols.extend(block);
                }
                _ => {
                    return Err(Error::Data(format!(
                        "column `{}` changed kind since training",
                        s.column()
                    )))
                }
            }
        }
        Ok(Matrix {
            n_rows: rows.len(),
            cols,
        })
    }
}
