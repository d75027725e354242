use std::collections::HashMap;
use std::sync::Arc;

use crate::data::schema::{ColumnKind, ColumnSchema, Schema};
use crate::error::{Error, Result};

/// A single table cell, used when building datasets row by row.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Cat(String),
    Missing,
}

/// Columnar storage for one feature column.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Categorical {
        /// Index into `vocab`, or `None` when missing.
        codes: Vec<Option<u32>>,
        vocab: Vec<String>,
    },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_numeric(&self) -> Option<&[Option<f64>]> {
        match self {
            Column::Numeric(v) => Some(v),
            Column::Categorical { .. } => None,
        }
    }

    pub fn cell(&self, row: usize) -> Cell {
        match self {
            Column::Numeric(v) => v[row].map_or(Cell::Missing, Cell::Num),
            Column::Categorical { codes, vocab } => codes[row]
                .map_or(Cell::Missing, |c| Cell::Cat(vocab[c as usize].clone())),
        }
    }

    /// Category token at `row`, if categorical and observed.
    pub fn token(&self, row: usize) -> Option<&str> {
        match self {
            Column::Categorical { codes, vocab } => codes[row].map(|c| vocab[c as usize].as_str()),
            Column::Numeric(_) => None,
        }
    }

    /// Returns a copy with the cells at `rows` reordered so that `rows[i]`
    /// receives the value previously at `rows[perm[i]]`.
    pub fn permuted(&self, rows: &[usize], perm: &[usize]) -> Column {
        fn shuffle<T: Copy>(v: &[T], rows: &[usize], perm: &[usize]) -> Vec<T> {
            let mut out = v.to_vec();
            for (i, &r) in rows.iter().enumerate() {
                out[r] = v[rows[perm[i]]];
            }
            out
        }
        match self {
            Column::Numeric(v) => Column::Numeric(shuffle(v, rows, perm)),
            Column::Categorical { codes, vocab } => Column::Categorical {
                codes: shuffle(codes, rows, perm),
                vocab: vocab.clone(),
            },
        }
    }
}

/// An immutable table of feature columns plus binary labels.
///
/// Columns are reference counted so derived datasets (augmented, permuted,
/// row-subset views) share storage with their parent.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Arc<Schema>,
    /// Feature column names, aligned with `columns`.
    names: Arc<Vec<String>>,
    index: Arc<HashMap<String, usize>>,
    columns: Vec<Arc<Column>>,
    labels: Arc<Vec<u8>>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.schema == other.schema
            && self.labels == other.labels
            && self.columns.len() == other.columns.len()
            && self
                .columns
                .iter()
                .zip(&other.columns)
                .all(|(a, b)| Arc::ptr_eq(a, b) || a == b)
    }
}

impl Dataset {
    /// Builds a dataset from feature columns given in schema (non-label) order.
    pub fn from_columns(schema: Schema, columns: Vec<Column>, labels: Vec<u8>) -> Result<Self> {
        schema.validate()?;
        let names: Vec<String> = schema.features().map(|c| c.name.clone()).collect();
        if names.len() != columns.len() {
            return Err(Error::Data(format!(
                "schema declares {} feature columns but {} were supplied",
                names.len(),
                columns.len()
            )));
        }
        let n = labels.len();
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::Data(format!("label value {bad} is not 0 or 1")));
        }
        for (spec, col) in schema.features().zip(&columns) {
            if col.len() != n {
                return Err(Error::Data(format!(
                    "column `{}` has {} cells but there are {n} labels",
                    spec.name,
                    col.len()
                )));
            }
            check_column(spec, col)?;
        }
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Ok(Self {
            schema: Arc::new(schema),
            names: Arc::new(names),
            index: Arc::new(index),
            columns: columns.into_iter().map(Arc::new).collect(),
            labels: Arc::new(labels),
        })
    }

    /// Builds a dataset from rows of cells in schema (non-label) order.
    pub fn from_rows(schema: Schema, rows: Vec<Vec<Cell>>, labels: Vec<u8>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let specs: Vec<&ColumnSchema> = schema.features().collect();
        let mut columns: Vec<Column> = specs
            .iter()
            .map(|s| match s.kind {
                ColumnKind::Categorical => Column::Categorical {
                    codes: Vec::with_capacity(rows.len()),
                    vocab: Vec::new(),
                },
                _ => Column::Numeric(Vec::with_capacity(rows.len())),
            })
            .collect();
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != specs.len() {
                return Err(Error::Data(format!(
                    "row {r} has {} cells, expected {}",
                    row.len(),
                    specs.len()
                )));
            }
            for ((cell, col), spec) in row.into_iter().zip(columns.iter_mut()).zip(&specs) {
                push_cell(col, cell).map_err(|msg| {
                    Error::Data(format!("row {r}, column `{}`: {msg}", spec.name))
                })?;
            }
        }
        Self::from_columns(schema, columns, labels)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    /// Number of non-label columns.
    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.column_index(name).map(|i| self.columns[i].as_ref())
    }

    pub fn column_at(&self, i: usize) -> &Column {
        &self.columns[i]
    }

    pub fn column_spec(&self, name: &str) -> Option<&ColumnSchema> {
        self.schema.column(name)
    }

    pub fn cell(&self, row: usize, name: &str) -> Option<Cell> {
        self.column(name).map(|c| c.cell(row))
    }

    /// Appends a feature column, returning a new dataset.
    pub fn with_column(&self, spec: ColumnSchema, column: Column) -> Result<Self> {
        if self.schema.column(&spec.name).is_some() {
            return Err(Error::NameCollision(spec.name));
        }
        if spec.is_label {
            return Err(Error::Data("cannot append a label column".into()));
        }
        if column.len() != self.n_rows() {
            return Err(Error::Data(format!(
                "appended column `{}` has {} cells, expected {}",
                spec.name,
                column.len(),
                self.n_rows()
            )));
        }
        check_column(&spec, &column)?;
        let mut schema = (*self.schema).clone();
        schema.columns.push(spec.clone());
        schema.validate()?;
        let mut names = (*self.names).clone();
        let mut index = (*self.index).clone();
        index.insert(spec.name.clone(), names.len());
        names.push(spec.name);
        let mut columns = self.columns.clone();
        columns.push(Arc::new(column));
        Ok(Self {
            schema: Arc::new(schema),
            names: Arc::new(names),
            index: Arc::new(index),
            columns,
            labels: self.labels.clone(),
        })
    }

    /// Replaces existing columns, keeping schema and labels.
    pub fn with_replaced(&self, replacements: Vec<(usize, Column)>) -> Self {
        let mut out = self.clone();
        for (i, col) in replacements {
            assert_eq!(col.len(), self.n_rows(), "replacement length mismatch");
            out.columns[i] = Arc::new(col);
        }
        out
    }

    /// Drops a feature column by name, returning a new dataset.
    pub fn without_column(&self, name: &str) -> Result<Self> {
        let i = self
            .column_index(name)
            .ok_or_else(|| Error::Data(format!("no column `{name}` to drop")))?;
        let mut schema = (*self.schema).clone();
        schema.columns.retain(|c| c.name != name);
        let mut columns: Vec<Column> = self.columns.iter().map(|c| (**c).clone()).collect();
        columns.remove(i);
        Self::from_columns(schema, columns, self.labels.to_vec())
    }

    /// A new dataset holding only `rows`, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| {
                Arc::new(match c.as_ref() {
                    Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
                    Column::Categorical { codes, vocab } => Column::Categorical {
                        codes: rows.iter().map(|&r| codes[r]).collect(),
                        vocab: vocab.clone(),
                    },
                })
            })
            .collect();
        Self {
            schema: self.schema.clone(),
            names: self.names.clone(),
            index: self.index.clone(),
            columns,
            labels: Arc::new(rows.iter().map(|&r| self.labels[r]).collect()),
        }
    }
}

fn push_cell(col: &mut Column, cell: Cell) -> std::result::Result<(), String> {
    match (col, cell) {
        (Column::Numeric(v), Cell::Num(x)) => v.push(Some(x)),
        (Column::Numeric(v), Cell::Missing) => v.push(None),
        (Column::Categorical { codes, .. }, Cell::Missing) => codes.push(None),
        (Column::Categorical { codes, vocab }, Cell::Cat(tok)) => {
            let code = match vocab.iter().position(|t| *t == tok) {
                Some(i) => i,
                None => {
                    vocab.push(tok);
                    vocab.len() - 1
                }
            };
            codes.push(Some(code as u32));
        }
        (Column::Numeric(_), Cell::Cat(t)) => {
            return Err(format!("category token `{t}` in a numeric column"))
        }
        (Column::Categorical { .. }, Cell::Num(x)) => {
            return Err(format!("number {x} in a categorical column"))
        }
    }
    Ok(())
}

fn check_column(spec: &ColumnSchema, col: &Column) -> Result<()> {
    match (spec.kind, col) {
        (ColumnKind::Categorical, Column::Categorical { codes, vocab }) => {
            if codes.iter().flatten().any(|&c| c as usize >= vocab.len()) {
                return Err(Error::Data(format!("column `{}` has an invalid code", spec.name)));
            }
        }
        (ColumnKind::Categorical, Column::Numeric(_)) => {
            return Err(Error::Data(format!("column `{}` is categorical", spec.name)))
        }
        (kind, Column::Numeric(v)) => {
            if let Some(x) = v.iter().flatten().find(|x| !x.is_finite()) {
                return Err(Error::Data(format!(
                    "column `{}` holds non-finite value {x}",
                    spec.name
                )));
            }
            if kind == ColumnKind::Binary {
                if let Some(x) = v.iter().flatten().find(|&&x| x != 0.0 && x != 1.0) {
                    return Err(Error::Data(format!(
                        "binary column `{}` holds {x}",
                        spec.name
                    )));
                }
            }
        }
        (_, Column::Categorical { .. }) => {
            return Err(Error::Data(format!("column `{}` is not categorical", spec.name)))
        }
    }
    Ok(())
}
