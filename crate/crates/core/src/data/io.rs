use std::fs;
use std::path::Path;

use crate::data::dataset::{Cell, Column, Dataset};
use crate::data::schema::{ColumnKind, Schema};
use crate::error::{Error, Result};

pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Schema::from_json(&text)
}

/// Loads a delimited table with a header row, typed by its schema sidecar.
pub fn load_dataset(table_path: impl AsRef<Path>, schema_path: impl AsRef<Path>) -> Result<Dataset> {
    let schema = load_schema(schema_path)?;
    let table_path = table_path.as_ref();
    let text = fs::read_to_string(table_path).map_err(|e| Error::io(table_path, e))?;
    parse_table(&text, schema)
}

fn is_missing(field: &str, schema: &Schema) -> bool {
    field.is_empty() || (!schema.missing_token.is_empty() && field == schema.missing_token)
}

pub fn parse_table(text: &str, schema: Schema) -> Result<Dataset> {
    let delimiter = u8::try_from(schema.delimiter)
        .map_err(|_| Error::Schema("delimiter must be a single-byte character".into()))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    for h in &header {
        if schema.column(h).is_none() {
            return Err(Error::UndeclaredColumn {
                column: h.clone(),
                detail: "present in the data header but not declared in the schema",
            });
        }
    }
    let label = schema.label().name.clone();
    let position = |name: &str| header.iter().position(|h| h == name);
    let label_pos = position(&label).ok_or_else(|| Error::MissingLabel(label.clone()))?;

    let mut slots = Vec::new();
    for spec in schema.features() {
        let pos = position(&spec.name).ok_or_else(|| Error::UndeclaredColumn {
            column: spec.name.clone(),
            detail: "declared in the schema but absent from the data header",
        })?;
        slots.push((pos, spec.name.clone(), spec.kind));
    }

    let mut columns: Vec<Column> = slots
        .iter()
        .map(|(_, _, kind)| match kind {
            ColumnKind::Categorical => Column::Categorical {
                codes: Vec::new(),
                vocab: Vec::new(),
            },
            _ => Column::Numeric(Vec::new()),
        })
        .collect();
    let mut labels = Vec::new();

    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let raw_label = field(label_pos).trim();
        let y = match raw_label {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::CellParse {
                    row: r,
                    column: label.clone(),
                    value: other.to_string(),
                    expected: "a 0/1 label",
                })
            }
        };
        labels.push(y);
        for ((pos, name, kind), col) in slots.iter().zip(columns.iter_mut()) {
            let raw = field(*pos);
            let cell = if is_missing(raw, &schema) {
                Cell::Missing
            } else if *kind == ColumnKind::Categorical {
                Cell::Cat(raw.to_string())
            } else {
                let x: f64 = raw.trim().parse().map_err(|_| Error::CellParse {
                    row: r,
                    column: name.clone(),
                    value: raw.to_string(),
                    expected: "a finite number",
                })?;
                if !x.is_finite() || (*kind == ColumnKind::Binary && x != 0.0 && x != 1.0) {
                    return Err(Error::CellParse {
                        row: r,
                        column: name.clone(),
                        value: raw.to_string(),
                        expected: if *kind == ColumnKind::Binary {
                            "0 or 1"
                        } else {
                            "a finite number"
                        },
                    });
                }
                Cell::Num(x)
            };
            match (col, cell) {
                (Column::Numeric(v), Cell::Num(x)) => v.push(Some(x)),
                (Column::Numeric(v), _) => v.push(None),
                (Column::Categorical { codes, vocab }, Cell::Cat(tok)) => {
                    let code = vocab.iter().position(|t| *t == tok).unwrap_or_else(|| {
                        vocab.push(tok);
                        vocab.len() - 1
                    });
                    codes.push(Some(code as u32));
                }
                (Column::Categorical { codes, .. }, _) => codes.push(None),
            }
        }
    }
    Dataset::from_columns(schema, columns, labels)
}

/// Renders the dataset (features and label, in schema order) as delimited text.
pub fn render_table(dataset: &Dataset) -> Result<String> {
    let schema = dataset.schema();
    let delimiter = u8::try_from(schema.delimiter)
        .map_err(|_| Error::Schema("delimiter must be a single-byte character".into()))?;
    let mut writer = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(Vec::new());
    writer.write_record(schema.columns.iter().map(|c| c.name.as_str()))?;
    for r in 0..dataset.n_rows() {
        let mut record = Vec::with_capacity(schema.columns.len());
        for c in &schema.columns {
            if c.is_label {
                record.push(dataset.labels()[r].to_string());
                continue;
            }
            record.push(match dataset.cell(r, &c.name).expect("column exists") {
                Cell::Num(x) => x.to_string(),
                Cell::Cat(t) => t,
                Cell::Missing => schema.missing_token.clone(),
            });
        }
        writer.write_record(&record)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Data(format!("flushing table: {e}")))?;
    Ok(String::from_utf8(bytes).expect("utf-8 input yields utf-8 output"))
}

/// Writes the table and its schema sidecar.
pub fn write_dataset(
    dataset: &Dataset,
    table_path: impl AsRef<Path>,
    schema_path: impl AsRef<Path>,
) -> Result<()> {
    let table_path = table_path.as_ref();
    let schema_path = schema_path.as_ref();
    fs::write(table_path, render_table(dataset)?).map_err(|e| Error::io(table_path, e))?;
    fs::write(schema_path, dataset.schema().to_json()).map_err(|e| Error::io(schema_path, e))?;
    Ok(())
}
