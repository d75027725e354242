//! Tabular data model: schema sidecar, columnar datasets, delimited-text IO,
//! stratified splitting and augmentation with fitted transformations.

mod dataset;
mod io;
mod schema;
mod split;

pub use dataset::{Cell, Column, Dataset};
pub use io::{load_dataset, load_schema, parse_table, render_table, write_dataset};
pub use schema::{
    feature_groups, is_identifier, ColumnKind, ColumnSchema, FeatureGroup, Schema,
    TemporalMembership, SCHEMA_VERSION,
};
pub use split::{stratified_split, SplitIndices};

use crate::dsl::TransformationSet;
use crate::error::{Error, Result};

/// Appends one numeric column per transformation, in order. Later
/// transformations see the columns produced by earlier ones.
pub fn augment(dataset: &Dataset, sigma: &TransformationSet) -> Result<Dataset> {
    let mut out = dataset.clone();
    for t in sigma.iter() {
        if !t.is_fitted() {
            return Err(Error::Unfitted(t.name().to_string()));
        }
        if out.schema().column(t.name()).is_some() {
            return Err(Error::NameCollision(t.name().to_string()));
        }
        let values = t.apply(&out)?;
        out = out.with_column(t.output_schema(), Column::Numeric(values))?;
    }
    Ok(out)
}
