//! A closed feature-transformation language.
//!
//! Programs are parsed from text, resolved against a dataset schema, fitted
//! on training rows only (every `train*` statistic is frozen at fit time),
//! and then applied row-wise to any split. Evaluation never raises: invalid
//! arithmetic yields a missing cell.

mod ast;
mod eval;
mod parser;
mod transform;
mod validate;

pub use ast::{visit_conds, visit_expr, BinOp, CmpOp, Cond, Expr, GroupAgg, Program, StatOp, UnaryOp};
pub use parser::{parse, parse_expr, ParseError, ParseErrorKind};
pub use transform::{
    fit, FittedTransformation, Provenance, TransformationFile, TransformationRecord,
    TransformationSet, TRANSFORMATION_FORMAT_VERSION,
};
pub use validate::{check_values, validate, ValidityReason, ValidityReport, MAX_MISSING_FRACTION};

/// Renders a program back to text; `parse(&render(p))` is structurally equal to `p`.
pub fn render(program: &Program) -> String {
    program.to_string()
}

/// Checks that every reference in `program` resolves against `dataset`
/// and that the label column is never mentioned.
pub fn check_references(program: &Program, dataset: &crate::data::Dataset) -> crate::Result<()> {
    eval::resolve(program, dataset).map(|_| ())
}
