use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ColumnSchema, Dataset};
use crate::dsl::ast::{visit_expr, Expr, Program, StatOp};
use crate::dsl::eval::{resolve, Node};
use crate::dsl::parser::parse;
use crate::error::{Error, Result};

/// Where an accepted transformation came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub iteration: usize,
    pub island: usize,
    pub proposer: String,
}

/// A program whose training-row statistics have been computed and frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedTransformation {
    program: Program,
    fitted_stats: BTreeMap<u32, f64>,
    provenance: Option<Provenance>,
}

fn stat_value(op: StatOp, values: &mut [f64]) -> f64 {
    let n = values.len() as f64;
    match op {
        StatOp::Mean => values.iter().sum::<f64>() / n,
        StatOp::Std => {
            let mean = values.iter().sum::<f64>() / n;
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
        }
        StatOp::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
        StatOp::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        StatOp::Median => {
            values.sort_by(f64::total_cmp);
            let m = values.len() / 2;
            if values.len() % 2 == 1 {
                values[m]
            } else {
                (values[m - 1] + values[m]) / 2.0
            }
        }
    }
}

/// Computes every statistic node over `train_indices` only, ignoring missing
/// values. Nested statistics are fitted before the statistics that contain them.
pub fn fit(program: &Program, dataset: &Dataset, train_indices: &[usize]) -> Result<FittedTransformation> {
    let root = resolve(program, dataset)?;
    let mut stat_nodes: Vec<(u32, StatOp, &Node<'_>)> = Vec::new();
    collect_stats(&root, &mut stat_nodes);
    stat_nodes.sort_by_key(|s| std::cmp::Reverse(s.0));

    let mut slots: Vec<Option<f64>> = vec![None; program.stat_count() as usize];
    for (id, op, arg) in stat_nodes {
        let mut values: Vec<f64> = train_indices
            .iter()
            .filter_map(|&r| arg.eval(r, &slots))
            .collect();
        if values.is_empty() {
            return Err(Error::Fit(format!(
                "{} in `{}` has no observed training values",
                op.name(),
                program.name()
            )));
        }
        let v = stat_value(op, &mut values);
        if !v.is_finite() {
            return Err(Error::Fit(format!(
                "{} in `{}` is not finite",
                op.name(),
                program.name()
            )));
        }
        slots[id as usize] = Some(v);
    }
    let fitted_stats = slots
        .into_iter()
        .enumerate()
        .map(|(i, v)| (i as u32, v.expect("every stat fitted")))
        .collect();
    Ok(FittedTransformation {
        program: program.clone(),
        fitted_stats,
        provenance: None,
    })
}

fn collect_stats<'a, 'd>(node: &'a Node<'d>, out: &mut Vec<(u32, StatOp, &'a Node<'d>)>) {
    use crate::dsl::eval::CNode;
    fn cond<'a, 'd>(c: &'a CNode<'d>, out: &mut Vec<(u32, StatOp, &'a Node<'d>)>) {
        match c {
            CNode::Cmp(_, a, b) => {
                collect_stats(a, out);
                collect_stats(b, out);
            }
            CNode::CatEq(..) => {}
            CNode::IsMissing(a) => collect_stats(a, out),
            CNode::And(a, b) | CNode::Or(a, b) => {
                cond(a, out);
                cond(b, out);
            }
            CNode::Not(a) => cond(a, out),
        }
    }
    match node {
        Node::Lit(_) | Node::Col(_) | Node::Group(..) => {}
        Node::Unary(_, a) => collect_stats(a, out),
        Node::Binary(_, a, b) | Node::Coalesce(a, b) => {
            collect_stats(a, out);
            collect_stats(b, out);
        }
        Node::If(c, a, b) => {
            cond(c, out);
            collect_stats(a, out);
            collect_stats(b, out);
        }
        Node::Stat(id, op, arg) => {
            out.push((*id, *op, arg));
            collect_stats(arg, out);
        }
    }
}

impl FittedTransformation {
    /// Rebuilds a fitted transformation from persisted statistics.
    pub fn from_parts(program: Program, fitted_stats: BTreeMap<u32, f64>) -> Result<Self> {
        let t = Self {
            program,
            fitted_stats,
            provenance: None,
        };
        if !t.is_fitted() {
            return Err(Error::Unfitted(t.name().to_string()));
        }
        Ok(t)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn program(&self) -> &Program {
        &self.program
    }

    pub fn name(&self) -> &str {
        self.program.name()
    }

    pub fn fitted_stats(&self) -> &BTreeMap<u32, f64> {
        &self.fitted_stats
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    /// True when every stat node has a finite frozen value.
    pub fn is_fitted(&self) -> bool {
        (0..self.program.stat_count()).all(|id| {
            self.fitted_stats
                .get(&id)
                .is_some_and(|v| v.is_finite())
        })
    }

    /// One output cell per row; never produces a non-finite number.
    pub fn apply(&self, dataset: &Dataset) -> Result<Vec<Option<f64>>> {
        if !self.is_fitted() {
            return Err(Error::Unfitted(self.name().to_string()));
        }
        let root = resolve(&self.program, dataset)?;
        let slots: Vec<Option<f64>> = (0..self.program.stat_count())
            .map(|id| self.fitted_stats.get(&id).copied())
            .collect();
        Ok((0..dataset.n_rows()).map(|r| root.eval(r, &slots)).collect())
    }

    pub fn output_schema(&self) -> ColumnSchema {
        let first = self.program.rationale().lines().next().unwrap_or("");
        let description = if first.is_empty() {
            format!("generated: {}", self.program.render_body())
        } else {
            format!("generated: {first}")
        };
        ColumnSchema::numeric(self.name(), description)
    }

    /// Whether the program contains any of the given group aggregates.
    pub fn uses_group_agg(&self, aggs: &[crate::dsl::ast::GroupAgg]) -> bool {
        let mut hit = false;
        visit_expr(self.program.expr(), &mut |e| {
            if let Expr::Group(a, _) = e {
                hit |= aggs.contains(a);
            }
        });
        hit
    }
}

/// An ordered set of fitted transformations; later entries may reference the
/// outputs of earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransformationSet {
    entries: Vec<FittedTransformation>,
}

impl TransformationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: FittedTransformation) {
        self.entries.push(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &FittedTransformation> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|t| t.name()).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|t| t.name() == name)
    }

    /// Persisted form. `with_stats = false` writes the export variant that
    /// carries program texts and provenance only.
    pub fn to_file(&self, with_stats: bool) -> TransformationFile {
        TransformationFile {
            format_version: TRANSFORMATION_FORMAT_VERSION,
            transformations: self
                .entries
                .iter()
                .map(|t| TransformationRecord {
                    name: t.name().to_string(),
                    rationale: t.program.rationale().to_string(),
                    program: t.program.render_body(),
                    fitted_stats: with_stats.then(|| t.fitted_stats.clone()),
                    provenance: t.provenance.clone(),
                })
                .collect(),
        }
    }

    /// Restores a set from a file that carries fitted statistics.
    pub fn from_file(file: &TransformationFile) -> Result<Self> {
        let mut out = Self::new();
        for rec in &file.transformations {
            let program = rec.parse()?;
            let stats = rec
                .fitted_stats
                .clone()
                .ok_or_else(|| Error::Unfitted(rec.name.clone()))?;
            let mut t = FittedTransformation::from_parts(program, stats)?;
            t.provenance = rec.provenance.clone();
            out.push(t);
        }
        Ok(out)
    }
}

pub const TRANSFORMATION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformationRecord {
    pub name: String,
    #[serde(default)]
    pub rationale: String,
    /// `feature NAME = expr`
    pub program: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted_stats: Option<BTreeMap<u32, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl TransformationRecord {
    pub fn parse(&self) -> Result<Program> {
        let program = parse(&self.program)?.with_rationale(self.rationale.clone());
        if program.name() != self.name {
            return Err(Error::Data(format!(
                "record name `{}` does not match program name `{}`",
                self.name,
                program.name()
            )));
        }
        Ok(program)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformationFile {
    pub format_version: u32,
    pub transformations: Vec<TransformationRecord>,
}

impl TransformationFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: TransformationFile = serde_json::from_str(text)?;
        if f.format_version != TRANSFORMATION_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported transformation format_version {}",
                f.format_version
            )));
        }
        Ok(f)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
