//! Row-wise evaluation of resolved programs.
//!
//! Every failure mode at evaluation time becomes a missing value: arithmetic
//! on a missing operand, division by zero, square roots of negatives,
//! `log1p` at or below -1, and any non-finite intermediate result.

use crate::data::{Column, ColumnKind, Dataset};
use crate::dsl::ast::{BinOp, CmpOp, Cond, Expr, GroupAgg, Program, StatOp, UnaryOp};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) enum Node<'d> {
    Lit(f64),
    Col(&'d [Option<f64>]),
    Unary(UnaryOp, Box<Node<'d>>),
    Binary(BinOp, Box<Node<'d>>, Box<Node<'d>>),
    If(Box<CNode<'d>>, Box<Node<'d>>, Box<Node<'d>>),
    Stat(u32, StatOp, Box<Node<'d>>),
    Group(GroupAgg, Vec<(f64, &'d [Option<f64>])>),
    Coalesce(Box<Node<'d>>, Box<Node<'d>>),
}

#[derive(Debug, Clone)]
pub(crate) enum CNode<'d> {
    Cmp(CmpOp, Box<Node<'d>>, Box<Node<'d>>),
    /// Codes of a categorical column and the code of the token, if the
    /// token occurs in the column's vocabulary.
    CatEq(&'d [Option<u32>], Option<u32>),
    IsMissing(Box<Node<'d>>),
    And(Box<CNode<'d>>, Box<CNode<'d>>),
    Or(Box<CNode<'d>>, Box<CNode<'d>>),
    Not(Box<CNode<'d>>),
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Checks every reference in `program` against `dataset` and binds column
/// storage for evaluation.
pub(crate) fn resolve<'d>(program: &Program, dataset: &'d Dataset) -> Result<Node<'d>> {
    let label = &dataset.schema().label().name;
    if program.columns().contains(label) || program.groups().contains(label) {
        return Err(Error::Resolve(format!(
            "`{}` references the label column `{label}`",
            program.name()
        )));
    }
    resolve_expr(program.expr(), dataset)
}

fn numeric_column<'d>(name: &str, dataset: &'d Dataset) -> Result<&'d [Option<f64>]> {
    let label = &dataset.schema().label().name;
    if name == label {
        return Err(Error::Resolve(format!("reference to the label column `{name}`")));
    }
    match dataset.column(name) {
        Some(Column::Numeric(v)) => Ok(v),
        Some(Column::Categorical { .. }) => Err(Error::Resolve(format!(
            "categorical column `{name}` can only be used as col({name}) == \"TOKEN\""
        ))),
        None => Err(Error::Resolve(format!("unknown column `{name}`"))),
    }
}

fn resolve_expr<'d>(e: &Expr, d: &'d Dataset) -> Result<Node<'d>> {
    Ok(match e {
        Expr::Lit(x) => Node::Lit(*x),
        Expr::Col(c) => Node::Col(numeric_column(c, d)?),
        Expr::Unary(op, a) => Node::Unary(*op, Box::new(resolve_expr(a, d)?)),
        Expr::Binary(op, a, b) => Node::Binary(
            *op,
            Box::new(resolve_expr(a, d)?),
            Box::new(resolve_expr(b, d)?),
        ),
        Expr::If(c, a, b) => Node::If(
            Box::new(resolve_cond(c, d)?),
            Box::new(resolve_expr(a, d)?),
            Box::new(resolve_expr(b, d)?),
        ),
        Expr::Stat { id, op, arg } => Node::Stat(*id, *op, Box::new(resolve_expr(arg, d)?)),
        Expr::Group(agg, g) => {
            let members = d.schema().group_members(g);
            if members.is_empty() {
                return Err(Error::Resolve(format!("unknown temporal group `{g}`")));
            }
            let cols = members
                .into_iter()
                .map(|(name, t)| Ok((t, numeric_column(name, d)?)))
                .collect::<Result<Vec<_>>>()?;
            Node::Group(*agg, cols)
        }
        Expr::Coalesce(a, b) => Node::Coalesce(
            Box::new(resolve_expr(a, d)?),
            Box::new(resolve_expr(b, d)?),
        ),
    })
}

fn resolve_cond<'d>(c: &Cond, d: &'d Dataset) -> Result<CNode<'d>> {
    Ok(match c {
        Cond::Cmp(op, a, b) => CNode::Cmp(
            *op,
            Box::new(resolve_expr(a, d)?),
            Box::new(resolve_expr(b, d)?),
        ),
        Cond::CatEq(col, tok) => {
            let spec = d
                .column_spec(col)
                .ok_or_else(|| Error::Resolve(format!("unknown column `{col}`")))?;
            if spec.is_label {
                return Err(Error::Resolve(format!("reference to the label column `{col}`")));
            }
            if spec.kind != ColumnKind::Categorical {
                return Err(Error::Resolve(format!(
                    "`{col}` is not categorical and cannot be compared with a token"
                )));
            }
            match d.column(col) {
                Some(Column::Categorical { codes, vocab }) => {
                    let code = vocab.iter().position(|t| t == tok).map(|i| i as u32);
                    CNode::CatEq(codes, code)
                }
                _ => return Err(Error::Resolve(format!("`{col}` is not categorical"))),
            }
        }
        Cond::IsMissing(a) => CNode::IsMissing(Box::new(resolve_expr(a, d)?)),
        Cond::And(a, b) => CNode::And(Box::new(resolve_cond(a, d)?), Box::new(resolve_cond(b, d)?)),
        Cond::Or(a, b) => CNode::Or(Box::new(resolve_cond(a, d)?), Box::new(resolve_cond(b, d)?)),
        Cond::Not(a) => CNode::Not(Box::new(resolve_cond(a, d)?)),
    })
}

/// Fitted statistic values, indexed by stat id. `None` marks an unfitted slot.
pub(crate) type StatValues = [Option<f64>];

impl Node<'_> {
    pub(crate) fn eval(&self, row: usize, stats: &StatValues) -> Option<f64> {
        match self {
            Node::Lit(x) => Some(*x),
            Node::Col(v) => v[row],
            Node::Unary(op, a) => {
                let x = a.eval(row, stats)?;
                match op {
                    UnaryOp::Log1p => (x > -1.0).then(|| x.ln_1p()).and_then(finite),
                    UnaryOp::Abs => Some(x.abs()),
                    UnaryOp::Sqrt => (x >= 0.0).then(|| x.sqrt()),
                    UnaryOp::Neg => Some(-x),
                    UnaryOp::Clip01 => Some(x.clamp(0.0, 1.0)),
                }
            }
            Node::Binary(op, a, b) => {
                let x = a.eval(row, stats)?;
                let y = b.eval(row, stats)?;
                let r = match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return None;
                        }
                        x / y
                    }
                    BinOp::Min => x.min(y),
                    BinOp::Max => x.max(y),
                    BinOp::Pow => x.powf(y),
                };
                finite(r)
            }
            Node::If(c, a, b) => match c.eval(row, stats)? {
                true => a.eval(row, stats),
                false => b.eval(row, stats),
            },
            Node::Stat(id, _, _) => stats.get(*id as usize).copied().flatten(),
            Node::Group(agg, members) => group_agg(*agg, members, row),
            Node::Coalesce(a, b) => a.eval(row, stats).or_else(|| b.eval(row, stats)),
        }
    }
}

impl CNode<'_> {
    /// Three-valued: `None` when the outcome depends on a missing operand.
    fn eval(&self, row: usize, stats: &StatValues) -> Option<bool> {
        match self {
            CNode::Cmp(op, a, b) => {
                let x = a.eval(row, stats)?;
                let y = b.eval(row, stats)?;
                Some(match op {
                    CmpOp::Gt => x > y,
                    CmpOp::Ge => x >= y,
                    CmpOp::Lt => x < y,
                    CmpOp::Le => x <= y,
                    CmpOp::Eq => x == y,
                })
            }
            CNode::CatEq(codes, code) => codes[row].map(|c| Some(c) == *code),
            CNode::IsMissing(a) => Some(a.eval(row, stats).is_none()),
            CNode::And(a, b) => match (a.eval(row, stats), b.eval(row, stats)) {
                (Some(false), _) | (_, Some(false)) => Some(false),
                (Some(true), Some(true)) => Some(true),
                _ => None,
            },
            CNode::Or(a, b) => match (a.eval(row, stats), b.eval(row, stats)) {
                (Some(true), _) | (_, Some(true)) => Some(true),
                (Some(false), Some(false)) => Some(false),
                _ => None,
            },
            CNode::Not(a) => a.eval(row, stats).map(|v| !v),
        }
    }
}

fn group_agg(agg: GroupAgg, members: &[(f64, &[Option<f64>])], row: usize) -> Option<f64> {
    // members are ordered by time offset
    let observed: Vec<(f64, f64)> = members
        .iter()
        .filter_map(|(t, col)| col[row].map(|v| (*t, v)))
        .collect();
    if agg == GroupAgg::Missing {
        return Some((members.len() - observed.len()) as f64 / members.len() as f64);
    }
    if observed.is_empty() {
        return None;
    }
    let n = observed.len() as f64;
    let r = match agg {
        GroupAgg::Mean => observed.iter().map(|p| p.1).sum::<f64>() / n,
        GroupAgg::Std => {
            let mean = observed.iter().map(|p| p.1).sum::<f64>() / n;
            (observed.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n).sqrt()
        }
        GroupAgg::Min => observed.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        GroupAgg::Max => observed.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
        GroupAgg::First => observed[0].1,
        GroupAgg::Last => observed[observed.len() - 1].1,
        GroupAgg::Delta => {
            if observed.len() < 2 {
                return None;
            }
            observed[observed.len() - 1].1 - observed[0].1
        }
        GroupAgg::Slope => {
            if observed.len() < 2 {
                return None;
            }
            let tm = observed.iter().map(|p| p.0).sum::<f64>() / n;
            let vm = observed.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = observed.iter().map(|(t, v)| (t - tm) * (v - vm)).sum();
            let sxx: f64 = observed.iter().map(|(t, _)| (t - tm).powi(2)).sum();
            if sxx == 0.0 {
                return None;
            }
            sxy / sxx
        }
        GroupAgg::Missing => unreachable!(),
    };
    finite(r)
}
