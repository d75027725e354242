//! Random programs and tables over a fixed column vocabulary, for fuzzing.

#![allow(dead_code)]

use featloop_core::data::{Cell, ColumnSchema, Dataset, Schema};
use featloop_core::dsl::{BinOp, CmpOp, Cond, Expr, GroupAgg, Program, StatOp, UnaryOp};
use rand::seq::SliceRandom;
use rand::Rng;

pub const NUMERIC: [&str; 3] = ["a", "b", "c"];
pub const GROUP: &str = "hr";
pub const CATEGORICAL: &str = "s";
pub const TOKENS: [&str; 2] = ["F", "M"];
pub const LABEL: &str = "y";

pub fn schema() -> Schema {
    let mut cols: Vec<ColumnSchema> = NUMERIC.iter().map(|n| ColumnSchema::numeric(*n, "")).collect();
    for t in [0.0, 6.0, 12.0] {
        cols.push(ColumnSchema::temporal(format!("{GROUP}@{t}h"), "", GROUP, t));
    }
    cols.push(ColumnSchema::categorical(CATEGORICAL, ""));
    cols.push(ColumnSchema::label(LABEL, ""));
    Schema::new(cols).unwrap()
}

fn literal(rng: &mut impl Rng) -> f64 {
    match rng.gen_range(0..8) {
        0 => 0.0,
        1 => 1.0,
        2 => 1e-7,
        3 => 123456789.0,
        4 => 1e300,
        5 => -2.5,
        _ => (rng.gen_range(-100.0..100.0_f64) * 1000.0).round() / 1000.0,
    }
}

/// A numeric cell, sometimes extreme or missing.
pub fn value(rng: &mut impl Rng) -> Cell {
    match rng.gen_range(0..12) {
        0 => Cell::Missing,
        1 => Cell::Num(1e300),
        2 => Cell::Num(-1e300),
        3 => Cell::Num(0.0),
        4 => Cell::Num(1e-300),
        _ => Cell::Num(rng.gen_range(-50.0..50.0)),
    }
}

pub fn table(rng: &mut impl Rng, n: usize) -> Dataset {
    let rows = (0..n)
        .map(|_| {
            let mut r: Vec<Cell> = (0..NUMERIC.len() + 3).map(|_| value(rng)).collect();
            r.push(Cell::Cat(TOKENS.choose(rng).unwrap().to_string()));
            r
        })
        .collect();
    let labels = (0..n).map(|i| (i % 2) as u8).collect();
    Dataset::from_rows(schema(), rows, labels).unwrap()
}

pub fn expr(rng: &mut impl Rng, depth: usize) -> Expr {
    if depth == 0 || rng.gen_bool(0.3) {
        return match rng.gen_range(0..3) {
            0 => Expr::Lit(literal(rng)),
            1 => Expr::Col(NUMERIC.choose(rng).unwrap().to_string()),
            _ => Expr::Group(*GroupAgg::ALL.choose(rng).unwrap(), GROUP.into()),
        };
    }
    let sub = |rng: &mut _| Box::new(expr(rng, depth - 1));
    match rng.gen_range(0..5) {
        0 => Expr::Unary(*UnaryOp::ALL.choose(rng).unwrap(), sub(rng)),
        1 => Expr::Binary(*BinOp::ALL.choose(rng).unwrap(), sub(rng), sub(rng)),
        2 => Expr::If(Box::new(cond(rng, depth - 1)), sub(rng), sub(rng)),
        3 => Expr::Stat {
            id: 0,
            op: *StatOp::ALL.choose(rng).unwrap(),
            arg: sub(rng),
        },
        _ => Expr::Coalesce(sub(rng), sub(rng)),
    }
}

pub fn cond(rng: &mut impl Rng, depth: usize) -> Cond {
    if depth == 0 || rng.gen_bool(0.5) {
        return match rng.gen_range(0..3) {
            0 => Cond::Cmp(
                *CmpOp::ALL.choose(rng).unwrap(),
                Box::new(expr(rng, depth.saturating_sub(1))),
                Box::new(expr(rng, depth.saturating_sub(1))),
            ),
            1 => Cond::CatEq(CATEGORICAL.into(), TOKENS.choose(rng).unwrap().to_string()),
            _ => Cond::IsMissing(Box::new(expr(rng, depth.saturating_sub(1)))),
        };
    }
    let sub = |rng: &mut _| Box::new(cond(rng, depth - 1));
    match rng.gen_range(0..3) {
        0 => Cond::And(sub(rng), sub(rng)),
        1 => Cond::Or(sub(rng), sub(rng)),
        _ => Cond::Not(sub(rng)),
    }
}

pub fn program(rng: &mut impl Rng, depth: usize) -> Program {
    let rationale = if rng.gen_bool(0.3) { "random program" } else { "" };
    Program::new(format!("f{}", rng.gen_range(0..1000)), rationale, expr(rng, depth))
}

/// A program that reads the label somewhere in its body.
pub fn label_program(rng: &mut impl Rng, depth: usize) -> Program {
    let e = expr(rng, depth);
    let label = Box::new(Expr::Col(LABEL.into()));
    let body = match rng.gen_range(0..3) {
        0 => Expr::Binary(BinOp::Add, Box::new(e), label),
        1 => Expr::Stat {
            id: 0,
            op: StatOp::Mean,
            arg: label,
        },
        _ => Expr::If(
            Box::new(Cond::Cmp(CmpOp::Gt, label, Box::new(Expr::Lit(0.5)))),
            Box::new(e),
            Box::new(Expr::Lit(0.0)),
        ),
    };
    Program::new("leaky", "", body)
}
