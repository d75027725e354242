use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Log1p,
    Abs,
    Sqrt,
    Neg,
    Clip01,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
}

/// Statistics computed once over training rows and frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StatOp {
    Mean,
    Std,
    Min,
    Max,
    Median,
}

/// Row-wise aggregates over the members of a temporal group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupAgg {
    Mean,
    Std,
    Min,
    Max,
    First,
    Last,
    Delta,
    Slope,
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(f64),
    Col(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    If(Box<Cond>, Box<Expr>, Box<Expr>),
    /// `id` numbers stat nodes in pre-order; assigned by [`Program::new`].
    Stat { id: u32, op: StatOp, arg: Box<Expr> },
    Group(GroupAgg, String),
    Coalesce(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cond {
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    /// `col(name) == "token"` against a categorical column.
    CatEq(String, String),
    IsMissing(Box<Expr>),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
    Not(Box<Cond>),
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 5] = [
        UnaryOp::Log1p,
        UnaryOp::Abs,
        UnaryOp::Sqrt,
        UnaryOp::Neg,
        UnaryOp::Clip01,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Log1p => "log1p",
            UnaryOp::Abs => "abs",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Neg => "neg",
            UnaryOp::Clip01 => "clip01",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == s)
    }
}

impl BinOp {
    pub const ALL: [BinOp; 7] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Min,
        BinOp::Max,
        BinOp::Pow,
    ];

    /// Infix symbol, or `None` for the call-form operators.
    pub fn symbol(self) -> Option<&'static str> {
        match self {
            BinOp::Add => Some("+"),
            BinOp::Sub => Some("-"),
            BinOp::Mul => Some("*"),
            BinOp::Div => Some("/"),
            BinOp::Min | BinOp::Max | BinOp::Pow => None,
        }
    }

    pub fn call_name(self) -> Option<&'static str> {
        match self {
            BinOp::Min => Some("min"),
            BinOp::Max => Some("max"),
            BinOp::Pow => Some("pow"),
            _ => None,
        }
    }

    pub fn from_call_name(s: &str) -> Option<Self> {
        match s {
            "min" => Some(BinOp::Min),
            "max" => Some(BinOp::Max),
            "pow" => Some(BinOp::Pow),
            _ => None,
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Min | BinOp::Max | BinOp::Pow => 3,
        }
    }
}

impl CmpOp {
    pub const ALL: [CmpOp; 5] = [CmpOp::Gt, CmpOp::Ge, CmpOp::Lt, CmpOp::Le, CmpOp::Eq];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
        }
    }
}

impl StatOp {
    pub const ALL: [StatOp; 5] = [
        StatOp::Mean,
        StatOp::Std,
        StatOp::Min,
        StatOp::Max,
        StatOp::Median,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StatOp::Mean => "trainmean",
            StatOp::Std => "trainstd",
            StatOp::Min => "trainmin",
            StatOp::Max => "trainmax",
            StatOp::Median => "trainmedian",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == s)
    }
}

impl GroupAgg {
    pub const ALL: [GroupAgg; 9] = [
        GroupAgg::Mean,
        GroupAgg::Std,
        GroupAgg::Min,
        GroupAgg::Max,
        GroupAgg::First,
        GroupAgg::Last,
        GroupAgg::Delta,
        GroupAgg::Slope,
        GroupAgg::Missing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GroupAgg::Mean => "gmean",
            GroupAgg::Std => "gstd",
            GroupAgg::Min => "gmin",
            GroupAgg::Max => "gmax",
            GroupAgg::First => "gfirst",
            GroupAgg::Last => "glast",
            GroupAgg::Delta => "gdelta",
            GroupAgg::Slope => "gslope",
            GroupAgg::Missing => "gmissing",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == s)
    }
}

/// A parsed feature definition: `feature NAME = expr`.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    name: String,
    rationale: String,
    expr: Expr,
}

impl Program {
    /// Builds a program and renumbers its stat nodes in pre-order.
    pub fn new(name: impl Into<String>, rationale: impl Into<String>, mut expr: Expr) -> Self {
        let mut next = 0;
        renumber_expr(&mut expr, &mut next);
        Self {
            name: name.into(),
            rationale: rationale.into(),
            expr,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rationale(&self) -> &str {
        &self.rationale
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn with_rationale(mut self, rationale: impl Into<String>) -> Self {
        self.rationale = rationale.into();
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Same AST and name, ignoring the rationale.
    pub fn structurally_eq(&self, other: &Program) -> bool {
        self.name == other.name && self.expr == other.expr
    }

    pub fn stat_count(&self) -> u32 {
        let mut n = 0;
        visit_expr(&self.expr, &mut |e| {
            if matches!(e, Expr::Stat { .. }) {
                n += 1;
            }
        });
        n
    }

    /// Column names referenced through `col(...)`.
    pub fn columns(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        visit_expr(&self.expr, &mut |e| {
            if let Expr::Col(c) = e {
                out.insert(c.clone());
            }
        });
        visit_conds(&self.expr, &mut |c| {
            if let Cond::CatEq(name, _) = c {
                out.insert(name.clone());
            }
        });
        out
    }

    /// Temporal group ids referenced by group aggregates.
    pub fn groups(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        visit_expr(&self.expr, &mut |e| {
            if let Expr::Group(_, g) = e {
                out.insert(g.clone());
            }
        });
        out
    }

    /// Renames column and group references; names absent from `map` are kept.
    pub fn map_references(&self, map: &dyn Fn(&str) -> Option<String>) -> Program {
        let mut expr = self.expr.clone();
        rename_expr(&mut expr, map);
        Program {
            name: self.name.clone(),
            rationale: self.rationale.clone(),
            expr,
        }
    }

    /// Program text without the rationale comment.
    pub fn render_body(&self) -> String {
        format!("feature {} = {}", self.name, self.expr)
    }
}

/// Renders the rationale as leading `#` lines followed by the definition.
impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in self.rationale.lines() {
            if line.is_empty() {
                writeln!(f, "#")?;
            } else {
                writeln!(f, "# {line}")?;
            }
        }
        write!(f, "feature {} = {}", self.name, self.expr)
    }
}

fn renumber_expr(e: &mut Expr, next: &mut u32) {
    match e {
        Expr::Lit(_) | Expr::Col(_) | Expr::Group(..) => {}
        Expr::Unary(_, a) => renumber_expr(a, next),
        Expr::Binary(_, a, b) | Expr::Coalesce(a, b) => {
            renumber_expr(a, next);
            renumber_expr(b, next);
        }
        Expr::If(c, a, b) => {
            renumber_cond(c, next);
            renumber_expr(a, next);
            renumber_expr(b, next);
        }
        Expr::Stat { id, arg, .. } => {
            *id = *next;
            *next += 1;
            renumber_expr(arg, next);
        }
    }
}

fn renumber_cond(c: &mut Cond, next: &mut u32) {
    match c {
        Cond::Cmp(_, a, b) => {
            renumber_expr(a, next);
            renumber_expr(b, next);
        }
        Cond::CatEq(..) => {}
        Cond::IsMissing(a) => renumber_expr(a, next),
        Cond::And(a, b) | Cond::Or(a, b) => {
            renumber_cond(a, next);
            renumber_cond(b, next);
        }
        Cond::Not(a) => renumber_cond(a, next),
    }
}

fn rename_expr(e: &mut Expr, map: &dyn Fn(&str) -> Option<String>) {
    match e {
        Expr::Lit(_) => {}
        Expr::Col(c) | Expr::Group(_, c) => {
            if let Some(n) = map(c) {
                *c = n;
            }
        }
        Expr::Unary(_, a) | Expr::Stat { arg: a, .. } => rename_expr(a, map),
        Expr::Binary(_, a, b) | Expr::Coalesce(a, b) => {
            rename_expr(a, map);
            rename_expr(b, map);
        }
        Expr::If(c, a, b) => {
            rename_cond(c, map);
            rename_expr(a, map);
            rename_expr(b, map);
        }
    }
}

fn rename_cond(c: &mut Cond, map: &dyn Fn(&str) -> Option<String>) {
    match c {
        Cond::Cmp(_, a, b) => {
            rename_expr(a, map);
            rename_expr(b, map);
        }
        Cond::CatEq(col, _) => {
            if let Some(n) = map(col) {
                *col = n;
            }
        }
        Cond::IsMissing(a) => rename_expr(a, map),
        Cond::And(a, b) | Cond::Or(a, b) => {
            rename_cond(a, map);
            rename_cond(b, map);
        }
        Cond::Not(a) => rename_cond(a, map),
    }
}

/// Calls `f` on every expression node, including those inside conditions.
pub fn visit_expr(e: &Expr, f: &mut dyn FnMut(&Expr)) {
    f(e);
    match e {
        Expr::Lit(_) | Expr::Col(_) | Expr::Group(..) => {}
        Expr::Unary(_, a) | Expr::Stat { arg: a, .. } => visit_expr(a, f),
        Expr::Binary(_, a, b) | Expr::Coalesce(a, b) => {
            visit_expr(a, f);
            visit_expr(b, f);
        }
        Expr::If(c, a, b) => {
            visit_cond_exprs(c, f);
            visit_expr(a, f);
            visit_expr(b, f);
        }
    }
}

fn visit_cond_exprs(c: &Cond, f: &mut dyn FnMut(&Expr)) {
    match c {
        Cond::Cmp(_, a, b) => {
            visit_expr(a, f);
            visit_expr(b, f);
        }
        Cond::CatEq(..) => {}
        Cond::IsMissing(a) => visit_expr(a, f),
        Cond::And(a, b) | Cond::Or(a, b) => {
            visit_cond_exprs(a, f);
            visit_cond_exprs(b, f);
        }
        Cond::Not(a) => visit_cond_exprs(a, f),
    }
}

/// Calls `f` on every condition node reachable from `e`.
pub fn visit_conds(e: &Expr, f: &mut dyn FnMut(&Cond)) {
    fn walk_cond(c: &Cond, f: &mut dyn FnMut(&Cond)) {
        f(c);
        match c {
            Cond::Cmp(_, a, b) => {
                visit_conds(a, f);
                visit_conds(b, f);
            }
            Cond::CatEq(..) => {}
            Cond::IsMissing(a) => visit_conds(a, f),
            Cond::And(a, b) | Cond::Or(a, b) => {
                walk_cond(a, f);
                walk_cond(b, f);
            }
            Cond::Not(a) => walk_cond(a, f),
        }
    }
    match e {
        Expr::Lit(_) | Expr::Col(_) | Expr::Group(..) => {}
        Expr::Unary(_, a) | Expr::Stat { arg: a, .. } => visit_conds(a, f),
        Expr::Binary(_, a, b) | Expr::Coalesce(a, b) => {
            visit_conds(a, f);
            visit_conds(b, f);
        }
        Expr::If(c, a, b) => {
            walk_cond(c, f);
            visit_conds(a, f);
            visit_conds(b, f);
        }
    }
}

fn fmt_number(x: f64, out: &mut String) {
    // Both forms are the shortest digits that read back to the same value.
    let plain = format!("{x}");
    let exp = format!("{x:e}");
    out.push_str(if exp.len() < plain.len() { &exp } else { &plain });
}

fn fmt_string(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        if matches!(c, '"' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
}

fn render_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Lit(x) => fmt_number(*x, out),
        Expr::Col(c) => {
            let _ = write!(out, "col({c})");
        }
        Expr::Unary(op, a) => {
            out.push_str(op.name());
            out.push('(');
            render_expr(a, out);
            out.push(')');
        }
        Expr::Binary(op, a, b) => match op.symbol() {
            Some(sym) => {
                let prec = op.precedence();
                render_operand(a, prec, false, out);
                let _ = write!(out, " {sym} ");
                render_operand(b, prec, true, out);
            }
            None => {
                out.push_str(op.call_name().expect("call-form op"));
                out.push('(');
                render_expr(a, out);
                out.push_str(", ");
                render_expr(b, out);
                out.push(')');
            }
        },
        Expr::If(c, a, b) => {
            out.push_str("if(");
            render_cond(c, 0, out);
            out.push_str(", ");
            render_expr(a, out);
            out.push_str(", ");
            render_expr(b, out);
            out.push(')');
        }
        Expr::Stat { op, arg, .. } => {
            out.push_str(op.name());
            out.push('(');
            render_expr(arg, out);
            out.push(')');
        }
        Expr::Group(agg, g) => {
            let _ = write!(out, "{}({g})", agg.name());
        }
        Expr::Coalesce(a, b) => {
            out.push_str("coalesce(");
            render_expr(a, out);
            out.push_str(", ");
            render_expr(b, out);
            out.push(')');
        }
    }
}

/// Infix operators are left-associative, so a right operand of equal
/// precedence needs parentheses to keep its shape.
fn render_operand(e: &Expr, parent: u8, right: bool, out: &mut String) {
    let needs = match e {
        Expr::Binary(op, ..) if op.symbol().is_some() => {
            let p = op.precedence();
            p < parent || (right && p == parent)
        }
        _ => false,
    };
    if needs {
        out.push('(');
        render_expr(e, out);
        out.push(')');
    } else {
        render_expr(e, out);
    }
}

/// Condition precedence: or = 1, and = 2, not/atoms = 3.
fn render_cond(c: &Cond, parent: u8, out: &mut String) {
    let (prec, wrap) = match c {
        Cond::Or(..) => (1, parent > 1),
        Cond::And(..) => (2, parent > 2),
        _ => (3, false),
    };
    if wrap {
        out.push('(');
    }
    match c {
        Cond::Cmp(op, a, b) => {
            render_expr(a, out);
            let _ = write!(out, " {} ", op.symbol());
            render_expr(b, out);
        }
        Cond::CatEq(col, tok) => {
            let _ = write!(out, "col({col}) == ");
            fmt_string(tok, out);
        }
        Cond::IsMissing(a) => {
            out.push_str("is_missing(");
            render_expr(a, out);
            out.push(')');
        }
        Cond::And(a, b) => {
            render_cond(a, prec, out);
            out.push_str(" and ");
            // right-nested same-precedence needs parentheses to round-trip
            render_cond(b, prec + 1, out);
        }
        Cond::Or(a, b) => {
            render_cond(a, prec, out);
            out.push_str(" or ");
            render_cond(b, prec + 1, out);
        }
        Cond::Not(a) => {
            out.push_str("not ");
            render_cond(a, 3, out);
        }
    }
    if wrap {
        out.push(')');
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        render_expr(self, &mut s);
        f.write_str(&s)
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        render_cond(self, 0, &mut s);
        f.write_str(&s)
    }
}
