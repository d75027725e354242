//! Recursive-descent parser for feature programs.
//!
//! ```text
//! program := "feature" IDENT "=" expr
//! expr    := term (("+" | "-") term)*
//! term    := atom (("*" | "/") atom)*
//! atom    := NUMBER | "-" NUMBER | "(" expr ")" | "col" "(" IDENT ")"
//!          | unary "(" expr ")" | stat "(" expr ")" | gagg "(" IDENT ")"
//!          | ("min" | "max" | "pow") "(" expr "," expr ")"
//!          | "coalesce" "(" expr "," expr ")" | "if" "(" cond "," expr "," expr ")"
//! cond    := conj ("or" conj)*
//! conj    := neg ("and" neg)*
//! neg     := "not" neg | "is_missing" "(" expr ")" | "(" cond ")"
//!          | "col" "(" IDENT ")" "==" STRING | expr cmp expr
//! ```
//!
//! Leading `#` comment lines become the program's rationale. Positions in
//! errors are byte offsets into the input.

use std::fmt;

use thiserror::Error;

use crate::dsl::ast::{BinOp, CmpOp, Cond, Expr, GroupAgg, Program, StatOp, UnaryOp};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownFunction(String),
    Arity {
        function: String,
        expected: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub position: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Syntax(msg) => {
                write!(f, "syntax error at position {}: {msg}", self.position)
            }
            ParseErrorKind::UnknownFunction(name) => {
                write!(f, "unknown function `{name}` at position {}", self.position)
            }
            ParseErrorKind::Arity { function, expected } => write!(
                f,
                "arity mismatch at position {}: `{function}` takes {expected} argument(s)",
                self.position
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Assign,
    Cmp(CmpOp),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(x) => format!("number {x}"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Assign => "`=`".into(),
            Tok::Cmp(op) => format!("`{}`", op.symbol()),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn syntax(position: usize, msg: impl Into<String>) -> ParseError {
    ParseError {
        position,
        kind: ParseErrorKind::Syntax(msg.into()),
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '@' | '.')
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            _ => None,
        };
        if let Some(tok) = single {
            out.push((tok, start));
            i += 1;
            continue;
        }
        let next = bytes.get(i + 1).copied();
        match c {
            '=' if next == Some(b'=') => {
                out.push((Tok::Cmp(CmpOp::Eq), start));
                i += 2;
            }
            '=' => {
                out.push((Tok::Assign, start));
                i += 1;
            }
            '>' | '<' => {
                let (op, len) = match (c, next == Some(b'=')) {
                    ('>', true) => (CmpOp::Ge, 2),
                    ('>', false) => (CmpOp::Gt, 1),
                    ('<', true) => (CmpOp::Le, 2),
                    _ => (CmpOp::Lt, 1),
                };
                out.push((Tok::Cmp(op), start));
                i += len;
            }
            '"' => {
                i += 1;
                let mut s = String::new();
                loop {
                    match text[i..].chars().next() {
                        None => return Err(syntax(i, "unterminated string")),
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some('\\') => {
                            match text[i + 1..].chars().next() {
                                Some(e @ ('"' | '\\')) => s.push(e),
                                _ => return Err(syntax(i, "invalid escape in string")),
                            }
                            i += 2;
                        }
                        Some(ch) => {
                            s.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                out.push((Tok::Str(s), start));
            }
            c if c.is_ascii_digit() || (c == '.' && next.is_some_and(|b| b.is_ascii_digit())) => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j], b'+' | b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lexeme = &text[start..i];
                let x: f64 = lexeme
                    .parse()
                    .map_err(|_| syntax(start, format!("malformed number `{lexeme}`")))?;
                if !x.is_finite() {
                    return Err(syntax(start, format!("number `{lexeme}` is out of range")));
                }
                out.push((Tok::Num(x), start));
            }
            c if is_ident_start(c) => {
                while i < bytes.len() && is_ident_char(bytes[i] as char) {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
            }
            other => return Err(syntax(start, format!("unexpected character `{other}`"))),
        }
    }
    out.push((Tok::Eof, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(syntax(
                self.offset(),
                format!("expected {what}, found {}", self.peek().describe()),
            ))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(syntax(
                self.offset(),
                format!("expected {what}, found {}", other.describe()),
            )),
        }
    }

    /// Separator between call arguments; reports arity when the call closes
    /// early or continues past its last argument.
    fn arg_sep(&mut self, function: &str, expected: usize, last: bool) -> Result<(), ParseError> {
        let (want, other) = if last {
            (Tok::RParen, Tok::Comma)
        } else {
            (Tok::Comma, Tok::RParen)
        };
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else if *self.peek() == other {
            Err(ParseError {
                position: self.offset(),
                kind: ParseErrorKind::Arity {
                    function: function.to_string(),
                    expected,
                },
            })
        } else {
            Err(syntax(
                self.offset(),
                format!(
                    "expected {}, found {}",
                    if last { "`)`" } else { "`,`" },
                    self.peek().describe()
                ),
            ))
        }
    }

    fn program(&mut self) -> Result<(String, Expr), ParseError> {
        match self.peek() {
            Tok::Ident(k) if k == "feature" => {
                self.bump();
            }
            other => {
                return Err(syntax(
                    self.offset(),
                    format!("expected `feature`, found {}", other.describe()),
                ))
            }
        }
        let name = self.ident("a feature name")?;
        self.expect(Tok::Assign, "`=`")?;
        let expr = self.expr()?;
        if *self.peek() != Tok::Eof {
            return Err(syntax(
                self.offset(),
                format!("unexpected {} after expression", self.peek().describe()),
            ));
        }
        Ok((name, expr))
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.atom()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.atom()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(x) => Ok(Expr::Lit(x)),
            Tok::Minus => match self.bump() {
                Tok::Num(x) => Ok(Expr::Lit(-x)),
                other => Err(syntax(
                    at,
                    format!(
                        "`-` must be followed by a number here (found {}); use neg(...)",
                        other.describe()
                    ),
                )),
            },
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => self.call(name, at),
            other => Err(syntax(
                at,
                format!("expected an expression, found {}", other.describe()),
            )),
        }
    }

    fn call(&mut self, name: String, at: usize) -> Result<Expr, ParseError> {
        if *self.peek() != Tok::LParen {
            return Err(syntax(
                at,
                format!("unexpected identifier `{name}`; columns are written col({name})"),
            ));
        }
        self.bump();
        let n = name.as_str();
        if n == "col" {
            let c = self.ident("a column name")?;
            self.arg_sep(n, 1, true)?;
            return Ok(Expr::Col(c));
        }
        if let Some(op) = UnaryOp::from_name(n) {
            let a = self.expr()?;
            self.arg_sep(n, 1, true)?;
            return Ok(Expr::Unary(op, Box::new(a)));
        }
        if let Some(op) = StatOp::from_name(n) {
            let a = self.expr()?;
            self.arg_sep(n, 1, true)?;
            return Ok(Expr::Stat {
                id: 0,
                op,
                arg: Box::new(a),
            });
        }
        if let Some(agg) = GroupAgg::from_name(n) {
            let g = self.ident("a temporal group id")?;
            self.arg_sep(n, 1, true)?;
            return Ok(Expr::Group(agg, g));
        }
        if let Some(op) = BinOp::from_call_name(n) {
            let a = self.expr()?;
            self.arg_sep(n, 2, false)?;
            let b = self.expr()?;
            self.arg_sep(n, 2, true)?;
            return Ok(Expr::Binary(op, Box::new(a), Box::new(b)));
        }
        match n {
            "coalesce" => {
                let a = self.expr()?;
                self.arg_sep(n, 2, false)?;
                let b = self.expr()?;
                self.arg_sep(n, 2, true)?;
                Ok(Expr::Coalesce(Box::new(a), Box::new(b)))
            }
            "if" => {
                let c = self.cond()?;
                self.arg_sep(n, 3, false)?;
                let a = self.expr()?;
                self.arg_sep(n, 3, false)?;
                let b = self.expr()?;
                self.arg_sep(n, 3, true)?;
                Ok(Expr::If(Box::new(c), Box::new(a), Box::new(b)))
            }
            _ => Err(ParseError {
                position: at,
                kind: ParseErrorKind::UnknownFunction(name),
            }),
        }
    }

    fn cond(&mut self) -> Result<Cond, ParseError> {
        let mut lhs = self.conj()?;
        while matches!(self.peek(), Tok::Ident(k) if k == "or") {
            self.bump();
            let rhs = self.conj()?;
            lhs = Cond::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn conj(&mut self) -> Result<Cond, ParseError> {
        let mut lhs = self.neg()?;
        while matches!(self.peek(), Tok::Ident(k) if k == "and") {
            self.bump();
            let rhs = self.neg()?;
            lhs = Cond::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn neg(&mut self) -> Result<Cond, ParseError> {
        match self.peek().clone() {
            Tok::Ident(k) if k == "not" => {
                self.bump();
                Ok(Cond::Not(Box::new(self.neg()?)))
            }
            Tok::Ident(k) if k == "is_missing" && *self.peek_at(1) == Tok::LParen => {
                self.bump();
                self.bump();
                let e = self.expr()?;
                self.arg_sep("is_missing", 1, true)?;
                Ok(Cond::IsMissing(Box::new(e)))
            }
            Tok::LParen => {
                // A parenthesised condition, unless the parentheses belong to
                // the left operand of a comparison.
                let save = self.pos;
                self.bump();
                if let Ok(c) = self.cond() {
                    if *self.peek() == Tok::RParen {
                        self.bump();
                        if !matches!(
                            self.peek(),
                            Tok::Cmp(_) | Tok::Plus | Tok::Minus | Tok::Star | Tok::Slash
                        ) {
                            return Ok(c);
                        }
                    }
                }
                self.pos = save;
                self.comparison()
            }
            _ => self.comparison(),
        }
    }

    fn comparison(&mut self) -> Result<Cond, ParseError> {
        let lhs = self.expr()?;
        let at = self.offset();
        let op = match self.bump() {
            Tok::Cmp(op) => op,
            other => {
                return Err(syntax(
                    at,
                    format!("expected a comparison operator, found {}", other.describe()),
                ))
            }
        };
        if let Tok::Str(tok) = self.peek().clone() {
            let str_at = self.offset();
            self.bump();
            return match (op, lhs) {
                (CmpOp::Eq, Expr::Col(c)) => Ok(Cond::CatEq(c, tok)),
                _ => Err(syntax(
                    str_at,
                    "category tokens may only be compared as col(NAME) == \"TOKEN\"",
                )),
            };
        }
        let rhs = self.expr()?;
        Ok(Cond::Cmp(op, Box::new(lhs), Box::new(rhs)))
    }
}

/// Parses program text. Leading `#` lines become the rationale.
pub fn parse(text: &str) -> Result<Program, ParseError> {
    let mut rationale = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() && rationale.is_empty() {
            continue;
        }
        match t.strip_prefix('#') {
            Some(rest) => rationale.push(rest.strip_prefix(' ').unwrap_or(rest).to_string()),
            None => break,
        }
    }
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let (name, expr) = p.program()?;
    Ok(Program::new(name, rationale.join("\n"), expr))
}

/// Parses a bare expression, for tests and tooling.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return Err(syntax(p.offset(), format!("unexpected {}", p.peek().describe())));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(c: &str) -> Box<Expr> {
        Box::new(Expr::Col(c.into()))
    }

    #[test]
    fn product() {
        let p = parse("feature x = col(age) * col(imd)").unwrap();
        assert_eq!(p.name(), "x");
        assert_eq!(*p.expr(), Expr::Binary(BinOp::Mul, col("age"), col("imd")));
        assert!(parse(&p.to_string()).unwrap().structurally_eq(&p));
    }

    #[test]
    fn min_max_interaction() {
        let text = "feature z = (col(age) - trainmin(col(age))) / (trainmax(col(age)) - trainmin(col(age))) * (col(imd) - trainmin(col(imd))) / (trainmax(col(imd)) - trainmin(col(imd)))";
        let p = parse(text).unwrap();
        assert_eq!(p.stat_count(), 6);
        assert_eq!(p.columns().into_iter().collect::<Vec<_>>(), vec!["age", "imd"]);
        let again = parse(&p.to_string()).unwrap();
        assert!(again.structurally_eq(&p));
    }

    #[test]
    fn truncated_input_reports_end_position() {
        let text = "feature bad = col(";
        let err = parse(text).unwrap_err();
        assert_eq!(err.position, text.find('(').unwrap() + 1);
        assert!(matches!(err.kind, ParseErrorKind::Syntax(_)));
    }

    #[test]
    fn unknown_function_and_arity() {
        let err = parse("feature a = frobnicate(col(x))").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownFunction("frobnicate".into()));
        assert_eq!(err.position, 12);
        let err = parse("feature a = log1p(col(x), 2)").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Arity { expected: 1, .. }), "{err}");
        let err = parse("feature a = pow(col(x))").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Arity { expected: 2, .. }), "{err}");
        let err = parse("feature a = if(col(x) > 1, 2)").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::Arity { expected: 3, .. }), "{err}");
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expr("1 + 2 * 3 - 4 / 5").unwrap();
        assert_eq!(e.to_string(), "1 + 2 * 3 - 4 / 5");
        let e = parse_expr("1 - (2 - 3)").unwrap();
        assert_eq!(e.to_string(), "1 - (2 - 3)");
        let e = parse_expr("(1 - 2) - 3").unwrap();
        assert_eq!(e.to_string(), "1 - 2 - 3");
        let e = parse_expr("-2 * col(a) - -1.5").unwrap();
        assert_eq!(e.to_string(), "-2 * col(a) - -1.5");
    }

    #[test]
    fn conditions() {
        let p = parse(
            "feature f = if((col(a) + 1) > 2 and not (is_missing(col(b)) or col(s) == \"F\"), 1, 0)",
        )
        .unwrap();
        let text = p.to_string();
        assert_eq!(
            text,
            "feature f = if(col(a) + 1 > 2 and not (is_missing(col(b)) or col(s) == \"F\"), 1, 0)"
        );
        assert!(parse(&text).unwrap().structurally_eq(&p));
        assert!(parse("feature f = if(col(a) > \"x\", 1, 0)").is_err());
        assert!(parse("feature f = if(col(a) + 1 == \"x\", 1, 0)").is_err());
    }

    #[test]
    fn rationale_comments() {
        let p = parse("# first line\n# second\nfeature a = gslope(hr)").unwrap();
        assert_eq!(p.rationale(), "first line\nsecond");
        assert_eq!(p.to_string(), "# first line\n# second\nfeature a = gslope(hr)");
        assert_eq!(parse(&p.to_string()).unwrap(), p);
    }

    #[test]
    fn round_trips() {
        for text in [
            "feature lit = 0.1 + 1e-7 - 123456789 * 2.5",
            "feature nest = if(col(a) >= 1 or col(b) < 0, if(is_missing(col(c)), 0, col(c)), -1)",
            "feature grp = gmean(hr) - gslope(hr) * glast(hr) + gmissing(hr) + coalesce(gfirst(hr), gdelta(hr))",
            "feature call = max(min(col(a), 1), pow(abs(col(b)), 0.5)) + clip01(neg(col(a)))",
        ] {
            let p = parse(text).unwrap();
            assert_eq!(p.to_string(), text);
            assert!(parse(&p.to_string()).unwrap().structurally_eq(&p));
        }
    }

    #[test]
    fn stat_ids_are_preorder() {
        let p = parse("feature s = trainmean(col(a) - trainmedian(col(a))) + trainstd(col(b))").unwrap();
        let mut ids = Vec::new();
        crate::dsl::ast::visit_expr(p.expr(), &mut |e| {
            if let Expr::Stat { id, op, .. } = e {
                ids.push((*id, *op));
            }
        });
        assert_eq!(
            ids,
            vec![(0, StatOp::Mean), (1, StatOp::Median), (2, StatOp::Std)]
        );
    }

    #[test]
    fn bare_identifier_is_rejected() {
        assert!(parse("feature a = age * 2").is_err());
        assert!(parse("feature a = -col(x)").is_err());
        assert!(parse("feat a = 1").is_err());
        assert!(parse("feature a = 1 2").is_err());
    }
}
