//! Set-theoretic expressions and predicates: AST, parser and canonical printer.
//!
//! Precedence, loosest first:
//!
//! ```text
//! =>  <=>            (right associative)
//! or
//! &
//! not
//! =  /=  <  <=  >  >=  :  /:  <:  /<:   (non associative)
//! |->
//! \/  /\  \  <+
//! ..
//! +  -
//! *  /  mod
//! unary -
//! application f(x), builtins, literals
//! ```
//!
//! Quantifiers (`forall`/`exists`) extend as far right as possible.

use crate::diag::{ParseError, Span};
use crate::lex::{Cursor, Sym, Tok};
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Implies,
    Iff,
    Or,
    And,
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    NotIn,
    Subset,
    NotSubset,
    Maplet,
    Union,
    Inter,
    Diff,
    Override,
    Range,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl BinOp {
    fn prec(self) -> u8 {
        use BinOp::*;
        match self {
            Implies | Iff => 1,
            Or => 2,
            And => 3,
            Eq | Neq | Lt | Le | Gt | Ge | In | NotIn | Subset | NotSubset => 5,
            Maplet => 6,
            Union | Inter | Diff | Override => 7,
            Range => 8,
            Add | Sub => 9,
            Mul | Div | Mod => 10,
        }
    }

    pub fn text(self) -> &'static str {
        use BinOp::*;
        match self {
            Implies => "=>",
            Iff => "<=>",
            Or => "or",
            And => "&",
            Eq => "=",
            Neq => "/=",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            In => ":",
            NotIn => "/:",
            Subset => "<:",
            NotSubset => "/<:",
            Maplet => "|->",
            Union => "\\/",
            Inter => "/\\",
            Diff => "\\",
            Override => "<+",
            Range => "..",
            Add => "+",
            Sub => "-",
            Mul => "*",
            Div => "/",
            Mod => "mod",
        }
    }

    fn from_sym(sym: Sym) -> Option<BinOp> {
        use BinOp::*;
        Some(match sym {
            Sym::Implies => Implies,
            Sym::Iff => Iff,
            Sym::Or => Or,
            Sym::And => And,
            Sym::Eq => Eq,
            Sym::Neq => Neq,
            Sym::Lt => Lt,
            Sym::Le => Le,
            Sym::Gt => Gt,
            Sym::Ge => Ge,
            Sym::Colon | Sym::In => In,
            Sym::NotIn => NotIn,
            Sym::Subset => Subset,
            Sym::NotSubset => NotSubset,
            Sym::Maplet => Maplet,
            Sym::Union => Union,
            Sym::Inter => Inter,
            Sym::Backslash => Diff,
            Sym::Override => Override,
            Sym::DotDot => Range,
            Sym::Plus => Add,
            Sym::Minus => Sub,
            Sym::Star => Mul,
            Sym::Slash => Div,
            Sym::Mod => Mod,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantifier {
    Forall,
    Exists,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    Card,
    Dom,
    Ran,
    Dist,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::Card => "card",
            Builtin::Dom => "dom",
            Builtin::Ran => "ran",
            Builtin::Dist => "DIST",
        }
    }

    fn lookup(name: &str) -> Option<Builtin> {
        Some(match name {
            "card" => Builtin::Card,
            "dom" => Builtin::Dom,
            "ran" => Builtin::Ran,
            "DIST" => Builtin::Dist,
            _ => return None,
        })
    }
}

/// A variable bound by a quantifier together with the set it ranges over.
///
/// The range is read off a `x : S` conjunct of the body (the antecedent of
/// `=>` for `forall`); quantifying over `S` is equivalent to quantifying over
/// the whole type of `x` because the body is trivially true (or false) outside it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bound {
    pub name: String,
    pub range: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExprKind {
    Bool(bool),
    Int(i64),
    /// A name; `pre` marks the `x$0` form.
    Ident { name: String, pre: bool },
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    SetLit(Vec<Expr>),
    Call(Builtin, Vec<Expr>),
    Apply(Box<Expr>, Box<Expr>),
    Quant(Quantifier, Vec<Bound>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    pub fn ident(name: &str) -> Self {
        Expr::new(
            ExprKind::Ident {
                name: name.to_string(),
                pre: false,
            },
            Span::default(),
        )
    }

    pub fn int(n: i64) -> Self {
        Expr::new(ExprKind::Int(n), Span::default())
    }

    pub fn bool(b: bool) -> Self {
        Expr::new(ExprKind::Bool(b), Span::default())
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        let span = lhs.span;
        Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span)
    }

    /// Free names referenced by the expression, split into plain and `$0` uses.
    pub fn free_names(&self) -> (BTreeSet<String>, BTreeSet<String>) {
        let mut plain = BTreeSet::new();
        let mut pre = BTreeSet::new();
        self.collect_names(&mut Vec::new(), &mut plain, &mut pre);
        (plain, pre)
    }

    fn collect_names(
        &self,
        bound: &mut Vec<String>,
        plain: &mut BTreeSet<String>,
        pre_names: &mut BTreeSet<String>,
    ) {
        match &self.kind {
            ExprKind::Bool(_) | ExprKind::Int(_) => {}
            ExprKind::Ident { name, pre } => {
                if !bound.contains(name) {
                    if *pre {
                        pre_names.insert(name.clone());
                    } else {
                        plain.insert(name.clone());
                    }
                }
            }
            ExprKind::Unary(_, e) => e.collect_names(bound, plain, pre_names),
            ExprKind::Binary(_, a, b) | ExprKind::Apply(a, b) => {
                a.collect_names(bound, plain, pre_names);
                b.collect_names(bound, plain, pre_names);
            }
            ExprKind::SetLit(items) | ExprKind::Call(_, items) => {
                for e in items {
                    e.collect_names(bound, plain, pre_names);
                }
            }
            ExprKind::Quant(_, vars, body) => {
                let depth = bound.len();
                for v in vars {
                    if let Some(r) = &v.range {
                        r.collect_names(bound, plain, pre_names);
                    }
                    bound.push(v.name.clone());
                }
                body.collect_names(bound, plain, pre_names);
                bound.truncate(depth);
            }
        }
    }
}

fn conjuncts<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
    match &e.kind {
        ExprKind::Binary(BinOp::And, a, b) => {
            conjuncts(a, out);
            conjuncts(b, out);
        }
        _ => out.push(e),
    }
}

fn find_range(var: &str, quant: Quantifier, body: &Expr) -> Option<Expr> {
    let guard = match (quant, &body.kind) {
        (Quantifier::Forall, ExprKind::Binary(BinOp::Implies, lhs, _)) => lhs.as_ref(),
        (Quantifier::Forall, _) => return None,
        (Quantifier::Exists, _) => body,
    };
    let mut parts = Vec::new();
    conjuncts(guard, &mut parts);
    parts.into_iter().find_map(|c| match &c.kind {
        ExprKind::Binary(BinOp::In, lhs, rhs) => match &lhs.kind {
            ExprKind::Ident { name, pre: false } if name == var => {
                let (plain, _) = rhs.free_names();
                if plain.contains(var) {
                    None
                } else {
                    Some(rhs.as_ref().clone())
                }
            }
            _ => None,
        },
        _ => None,
    })
}

/// Parses one expression, stopping at the first token that cannot continue it.
pub fn parse_expr(cur: &mut Cursor) -> Result<Expr, ParseError> {
    parse_binary(cur, 1)
}

/// Parses an expression whose operators all bind at least as tightly as
/// `min_prec` (9 is the additive level used for range bounds).
pub fn parse_expr_min(cur: &mut Cursor, min_prec: u8) -> Result<Expr, ParseError> {
    parse_binary(cur, min_prec)
}

/// Parses a complete source string as a single expression.
pub fn parse_expr_str(src: &str) -> Result<Expr, ParseError> {
    let mut cur = Cursor::new(crate::lex::tokenize(src)?);
    let e = parse_expr(&mut cur)?;
    if !cur.at_eof() {
        return Err(cur.unexpected("end of expression"));
    }
    Ok(e)
}

fn peek_binop(cur: &Cursor) -> Option<BinOp> {
    match cur.peek() {
        Tok::Sym(s) => BinOp::from_sym(*s),
        _ => None,
    }
}

fn parse_binary(cur: &mut Cursor, min_prec: u8) -> Result<Expr, ParseError> {
    let mut lhs = parse_prefix(cur, min_prec)?;
    while let Some(op) = peek_binop(cur) {
        let prec = op.prec();
        if prec < min_prec {
            break;
        }
        cur.bump();
        lhs = match prec {
            // right associative
            1 => {
                let rhs = parse_binary(cur, prec)?;
                Expr::binary(op, lhs, rhs)
            }
            // non associative
            5 => {
                let rhs = parse_binary(cur, prec + 1)?;
                let e = Expr::binary(op, lhs, rhs);
                if peek_binop(cur).is_some_and(|o| o.prec() == 5) {
                    return Err(cur.unexpected("parentheses around chained comparison"));
                }
                e
            }
            _ => {
                let rhs = parse_binary(cur, prec + 1)?;
                Expr::binary(op, lhs, rhs)
            }
        };
    }
    Ok(lhs)
}

fn parse_prefix(cur: &mut Cursor, min_prec: u8) -> Result<Expr, ParseError> {
    let span = cur.span();
    if cur.is_sym(Sym::Forall) || cur.is_sym(Sym::Exists) {
        let q = if cur.eat_sym(Sym::Forall) {
            Quantifier::Forall
        } else {
            cur.bump();
            Quantifier::Exists
        };
        let mut names = vec![cur.expect_ident()?.0];
        while cur.eat_sym(Sym::Comma) {
            names.push(cur.expect_ident()?.0);
        }
        cur.expect_sym(Sym::Dot)?;
        let body = parse_binary(cur, 1)?;
        let vars = names
            .into_iter()
            .map(|name| {
                let range = find_range(&name, q, &body);
                Bound { name, range }
            })
            .collect();
        return Ok(Expr::new(ExprKind::Quant(q, vars, Box::new(body)), span));
    }
    if cur.is_sym(Sym::Not) && min_prec <= 4 {
        cur.bump();
        let e = parse_binary(cur, 4)?;
        return Ok(Expr::new(ExprKind::Unary(UnOp::Not, Box::new(e)), span));
    }
    if cur.is_sym(Sym::Not) {
        // `not` below its own precedence level must be parenthesized
        return Err(cur.unexpected("parentheses around `not`"));
    }
    if cur.eat_sym(Sym::Minus) {
        let e = parse_prefix(cur, 11)?;
        let e = parse_postfix(cur, e)?;
        if let ExprKind::Int(n) = e.kind {
            return Ok(Expr::new(ExprKind::Int(-n), span));
        }
        return Ok(Expr::new(ExprKind::Unary(UnOp::Neg, Box::new(e)), span));
    }
    let e = parse_primary(cur)?;
    parse_postfix(cur, e)
}

fn parse_postfix(cur: &mut Cursor, mut e: Expr) -> Result<Expr, ParseError> {
    while cur.is_sym(Sym::LParen) {
        let span = e.span;
        cur.bump();
        let arg = parse_expr(cur)?;
        cur.expect_sym(Sym::RParen)?;
        e = Expr::new(ExprKind::Apply(Box::new(e), Box::new(arg)), span);
    }
    Ok(e)
}

fn parse_primary(cur: &mut Cursor) -> Result<Expr, ParseError> {
    let span = cur.span();
    match cur.peek().clone() {
        Tok::Int(n) => {
            cur.bump();
            Ok(Expr::new(ExprKind::Int(n), span))
        }
        Tok::Ident(name) => {
            cur.bump();
            match name.as_str() {
                "TRUE" | "true" => return Ok(Expr::new(ExprKind::Bool(true), span)),
                "FALSE" | "false" => return Ok(Expr::new(ExprKind::Bool(false), span)),
                _ => {}
            }
            if let Some(b) = Builtin::lookup(&name) {
                if cur.eat_sym(Sym::LParen) {
                    let mut args = vec![parse_expr(cur)?];
                    while cur.eat_sym(Sym::Comma) {
                        args.push(parse_expr(cur)?);
                    }
                    cur.expect_sym(Sym::RParen)?;
                    return Ok(Expr::new(ExprKind::Call(b, args), span));
                }
            }
            let (name, pre) = match name.strip_suffix("$0") {
                Some(base) => (base.to_string(), true),
                None => (name, false),
            };
            Ok(Expr::new(ExprKind::Ident { name, pre }, span))
        }
        Tok::Sym(Sym::LParen) => {
            cur.bump();
            let e = parse_expr(cur)?;
            cur.expect_sym(Sym::RParen)?;
            Ok(e)
        }
        Tok::Sym(Sym::LBrace) => {
            cur.bump();
            let mut items = Vec::new();
            if !cur.is_sym(Sym::RBrace) {
                items.push(parse_expr(cur)?);
                while cur.eat_sym(Sym::Comma) {
                    items.push(parse_expr(cur)?);
                }
            }
            cur.expect_sym(Sym::RBrace)?;
            Ok(Expr::new(ExprKind::SetLit(items), span))
        }
        _ => Err(cur.unexpected("an expression")),
    }
}

// ---------------------------------------------------------------------------
// printing

const PREC_QUANT: u8 = 0;
const PREC_NOT: u8 = 4;
const PREC_ATOM: u8 = 12;

fn expr_prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Quant(..) => PREC_QUANT,
        ExprKind::Binary(op, ..) => op.prec(),
        ExprKind::Unary(UnOp::Not, _) => PREC_NOT,
        ExprKind::Unary(UnOp::Neg, _) => 11,
        ExprKind::Int(n) if *n < 0 => 11,
        _ => PREC_ATOM,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, need: u8) -> fmt::Result {
    if expr_prec(e) < need {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ExprKind::Bool(true) => write!(f, "TRUE"),
            ExprKind::Bool(false) => write!(f, "FALSE"),
            ExprKind::Int(n) => write!(f, "{n}"),
            ExprKind::Ident { name, pre } => {
                if *pre {
                    write!(f, "{name}$0")
                } else {
                    write!(f, "{name}")
                }
            }
            ExprKind::Unary(UnOp::Not, e) => {
                write!(f, "not ")?;
                write_child(f, e, PREC_NOT)
            }
            ExprKind::Unary(UnOp::Neg, e) => {
                write!(f, "-")?;
                write_child(f, e, PREC_ATOM)
            }
            ExprKind::Binary(op, a, b) => {
                let p = op.prec();
                let (lp, rp) = match p {
                    1 => (p + 1, p),
                    _ => (p, p + 1),
                };
                // non-associative levels need parentheses on both sides
                let lp = if p == 5 { p + 1 } else { lp };
                write_child(f, a, lp)?;
                write!(f, " {} ", op.text())?;
                write_child(f, b, rp)
            }
            ExprKind::SetLit(items) => {
                write!(f, "{{")?;
                for (i, e) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, "}}")
            }
            ExprKind::Call(b, args) => {
                write!(f, "{}(", b.name())?;
                for (i, e) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, ")")
            }
            ExprKind::Apply(func, arg) => {
                write_child(f, func, PREC_ATOM)?;
                write!(f, "({arg})")
            }
            ExprKind::Quant(q, vars, body) => {
                let kw = match q {
                    Quantifier::Forall => "forall",
                    Quantifier::Exists => "exists",
                };
                let names: Vec<&str> = vars.iter().map(|v| v.name.as_str()).collect();
                write!(f, "{kw} {} . {body}", names.join(", "))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> Expr {
        parse_expr_str(s).unwrap_or_else(|e| panic!("{s}: {e}"))
    }

    #[test]
    fn precedence() {
        assert_eq!(p("a & b or c").to_string(), "a & b or c");
        assert_eq!(p("a & (b or c)").to_string(), "a & (b or c)");
        assert_eq!(p("x + 1 * 2 = 3"), p("(x + (1 * 2)) = 3"));
        assert_eq!(p("a => b => c"), p("a => (b => c)"));
        assert_eq!(p("not a & b"), p("(not a) & b"));
        assert_eq!(p("a |-> 1 : f"), p("(a |-> 1) : f"));
        assert_eq!(p("0..n - 1"), p("0..(n - 1)"));
    }

    #[test]
    fn chained_comparison_rejected() {
        assert!(parse_expr_str("a < b < c").is_err());
    }

    #[test]
    fn quantifier_ranges_are_inferred() {
        let e = p("forall a1, a2 . a1 : dom(ls) & a2 : dom(ls) & a1 /= a2 => DIST(ls(a1) |-> ls(a2)) >= MIN");
        let ExprKind::Quant(Quantifier::Forall, vars, _) = &e.kind else {
            panic!()
        };
        assert_eq!(vars.len(), 2);
        assert_eq!(vars[0].range.as_ref().unwrap().to_string(), "dom(ls)");
        assert_eq!(vars[1].range.as_ref().unwrap().to_string(), "dom(ls)");

        let e = p("exists x . x : s & x /: s$0");
        let ExprKind::Quant(_, vars, _) = &e.kind else { panic!() };
        assert_eq!(vars[0].range.as_ref().unwrap().to_string(), "s");

        let e = p("forall x . x > 0");
        let ExprKind::Quant(_, vars, _) = &e.kind else { panic!() };
        assert!(vars[0].range.is_none());
    }

    #[test]
    fn free_names_split_pre_state() {
        let (plain, pre) = p("exists x . x : s & x /: s$0 & y = 1").free_names();
        assert_eq!(plain.into_iter().collect::<Vec<_>>(), vec!["s", "y"]);
        assert_eq!(pre.into_iter().collect::<Vec<_>>(), vec!["s"]);
    }

    #[test]
    fn negative_literals_fold() {
        assert_eq!(p("-3").kind, ExprKind::Int(-3));
        assert_eq!(p("x - -3").to_string(), "x - -3");
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0i64..5).prop_map(Expr::int),
            prop_oneof![Just("a"), Just("b"), Just("s")].prop_map(Expr::ident),
            any::<bool>().prop_map(Expr::bool),
        ];
        leaf.prop_recursive(4, 24, 3, |inner| {
            let ops = prop_oneof![
                Just(BinOp::And),
                Just(BinOp::Or),
                Just(BinOp::Implies),
                Just(BinOp::Eq),
                Just(BinOp::Lt),
                Just(BinOp::In),
                Just(BinOp::Union),
                Just(BinOp::Maplet),
                Just(BinOp::Add),
                Just(BinOp::Sub),
                Just(BinOp::Mul),
                Just(BinOp::Range),
            ];
            prop_oneof![
                (ops, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Expr::binary(op, a, b)),
                inner
                    .clone()
                    .prop_map(|e| Expr::new(ExprKind::Unary(UnOp::Not, Box::new(e)), Span::default())),
                prop::collection::vec(inner.clone(), 0..3)
                    .prop_map(|v| Expr::new(ExprKind::SetLit(v), Span::default())),
                inner.prop_map(|e| Expr::new(ExprKind::Call(Builtin::Card, vec![e]), Span::default())),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let text = e.to_string();
            let back = parse_expr_str(&text).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
            prop_assert_eq!(back, e, "{}", text);
        }
    }
}
