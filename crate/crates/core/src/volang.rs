//! Requirements and validation obligations.
//!
//! A `.vo` file holds declarations `REQ/Machine: expr`. The obligation
//! expression joins validation tasks with `;` (loosest), `or` and `&`
//! (tightest); parentheses override. A task is one of
//!
//! ```text
//! [label :=] LTL(formula) | formula        -- temporal property
//!            INV(pred) | forall ...        -- all reachable states
//!            EXISTS(pred)                  -- some reachable state
//!            TRACE(e1; e2(p := v) | pred)  -- scenario and final predicate
//! ```
//!
//! optionally followed by an explicit scope `@[Domain, ...]`.
//! A bare temporal formula may use `=>`, `<=>` and `U` at its top level; `&`
//! and `or` there belong to the obligation, so conjunctions inside a bare
//! formula need parentheses or the `LTL(...)` form.

use crate::diag::{Diagnostic, ParseError, Span};
use crate::expr::{parse_expr, Expr, ExprKind};
use crate::lex::{tokenize, Cursor, Sym, Tok};
use crate::specml::{MachineSpec, Model, Ty, TyEnv, TypeErrorKind};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Requirement {
    pub id: String,
    pub text: String,
    pub line: u32,
}

/// Parses a `.req` file: one `ID: text` per line, `#` comments.
pub fn parse_requirements(src: &str) -> Result<Vec<Requirement>, Vec<Diagnostic>> {
    let mut out: Vec<Requirement> = Vec::new();
    let mut errors = Vec::new();
    for (n, raw) in src.lines().enumerate() {
        let line = (n + 1) as u32;
        let text = raw.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let span = Some(Span::new(line, 1));
        let Some((id, body)) = text.split_once(':') else {
            errors.push(Diagnostic::error("E-SYNTAX-001", "expected `ID: text`", span));
            continue;
        };
        let id = id.trim();
        let valid = id.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
            && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !valid {
            errors.push(Diagnostic::error("E-SYNTAX-001", format!("`{id}` is not a requirement id"), span));
            continue;
        }
        if out.iter().any(|r| r.id == id) {
            errors.push(Diagnostic::error("E-VO-001", format!("requirement `{id}` is declared twice"), span));
            continue;
        }
        out.push(Requirement {
            id: id.to_string(),
            text: body.trim().to_string(),
            line,
        });
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct VoId {
    pub requirement: String,
    pub model: String,
}

impl VoId {
    pub fn new(requirement: &str, model: &str) -> Self {
        VoId {
            requirement: requirement.to_string(),
            model: model.to_string(),
        }
    }
}

impl fmt::Display for VoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.requirement, self.model)
    }
}

impl FromStr for VoId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (r, m) = s.split_once('/').ok_or_else(|| format!("`{s}` is not of the form REQ/Machine"))?;
        if r.is_empty() || m.is_empty() || m.contains('/') {
            return Err(format!("`{s}` is not of the form REQ/Machine"));
        }
        Ok(VoId::new(r, m))
    }
}

impl From<VoId> for String {
    fn from(v: VoId) -> String {
        v.to_string()
    }
}

impl TryFrom<String> for VoId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Ltl {
    /// `{p}`: a state predicate on the current state.
    State(Expr),
    /// `BA(p)`: a predicate on the step from the current to the next state.
    Ba(Expr),
    Not(Box<Ltl>),
    And(Box<Ltl>, Box<Ltl>),
    Or(Box<Ltl>, Box<Ltl>),
    Implies(Box<Ltl>, Box<Ltl>),
    Iff(Box<Ltl>, Box<Ltl>),
    Next(Box<Ltl>),
    Globally(Box<Ltl>),
    Finally(Box<Ltl>),
    Until(Box<Ltl>, Box<Ltl>),
}

impl Ltl {
    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Ltl) -> Ltl {
        Ltl::Not(Box::new(a))
    }

    pub fn and(a: Ltl, b: Ltl) -> Ltl {
        Ltl::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Ltl, b: Ltl) -> Ltl {
        Ltl::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Ltl, b: Ltl) -> Ltl {
        Ltl::Implies(Box::new(a), Box::new(b))
    }

    pub fn until(a: Ltl, b: Ltl) -> Ltl {
        Ltl::Until(Box::new(a), Box::new(b))
    }

    pub fn next(a: Ltl) -> Ltl {
        Ltl::Next(Box::new(a))
    }

    pub fn globally(a: Ltl) -> Ltl {
        Ltl::Globally(Box::new(a))
    }

    pub fn finally(a: Ltl) -> Ltl {
        Ltl::Finally(Box::new(a))
    }

    /// Atoms in left-to-right order, duplicates included.
    pub fn atoms(&self) -> Vec<&Ltl> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a Ltl>) {
        match self {
            Ltl::State(_) | Ltl::Ba(_) => out.push(self),
            Ltl::Not(a) | Ltl::Next(a) | Ltl::Globally(a) | Ltl::Finally(a) => a.collect_atoms(out),
            Ltl::And(a, b) | Ltl::Or(a, b) | Ltl::Implies(a, b) | Ltl::Iff(a, b) | Ltl::Until(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Ltl::State(_) | Ltl::Ba(_) => 0,
            Ltl::Not(a) | Ltl::Next(a) | Ltl::Globally(a) | Ltl::Finally(a) => 1 + a.depth(),
            Ltl::And(a, b) | Ltl::Or(a, b) | Ltl::Implies(a, b) | Ltl::Iff(a, b) | Ltl::Until(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    fn prec(&self) -> u8 {
        match self {
            Ltl::Implies(..) | Ltl::Iff(..) => 1,
            Ltl::Or(..) => 2,
            Ltl::And(..) => 3,
            Ltl::Until(..) => 4,
            Ltl::Not(_) | Ltl::Next(_) | Ltl::Globally(_) | Ltl::Finally(_) => 5,
            Ltl::State(_) | Ltl::Ba(_) => 6,
        }
    }

    fn temporal_letter(&self) -> Option<(char, &Ltl)> {
        match self {
            Ltl::Next(a) => Some(('X', a)),
            Ltl::Globally(a) => Some(('G', a)),
            Ltl::Finally(a) => Some(('F', a)),
            _ => None,
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Ltl, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for Ltl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.prec();
        match self {
            Ltl::State(e) => write!(f, "{{{e}}}"),
            Ltl::Ba(e) => write!(f, "BA({e})"),
            Ltl::Not(a) => {
                write!(f, "not ")?;
                write_child(f, a, a.prec() < 5)
            }
            Ltl::Next(_) | Ltl::Globally(_) | Ltl::Finally(_) => {
                let mut node = self;
                while let Some((letter, inner)) = node.temporal_letter() {
                    write!(f, "{letter}")?;
                    node = inner;
                }
                write!(f, "({node})")
            }
            Ltl::And(a, b) | Ltl::Or(a, b) | Ltl::Implies(a, b) | Ltl::Iff(a, b) | Ltl::Until(a, b) => {
                let op = match self {
                    Ltl::And(..) => "&",
                    Ltl::Or(..) => "or",
                    Ltl::Implies(..) => "=>",
                    Ltl::Iff(..) => "<=>",
                    _ => "U",
                };
                // `=>`, `<=>` and `U` associate to the right, `&` and `or` to the left
                let right_assoc = matches!(p, 1 | 4);
                let (lp, rp) = if right_assoc {
                    (a.prec() <= p, b.prec() < p)
                } else {
                    (a.prec() < p, b.prec() <= p)
                };
                write_child(f, a, lp)?;
                write!(f, " {op} ")?;
                write_child(f, b, rp)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StepArg {
    /// Parameter name for `p := v`; positional otherwise.
    pub name: Option<String>,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScenarioStep {
    pub event: String,
    pub args: Vec<StepArg>,
    pub span: Span,
}

impl fmt::Display for ScenarioStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.event)?;
        if !self.args.is_empty() {
            let args: Vec<String> = self
                .args
                .iter()
                .map(|a| match &a.name {
                    Some(n) => format!("{n} := {}", a.value),
                    None => a.value.to_string(),
                })
                .collect();
            write!(f, "({})", args.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Scenario {
    pub steps: Vec<ScenarioStep>,
    pub final_pred: Option<Expr>,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let steps: Vec<String> = self.steps.iter().map(|s| s.to_string()).collect();
        write!(f, "{}", steps.join("; "))?;
        if let Some(p) = &self.final_pred {
            if !steps.is_empty() {
                write!(f, " ")?;
            }
            write!(f, "| {p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Ltl(Ltl),
    Inv(Expr),
    Trace(Scenario),
    Exists(Expr),
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Ltl(_) => "LTL",
            TaskKind::Inv(_) => "INV",
            TaskKind::Trace(_) => "TRACE",
            TaskKind::Exists(_) => "EXISTS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Task {
    pub label: Option<String>,
    pub kind: TaskKind,
    pub scope: Option<Vec<String>>,
    pub span: Span,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = &self.label {
            write!(f, "{l} := ")?;
        }
        match &self.kind {
            TaskKind::Ltl(phi) => {
                let text = phi.to_string();
                if !fits_bare(phi) || text.starts_with('(') {
                    write!(f, "LTL({text})")?
                } else {
                    write!(f, "{text}")?
                }
            }
            TaskKind::Inv(p) => write!(f, "INV({p})")?,
            TaskKind::Exists(p) => write!(f, "EXISTS({p})")?,
            TaskKind::Trace(s) => write!(f, "TRACE({s})")?,
        }
        if let Some(scope) = &self.scope {
            write!(f, " @[{}]", scope.join(", "))?;
        }
        Ok(())
    }
}

/// Whether the formula reparses unchanged without the `LTL(...)` wrapper.
fn fits_bare(phi: &Ltl) -> bool {
    match phi {
        Ltl::Implies(a, b) | Ltl::Iff(a, b) => a.prec() >= 4 && fits_bare(b),
        Ltl::And(..) | Ltl::Or(..) => false,
        _ => true,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum VoExpr {
    Task(Task),
    And(Box<VoExpr>, Box<VoExpr>),
    Or(Box<VoExpr>, Box<VoExpr>),
    Seq(Box<VoExpr>, Box<VoExpr>),
}

impl VoExpr {
    pub fn and(a: VoExpr, b: VoExpr) -> VoExpr {
        VoExpr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: VoExpr, b: VoExpr) -> VoExpr {
        VoExpr::Or(Box::new(a), Box::new(b))
    }

    pub fn seq(a: VoExpr, b: VoExpr) -> VoExpr {
        VoExpr::Seq(Box::new(a), Box::new(b))
    }

    /// Leaves in evaluation order.
    pub fn tasks(&self) -> Vec<&Task> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a Task>) {
        match self {
            VoExpr::Task(t) => out.push(t),
            VoExpr::And(a, b) | VoExpr::Or(a, b) | VoExpr::Seq(a, b) => {
                a.collect(out);
                b.collect(out);
            }
        }
    }

    fn prec(&self) -> u8 {
        match self {
            VoExpr::Seq(..) => 1,
            VoExpr::Or(..) => 2,
            VoExpr::And(..) => 3,
            VoExpr::Task(_) => 4,
        }
    }
}

impl fmt::Display for VoExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b, op) = match self {
            VoExpr::Task(t) => return write!(f, "{t}"),
            VoExpr::And(a, b) => (a, b, " & "),
            VoExpr::Or(a, b) => (a, b, " or "),
            VoExpr::Seq(a, b) => (a, b, " ; "),
        };
        let p = self.prec();
        if a.prec() < p {
            write!(f, "({a})")?;
        } else {
            write!(f, "{a}")?;
        }
        f.write_str(op)?;
        if b.prec() <= p {
            write!(f, "({b})")
        } else {
            write!(f, "{b}")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Vo {
    pub id: VoId,
    pub expr: VoExpr,
    pub span: Span,
}

impl fmt::Display for Vo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.id, self.expr)
    }
}

/// Parses a single declaration.
pub fn parse_vo(text: &str) -> Result<Vo, ParseError> {
    let mut vos = parse_vo_file(text)?;
    match vos.len() {
        1 => Ok(vos.remove(0)),
        0 => Err(ParseError::new(Span::new(1, 1), "expected a VO declaration")),
        _ => Err(ParseError::new(vos[1].span, "expected a single VO declaration")),
    }
}

/// Parses every declaration of a `.vo` file.
pub fn parse_vo_file(src: &str) -> Result<Vec<Vo>, ParseError> {
    let mut cur = Cursor::new(tokenize(src)?);
    let mut out = Vec::new();
    while !cur.at_eof() {
        let span = cur.span();
        let (requirement, _) = cur.expect_ident()?;
        cur.expect_sym(Sym::Slash)?;
        let (model, _) = cur.expect_ident()?;
        cur.expect_sym(Sym::Colon)?;
        let expr = vo_expr(&mut cur, 1)?;
        out.push(Vo {
            id: VoId { requirement, model },
            expr,
            span,
        });
    }
    Ok(out)
}

fn vo_op(cur: &Cursor) -> Option<u8> {
    match cur.peek() {
        Tok::Sym(Sym::Semi) => Some(1),
        Tok::Sym(Sym::Or) => Some(2),
        Tok::Sym(Sym::And) => Some(3),
        _ => None,
    }
}

fn vo_expr(cur: &mut Cursor, min: u8) -> Result<VoExpr, ParseError> {
    let mut lhs = vo_leaf(cur)?;
    while let Some(p) = vo_op(cur) {
        if p < min {
            break;
        }
        cur.bump();
        let rhs = vo_expr(cur, p + 1)?;
        lhs = match p {
            1 => VoExpr::seq(lhs, rhs),
            2 => VoExpr::or(lhs, rhs),
            _ => VoExpr::and(lhs, rhs),
        };
    }
    Ok(lhs)
}

fn vo_leaf(cur: &mut Cursor) -> Result<VoExpr, ParseError> {
    if cur.is_sym(Sym::LParen) {
        let start = cur.position();
        cur.bump();
        let attempt = vo_expr(cur, 1).and_then(|e| cur.expect_sym(Sym::RParen).map(|_| e));
        match attempt {
            // a parenthesized bare formula continued by a temporal operator
            Ok(e) if !at_ltl_binary(cur) => return Ok(e),
            _ => cur.reset(start),
        }
    }
    let span = cur.span();
    let label = match (cur.peek(), cur.peek_at(1)) {
        (Tok::Ident(l), Tok::Sym(Sym::Assign)) => {
            let l = l.clone();
            cur.bump();
            cur.bump();
            Some(l)
        }
        _ => None,
    };
    let kind = task_kind(cur)?;
    let scope = if cur.eat_sym(Sym::At) {
        cur.expect_sym(Sym::LBracket)?;
        let mut names = vec![cur.expect_ident()?.0];
        while cur.eat_sym(Sym::Comma) {
            names.push(cur.expect_ident()?.0);
        }
        cur.expect_sym(Sym::RBracket)?;
        Some(names)
    } else {
        None
    };
    Ok(VoExpr::Task(Task {
        label,
        kind,
        scope,
        span,
    }))
}

fn at_ltl_binary(cur: &Cursor) -> bool {
    matches!(cur.peek(), Tok::Sym(Sym::Implies | Sym::Iff)) || matches!(cur.peek(), Tok::Ident(w) if w == "U")
}

fn task_kind(cur: &mut Cursor) -> Result<TaskKind, ParseError> {
    if let (Tok::Ident(word), Tok::Sym(Sym::LParen)) = (cur.peek().clone(), cur.peek_at(1)) {
        match word.as_str() {
            "LTL" => {
                cur.bump();
                cur.bump();
                let phi = ltl(cur, 1)?;
                cur.expect_sym(Sym::RParen)?;
                return Ok(TaskKind::Ltl(phi));
            }
            "INV" | "EXISTS" => {
                cur.bump();
                cur.bump();
                let p = braced_pred(cur)?;
                cur.expect_sym(Sym::RParen)?;
                return Ok(if word == "INV" { TaskKind::Inv(p) } else { TaskKind::Exists(p) });
            }
            "TRACE" => {
                cur.bump();
                cur.bump();
                let s = scenario(cur)?;
                cur.expect_sym(Sym::RParen)?;
                return Ok(TaskKind::Trace(s));
            }
            _ => {}
        }
    }
    if cur.is_sym(Sym::Forall) || cur.is_sym(Sym::Exists) {
        // a plain first-order formula is an invariant over the reachable states
        return Ok(TaskKind::Inv(parse_expr(cur)?));
    }
    Ok(TaskKind::Ltl(bare_ltl(cur)?))
}

/// `{p}` or `p`, followed by `)` which is left for the caller.
fn braced_pred(cur: &mut Cursor) -> Result<Expr, ParseError> {
    if cur.is_sym(Sym::LBrace) {
        let start = cur.position();
        cur.bump();
        if let Ok(e) = parse_expr(cur) {
            if cur.eat_sym(Sym::RBrace) && cur.is_sym(Sym::RParen) {
                return Ok(e);
            }
        }
        cur.reset(start);
    }
    parse_expr(cur)
}

fn scenario(cur: &mut Cursor) -> Result<Scenario, ParseError> {
    let mut steps = Vec::new();
    if !cur.is_sym(Sym::Bar) && !cur.is_sym(Sym::RParen) {
        loop {
            let (event, span) = cur.expect_ident()?;
            let mut args = Vec::new();
            if cur.eat_sym(Sym::LParen) {
                loop {
                    let name = match (cur.peek(), cur.peek_at(1)) {
                        (Tok::Ident(n), Tok::Sym(Sym::Assign)) => {
                            let n = n.clone();
                            cur.bump();
                            cur.bump();
                            Some(n)
                        }
                        _ => None,
                    };
                    args.push(StepArg {
                        name,
                        value: parse_expr(cur)?,
                    });
                    if !cur.eat_sym(Sym::Comma) {
                        break;
                    }
                }
                cur.expect_sym(Sym::RParen)?;
            }
            steps.push(ScenarioStep { event, args, span });
            if !cur.eat_sym(Sym::Semi) {
                break;
            }
        }
    }
    let final_pred = if cur.eat_sym(Sym::Bar) {
        Some(parse_expr(cur)?)
    } else {
        None
    };
    Ok(Scenario { steps, final_pred })
}

/// Parses a formula at obligation level: `&` and `or` end it.
fn bare_ltl(cur: &mut Cursor) -> Result<Ltl, ParseError> {
    let lhs = ltl(cur, 4)?;
    if cur.eat_sym(Sym::Implies) {
        return Ok(Ltl::implies(lhs, bare_ltl(cur)?));
    }
    if cur.eat_sym(Sym::Iff) {
        return Ok(Ltl::Iff(Box::new(lhs), Box::new(bare_ltl(cur)?)));
    }
    Ok(lhs)
}

/// Parses a standalone temporal formula.
pub fn parse_ltl(src: &str) -> Result<Ltl, ParseError> {
    let mut cur = Cursor::new(tokenize(src)?);
    let phi = ltl(&mut cur, 1)?;
    if !cur.at_eof() {
        return Err(cur.unexpected("end of formula"));
    }
    Ok(phi)
}

fn ltl_op(cur: &Cursor) -> Option<u8> {
    match cur.peek() {
        Tok::Sym(Sym::Implies | Sym::Iff) => Some(1),
        Tok::Sym(Sym::Or) => Some(2),
        Tok::Sym(Sym::And) => Some(3),
        Tok::Ident(w) if w == "U" => Some(4),
        _ => None,
    }
}

fn ltl(cur: &mut Cursor, min: u8) -> Result<Ltl, ParseError> {
    let mut lhs = ltl_unary(cur)?;
    while let Some(p) = ltl_op(cur) {
        if p < min {
            break;
        }
        let tok = cur.bump().tok;
        lhs = match (p, tok) {
            (1, Tok::Sym(Sym::Implies)) => Ltl::implies(lhs, ltl(cur, 1)?),
            (1, _) => Ltl::Iff(Box::new(lhs), Box::new(ltl(cur, 1)?)),
            (2, _) => Ltl::or(lhs, ltl(cur, 3)?),
            (3, _) => Ltl::and(lhs, ltl(cur, 4)?),
            _ => Ltl::until(lhs, ltl(cur, 4)?),
        };
    }
    Ok(lhs)
}

fn temporal_prefix(word: &str) -> bool {
    !word.is_empty() && word.chars().all(|c| matches!(c, 'G' | 'F' | 'X'))
}

fn ltl_unary(cur: &mut Cursor) -> Result<Ltl, ParseError> {
    if cur.eat_sym(Sym::Not) {
        return Ok(Ltl::not(ltl_unary(cur)?));
    }
    let span = cur.span();
    match cur.peek().clone() {
        Tok::Ident(w) if w == "BA" => {
            cur.bump();
            cur.expect_sym(Sym::LParen)?;
            let e = braced_pred(cur)?;
            cur.expect_sym(Sym::RParen)?;
            Ok(Ltl::Ba(e))
        }
        Tok::Ident(w) if temporal_prefix(&w) => {
            cur.bump();
            let mut phi = ltl_unary(cur)?;
            for c in w.chars().rev() {
                phi = match c {
                    'G' => Ltl::globally(phi),
                    'F' => Ltl::finally(phi),
                    _ => Ltl::next(phi),
                };
            }
            Ok(phi)
        }
        Tok::Sym(Sym::LBrace) => {
            cur.bump();
            let e = parse_expr(cur)?;
            cur.expect_sym(Sym::RBrace)?;
            Ok(Ltl::State(e))
        }
        Tok::Sym(Sym::LParen) => {
            cur.bump();
            let phi = ltl(cur, 1)?;
            cur.expect_sym(Sym::RParen)?;
            Ok(phi)
        }
        Tok::Ident(w) if matches!(w.as_str(), "true" | "TRUE" | "false" | "FALSE") => {
            cur.bump();
            Ok(Ltl::State(Expr::new(ExprKind::Bool(w.eq_ignore_ascii_case("true")), span)))
        }
        Tok::Ident(w) => Err(ParseError::new(span, format!("unknown temporal operator `{w}`"))),
        _ => Err(cur.unexpected("a temporal formula")),
    }
}

/// The result of binding an obligation to its target machine.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Resolution {
    pub diagnostics: Vec<Diagnostic>,
    /// Scope of each task, in [`VoExpr::tasks`] order.
    pub task_scopes: Vec<BTreeSet<String>>,
}

impl Resolution {
    pub fn scope(&self) -> BTreeSet<String> {
        self.task_scopes.iter().flatten().cloned().collect()
    }
}

/// Binds every symbol of `vo` against `model`. `chain` is the target machine
/// followed by the machines it refines, most concrete first; `domains` are
/// the frame domains an explicit scope may name.
pub fn resolve(vo: &Vo, model: &Model, chain: &[&MachineSpec], domains: &BTreeSet<String>) -> Resolution {
    let mut r = Resolution::default();
    for task in vo.expr.tasks() {
        let mut used = BTreeSet::new();
        let diags = &mut r.diagnostics;
        match &task.kind {
            TaskKind::Ltl(phi) => {
                for atom in phi.atoms() {
                    match atom {
                        Ltl::State(e) => check_pred(model.env(), e, false, &mut used, diags),
                        Ltl::Ba(e) => check_pred(model.env(), e, true, &mut used, diags),
                        _ => unreachable!("atoms() yields atoms only"),
                    }
                }
            }
            TaskKind::Inv(e) | TaskKind::Exists(e) => check_pred(model.env(), e, false, &mut used, diags),
            TaskKind::Trace(s) => {
                for step in &s.steps {
                    check_step(model, step, &mut used, diags);
                }
                if let Some(p) = &s.final_pred {
                    check_pred(model.env(), p, false, &mut used, diags);
                }
            }
        }
        let scope = match &task.scope {
            Some(names) => {
                for n in names.iter().filter(|n| !domains.contains(*n)) {
                    r.diagnostics.push(Diagnostic::error(
                        "E-VO-008",
                        format!("scope names unknown domain `{n}`"),
                        Some(task.span),
                    ));
                }
                names.iter().cloned().collect()
            }
            None => infer_scope(&used, chain),
        };
        if scope.is_empty() {
            r.diagnostics.push(Diagnostic::error(
                "E-VO-008",
                format!("cannot infer a scope: machine `{}` implements no domain", model.name()),
                Some(task.span),
            ));
        }
        r.task_scopes.push(scope);
    }
    r
}

/// Union of the domains implemented by the machine introducing each variable.
fn infer_scope(vars: &BTreeSet<String>, chain: &[&MachineSpec]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for v in vars {
        if let Some(origin) = chain.iter().rev().find(|m| m.declares(v)) {
            out.extend(origin.implements.iter().cloned());
        }
    }
    if out.is_empty() {
        if let Some(target) = chain.first() {
            out.extend(target.implements.iter().cloned());
        }
    }
    out
}

fn record_vars(env: &TyEnv, e: &Expr, used: &mut BTreeSet<String>) {
    let (plain, pre) = e.free_names();
    used.extend(plain.into_iter().chain(pre).filter(|n| env.is_var(n)));
}

fn check_pred(env: &TyEnv, e: &Expr, allow_pre: bool, used: &mut BTreeSet<String>, out: &mut Vec<Diagnostic>) {
    record_vars(env, e, used);
    let mut env = env.clone();
    env.allow_pre = allow_pre;
    if let Err(err) = env.expect_bool(e) {
        out.push(vo_diagnostic(err));
    }
}

fn vo_diagnostic(err: crate::specml::TypeError) -> Diagnostic {
    let code = match err.kind {
        TypeErrorKind::UnknownName(_) => "E-VO-004",
        TypeErrorKind::PreState(_) => "E-VO-006",
        TypeErrorKind::Mismatch | TypeErrorKind::UnboundedQuantifier(_) => "E-VO-005",
    };
    Diagnostic::error(code, err.message, Some(err.span))
}

fn check_step(model: &Model, step: &ScenarioStep, used: &mut BTreeSet<String>, out: &mut Vec<Diagnostic>) {
    let Some(idx) = model.event_index(&step.event) else {
        out.push(Diagnostic::error(
            "E-VO-003",
            format!("machine `{}` has no event `{}`", model.name(), step.event),
            Some(step.span),
        ));
        return;
    };
    let params = model.event_params(idx);
    match bind_args(params.iter().map(|(n, _)| n.as_str()), &step.args) {
        Err(msg) => out.push(Diagnostic::error("E-VO-007", format!("`{}`: {msg}", step.event), Some(step.span))),
        Ok(order) => {
            for (arg, pi) in step.args.iter().zip(order) {
                record_vars(model.env(), &arg.value, used);
                let want = Ty::of_domain(&params[pi].1);
                match model.env().infer(&arg.value) {
                    Err(err) => out.push(vo_diagnostic(err)),
                    Ok(t) if t.unify(&want).is_none() => out.push(Diagnostic::error(
                        "E-VO-005",
                        format!("parameter `{}` of `{}` expects {want}, found {t}", params[pi].0, step.event),
                        Some(arg.value.span),
                    )),
                    Ok(_) => {}
                }
            }
        }
    }
}

/// Maps each argument to the index of the parameter it binds.
pub fn bind_args<'a>(params: impl Iterator<Item = &'a str>, args: &[StepArg]) -> Result<Vec<usize>, String> {
    let params: Vec<&str> = params.collect();
    if args.len() != params.len() {
        return Err(format!("expected {} argument(s), found {}", params.len(), args.len()));
    }
    let mut order = Vec::with_capacity(args.len());
    for (i, a) in args.iter().enumerate() {
        let pi = match &a.name {
            None => i,
            Some(n) => params.iter().position(|p| p == n).ok_or_else(|| format!("no parameter `{n}`"))?,
        };
        if order.contains(&pi) {
            return Err(format!("parameter `{}` bound twice", params[pi]));
        }
        order.push(pi);
    }
    Ok(order)
}
