use super::model::{Model, ModelOptions};
use super::value::ValueDomain;
use super::{ContextSpec, MachineSpec};
use crate::diag::{Diagnostic, Span};
use crate::expr::{BinOp, Builtin, Expr, ExprKind, UnOp};
use std::collections::{HashMap, HashSet};
use std::fmt;

/// Static type of an expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Ty {
    Bool,
    Int,
    /// Element of the named carrier set.
    Enum(String),
    Set(Box<Ty>),
    Pair(Box<Ty>, Box<Ty>),
    /// Unconstrained; the element type of `{}`.
    Any,
}

impl Ty {
    pub fn set(t: Ty) -> Ty {
        Ty::Set(Box::new(t))
    }

    pub fn pair(a: Ty, b: Ty) -> Ty {
        Ty::Pair(Box::new(a), Box::new(b))
    }

    pub fn of_domain(d: &ValueDomain) -> Ty {
        match d {
            ValueDomain::Bool => Ty::Bool,
            ValueDomain::Range(..) => Ty::Int,
            ValueDomain::Enum { name, .. } => Ty::Enum(name.clone()),
            ValueDomain::SetOf(inner) => Ty::set(Ty::of_domain(inner)),
            ValueDomain::Map { dom, ran, .. } => Ty::set(Ty::pair(Ty::of_domain(dom), Ty::of_domain(ran))),
        }
    }

    /// The most specific type compatible with both, if any.
    pub fn unify(&self, other: &Ty) -> Option<Ty> {
        match (self, other) {
            (Ty::Any, t) | (t, Ty::Any) => Some(t.clone()),
            (Ty::Set(a), Ty::Set(b)) => Some(Ty::set(a.unify(b)?)),
            (Ty::Pair(a1, b1), Ty::Pair(a2, b2)) => Some(Ty::pair(a1.unify(a2)?, b1.unify(b2)?)),
            (a, b) if a == b => Some(a.clone()),
            _ => None,
        }
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Bool => write!(f, "BOOL"),
            Ty::Int => write!(f, "INT"),
            Ty::Enum(n) => write!(f, "{n}"),
            Ty::Set(t) => write!(f, "set of {t}"),
            Ty::Pair(a, b) => write!(f, "({a} * {b})"),
            Ty::Any => write!(f, "?"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeErrorKind {
    UnknownName(String),
    Mismatch,
    UnboundedQuantifier(String),
    PreState(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct TypeError {
    pub kind: TypeErrorKind,
    pub message: String,
    pub span: Span,
}

impl TypeError {
    fn new(kind: TypeErrorKind, message: impl Into<String>, span: Span) -> Self {
        TypeError {
            kind,
            message: message.into(),
            span,
        }
    }

    fn mismatch(message: impl Into<String>, span: Span) -> Self {
        TypeError::new(TypeErrorKind::Mismatch, message, span)
    }

    pub fn code(&self) -> &'static str {
        match self.kind {
            TypeErrorKind::UnknownName(_) => "E-TYPE-001",
            TypeErrorKind::Mismatch => "E-TYPE-002",
            TypeErrorKind::UnboundedQuantifier(_) => "E-TYPE-008",
            TypeErrorKind::PreState(_) => "E-TYPE-012",
        }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        Diagnostic::error(self.code(), self.message.clone(), Some(self.span))
    }
}

/// Types of the names visible to an expression.
#[derive(Debug, Clone, Default)]
pub struct TyEnv {
    names: HashMap<String, Ty>,
    vars: HashSet<String>,
    /// Whether `v$0` is accepted for state variables.
    pub allow_pre: bool,
}

impl TyEnv {
    pub fn bind(&mut self, name: &str, ty: Ty) {
        self.names.insert(name.to_string(), ty);
    }

    pub fn bind_var(&mut self, name: &str, ty: Ty) {
        self.bind(name, ty);
        self.vars.insert(name.to_string());
    }

    pub fn lookup(&self, name: &str) -> Option<&Ty> {
        self.names.get(name)
    }

    pub fn is_var(&self, name: &str) -> bool {
        self.vars.contains(name)
    }

    pub fn infer(&self, e: &Expr) -> Result<Ty, TypeError> {
        self.infer_in(e, &mut Vec::new())
    }

    pub fn expect_bool(&self, e: &Expr) -> Result<(), TypeError> {
        match self.infer(e)? {
            Ty::Bool => Ok(()),
            t => Err(TypeError::mismatch(format!("expected a predicate, found {t}"), e.span)),
        }
    }

    fn infer_in(&self, e: &Expr, locals: &mut Vec<(String, Ty)>) -> Result<Ty, TypeError> {
        let want = |t: Ty, expected: &Ty, what: &str, span: Span| -> Result<Ty, TypeError> {
            t.unify(expected)
                .ok_or_else(|| TypeError::mismatch(format!("{what}: expected {expected}, found {t}"), span))
        };
        match &e.kind {
            ExprKind::Bool(_) => Ok(Ty::Bool),
            ExprKind::Int(_) => Ok(Ty::Int),
            ExprKind::Ident { name, pre } => {
                if let Some((_, t)) = locals.iter().rev().find(|(n, _)| n == name) {
                    if *pre {
                        return Err(TypeError::new(
                            TypeErrorKind::PreState(name.clone()),
                            format!("`{name}$0`: only state variables have a pre-state"),
                            e.span,
                        ));
                    }
                    return Ok(t.clone());
                }
                let t = self.names.get(name).ok_or_else(|| {
                    TypeError::new(TypeErrorKind::UnknownName(name.clone()), format!("unknown name `{name}`"), e.span)
                })?;
                if *pre && !(self.allow_pre && self.vars.contains(name)) {
                    return Err(TypeError::new(
                        TypeErrorKind::PreState(name.clone()),
                        format!("`{name}$0` is not allowed here"),
                        e.span,
                    ));
                }
                Ok(t.clone())
            }
            ExprKind::Unary(UnOp::Not, a) => want(self.infer_in(a, locals)?, &Ty::Bool, "operand of `not`", a.span),
            ExprKind::Unary(UnOp::Neg, a) => want(self.infer_in(a, locals)?, &Ty::Int, "operand of `-`", a.span),
            ExprKind::Binary(op, a, b) => {
                let ta = self.infer_in(a, locals)?;
                let tb = self.infer_in(b, locals)?;
                let what = format!("operand of `{}`", op.text());
                use BinOp::*;
                match op {
                    Implies | Iff | Or | And => {
                        want(ta, &Ty::Bool, &what, a.span)?;
                        want(tb, &Ty::Bool, &what, b.span)?;
                        Ok(Ty::Bool)
                    }
                    Eq | Neq => {
                        want(tb, &ta, &what, b.span)?;
                        Ok(Ty::Bool)
                    }
                    Lt | Le | Gt | Ge => {
                        want(ta, &Ty::Int, &what, a.span)?;
                        want(tb, &Ty::Int, &what, b.span)?;
                        Ok(Ty::Bool)
                    }
                    In | NotIn => {
                        let Ty::Set(elem) = want(tb, &Ty::set(Ty::Any), &what, b.span)? else { unreachable!() };
                        want(ta, &elem, &what, a.span)?;
                        Ok(Ty::Bool)
                    }
                    Subset | NotSubset => {
                        let ta = want(ta, &Ty::set(Ty::Any), &what, a.span)?;
                        want(tb, &ta, &what, b.span)?;
                        Ok(Ty::Bool)
                    }
                    Maplet => Ok(Ty::pair(ta, tb)),
                    Union | Inter | Diff => {
                        let ta = want(ta, &Ty::set(Ty::Any), &what, a.span)?;
                        want(tb, &ta, &what, b.span)
                    }
                    Override => {
                        let rel = Ty::set(Ty::pair(Ty::Any, Ty::Any));
                        let ta = want(ta, &rel, &what, a.span)?;
                        want(tb, &ta, &what, b.span)
                    }
                    Range => {
                        want(ta, &Ty::Int, &what, a.span)?;
                        want(tb, &Ty::Int, &what, b.span)?;
                        Ok(Ty::set(Ty::Int))
                    }
                    Add | Sub | Mul | Div | Mod => {
                        want(ta, &Ty::Int, &what, a.span)?;
                        want(tb, &Ty::Int, &what, b.span)?;
                        Ok(Ty::Int)
                    }
                }
            }
            ExprKind::SetLit(items) => {
                let mut elem = Ty::Any;
                for item in items {
                    let t = self.infer_in(item, locals)?;
                    elem = want(t, &elem, "set element", item.span)?;
                }
                Ok(Ty::set(elem))
            }
            ExprKind::Call(b, args) => {
                let arity_ok = match b {
                    Builtin::Dist => args.len() == 1 || args.len() == 2,
                    _ => args.len() == 1,
                };
                if !arity_ok {
                    return Err(TypeError::mismatch(
                        format!("`{}` given {} arguments", b.name(), args.len()),
                        e.span,
                    ));
                }
                let tys = args
                    .iter()
                    .map(|a| self.infer_in(a, locals))
                    .collect::<Result<Vec<_>, _>>()?;
                let what = format!("argument of `{}`", b.name());
                match b {
                    Builtin::Card => {
                        want(tys[0].clone(), &Ty::set(Ty::Any), &what, args[0].span)?;
                        Ok(Ty::Int)
                    }
                    Builtin::Dom | Builtin::Ran => {
                        let rel = Ty::set(Ty::pair(Ty::Any, Ty::Any));
                        let Ty::Set(p) = want(tys[0].clone(), &rel, &what, args[0].span)? else { unreachable!() };
                        let Ty::Pair(d, r) = *p else { unreachable!() };
                        Ok(Ty::set(if *b == Builtin::Dom { *d } else { *r }))
                    }
                    Builtin::Dist => {
                        if tys.len() == 1 {
                            want(tys[0].clone(), &Ty::pair(Ty::Int, Ty::Int), &what, args[0].span)?;
                        } else {
                            want(tys[0].clone(), &Ty::Int, &what, args[0].span)?;
                            want(tys[1].clone(), &Ty::Int, &what, args[1].span)?;
                        }
                        Ok(Ty::Int)
                    }
                }
            }
            ExprKind::Apply(f, x) => {
                let tf = self.infer_in(f, locals)?;
                let rel = Ty::set(Ty::pair(Ty::Any, Ty::Any));
                let Ty::Set(p) = want(tf, &rel, "applied expression", f.span)? else { unreachable!() };
                let Ty::Pair(d, r) = *p else { unreachable!() };
                want(self.infer_in(x, locals)?, &d, "function argument", x.span)?;
                Ok(*r)
            }
            ExprKind::Quant(_, vars, body) => {
                let depth = locals.len();
                for v in vars {
                    let Some(range) = &v.range else {
                        locals.truncate(depth);
                        return Err(TypeError::new(
                            TypeErrorKind::UnboundedQuantifier(v.name.clone()),
                            format!("cannot find a range for `{}`; add a `{} : S` conjunct", v.name, v.name),
                            e.span,
                        ));
                    };
                    let tr = self.infer_in(range, locals);
                    let tr = match tr.and_then(|t| want(t, &Ty::set(Ty::Any), "quantifier range", range.span)) {
                        Ok(t) => t,
                        Err(err) => {
                            locals.truncate(depth);
                            return Err(err);
                        }
                    };
                    let Ty::Set(elem) = tr else { unreachable!() };
                    locals.push((v.name.clone(), *elem));
                }
                let tb = self.infer_in(body, locals);
                locals.truncate(depth);
                want(tb?, &Ty::Bool, "quantifier body", body.span)
            }
        }
    }
}

/// Checks a machine against its contexts; empty iff the machine is well formed.
pub fn typecheck(machine: &MachineSpec, contexts: &[ContextSpec], options: &ModelOptions) -> Vec<Diagnostic> {
    match Model::compile(machine, contexts, options) {
        Ok(_) => Vec::new(),
        Err(diags) => diags,
    }
}

/// Every variable of the refined machine must be kept under the same name or
/// named by a `glue` clause. Only presence is checked.
pub fn check_gluing(machine: &MachineSpec, abstract_machine: &MachineSpec) -> Vec<Diagnostic> {
    abstract_machine
        .variables
        .iter()
        .filter(|v| !machine.declares(&v.name) && !machine.gluing.iter().any(|g| g.variable == v.name))
        .map(|v| {
            Diagnostic::error(
                "E-TYPE-010",
                format!(
                    "{} refines {} but gives no gluing predicate for `{}`",
                    machine.name, abstract_machine.name, v.name
                ),
                Some(machine.span),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr_str;

    fn env() -> TyEnv {
        let mut env = TyEnv::default();
        env.bind("E", Ty::set(Ty::Enum("E".into())));
        env.bind("a", Ty::Enum("E".into()));
        env.bind_var("s", Ty::set(Ty::Enum("E".into())));
        env.bind_var("f", Ty::set(Ty::pair(Ty::Enum("E".into()), Ty::Int)));
        env.bind_var("n", Ty::Int);
        env
    }

    fn infer(src: &str) -> Result<Ty, TypeError> {
        env().infer(&parse_expr_str(src).unwrap())
    }

    #[test]
    fn well_typed_expressions() {
        assert_eq!(infer("a : s & n + 1 < 3").unwrap(), Ty::Bool);
        assert_eq!(infer("s \\/ {}").unwrap(), Ty::set(Ty::Enum("E".into())));
        assert_eq!(infer("f(a)").unwrap(), Ty::Int);
        assert_eq!(infer("dom(f)").unwrap(), Ty::set(Ty::Enum("E".into())));
        assert_eq!(infer("f <+ {a |-> 2}").unwrap(), infer("f").unwrap());
        assert_eq!(infer("forall x, y . x : dom(f) & y : dom(f) & x /= y => DIST(f(x) |-> f(y)) >= 3").unwrap(), Ty::Bool);
        assert_eq!(infer("card(0..n)").unwrap(), Ty::Int);
    }

    #[test]
    fn errors_are_classified() {
        assert_eq!(infer("foo = 1").unwrap_err().code(), "E-TYPE-001");
        assert_eq!(infer("a = 1").unwrap_err().code(), "E-TYPE-002");
        assert_eq!(infer("s + 1").unwrap_err().code(), "E-TYPE-002");
        assert_eq!(infer("forall x . x > 0").unwrap_err().code(), "E-TYPE-008");
        assert_eq!(infer("n$0 = n").unwrap_err().code(), "E-TYPE-012");
        let mut e = env();
        e.allow_pre = true;
        assert!(e.infer(&parse_expr_str("n$0 < n").unwrap()).is_ok());
        assert_eq!(e.infer(&parse_expr_str("a$0 = a").unwrap()).unwrap_err().code(), "E-TYPE-012");
    }

    #[test]
    fn bound_names_shadow_and_expire() {
        assert!(infer("(exists n . n : s & n = a) & n > 0").is_ok());
        assert_eq!(infer("(exists x . x : s) & x = a").unwrap_err().code(), "E-TYPE-001");
    }

    #[test]
    fn gluing_presence() {
        use crate::specml::parse_machine;
        let abs = parse_machine("machine A variables s : BOOL t : BOOL end").unwrap();
        let glued = parse_machine("machine B refines A glue s: s = TRUE variables t : BOOL u : BOOL end").unwrap();
        assert!(check_gluing(&glued, &abs).is_empty());
        let bare = parse_machine("machine B refines A variables u : BOOL end").unwrap();
        let d = check_gluing(&bare, &abs);
        assert_eq!(d.iter().map(|d| d.code).collect::<Vec<_>>(), ["E-TYPE-010", "E-TYPE-010"]);
    }
}
