use super::value::Value;
use crate::diag::Span;
use crate::expr::{BinOp, Builtin, Expr, ExprKind, Quantifier, UnOp};
use std::collections::{BTreeSet, HashMap};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("{span}: division by zero")]
    DivisionByZero { span: Span },
    #[error("{span}: `{func}` applied outside its domain")]
    NotInDomain { func: String, span: Span },
    #[error("{span}: value {value} assigned to `{var}` is outside its declared type")]
    OutOfType { var: String, value: String, span: Span },
    #[error("{span}: integer overflow")]
    Overflow { span: Span },
    #[error("{span}: {message}")]
    Ill { message: String, span: Span },
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::DivisionByZero { .. } => "E-EVAL-001",
            EvalError::OutOfType { .. } => "E-EVAL-002",
            EvalError::NotInDomain { .. } => "E-EVAL-003",
            EvalError::Overflow { .. } => "E-EVAL-004",
            EvalError::Ill { .. } => "E-EVAL-005",
        }
    }

    /// Undefined expressions disable a guard instead of aborting.
    pub fn is_undefined(&self) -> bool {
        matches!(self, EvalError::DivisionByZero { .. } | EvalError::NotInDomain { .. })
    }

    pub fn span(&self) -> Span {
        match self {
            EvalError::DivisionByZero { span }
            | EvalError::NotInDomain { span, .. }
            | EvalError::OutOfType { span, .. }
            | EvalError::Overflow { span }
            | EvalError::Ill { span, .. } => *span,
        }
    }
}

/// Name bindings for evaluation: constants and carrier sets, the current
/// (post) state, an optional pre-state for `$0`, and local bindings.
#[derive(Debug, Clone)]
pub struct Scope<'a> {
    globals: &'a HashMap<String, Value>,
    vars: &'a [String],
    post: &'a [Value],
    pre: Option<&'a [Value]>,
    locals: Vec<(String, Value)>,
}

impl<'a> Scope<'a> {
    pub fn new(globals: &'a HashMap<String, Value>, vars: &'a [String], post: &'a [Value]) -> Self {
        Scope {
            globals,
            vars,
            post,
            pre: None,
            locals: Vec::new(),
        }
    }

    pub fn with_pre(mut self, pre: &'a [Value]) -> Self {
        self.pre = Some(pre);
        self
    }

    pub fn with_locals(mut self, locals: Vec<(String, Value)>) -> Self {
        self.locals = locals;
        self
    }

    fn lookup(&self, name: &str, pre: bool, span: Span) -> Result<Value, EvalError> {
        if !pre {
            if let Some((_, v)) = self.locals.iter().rev().find(|(n, _)| n == name) {
                return Ok(v.clone());
            }
        }
        if let Some(i) = self.vars.iter().position(|v| v == name) {
            let values = if pre {
                self.pre.ok_or_else(|| ill(format!("`{name}$0` has no pre-state here"), span))?
            } else {
                self.post
            };
            return Ok(values[i].clone());
        }
        self.globals
            .get(name)
            .cloned()
            .ok_or_else(|| ill(format!("unbound name `{name}`"), span))
    }

    pub fn eval(&mut self, e: &Expr) -> Result<Value, EvalError> {
        match &e.kind {
            ExprKind::Bool(b) => Ok(Value::Bool(*b)),
            ExprKind::Int(n) => Ok(Value::Int(*n)),
            ExprKind::Ident { name, pre } => self.lookup(name, *pre, e.span),
            ExprKind::Unary(UnOp::Not, a) => Ok(Value::Bool(!self.eval_bool(a)?)),
            ExprKind::Unary(UnOp::Neg, a) => {
                let n = self.eval_int(a)?;
                n.checked_neg().map(Value::Int).ok_or(EvalError::Overflow { span: e.span })
            }
            ExprKind::Binary(op, a, b) => self.eval_binary(*op, a, b, e.span),
            ExprKind::SetLit(items) => {
                let mut set = BTreeSet::new();
                for item in items {
                    set.insert(self.eval(item)?);
                }
                Ok(Value::Set(set))
            }
            ExprKind::Call(b, args) => self.eval_call(*b, args, e.span),
            ExprKind::Apply(f, x) => {
                let fv = self.eval(f)?;
                let xv = self.eval(x)?;
                let set = as_set(&fv, f.span)?;
                let mut hits = set.iter().filter_map(|p| match p {
                    Value::Pair(a, b) if **a == xv => Some(b.as_ref().clone()),
                    _ => None,
                });
                match (hits.next(), hits.next()) {
                    (Some(v), None) => Ok(v),
                    _ => Err(EvalError::NotInDomain {
                        func: f.to_string(),
                        span: e.span,
                    }),
                }
            }
            ExprKind::Quant(q, vars, body) => {
                let mut ranges = Vec::with_capacity(vars.len());
                for v in vars {
                    let range = v
                        .range
                        .as_ref()
                        .ok_or_else(|| ill(format!("no range for `{}`", v.name), e.span))?;
                    ranges.push(self.eval(range)?);
                }
                let depth = self.locals.len();
                let r = self.quantify(*q, vars.iter().map(|v| v.name.as_str()).collect(), &ranges, body);
                self.locals.truncate(depth);
                r.map(Value::Bool)
            }
        }
    }

    // Ranges are evaluated once, before binding; a range mentioning an
    // earlier bound variable is evaluated in the outer scope.
    fn quantify(&mut self, q: Quantifier, names: Vec<&str>, ranges: &[Value], body: &Expr) -> Result<bool, EvalError> {
        let Some((first, rest)) = names.split_first() else {
            return self.eval_bool(body);
        };
        let set = as_set(&ranges[0], body.span)?.clone();
        for v in set {
            self.locals.push((first.to_string(), v));
            let r = self.quantify(q, rest.to_vec(), &ranges[1..], body);
            self.locals.pop();
            let r = r?;
            match q {
                Quantifier::Forall if !r => return Ok(false),
                Quantifier::Exists if r => return Ok(true),
                _ => {}
            }
        }
        Ok(q == Quantifier::Forall)
    }

    pub fn eval_bool(&mut self, e: &Expr) -> Result<bool, EvalError> {
        match self.eval(e)? {
            Value::Bool(b) => Ok(b),
            v => Err(ill(format!("expected a boolean, found {v}"), e.span)),
        }
    }

    fn eval_int(&mut self, e: &Expr) -> Result<i64, EvalError> {
        match self.eval(e)? {
            Value::Int(n) => Ok(n),
            v => Err(ill(format!("expected an integer, found {v}"), e.span)),
        }
    }

    fn eval_binary(&mut self, op: BinOp, a: &Expr, b: &Expr, span: Span) -> Result<Value, EvalError> {
        use BinOp::*;
        // connectives short-circuit; an undefined right operand is only
        // reached when it matters
        match op {
            And => return Ok(Value::Bool(self.eval_bool(a)? && self.eval_bool(b)?)),
            Or => return Ok(Value::Bool(self.eval_bool(a)? || self.eval_bool(b)?)),
            Implies => return Ok(Value::Bool(!self.eval_bool(a)? || self.eval_bool(b)?)),
            Iff => return Ok(Value::Bool(self.eval_bool(a)? == self.eval_bool(b)?)),
            _ => {}
        }
        let va = self.eval(a)?;
        let vb = self.eval(b)?;
        let int = |v: &Value, e: &Expr| v.as_int().ok_or_else(|| ill(format!("expected an integer, found {v}"), e.span));
        let overflow = EvalError::Overflow { span };
        Ok(match op {
            Eq => Value::Bool(va == vb),
            Neq => Value::Bool(va != vb),
            Lt => Value::Bool(int(&va, a)? < int(&vb, b)?),
            Le => Value::Bool(int(&va, a)? <= int(&vb, b)?),
            Gt => Value::Bool(int(&va, a)? > int(&vb, b)?),
            Ge => Value::Bool(int(&va, a)? >= int(&vb, b)?),
            In => Value::Bool(as_set(&vb, b.span)?.contains(&va)),
            NotIn => Value::Bool(!as_set(&vb, b.span)?.contains(&va)),
            Subset => Value::Bool(as_set(&va, a.span)?.is_subset(as_set(&vb, b.span)?)),
            NotSubset => Value::Bool(!as_set(&va, a.span)?.is_subset(as_set(&vb, b.span)?)),
            Maplet => Value::pair(va, vb),
            Union => Value::Set(as_set(&va, a.span)?.union(as_set(&vb, b.span)?).cloned().collect()),
            Inter => Value::Set(as_set(&va, a.span)?.intersection(as_set(&vb, b.span)?).cloned().collect()),
            Diff => Value::Set(as_set(&va, a.span)?.difference(as_set(&vb, b.span)?).cloned().collect()),
            Override => {
                let rhs = as_set(&vb, b.span)?;
                let keys: BTreeSet<&Value> = rhs.iter().filter_map(first).collect();
                let mut out: BTreeSet<Value> = as_set(&va, a.span)?
                    .iter()
                    .filter(|p| first(p).is_none_or(|k| !keys.contains(k)))
                    .cloned()
                    .collect();
                out.extend(rhs.iter().cloned());
                Value::Set(out)
            }
            Range => {
                let (lo, hi) = (int(&va, a)?, int(&vb, b)?);
                if hi >= lo && (hi as i128 - lo as i128) > 10_000_000 {
                    return Err(ill(format!("range {lo}..{hi} is too large"), span));
                }
                Value::Set((lo..=hi).map(Value::Int).collect())
            }
            Add => Value::Int(int(&va, a)?.checked_add(int(&vb, b)?).ok_or(overflow)?),
            Sub => Value::Int(int(&va, a)?.checked_sub(int(&vb, b)?).ok_or(overflow)?),
            Mul => Value::Int(int(&va, a)?.checked_mul(int(&vb, b)?).ok_or(overflow)?),
            Div | Mod => {
                let (x, y) = (int(&va, a)?, int(&vb, b)?);
                if y == 0 {
                    return Err(EvalError::DivisionByZero { span });
                }
                // floor division, so that `x mod y` lies in 0..y-1 for y > 0
                let r = if op == Div { x.checked_div_euclid(y) } else { x.checked_rem_euclid(y) };
                Value::Int(r.ok_or(overflow)?)
            }
            And | Or | Implies | Iff => unreachable!(),
        })
    }

    fn eval_call(&mut self, b: Builtin, args: &[Expr], span: Span) -> Result<Value, EvalError> {
        let vals = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
        match b {
            Builtin::Card => Ok(Value::Int(as_set(&vals[0], span)?.len() as i64)),
            Builtin::Dom | Builtin::Ran => {
                let set = as_set(&vals[0], span)?;
                let mut out = BTreeSet::new();
                for p in set {
                    let Value::Pair(x, y) = p else {
                        return Err(ill(format!("`{}` of a non-relation", b.name()), span));
                    };
                    out.insert(if b == Builtin::Dom { x.as_ref() } else { y.as_ref() }.clone());
                }
                Ok(Value::Set(out))
            }
            Builtin::Dist => {
                let (x, y) = match vals.as_slice() {
                    [Value::Pair(x, y)] => (x.as_ref(), y.as_ref()),
                    [x, y] => (x, y),
                    _ => return Err(ill("`DIST` expects a maplet or two integers", span)),
                };
                match (x, y) {
                    (Value::Int(x), Value::Int(y)) => {
                        x.checked_sub(*y).and_then(i64::checked_abs).map(Value::Int).ok_or(EvalError::Overflow { span })
                    }
                    _ => Err(ill("`DIST` expects integers", span)),
                }
            }
        }
    }
}

fn ill(message: impl Into<String>, span: Span) -> EvalError {
    EvalError::Ill {
        message: message.into(),
        span,
    }
}

fn as_set(v: &Value, span: Span) -> Result<&BTreeSet<Value>, EvalError> {
    v.as_set().ok_or_else(|| ill(format!("expected a set, found {v}"), span))
}

fn first(v: &Value) -> Option<&Value> {
    match v {
        Value::Pair(a, _) => Some(a),
        _ => None,
    }
}
