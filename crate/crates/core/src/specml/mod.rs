//! The machine specification language: contexts, machines, events, and the
//! explicit-state semantics that back every validation task.

mod eval;
mod explore;
mod model;
mod parse;
mod print;
mod typecheck;
mod value;

pub use eval::{EvalError, Scope};
pub use explore::{check_invariants, explore, ExploreError, StateSpace, Transition, Violation, DEFAULT_CAP};
pub use model::{Firing, Model, ModelOptions};
pub use parse::{parse_context, parse_machine};
pub use typecheck::{check_gluing, typecheck, Ty, TyEnv, TypeError, TypeErrorKind};
pub use value::{State, Value, ValueDomain};

use crate::diag::Span;
use crate::expr::Expr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CarrierSet {
    pub name: String,
    pub elements: Vec<String>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstantDef {
    pub name: String,
    pub value: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextSpec {
    pub name: String,
    pub sets: Vec<CarrierSet>,
    pub constants: Vec<ConstantDef>,
    pub span: Span,
}

/// Declared type of a variable or event parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeExpr {
    Bool,
    /// `INT` or `NAT`: accepted by the parser, rejected as not finite.
    Unbounded(String),
    Range(Expr, Expr),
    Named(String),
    SetOf(Box<TypeExpr>),
    Map {
        total: bool,
        dom: Box<TypeExpr>,
        ran: Box<TypeExpr>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub ty: TypeExpr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeled {
    pub label: String,
    pub pred: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub var: String,
    pub value: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSpec {
    pub name: String,
    pub params: Vec<VarDecl>,
    pub guards: Vec<Labeled>,
    pub actions: Vec<Action>,
    pub span: Span,
}

impl EventSpec {
    pub fn is_initialisation(&self) -> bool {
        self.name == INITIALISATION
    }
}

pub const INITIALISATION: &str = "INITIALISATION";

/// Links an abstract variable of the refined machine to this machine's state.
/// Only its presence is checked; the predicate is documentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gluing {
    pub variable: String,
    pub pred: Expr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineSpec {
    pub name: String,
    pub refines: Option<String>,
    pub sees: Vec<String>,
    pub implements: Vec<String>,
    pub gluing: Vec<Gluing>,
    pub variables: Vec<VarDecl>,
    pub invariants: Vec<Labeled>,
    pub events: Vec<EventSpec>,
    pub span: Span,
}

impl MachineSpec {
    pub fn event(&self, name: &str) -> Option<&EventSpec> {
        self.events.iter().find(|e| e.name == name)
    }

    pub fn declares(&self, var: &str) -> bool {
        self.variables.iter().any(|v| v.name == var)
    }
}
