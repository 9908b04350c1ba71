use super::eval::{EvalError, Scope};
use super::typecheck::{Ty, TyEnv};
use super::value::{State, Value, ValueDomain};
use super::{ContextSpec, MachineSpec, TypeExpr, INITIALISATION};
use crate::diag::{Diagnostic, Span};
use crate::expr::Expr;
use std::collections::{HashMap, HashSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelOptions {
    /// Largest number of values any declared type (or parameter product) may have.
    pub max_type_cardinality: u128,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            max_type_cardinality: 1_000_000,
        }
    }
}

#[derive(Debug, Clone)]
struct CompiledEvent {
    name: String,
    params: Vec<(String, ValueDomain)>,
    guards: Vec<Expr>,
    actions: Vec<(usize, Expr, Span)>,
    bindings: Vec<Vec<Value>>,
}

/// One enabled event occurrence from a state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Firing {
    pub event: usize,
    pub binding: Vec<Value>,
    pub target: State,
}

/// A typechecked machine ready for execution.
#[derive(Debug, Clone)]
pub struct Model {
    spec: MachineSpec,
    var_names: Vec<String>,
    var_domains: Vec<ValueDomain>,
    globals: HashMap<String, Value>,
    env: TyEnv,
    init: CompiledEvent,
    events: Vec<CompiledEvent>,
}

struct Compiler<'a> {
    options: &'a ModelOptions,
    diags: Vec<Diagnostic>,
    globals: HashMap<String, Value>,
    carriers: HashMap<String, ValueDomain>,
    env: TyEnv,
    names: HashSet<String>,
}

impl Compiler<'_> {
    fn error(&mut self, code: &'static str, message: String, span: Span) {
        self.diags.push(Diagnostic::error(code, message, Some(span)));
    }

    fn declare(&mut self, name: &str, span: Span) -> bool {
        if self.names.insert(name.to_string()) {
            true
        } else {
            self.error("E-TYPE-009", format!("`{name}` is declared more than once"), span);
            false
        }
    }

    fn constant_int(&mut self, e: &Expr) -> Option<i64> {
        match self.env.infer(e) {
            Ok(Ty::Int) => {}
            Ok(t) => {
                self.error("E-TYPE-002", format!("range bound must be an integer, found {t}"), e.span);
                return None;
            }
            Err(err) => {
                self.diags.push(err.to_diagnostic());
                return None;
            }
        }
        if !e.free_names().0.iter().all(|n| self.globals.contains_key(n)) {
            self.error("E-TYPE-002", format!("range bound `{e}` is not constant"), e.span);
            return None;
        }
        match Scope::new(&self.globals, &[], &[]).eval(e) {
            Ok(Value::Int(n)) => Some(n),
            Ok(_) => None,
            Err(err) => {
                self.error(err.code(), err.to_string(), e.span);
                None
            }
        }
    }

    fn domain(&mut self, ty: &TypeExpr, span: Span) -> Option<ValueDomain> {
        let d = match ty {
            TypeExpr::Bool => ValueDomain::Bool,
            TypeExpr::Unbounded(w) => {
                self.error("E-TYPE-003", format!("type `{w}` is not finite; use a range lo..hi"), span);
                return None;
            }
            TypeExpr::Range(lo, hi) => {
                let lo = self.constant_int(lo);
                let hi = self.constant_int(hi);
                ValueDomain::Range(lo?, hi?)
            }
            TypeExpr::Named(n) => match self.carriers.get(n) {
                Some(d) => d.clone(),
                None => {
                    self.error("E-TYPE-001", format!("unknown carrier set `{n}`"), span);
                    return None;
                }
            },
            TypeExpr::SetOf(t) => ValueDomain::SetOf(Box::new(self.domain(t, span)?)),
            TypeExpr::Map { total, dom, ran } => {
                let dom = self.domain(dom, span);
                let ran = self.domain(ran, span);
                ValueDomain::Map {
                    total: *total,
                    dom: Box::new(dom?),
                    ran: Box::new(ran?),
                }
            }
        };
        match d.cardinality() {
            Some(n) if n <= self.options.max_type_cardinality => Some(d),
            _ => {
                self.error(
                    "E-TYPE-004",
                    format!(
                        "type `{ty}` has more than {} values",
                        self.options.max_type_cardinality
                    ),
                    span,
                );
                None
            }
        }
    }

    fn context(&mut self, ctx: &ContextSpec) {
        for set in &ctx.sets {
            self.declare(&set.name, set.span);
            let mut elements = Vec::new();
            for e in &set.elements {
                if self.declare(e, set.span) {
                    elements.push(Value::elem(e));
                    self.globals.insert(e.clone(), Value::elem(e));
                    self.env.bind(e, Ty::Enum(set.name.clone()));
                }
            }
            self.globals
                .insert(set.name.clone(), Value::Set(elements.iter().cloned().collect()));
            self.env.bind(&set.name, Ty::set(Ty::Enum(set.name.clone())));
            let mut sorted = elements;
            sorted.sort();
            self.carriers.insert(
                set.name.clone(),
                ValueDomain::Enum {
                    name: set.name.clone(),
                    elements: sorted,
                },
            );
        }
        for c in &ctx.constants {
            if !self.declare(&c.name, c.span) {
                continue;
            }
            let ty = match self.env.infer(&c.value) {
                Ok(t) => t,
                Err(err) => {
                    self.diags.push(err.to_diagnostic());
                    continue;
                }
            };
            match Scope::new(&self.globals, &[], &[]).eval(&c.value) {
                Ok(v) => {
                    self.globals.insert(c.name.clone(), v);
                    self.env.bind(&c.name, ty);
                }
                Err(err) => self.error(err.code(), err.to_string(), c.span),
            }
        }
    }

    fn expect_pred(&mut self, env: &TyEnv, e: &Expr) {
        if let Err(err) = env.expect_bool(e) {
            self.diags.push(err.to_diagnostic());
        }
    }

    fn event(&mut self, spec: &MachineSpec, var_index: &HashMap<String, usize>, ev: &super::EventSpec) -> CompiledEvent {
        let mut env = self.env.clone();
        let mut params = Vec::new();
        let mut local_names = HashSet::new();
        for p in &ev.params {
            if self.names.contains(&p.name) || !local_names.insert(p.name.clone()) {
                self.error("E-TYPE-009", format!("parameter `{}` clashes with another name", p.name), p.span);
                continue;
            }
            if let Some(d) = self.domain(&p.ty, p.span) {
                env.bind(&p.name, Ty::of_domain(&d));
                params.push((p.name.clone(), d));
            }
        }
        for g in &ev.guards {
            self.expect_pred(&env, &g.pred);
        }
        let mut actions = Vec::new();
        let mut assigned = HashSet::new();
        for a in &ev.actions {
            let Some(&idx) = var_index.get(&a.var) else {
                self.error("E-TYPE-013", format!("`{}` is not a variable of {}", a.var, spec.name), a.span);
                continue;
            };
            if !assigned.insert(a.var.clone()) {
                self.error(
                    "E-TYPE-007",
                    format!("`{}` is assigned more than once in event {}", a.var, ev.name),
                    a.span,
                );
                continue;
            }
            match env.infer(&a.value) {
                Ok(t) => {
                    let want = env.lookup(&a.var).cloned().unwrap_or(Ty::Any);
                    if t.unify(&want).is_none() {
                        self.error(
                            "E-TYPE-002",
                            format!("`{}` has type {want} but is assigned a value of type {t}", a.var),
                            a.value.span,
                        );
                    }
                }
                Err(err) => self.diags.push(err.to_diagnostic()),
            }
            actions.push((idx, a.value.clone(), a.span));
        }
        if ev.is_initialisation() {
            for v in &spec.variables {
                if !assigned.contains(&v.name) {
                    self.error(
                        "E-TYPE-006",
                        format!("INITIALISATION must assign `{}`", v.name),
                        ev.span,
                    );
                }
            }
            let exprs = ev.guards.iter().map(|g| (&g.pred, g.span)).chain(ev.actions.iter().map(|a| (&a.value, a.span)));
            for (e, span) in exprs {
                let (plain, pre) = e.free_names();
                for name in plain.iter().chain(&pre) {
                    if var_index.contains_key(name) {
                        self.error(
                            "E-TYPE-006",
                            format!("INITIALISATION must not read variable `{name}`"),
                            span,
                        );
                    }
                }
            }
        }
        let mut count: u128 = 1;
        for (_, d) in &params {
            count = count.saturating_mul(d.cardinality().unwrap_or(u128::MAX));
        }
        let bindings = if count > self.options.max_type_cardinality {
            self.error(
                "E-TYPE-004",
                format!("event {} has more than {} parameter bindings", ev.name, self.options.max_type_cardinality),
                ev.span,
            );
            Vec::new()
        } else {
            bindings(&params)
        };
        CompiledEvent {
            name: ev.name.clone(),
            params,
            guards: ev.guards.iter().map(|g| g.pred.clone()).collect(),
            actions,
            bindings,
        }
    }
}

/// All parameter bindings in lexicographic order, first parameter most significant.
fn bindings(params: &[(String, ValueDomain)]) -> Vec<Vec<Value>> {
    let mut out = vec![Vec::new()];
    for (_, d) in params {
        let values = d.enumerate();
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut b = prefix.clone();
                    b.push(v.clone());
                    b
                })
            })
            .collect();
    }
    out
}

impl Model {
    /// Typechecks `spec` against the contexts it sees and prepares it for execution.
    pub fn compile(spec: &MachineSpec, contexts: &[ContextSpec], options: &ModelOptions) -> Result<Model, Vec<Diagnostic>> {
        let mut c = Compiler {
            options,
            diags: Vec::new(),
            globals: HashMap::new(),
            carriers: HashMap::new(),
            env: TyEnv::default(),
            names: HashSet::new(),
        };
        for name in &spec.sees {
            match contexts.iter().find(|ctx| &ctx.name == name) {
                Some(ctx) => c.context(ctx),
                None => c.error("E-TYPE-011", format!("unknown context `{name}`"), spec.span),
            }
        }

        let mut var_names = Vec::new();
        let mut var_domains = Vec::new();
        for v in &spec.variables {
            if !c.declare(&v.name, v.span) {
                continue;
            }
            // an ill-typed declaration still binds the name, to avoid cascades
            let (ty, d) = match c.domain(&v.ty, v.span) {
                Some(d) => (Ty::of_domain(&d), d),
                None => (Ty::Any, ValueDomain::Bool),
            };
            c.env.bind_var(&v.name, ty);
            var_names.push(v.name.clone());
            var_domains.push(d);
        }
        let var_index: HashMap<String, usize> = var_names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();

        let env = c.env.clone();
        for inv in &spec.invariants {
            c.expect_pred(&env, &inv.pred);
        }

        let mut event_names = HashSet::new();
        let mut init = None;
        let mut events = Vec::new();
        for ev in &spec.events {
            if !event_names.insert(ev.name.clone()) {
                let code = if ev.is_initialisation() { "E-TYPE-005" } else { "E-TYPE-009" };
                c.error(code, format!("event `{}` is declared more than once", ev.name), ev.span);
                continue;
            }
            let compiled = c.event(spec, &var_index, ev);
            if ev.is_initialisation() {
                init = Some(compiled);
            } else {
                events.push(compiled);
            }
        }
        if init.is_none() {
            c.error("E-TYPE-005", format!("machine {} has no {INITIALISATION} event", spec.name), spec.span);
        }

        if !c.diags.is_empty() {
            return Err(c.diags);
        }
        Ok(Model {
            spec: spec.clone(),
            var_names,
            var_domains,
            globals: c.globals,
            env: c.env,
            init: init.expect("checked above"),
            events,
        })
    }

    pub fn spec(&self) -> &MachineSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn var_domains(&self) -> &[ValueDomain] {
        &self.var_domains
    }

    pub fn globals(&self) -> &HashMap<String, Value> {
        &self.globals
    }

    /// Types of variables, constants, carrier sets and their elements.
    pub fn env(&self) -> &TyEnv {
        &self.env
    }

    /// Non-initialisation events in declaration order.
    pub fn event_names(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|e| e.name.as_str())
    }

    pub fn event_index(&self, name: &str) -> Option<usize> {
        self.events.iter().position(|e| e.name == name)
    }

    pub fn event_name(&self, idx: usize) -> &str {
        &self.events[idx].name
    }

    pub fn event_params(&self, idx: usize) -> &[(String, ValueDomain)] {
        &self.events[idx].params
    }

    pub fn named_binding(&self, idx: usize, binding: &[Value]) -> Vec<(String, Value)> {
        self.events[idx]
            .params
            .iter()
            .map(|(n, _)| n.clone())
            .zip(binding.iter().cloned())
            .collect()
    }

    fn scope<'a>(&'a self, state: &'a State) -> Scope<'a> {
        Scope::new(&self.globals, &self.var_names, state.values())
    }

    fn try_fire(&self, ev: &CompiledEvent, state: Option<&State>, binding: &[Value]) -> Result<Option<State>, EvalError> {
        let locals: Vec<(String, Value)> = ev.params.iter().map(|(n, _)| n.clone()).zip(binding.iter().cloned()).collect();
        let mut scope = match state {
            Some(s) => self.scope(s),
            None => Scope::new(&self.globals, &[], &[]),
        }
        .with_locals(locals);
        for g in &ev.guards {
            match scope.eval_bool(g) {
                Ok(true) => {}
                Ok(false) => return Ok(None),
                Err(e) if e.is_undefined() => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        let mut next = match state {
            Some(s) => s.0.clone(),
            None => vec![Value::Bool(false); self.var_names.len()],
        };
        for (idx, e, span) in &ev.actions {
            let v = scope.eval(e)?;
            if !self.var_domains[*idx].contains(&v) {
                return Err(EvalError::OutOfType {
                    var: self.var_names[*idx].clone(),
                    value: v.to_string(),
                    span: *span,
                });
            }
            next[*idx] = v;
        }
        Ok(Some(State(next)))
    }

    /// Initial states in binding order, without duplicates.
    pub fn initial_states(&self) -> Result<Vec<State>, EvalError> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for b in &self.init.bindings {
            if let Some(s) = self.try_fire(&self.init, None, b)? {
                if seen.insert(s.clone()) {
                    out.push(s);
                }
            }
        }
        Ok(out)
    }

    /// Every enabled (event, binding) from `state`, events in declaration
    /// order and bindings in lexicographic order.
    pub fn successors(&self, state: &State) -> Result<Vec<Firing>, EvalError> {
        let mut out = Vec::new();
        for (i, ev) in self.events.iter().enumerate() {
            for b in &ev.bindings {
                if let Some(target) = self.try_fire(ev, Some(state), b)? {
                    out.push(Firing {
                        event: i,
                        binding: b.clone(),
                        target,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Fires one event occurrence; `None` when the guard does not hold or the
    /// binding is outside the parameter types.
    pub fn fire(&self, state: &State, event: usize, binding: &[Value]) -> Result<Option<State>, EvalError> {
        let ev = &self.events[event];
        if binding.len() != ev.params.len() || !ev.params.iter().zip(binding).all(|((_, d), v)| d.contains(v)) {
            return Ok(None);
        }
        self.try_fire(ev, Some(state), binding)
    }

    /// Evaluates a predicate on `post`, with `pre` supplying `$0` values.
    pub fn eval_pred(&self, e: &Expr, post: &State, pre: Option<&State>) -> Result<bool, EvalError> {
        let mut scope = self.scope(post);
        if let Some(p) = pre {
            scope = scope.with_pre(p.values());
        }
        scope.eval_bool(e)
    }

    /// Evaluates an expression on `state`.
    pub fn eval_value(&self, e: &Expr, state: &State) -> Result<Value, EvalError> {
        self.scope(state).eval(e)
    }

    pub fn eval_pred_with(&self, e: &Expr, post: &State, locals: Vec<(String, Value)>) -> Result<bool, EvalError> {
        self.scope(post).with_locals(locals).eval_bool(e)
    }

    pub fn render(&self, state: &State) -> String {
        state.render(&self.var_names)
    }
}
