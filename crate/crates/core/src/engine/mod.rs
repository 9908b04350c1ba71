//! Verification of VOs against explored state spaces.

pub mod graph;
pub mod ltl;
pub mod oracle;
mod replay;

pub use graph::{AtomTable, AtomValues, Atoms, Edge, Kripke, Lasso};
pub use replay::{replay, ReplayError};

use crate::expr::Expr;
use crate::specml::{EvalError, Model, State, StateSpace, Value};
use crate::volang::{bind_args, Ltl, Scenario, ScenarioStep, Task, TaskKind, VoExpr};
use serde::{Serialize, Serializer};
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Strong Kleene conjunction.
    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }

    /// Strong Kleene disjunction.
    pub fn or(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Pass, _) | (_, Pass) => Pass,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Fail,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("formula references `{name}`, which is not a variable or constant of {machine}")]
    UnknownVariable { name: String, machine: String },
    #[error("formula too large: {0}")]
    Ltl(#[from] ltl::LtlError),
    #[error("{error} (in state {state})")]
    Eval { error: EvalError, state: String },
    #[error("step {step} `{event}` is not enabled in state {state}")]
    NotEnabled { step: usize, event: String, state: String },
    #[error("step {step} `{event}`: {message}")]
    BadStep { step: usize, event: String, message: String },
    #[error("step {step} `{event}` leaves the explored state space")]
    OutsideSpace { step: usize, event: String },
    #[error("state space is truncated; the verdict cannot be established")]
    Truncated,
    #[error("right operand of `;` needs start states but the left operand produced none")]
    EmptyCarrier,
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::UnknownVariable { .. } => "E-ENG-001",
            EngineError::Ltl(_) => "E-ENG-002",
            EngineError::Eval { error, .. } => error.code(),
            EngineError::NotEnabled { .. } => "E-ENG-010",
            EngineError::BadStep { .. } => "E-ENG-011",
            EngineError::OutsideSpace { .. } => "E-ENG-012",
            EngineError::Truncated => "E-ENG-013",
            EngineError::EmptyCarrier => "E-ENG-020",
        }
    }
}

impl Serialize for EngineError {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("EngineError", 2)?;
        st.serialize_field("code", self.code())?;
        st.serialize_field("message", &self.to_string())?;
        st.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    /// A finite run: `start`, then each transition in order.
    Trace { start: usize, transitions: Vec<usize> },
    /// An infinite run; stutter edges have no transition.
    Lasso(Lasso),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VtResult {
    pub verdict: Verdict,
    pub evidence: Option<Evidence>,
    /// States handed to the right operand of `;`, sorted.
    pub carrier: Vec<usize>,
    pub error: Option<EngineError>,
}

impl VtResult {
    fn pass(carrier: Vec<usize>, evidence: Option<Evidence>) -> Self {
        VtResult {
            verdict: Verdict::Pass,
            evidence,
            carrier: sorted(carrier),
            error: None,
        }
    }

    fn fail(evidence: Option<Evidence>, carrier: Vec<usize>, error: Option<EngineError>) -> Self {
        VtResult {
            verdict: Verdict::Fail,
            evidence,
            carrier: sorted(carrier),
            error,
        }
    }

    fn inconclusive(error: EngineError) -> Self {
        VtResult {
            verdict: Verdict::Inconclusive,
            evidence: None,
            carrier: Vec::new(),
            error: Some(error),
        }
    }
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

fn eval_error(space: &StateSpace, state: usize, error: EvalError) -> EngineError {
    EngineError::Eval {
        error,
        state: space.render_state(state),
    }
}

fn check_names<'a>(exprs: impl IntoIterator<Item = &'a Expr>, model: &Model) -> Result<(), EngineError> {
    for e in exprs {
        let (plain, pre) = e.free_names();
        for name in plain.iter().chain(&pre) {
            if !model.var_names().contains(name) && !model.globals().contains_key(name) {
                return Err(EngineError::UnknownVariable {
                    name: name.clone(),
                    machine: model.name().to_string(),
                });
            }
        }
    }
    Ok(())
}

/// Runs from `start` (the initial states when `None`) must satisfy `phi`.
pub fn eval_ltl(phi: &Ltl, model: &Model, space: &StateSpace, start: Option<&[usize]>) -> VtResult {
    let atoms = Atoms::of(phi);
    let exprs = atoms.list.iter().map(|a| match a {
        Ltl::State(e) | Ltl::Ba(e) => e,
        _ => unreachable!("atoms only"),
    });
    if let Err(e) = check_names(exprs, model) {
        return VtResult::inconclusive(e);
    }
    if space.truncated {
        return VtResult::inconclusive(EngineError::Truncated);
    }
    let start = start.unwrap_or(&space.initial);
    let k = Kripke::from_space_at(space, start);
    let table = match AtomTable::build(&atoms, model, space, &k) {
        Ok(t) => t,
        Err(e) => return VtResult::inconclusive(eval_error(space, e.state, e.error)),
    };
    match ltl::check(phi, &k, &table) {
        Ok(None) => VtResult::pass(space.reachable_from(start), None),
        Ok(Some(lasso)) => VtResult::fail(Some(Evidence::Lasso(lasso)), Vec::new(), None),
        Err(e) => VtResult::inconclusive(e.into()),
    }
}

/// `pred` must hold in every reachable state, or in every state of `start`.
pub fn eval_inv(pred: &Expr, model: &Model, space: &StateSpace, start: Option<&[usize]>) -> VtResult {
    if let Err(e) = check_names([pred], model) {
        return VtResult::inconclusive(e);
    }
    let states: Vec<usize> = match start {
        Some(s) => sorted(s.to_vec()),
        None => (0..space.states.len()).collect(),
    };
    for &s in &states {
        match model.eval_pred(pred, &space.states[s], None) {
            Ok(true) => {}
            Ok(false) => {
                let trace = Evidence::Trace {
                    start: trace_start(space, s),
                    transitions: space.trace_to(s),
                };
                return VtResult::fail(Some(trace), Vec::new(), None);
            }
            Err(e) => return VtResult::inconclusive(eval_error(space, s, e)),
        }
    }
    if space.truncated && start.is_none() {
        return VtResult::inconclusive(EngineError::Truncated);
    }
    VtResult::pass(states, None)
}

/// The initial state a shortest trace to `state` starts from.
fn trace_start(space: &StateSpace, state: usize) -> usize {
    space.trace_to(state).first().map_or(state, |&t| space.transitions[t].source)
}

/// Some reachable state, or some state of `start`, satisfies `pred`.
pub fn eval_exists(pred: &Expr, model: &Model, space: &StateSpace, start: Option<&[usize]>) -> VtResult {
    if let Err(e) = check_names([pred], model) {
        return VtResult::inconclusive(e);
    }
    let states: Vec<usize> = match start {
        Some(s) => sorted(s.to_vec()),
        None => (0..space.states.len()).collect(),
    };
    let mut witnesses = Vec::new();
    for &s in &states {
        match model.eval_pred(pred, &space.states[s], None) {
            Ok(true) => witnesses.push(s),
            Ok(false) => {}
            Err(e) => return VtResult::inconclusive(eval_error(space, s, e)),
        }
    }
    match witnesses.first() {
        Some(&w) => {
            let trace = Evidence::Trace {
                start: trace_start(space, w),
                transitions: space.trace_to(w),
            };
            VtResult::pass(witnesses, Some(trace))
        }
        None if space.truncated && start.is_none() => VtResult::inconclusive(EngineError::Truncated),
        None => VtResult::fail(None, Vec::new(), None),
    }
}

enum StepError {
    Bad(String),
    Eval(EvalError),
}

/// The event index and parameter values a scenario step fires in `state`.
fn step_binding(step: &ScenarioStep, model: &Model, state: &State) -> Result<(usize, Vec<Value>), StepError> {
    let ev = model.event_index(&step.event).ok_or_else(|| StepError::Bad("unknown event".into()))?;
    let params = model.event_params(ev);
    let order = bind_args(params.iter().map(|(p, _)| p.as_str()), &step.args).map_err(StepError::Bad)?;
    let mut binding = vec![Value::Bool(false); params.len()];
    for (arg, &pi) in step.args.iter().zip(&order) {
        let v = model.eval_value(&arg.value, state).map_err(StepError::Eval)?;
        if !params[pi].1.contains(&v) {
            return Err(StepError::Bad(format!("{v} is not a valid `{}`", params[pi].0)));
        }
        binding[pi] = v;
    }
    Ok((ev, binding))
}

/// Outcome of running a scenario from one state.
enum Run {
    Done { transitions: Vec<usize>, end: usize, final_ok: bool },
    Blocked { transitions: Vec<usize>, error: EngineError },
    Broken(EngineError),
}

fn run_scenario(sc: &Scenario, model: &Model, space: &StateSpace, from: usize) -> Run {
    let mut cur = from;
    let mut transitions = Vec::new();
    for (i, step) in sc.steps.iter().enumerate() {
        let n = i + 1;
        let bad = |message: String| {
            Run::Broken(EngineError::BadStep {
                step: n,
                event: step.event.clone(),
                message,
            })
        };
        let (ev, binding) = match step_binding(step, model, &space.states[cur]) {
            Ok(b) => b,
            Err(StepError::Eval(e)) => return Run::Broken(eval_error(space, cur, e)),
            Err(StepError::Bad(m)) => return bad(m),
        };
        let next = match model.fire(&space.states[cur], ev, &binding) {
            Ok(Some(s)) => s,
            Ok(None) => {
                return Run::Blocked {
                    transitions,
                    error: EngineError::NotEnabled {
                        step: n,
                        event: step.event.clone(),
                        state: space.render_state(cur),
                    },
                }
            }
            Err(e) => return Run::Broken(eval_error(space, cur, e)),
        };
        let found = space.outgoing(cur).iter().copied().find(|&t| {
            let tr = &space.transitions[t];
            tr.event_index == ev
                && tr.binding.iter().map(|(_, v)| v).eq(binding.iter())
                && space.states[tr.target] == next
        });
        let Some(t) = found else {
            return Run::Broken(EngineError::OutsideSpace {
                step: n,
                event: step.event.clone(),
            });
        };
        transitions.push(t);
        cur = space.transitions[t].target;
    }
    let final_ok = match &sc.final_pred {
        None => true,
        Some(p) => match model.eval_pred(p, &space.states[cur], None) {
            Ok(b) => b,
            Err(e) => return Run::Broken(eval_error(space, cur, e)),
        },
    };
    Run::Done {
        transitions,
        end: cur,
        final_ok,
    }
}

/// The scenario runs from every start state and ends where `final` holds.
pub fn eval_trace(sc: &Scenario, model: &Model, space: &StateSpace, start: Option<&[usize]>) -> VtResult {
    if let Err(e) = check_names(sc.final_pred.iter(), model) {
        return VtResult::inconclusive(e);
    }
    let starts = sorted(start.unwrap_or(&space.initial).to_vec());
    let mut ends = Vec::new();
    let mut first = None;
    for &s in &starts {
        match run_scenario(sc, model, space, s) {
            Run::Done {
                transitions,
                end,
                final_ok,
            } => {
                let ev = Evidence::Trace { start: s, transitions };
                if !final_ok {
                    return VtResult::fail(Some(ev), Vec::new(), None);
                }
                first.get_or_insert(ev);
                ends.push(end);
            }
            Run::Blocked { transitions, error } => {
                let ev = Evidence::Trace { start: s, transitions };
                return VtResult::fail(Some(ev), Vec::new(), Some(error));
            }
            Run::Broken(e) => return VtResult::inconclusive(e),
        }
    }
    VtResult::pass(ends, first)
}

pub fn eval_task(kind: &TaskKind, model: &Model, space: &StateSpace, start: Option<&[usize]>) -> VtResult {
    match kind {
        TaskKind::Ltl(phi) => eval_ltl(phi, model, space, start),
        TaskKind::Inv(p) => eval_inv(p, model, space, start),
        TaskKind::Exists(p) => eval_exists(p, model, space, start),
        TaskKind::Trace(sc) => eval_trace(sc, model, space, start),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VoResult {
    pub verdict: Verdict,
    pub carrier: Vec<usize>,
    pub error: Option<EngineError>,
    #[serde(flatten)]
    pub node: VoNode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum VoNode {
    Task {
        label: Option<String>,
        task: &'static str,
        /// The states the task started from; `None` means the initial states.
        start: Option<Vec<usize>>,
        result: VtResult,
    },
    And { left: Box<VoResult>, right: Box<VoResult> },
    Or { left: Box<VoResult>, right: Box<VoResult> },
    /// `right` is absent when the left operand did not pass.
    Seq { left: Box<VoResult>, right: Option<Box<VoResult>> },
}

/// Evaluates a VO expression from the initial states of `space`.
pub fn eval_vo(expr: &VoExpr, model: &Model, space: &StateSpace) -> VoResult {
    eval_vo_from(expr, model, space, None)
}

pub fn eval_vo_from(expr: &VoExpr, model: &Model, space: &StateSpace, start: Option<&[usize]>) -> VoResult {
    match expr {
        VoExpr::Task(Task { label, kind, .. }) => {
            let result = eval_task(kind, model, space, start);
            VoResult {
                verdict: result.verdict,
                carrier: result.carrier.clone(),
                error: None,
                node: VoNode::Task {
                    label: label.clone(),
                    task: kind.name(),
                    start: start.map(<[usize]>::to_vec),
                    result,
                },
            }
        }
        VoExpr::And(a, b) => {
            let (l, r) = (eval_vo_from(a, model, space, start), eval_vo_from(b, model, space, start));
            let carrier = l.carrier.iter().copied().filter(|s| r.carrier.binary_search(s).is_ok()).collect();
            VoResult {
                verdict: l.verdict.and(r.verdict),
                carrier,
                error: None,
                node: VoNode::And {
                    left: Box::new(l),
                    right: Box::new(r),
                },
            }
        }
        VoExpr::Or(a, b) => {
            let (l, r) = (eval_vo_from(a, model, space, start), eval_vo_from(b, model, space, start));
            let carrier = [&l, &r]
                .iter()
                .filter(|x| x.verdict == Verdict::Pass)
                .flat_map(|x| x.carrier.iter().copied())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            VoResult {
                verdict: l.verdict.or(r.verdict),
                carrier,
                error: None,
                node: VoNode::Or {
                    left: Box::new(l),
                    right: Box::new(r),
                },
            }
        }
        VoExpr::Seq(a, b) => {
            let l = eval_vo_from(a, model, space, start);
            if l.verdict != Verdict::Pass {
                return VoResult {
                    verdict: l.verdict,
                    carrier: l.carrier.clone(),
                    error: None,
                    node: VoNode::Seq {
                        left: Box::new(l),
                        right: None,
                    },
                };
            }
            if l.carrier.is_empty() {
                return VoResult {
                    verdict: Verdict::Inconclusive,
                    carrier: Vec::new(),
                    error: Some(EngineError::EmptyCarrier),
                    node: VoNode::Seq {
                        left: Box::new(l),
                        right: None,
                    },
                };
            }
            let r = eval_vo_from(b, model, space, Some(&l.carrier));
            VoResult {
                verdict: r.verdict,
                carrier: r.carrier.clone(),
                error: None,
                node: VoNode::Seq {
                    left: Box::new(l),
                    right: Some(Box::new(r)),
                },
            }
        }
    }
}
