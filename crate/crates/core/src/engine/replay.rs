//! Independent re-execution of evidence through the machine semantics.

use super::oracle::holds_on_lasso;
use super::{step_binding, Atoms, Evidence, Lasso, VoNode, VoResult, VtResult, Verdict};
use crate::specml::{Model, State, StateSpace, Value};
use crate::volang::{Ltl, Task, TaskKind, VoExpr};
use std::cell::RefCell;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplayError {
    #[error("position {pos}: {message}")]
    Step { pos: usize, message: String },
    #[error("{task} {verdict} without the evidence it requires")]
    MissingEvidence { task: &'static str, verdict: Verdict },
    #[error("evidence of kind {0} does not fit this task")]
    WrongKind(&'static str),
    #[error("replayed run does not reproduce {0}")]
    Mismatch(Verdict),
    #[error("result tree does not match the expression")]
    Shape,
    #[error("{0}")]
    Eval(String),
}

fn step_err(pos: usize, message: impl Into<String>) -> ReplayError {
    ReplayError::Step {
        pos,
        message: message.into(),
    }
}

/// Re-fires transition `t` from `from`, returning the successor.
fn refire(model: &Model, space: &StateSpace, from: &State, t: usize, pos: usize) -> Result<State, ReplayError> {
    let tr = space.transitions.get(t).ok_or_else(|| step_err(pos, "no such transition"))?;
    if space.states[tr.source] != *from {
        return Err(step_err(pos, "transition does not leave the current state"));
    }
    let ev = model
        .event_index(&tr.event)
        .ok_or_else(|| step_err(pos, format!("unknown event `{}`", tr.event)))?;
    let binding: Vec<Value> = tr.binding.iter().map(|(_, v)| v.clone()).collect();
    match model.fire(from, ev, &binding) {
        Ok(Some(next)) if next == space.states[tr.target] => Ok(next),
        Ok(Some(_)) => Err(step_err(pos, "event produces a different state")),
        Ok(None) => Err(step_err(pos, format!("`{}` is not enabled", tr.event))),
        Err(e) => Err(ReplayError::Eval(e.to_string())),
    }
}

fn is_start(model: &Model, space: &StateSpace, start: Option<&[usize]>, s: usize) -> Result<bool, ReplayError> {
    Ok(match start {
        Some(set) => set.contains(&s),
        None => model
            .initial_states()
            .map_err(|e| ReplayError::Eval(e.to_string()))?
            .contains(&space.states[s]),
    })
}

/// Re-fires a finite run, returning every state visited.
fn replay_trace(model: &Model, space: &StateSpace, start: usize, transitions: &[usize]) -> Result<Vec<State>, ReplayError> {
    let mut states = vec![space.states.get(start).ok_or_else(|| step_err(0, "no such state"))?.clone()];
    for (i, &t) in transitions.iter().enumerate() {
        let next = refire(model, space, states.last().expect("nonempty"), t, i)?;
        states.push(next);
    }
    Ok(states)
}

fn pred(model: &Model, e: &crate::expr::Expr, s: &State) -> Result<bool, ReplayError> {
    model.eval_pred(e, s, None).map_err(|e| ReplayError::Eval(e.to_string()))
}

fn check_lasso(phi: &Ltl, model: &Model, space: &StateSpace, lasso: &Lasso) -> Result<(), ReplayError> {
    let n = lasso.states.len();
    if n == 0 || lasso.edges.len() != n || lasso.loop_start >= n {
        return Err(step_err(0, "malformed lasso"));
    }
    let states: Vec<&State> = lasso.states.iter().map(|&s| &space.states[s]).collect();
    for (i, e) in lasso.edges.iter().enumerate() {
        let next = states[lasso.successor(i)];
        if e.target != lasso.states[lasso.successor(i)] {
            return Err(step_err(i, "edge target is not the next position"));
        }
        match e.transition {
            Some(t) => {
                refire(model, space, states[i], t, i)?;
            }
            None => {
                let out = model.successors(states[i]).map_err(|e| ReplayError::Eval(e.to_string()))?;
                if !out.is_empty() || next != states[i] {
                    return Err(step_err(i, "stutter outside a deadlock"));
                }
            }
        }
    }
    let atoms = Atoms::of(phi);
    let failure = RefCell::new(None);
    let values = |a: usize, from: usize, to: usize| {
        let r = match &atoms.list[a] {
            Ltl::State(e) => model.eval_pred(e, &space.states[from], None),
            Ltl::Ba(e) => model.eval_pred(e, &space.states[to], Some(&space.states[from])),
            _ => unreachable!("atoms only"),
        };
        r.unwrap_or_else(|e| {
            failure.borrow_mut().get_or_insert(e.to_string());
            false
        })
    };
    let holds = holds_on_lasso(phi, lasso, &values);
    if let Some(e) = failure.into_inner() {
        return Err(ReplayError::Eval(e));
    }
    if holds {
        return Err(ReplayError::Mismatch(Verdict::Fail));
    }
    Ok(())
}

/// Checks the evidence of one task result.
pub fn replay_task(kind: &TaskKind, model: &Model, space: &StateSpace, start: Option<&[usize]>, r: &VtResult) -> Result<(), ReplayError> {
    let missing = || ReplayError::MissingEvidence {
        task: kind.name(),
        verdict: r.verdict,
    };
    match (kind, r.verdict, &r.evidence) {
        (_, Verdict::Inconclusive, _) => Ok(()),
        (TaskKind::Ltl(_), Verdict::Pass, None) | (TaskKind::Inv(_), Verdict::Pass, None) | (TaskKind::Exists(_), Verdict::Fail, None) => Ok(()),
        (TaskKind::Ltl(phi), Verdict::Fail, Some(Evidence::Lasso(l))) => {
            if !is_start(model, space, start, l.states[0])? {
                return Err(step_err(0, "lasso does not begin in a start state"));
            }
            check_lasso(phi, model, space, l)
        }
        (TaskKind::Ltl(_), Verdict::Fail, None) | (TaskKind::Inv(_), Verdict::Fail, None) | (TaskKind::Exists(_), Verdict::Pass, None) | (TaskKind::Trace(_), _, None) => Err(missing()),
        (TaskKind::Inv(p) | TaskKind::Exists(p), v, Some(Evidence::Trace { start: s, transitions })) => {
            if !is_start(model, space, None, *s)? {
                return Err(step_err(0, "trace does not begin in an initial state"));
            }
            let states = replay_trace(model, space, *s, transitions)?;
            let end = states.last().expect("nonempty");
            let end_index = space.index_of(end).expect("replayed states are explored");
            if let Some(set) = start {
                if !set.contains(&end_index) {
                    return Err(step_err(transitions.len(), "trace ends outside the start states"));
                }
            }
            let want = matches!(kind, TaskKind::Exists(_));
            if pred(model, p, end)? != want || (v == Verdict::Pass) != want {
                return Err(ReplayError::Mismatch(v));
            }
            Ok(())
        }
        (TaskKind::Trace(sc), v, Some(Evidence::Trace { start: s, transitions })) => {
            if !is_start(model, space, start, *s)? {
                return Err(step_err(0, "scenario does not begin in a start state"));
            }
            let states = replay_trace(model, space, *s, transitions)?;
            if transitions.len() > sc.steps.len() {
                return Err(step_err(sc.steps.len(), "run is longer than the scenario"));
            }
            for (i, (&t, step)) in transitions.iter().zip(&sc.steps).enumerate() {
                let (ev, binding) = step_binding(step, model, &states[i]).map_err(|_| step_err(i, "step arguments do not evaluate"))?;
                let tr = &space.transitions[t];
                if model.event_index(&tr.event) != Some(ev) || !tr.binding.iter().map(|(_, v)| v).eq(binding.iter()) {
                    return Err(step_err(i, format!("run fires `{}` where the scenario has `{}`", tr.event, step.event)));
                }
            }
            let end = states.last().expect("nonempty");
            let reproduced = if transitions.len() < sc.steps.len() {
                let step = &sc.steps[transitions.len()];
                let (ev, binding) = step_binding(step, model, end).map_err(|_| step_err(transitions.len(), "step arguments do not evaluate"))?;
                let enabled = model.fire(end, ev, &binding).map_err(|e| ReplayError::Eval(e.to_string()))?.is_some();
                v == Verdict::Fail && !enabled
            } else {
                let ok = match &sc.final_pred {
                    Some(p) => pred(model, p, end)?,
                    None => true,
                };
                ok == (v == Verdict::Pass)
            };
            if reproduced {
                Ok(())
            } else {
                Err(ReplayError::Mismatch(v))
            }
        }
        (_, _, Some(Evidence::Lasso(_))) => Err(ReplayError::WrongKind("lasso")),
        (_, _, Some(Evidence::Trace { .. })) => Err(ReplayError::WrongKind("trace")),
    }
}

/// Replays the evidence of every task evaluated in `result`. Returns the
/// number of tasks whose evidence was re-executed.
pub fn replay(expr: &VoExpr, result: &VoResult, model: &Model, space: &StateSpace) -> Result<usize, ReplayError> {
    match (expr, &result.node) {
        (VoExpr::Task(Task { kind, .. }), VoNode::Task { start, result, .. }) => {
            replay_task(kind, model, space, start.as_deref(), result)?;
            Ok(usize::from(result.evidence.is_some()))
        }
        (VoExpr::And(a, b), VoNode::And { left, right }) | (VoExpr::Or(a, b), VoNode::Or { left, right }) => {
            Ok(replay(a, left, model, space)? + replay(b, right, model, space)?)
        }
        (VoExpr::Seq(a, b), VoNode::Seq { left, right }) => {
            let n = replay(a, left, model, space)?;
            Ok(n + match right {
                Some(r) => replay(b, r, model, space)?,
                None => 0,
            })
        }
        _ => Err(ReplayError::Shape),
    }
}
