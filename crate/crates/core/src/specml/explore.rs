use super::eval::EvalError;
use super::model::Model;
use super::value::{State, Value};
use serde::Serialize;
use std::collections::{HashMap, VecDeque};

pub const DEFAULT_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub source: usize,
    pub event: String,
    #[serde(skip)]
    pub event_index: usize,
    pub binding: Vec<(String, Value)>,
    pub target: usize,
}

/// The explored transition graph of a machine.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub machine: String,
    pub var_names: Vec<String>,
    pub states: Vec<State>,
    pub initial: Vec<usize>,
    pub transitions: Vec<Transition>,
    pub truncated: bool,
    index: HashMap<State, usize>,
    outgoing: Vec<Vec<usize>>,
    /// Transition through which BFS first reached each state.
    parent: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExploreError {
    #[error("exploration cap must be at least 1")]
    ZeroCap,
    #[error("{error} (in event {event} from state {state})")]
    Eval {
        error: EvalError,
        event: String,
        state: String,
    },
}

impl ExploreError {
    pub fn code(&self) -> &'static str {
        match self {
            ExploreError::ZeroCap => "E-EXPL-001",
            ExploreError::Eval { error, .. } => error.code(),
        }
    }
}

impl StateSpace {
    pub fn index_of(&self, state: &State) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn outgoing(&self, state: usize) -> &[usize] {
        &self.outgoing[state]
    }

    pub fn is_deadlock(&self, state: usize) -> bool {
        self.outgoing[state].is_empty()
    }

    /// Transitions of a shortest path from an initial state to `state`.
    pub fn trace_to(&self, state: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = state;
        while let Some(t) = self.parent[cur] {
            path.push(t);
            cur = self.transitions[t].source;
        }
        path.reverse();
        path
    }

    /// Transitions of a shortest path from any state of `from` to `to`, if one exists.
    pub fn path_between(&self, from: &[usize], to: usize) -> Option<Vec<usize>> {
        let mut via: Vec<Option<Option<usize>>> = vec![None; self.states.len()];
        let mut queue = VecDeque::new();
        for &s in from {
            if via[s].is_none() {
                via[s] = Some(None);
                queue.push_back(s);
            }
        }
        while let Some(s) = queue.pop_front() {
            if s == to {
                let mut path = Vec::new();
                let mut cur = s;
                while let Some(Some(t)) = via[cur] {
                    path.push(t);
                    cur = self.transitions[t].source;
                }
                path.reverse();
                return Some(path);
            }
            for &t in &self.outgoing[s] {
                let n = self.transitions[t].target;
                if via[n].is_none() {
                    via[n] = Some(Some(t));
                    queue.push_back(n);
                }
            }
        }
        None
    }

    /// States reachable from `from` (inclusive), in BFS order.
    pub fn reachable_from(&self, from: &[usize]) -> Vec<usize> {
        let mut seen = vec![false; self.states.len()];
        let mut order = Vec::new();
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &s in from {
            if !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(s) = queue.pop_front() {
            order.push(s);
            for &t in &self.outgoing[s] {
                let n = self.transitions[t].target;
                if !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        order
    }

    pub fn render_state(&self, state: usize) -> String {
        self.states[state].render(&self.var_names)
    }

    pub fn render_transition(&self, t: usize) -> String {
        let t = &self.transitions[t];
        if t.binding.is_empty() {
            t.event.clone()
        } else {
            let args: Vec<String> = t.binding.iter().map(|(n, v)| format!("{n} := {v}")).collect();
            format!("{}({})", t.event, args.join(", "))
        }
    }

    /// One JSON object per line: a header, the states, then the transitions.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = serde_json::json!({
            "machine": self.machine,
            "variables": self.var_names,
            "states": self.states.len(),
            "transitions": self.transitions.len(),
            "initial": self.initial,
            "truncated": self.truncated,
        });
        out.push_str(&header.to_string());
        out.push('\n');
        for (i, s) in self.states.iter().enumerate() {
            let values: serde_json::Map<String, serde_json::Value> = self
                .var_names
                .iter()
                .zip(s.values())
                .map(|(n, v)| (n.clone(), serde_json::Value::String(v.to_string())))
                .collect();
            out.push_str(&serde_json::json!({"state": i, "values": values}).to_string());
            out.push('\n');
        }
        for t in &self.transitions {
            out.push_str(&serde_json::to_string(t).expect("transitions serialize"));
            out.push('\n');
        }
        out
    }
}

/// Breadth-first exploration from the initial states, stopping when a new
/// state would exceed `cap`.
pub fn explore(model: &Model, cap: usize) -> Result<StateSpace, ExploreError> {
    if cap == 0 {
        return Err(ExploreError::ZeroCap);
    }
    let mut space = StateSpace {
        machine: model.name().to_string(),
        var_names: model.var_names().to_vec(),
        states: Vec::new(),
        initial: Vec::new(),
        transitions: Vec::new(),
        truncated: false,
        index: HashMap::new(),
        outgoing: Vec::new(),
        parent: Vec::new(),
    };
    let init = model.initial_states().map_err(|error| ExploreError::Eval {
        error,
        event: super::INITIALISATION.to_string(),
        state: String::new(),
    })?;
    for s in init {
        if space.states.len() == cap {
            space.truncated = true;
            break;
        }
        let i = space.states.len();
        space.index.insert(s.clone(), i);
        space.states.push(s);
        space.outgoing.push(Vec::new());
        space.parent.push(None);
        space.initial.push(i);
    }
    let mut next = 0;
    'bfs: while next < space.states.len() {
        let src = next;
        next += 1;
        let firings = model.successors(&space.states[src]).map_err(|error| ExploreError::Eval {
            event: String::new(),
            state: space.render_state(src),
            error,
        })?;
        for f in firings {
            let tid = space.transitions.len();
            let target = match space.index.get(&f.target) {
                Some(&t) => t,
                None => {
                    if space.states.len() == cap {
                        space.truncated = true;
                        break 'bfs;
                    }
                    let t = space.states.len();
                    space.index.insert(f.target.clone(), t);
                    space.states.push(f.target);
                    space.outgoing.push(Vec::new());
                    space.parent.push(Some(tid));
                    t
                }
            };
            space.transitions.push(Transition {
                source: src,
                event: model.event_name(f.event).to_string(),
                event_index: f.event,
                binding: model.named_binding(f.event, &f.binding),
                target,
            });
            space.outgoing[src].push(tid);
        }
    }
    Ok(space)
}

/// A reachable state violating an invariant, with a shortest trace to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub state: usize,
    pub label: String,
    pub trace: Vec<usize>,
}

/// Checks every invariant in every explored state, in BFS order.
pub fn check_invariants(space: &StateSpace, model: &Model) -> Result<Vec<Violation>, (usize, EvalError)> {
    let mut out = Vec::new();
    for (i, s) in space.states.iter().enumerate() {
        for inv in &model.spec().invariants {
            let ok = model.eval_pred(&inv.pred, s, None).map_err(|e| (i, e))?;
            if !ok {
                out.push(Violation {
                    state: i,
                    label: inv.label.clone(),
                    trace: space.trace_to(i),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{parse_machine, ModelOptions};
    use super::*;

    fn model(src: &str) -> Model {
        Model::compile(&parse_machine(src).unwrap(), &[], &ModelOptions::default()).unwrap()
    }

    const LIFT: &str = "machine Lift variables floor : 0..2 events
        event INITIALISATION then floor := 0 end
        event inc when floor < 2 then floor := floor + 1 end
        event dec when floor > 0 then floor := floor - 1 end end";

    #[test]
    fn lift_space() {
        let space = explore(&model(LIFT), DEFAULT_CAP).unwrap();
        assert_eq!(space.states.len(), 3);
        assert_eq!(space.transitions.len(), 4);
        assert!(!space.truncated);
        let names: Vec<_> = space.trace_to(2).iter().map(|&t| space.render_transition(t)).collect();
        assert_eq!(names, ["inc", "inc"]);
        assert_eq!(space.reachable_from(&[2]), vec![2, 1, 0]);
    }

    #[test]
    fn cap_truncates() {
        let space = explore(&model(LIFT), 2).unwrap();
        assert!(space.truncated);
        assert_eq!(space.states.len(), 2);
        let exact = explore(&model(LIFT), 3).unwrap();
        assert!(!exact.truncated);
        assert!(matches!(explore(&model(LIFT), 0), Err(ExploreError::ZeroCap)));
    }

    #[test]
    fn invariants() {
        let m = model("machine M variables x : 0..3 invariants small: x < 2 events
            event INITIALISATION then x := 0 end
            event up when x < 3 then x := x + 1 end end");
        let space = explore(&m, DEFAULT_CAP).unwrap();
        let v = check_invariants(&space, &m).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].trace.len(), 2);
        let f = model("machine M variables x : BOOL invariants never: FALSE events
            event INITIALISATION any b : BOOL then x := b end end");
        let space = explore(&f, DEFAULT_CAP).unwrap();
        let v = check_invariants(&space, &f).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|v| v.trace.is_empty()));
    }

    #[test]
    fn jsonl_export() {
        let space = explore(&model(LIFT), DEFAULT_CAP).unwrap();
        let text = space.to_jsonl();
        assert_eq!(text.lines().count(), 1 + 3 + 4);
        for line in text.lines() {
            serde_json::from_str::<serde_json::Value>(line).unwrap();
        }
    }
}
