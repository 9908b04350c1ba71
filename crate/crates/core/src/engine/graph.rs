//! The transition graph seen by temporal checking: explored states plus a
//! stutter loop on every deadlock, and the truth of each atom on it.

use crate::specml::{EvalError, Model, StateSpace};
use crate::volang::Ltl;
use serde::Serialize;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Edge {
    pub target: usize,
    /// Index into the space's transitions; `None` is a deadlock stutter.
    pub transition: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kripke {
    pub initial: Vec<usize>,
    pub edges: Vec<Vec<Edge>>,
}

impl Kripke {
    pub fn from_space(space: &StateSpace) -> Self {
        Self::from_space_at(space, &space.initial)
    }

    /// The space with runs starting in `start` instead of the initial states.
    pub fn from_space_at(space: &StateSpace, start: &[usize]) -> Self {
        let edges = (0..space.states.len())
            .map(|s| {
                let out = space.outgoing(s);
                if out.is_empty() {
                    vec![Edge {
                        target: s,
                        transition: None,
                    }]
                } else {
                    out.iter()
                        .map(|&t| Edge {
                            target: space.transitions[t].target,
                            transition: Some(t),
                        })
                        .collect()
                }
            })
            .collect();
        Kripke {
            initial: start.to_vec(),
            edges,
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// An infinite run `states[0] .. states[n-1]` then back to `states[loop_start]`.
/// `edges[i]` leaves position `i`; the last edge closes the cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Lasso {
    pub states: Vec<usize>,
    pub edges: Vec<Edge>,
    pub loop_start: usize,
}

impl Lasso {
    pub fn successor(&self, pos: usize) -> usize {
        if pos + 1 < self.states.len() {
            pos + 1
        } else {
            self.loop_start
        }
    }

    pub fn stem(&self) -> &[Edge] {
        &self.edges[..self.loop_start]
    }

    pub fn cycle(&self) -> &[Edge] {
        &self.edges[self.loop_start..]
    }

    /// Whether every edge exists in `k` and connects consecutive positions.
    pub fn is_path_of(&self, k: &Kripke) -> bool {
        self.states.len() == self.edges.len()
            && !self.states.is_empty()
            && self.loop_start < self.states.len()
            && k.initial.contains(&self.states[0])
            && self.edges.iter().enumerate().all(|(i, e)| {
                e.target == self.states[self.successor(i)] && k.edges[self.states[i]].contains(e)
            })
    }
}

/// The distinct atoms of a formula, numbered in first-occurrence order.
#[derive(Debug, Clone, Default)]
pub struct Atoms {
    pub list: Vec<Ltl>,
    index: HashMap<Ltl, usize>,
}

impl Atoms {
    pub fn of(phi: &Ltl) -> Self {
        let mut a = Atoms::default();
        for atom in phi.atoms() {
            if !a.index.contains_key(atom) {
                a.index.insert(atom.clone(), a.list.len());
                a.list.push(atom.clone());
            }
        }
        a
    }

    pub fn id(&self, atom: &Ltl) -> usize {
        self.index[atom]
    }

    pub fn is_ba(&self, id: usize) -> bool {
        matches!(self.list[id], Ltl::Ba(_))
    }
}

/// Truth of atom `atom` at a position in state `from` whose next state is `to`.
/// State atoms ignore `to`.
pub trait AtomValues {
    fn holds(&self, atom: usize, from: usize, to: usize) -> bool;
}

impl<F: Fn(usize, usize, usize) -> bool> AtomValues for F {
    fn holds(&self, atom: usize, from: usize, to: usize) -> bool {
        self(atom, from, to)
    }
}

/// Atom values precomputed over every state and edge of a space.
#[derive(Debug, Clone)]
pub struct AtomTable {
    state: Vec<Option<Vec<bool>>>,
    step: Vec<HashMap<(usize, usize), bool>>,
}

/// An atom that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomError {
    pub error: EvalError,
    pub state: usize,
}

impl AtomTable {
    pub fn build(atoms: &Atoms, model: &Model, space: &StateSpace, k: &Kripke) -> Result<Self, AtomError> {
        let mut table = AtomTable {
            state: Vec::with_capacity(atoms.list.len()),
            step: Vec::with_capacity(atoms.list.len()),
        };
        for atom in &atoms.list {
            match atom {
                Ltl::State(e) => {
                    let mut col = Vec::with_capacity(space.states.len());
                    for (i, s) in space.states.iter().enumerate() {
                        col.push(model.eval_pred(e, s, None).map_err(|error| AtomError { error, state: i })?);
                    }
                    table.state.push(Some(col));
                    table.step.push(HashMap::new());
                }
                Ltl::Ba(e) => {
                    let mut col = HashMap::new();
                    for (from, out) in k.edges.iter().enumerate() {
                        for edge in out {
                            if let std::collections::hash_map::Entry::Vacant(v) = col.entry((from, edge.target)) {
                                let post = &space.states[edge.target];
                                let pre = &space.states[from];
                                v.insert(model.eval_pred(e, post, Some(pre)).map_err(|error| AtomError { error, state: from })?);
                            }
                        }
                    }
                    table.state.push(None);
                    table.step.push(col);
                }
                _ => unreachable!("atoms only"),
            }
        }
        Ok(table)
    }
}

impl AtomValues for AtomTable {
    fn holds(&self, atom: usize, from: usize, to: usize) -> bool {
        match &self.state[atom] {
            Some(col) => col[from],
            None => self.step[atom].get(&(from, to)).copied().unwrap_or(false),
        }
    }
}
