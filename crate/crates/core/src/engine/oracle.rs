//! Brute-force LTL checking used to cross-check [`super::ltl::check`].
//!
//! Two searches, neither sharing code with the automaton product:
//! short lassos are enumerated directly and evaluated by unrolling; then every
//! lasso is covered by searching runs labelled with the truth value of each
//! temporal subformula, where labels must satisfy the one-step expansion laws
//! and every pending eventuality is fulfilled on the cycle.

use super::graph::{AtomValues, Atoms, Edge, Kripke, Lasso};
use crate::volang::Ltl;
use std::collections::{HashMap, VecDeque};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("E-ENG-030: bound insufficient for a definitive verdict ({0} labelled nodes exceed the budget)")]
    BoundInsufficient(usize),
}

/// Labelled nodes explored before giving up.
pub const NODE_BUDGET: usize = 2_000_000;
/// Raw lassos evaluated before moving on to the labelled search.
const LASSO_BUDGET: usize = 100_000;

/// Subformulas in post-order, each with the indices of its operands.
struct Closure<'a> {
    subs: Vec<&'a Ltl>,
    kids: Vec<Vec<usize>>,
    atom: Vec<Option<usize>>,
}

impl<'a> Closure<'a> {
    fn new(phi: &'a Ltl, atoms: &Atoms) -> Self {
        let mut c = Closure {
            subs: Vec::new(),
            kids: Vec::new(),
            atom: Vec::new(),
        };
        c.add(phi, atoms);
        c
    }

    fn add(&mut self, f: &'a Ltl, atoms: &Atoms) -> usize {
        let kids = match f {
            Ltl::State(_) | Ltl::Ba(_) => vec![],
            Ltl::Not(a) | Ltl::Next(a) | Ltl::Globally(a) | Ltl::Finally(a) => vec![self.add(a, atoms)],
            Ltl::And(a, b) | Ltl::Or(a, b) | Ltl::Implies(a, b) | Ltl::Iff(a, b) | Ltl::Until(a, b) => {
                vec![self.add(a, atoms), self.add(b, atoms)]
            }
        };
        self.atom.push(match f {
            Ltl::State(_) | Ltl::Ba(_) => Some(atoms.id(f)),
            _ => None,
        });
        self.subs.push(f);
        self.kids.push(kids);
        self.subs.len() - 1
    }

    fn root(&self) -> usize {
        self.subs.len() - 1
    }

    fn is_temporal(&self, i: usize) -> bool {
        matches!(self.subs[i], Ltl::Next(_) | Ltl::Globally(_) | Ltl::Finally(_) | Ltl::Until(..))
    }

    /// Pointwise value of a non-temporal subformula from its operands.
    fn boolean(&self, i: usize, v: &[bool]) -> bool {
        let k = &self.kids[i];
        match self.subs[i] {
            Ltl::Not(_) => !v[k[0]],
            Ltl::And(..) => v[k[0]] && v[k[1]],
            Ltl::Or(..) => v[k[0]] || v[k[1]],
            Ltl::Implies(..) => !v[k[0]] || v[k[1]],
            Ltl::Iff(..) => v[k[0]] == v[k[1]],
            _ => unreachable!("not boolean"),
        }
    }
}

/// Whether `phi` holds at position 0 of `lasso`, by fixpoint unrolling.
pub fn holds_on_lasso(phi: &Ltl, lasso: &Lasso, values: &dyn AtomValues) -> bool {
    let atoms = Atoms::of(phi);
    let cl = Closure::new(phi, &atoms);
    let n = lasso.states.len();
    let mut val: Vec<Vec<bool>> = Vec::with_capacity(cl.subs.len());
    for i in 0..cl.subs.len() {
        let k = &cl.kids[i];
        let col: Vec<bool> = match cl.subs[i] {
            Ltl::State(_) | Ltl::Ba(_) => (0..n)
                .map(|p| values.holds(cl.atom[i].expect("atom"), lasso.states[p], lasso.edges[p].target))
                .collect(),
            Ltl::Next(_) => (0..n).map(|p| val[k[0]][lasso.successor(p)]).collect(),
            Ltl::Globally(_) => fixpoint(n, true, |p, next| val[k[0]][p] && next, lasso),
            Ltl::Finally(_) => fixpoint(n, false, |p, next| val[k[0]][p] || next, lasso),
            Ltl::Until(..) => fixpoint(n, false, |p, next| val[k[1]][p] || (val[k[0]][p] && next), lasso),
            _ => (0..n)
                .map(|p| {
                    let mut local = vec![false; i];
                    for &c in k {
                        local[c] = val[c][p];
                    }
                    cl.boolean(i, &local)
                })
                .collect(),
        };
        val.push(col);
    }
    val[cl.root()][0]
}

/// Iterates `step` from `init` everywhere until stable: the greatest fixpoint
/// when `init` is true, the least otherwise.
fn fixpoint(n: usize, init: bool, step: impl Fn(usize, bool) -> bool, lasso: &Lasso) -> Vec<bool> {
    let mut cur = vec![init; n];
    loop {
        let next: Vec<bool> = (0..n).map(|p| step(p, cur[lasso.successor(p)])).collect();
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

/// Every lasso from an initial state with at most `max_len` positions, shortest
/// first, each stem and cycle enumerated in edge order. Stops at the first one
/// `visit` accepts or after `budget` lassos.
fn enumerate(k: &Kripke, max_len: usize, budget: usize, mut visit: impl FnMut(&Lasso) -> bool) -> Option<Lasso> {
    let mut count = 0;
    for len in 1..=max_len {
        let mut states = Vec::with_capacity(len);
        let mut edges: Vec<Edge> = Vec::with_capacity(len);
        for &s0 in &k.initial {
            states.push(s0);
            if let Some(l) = extend(k, len, &mut states, &mut edges, &mut count, budget, &mut visit) {
                return Some(l);
            }
            states.pop();
            if count >= budget {
                return None;
            }
        }
    }
    None
}

fn extend(k: &Kripke, len: usize, states: &mut Vec<usize>, edges: &mut Vec<Edge>, count: &mut usize, budget: usize, visit: &mut impl FnMut(&Lasso) -> bool) -> Option<Lasso> {
    let last = *states.last().expect("nonempty");
    for &e in &k.edges[last] {
        if *count >= budget {
            return None;
        }
        if states.len() == len {
            for j in (0..len).filter(|&j| states[j] == e.target) {
                *count += 1;
                let mut all = edges.clone();
                all.push(e);
                let l = Lasso {
                    states: states.clone(),
                    edges: all,
                    loop_start: j,
                };
                if visit(&l) {
                    return Some(l);
                }
            }
        } else {
            states.push(e.target);
            edges.push(e);
            let found = extend(k, len, states, edges, count, budget, visit);
            states.pop();
            edges.pop();
            if found.is_some() {
                return found;
            }
        }
    }
    None
}

/// A run position: a state, the edge taken from it, and the truth of every
/// temporal subformula (bit `t` for the `t`-th one).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Label {
    state: usize,
    edge: usize,
    bits: u64,
}

struct Labelled<'a> {
    k: &'a Kripke,
    cl: Closure<'a>,
    temporal: Vec<usize>,
    values: &'a dyn AtomValues,
}

impl Labelled<'_> {
    fn eval(&self, l: Label) -> Vec<bool> {
        let to = self.k.edges[l.state][l.edge].target;
        let mut v = vec![false; self.cl.subs.len()];
        let mut t = 0;
        for i in 0..self.cl.subs.len() {
            v[i] = if let Some(a) = self.cl.atom[i] {
                self.values.holds(a, l.state, to)
            } else if self.cl.is_temporal(i) {
                t += 1;
                l.bits >> (t - 1) & 1 == 1
            } else {
                self.cl.boolean(i, &v)
            };
        }
        v
    }

    /// The one-step expansion laws between consecutive positions.
    fn consistent(&self, now: &[bool], next: &[bool]) -> bool {
        self.temporal.iter().all(|&i| {
            let k = &self.cl.kids[i];
            let expect = match self.cl.subs[i] {
                Ltl::Next(_) => next[k[0]],
                Ltl::Globally(_) => now[k[0]] && next[i],
                Ltl::Finally(_) => now[k[0]] || next[i],
                Ltl::Until(..) => now[k[1]] || (now[k[0]] && next[i]),
                _ => unreachable!(),
            };
            now[i] == expect
        })
    }

    /// Positions where no eventuality of subformula `i` is left pending.
    fn fulfils(&self, i: usize, v: &[bool]) -> bool {
        let k = &self.cl.kids[i];
        match self.cl.subs[i] {
            Ltl::Finally(_) => !v[i] || v[k[0]],
            Ltl::Until(..) => !v[i] || v[k[1]],
            Ltl::Globally(_) => v[i] || !v[k[0]],
            _ => true,
        }
    }
}

/// Searches for a run violating `phi`; exhaustive when it returns `Ok`.
fn labelled_search(phi: &Ltl, k: &Kripke, values: &dyn AtomValues) -> Result<Option<Lasso>, OracleError> {
    let atoms = Atoms::of(phi);
    let cl = Closure::new(phi, &atoms);
    let temporal: Vec<usize> = (0..cl.subs.len()).filter(|&i| cl.is_temporal(i)).collect();
    let bits = temporal.len();
    let per_state = 1usize.checked_shl(bits as u32).unwrap_or(usize::MAX);
    let estimate = k.edges.iter().map(Vec::len).sum::<usize>().saturating_mul(per_state);
    if bits >= 63 || estimate > NODE_BUDGET {
        return Err(OracleError::BoundInsufficient(estimate));
    }
    let lab = Labelled { k, cl, temporal, values };
    let root = lab.cl.root();
    let eventualities: Vec<usize> = lab
        .temporal
        .iter()
        .copied()
        .filter(|&i| !matches!(lab.cl.subs[i], Ltl::Next(_)))
        .collect();

    let mut nodes: Vec<Label> = Vec::new();
    let mut vals: Vec<Vec<bool>> = Vec::new();
    let mut index: HashMap<Label, usize> = HashMap::new();
    let mut succ: Vec<Vec<usize>> = Vec::new();
    let mut parent: Vec<Option<usize>> = Vec::new();
    let mut queue = VecDeque::new();
    let labels_of = |s: usize| (0..k.edges[s].len()).flat_map(move |edge| (0..per_state as u64).map(move |b| Label { state: s, edge, bits: b }));

    for &s in &k.initial {
        for l in labels_of(s) {
            let v = lab.eval(l);
            if !v[root] && !index.contains_key(&l) {
                index.insert(l, nodes.len());
                queue.push_back(nodes.len());
                nodes.push(l);
                vals.push(v);
                succ.push(Vec::new());
                parent.push(None);
            }
        }
    }
    while let Some(n) = queue.pop_front() {
        let l = nodes[n];
        let to = k.edges[l.state][l.edge].target;
        let mut out = Vec::new();
        for m in labels_of(to) {
            let v = lab.eval(m);
            if !lab.consistent(&vals[n], &v) {
                continue;
            }
            let id = match index.get(&m) {
                Some(&id) => id,
                None => {
                    let id = nodes.len();
                    index.insert(m, id);
                    nodes.push(m);
                    vals.push(v);
                    succ.push(Vec::new());
                    parent.push(Some(n));
                    queue.push_back(id);
                    id
                }
            };
            out.push(id);
        }
        succ[n] = out;
    }

    let comp = kosaraju(&succ);
    let ncomp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut cyclic = vec![false; ncomp];
    for (n, out) in succ.iter().enumerate() {
        if out.iter().any(|&m| comp[m] == comp[n]) {
            cyclic[comp[n]] = true;
        }
    }
    let fair = |c: usize| {
        eventualities
            .iter()
            .all(|&e| (0..nodes.len()).any(|n| comp[n] == c && lab.fulfils(e, &vals[n])))
    };
    let Some(c) = (0..ncomp).find(|&c| cyclic[c] && fair(c)) else {
        return Ok(None);
    };
    let entry = (0..nodes.len()).find(|&n| comp[n] == c).expect("component has a node");

    let mut stem = vec![entry];
    while let Some(p) = parent[*stem.last().expect("nonempty")] {
        stem.push(p);
    }
    stem.reverse();
    stem.pop();

    // visit a fulfilling node for each eventuality, then close the cycle
    let mut cycle = vec![entry];
    for &e in &eventualities {
        let at = *cycle.last().expect("nonempty");
        if let Some(path) = path_within(&succ, &comp, at, |n| lab.fulfils(e, &vals[n]), true) {
            cycle.extend(path);
        }
    }
    let at = *cycle.last().expect("nonempty");
    let back = path_within(&succ, &comp, at, |n| n == entry, false).expect("strongly connected");
    cycle.extend(back);
    cycle.pop();

    let loop_start = stem.len();
    let positions: Vec<Label> = stem.iter().chain(&cycle).map(|&n| nodes[n]).collect();
    Ok(Some(Lasso {
        states: positions.iter().map(|l| l.state).collect(),
        edges: positions.iter().map(|l| k.edges[l.state][l.edge]).collect(),
        loop_start,
    }))
}

/// Nodes after `from` on a shortest path inside its component to a node
/// satisfying `goal`. With `allow_here`, `from` itself may be the goal.
fn path_within(succ: &[Vec<usize>], comp: &[usize], from: usize, goal: impl Fn(usize) -> bool, allow_here: bool) -> Option<Vec<usize>> {
    if allow_here && goal(from) {
        return Some(Vec::new());
    }
    let mut via: HashMap<usize, usize> = HashMap::new();
    let mut queue = VecDeque::from([from]);
    while let Some(n) = queue.pop_front() {
        for &m in &succ[n] {
            if comp[m] != comp[from] || via.contains_key(&m) {
                continue;
            }
            via.insert(m, n);
            if goal(m) {
                let mut path = vec![m];
                let mut cur = m;
                while via[&cur] != from {
                    cur = via[&cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            queue.push_back(m);
        }
    }
    None
}

fn kosaraju(succ: &[Vec<usize>]) -> Vec<usize> {
    let n = succ.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut stack = vec![(root, 0usize)];
        while let Some((v, i)) = stack.pop() {
            if i < succ[v].len() {
                stack.push((v, i + 1));
                let w = succ[v][i];
                if !seen[w] {
                    seen[w] = true;
                    stack.push((w, 0));
                }
            } else {
                order.push(v);
            }
        }
    }
    let mut pred = vec![Vec::new(); n];
    for (v, out) in succ.iter().enumerate() {
        for &w in out {
            pred[w].push(v);
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut c = 0;
    for &root in order.iter().rev() {
        if comp[root] != usize::MAX {
            continue;
        }
        comp[root] = c;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for &w in &pred[v] {
                if comp[w] == usize::MAX {
                    comp[w] = c;
                    stack.push(w);
                }
            }
        }
        c += 1;
    }
    comp
}

/// Brute-force verdict for `phi` over every run of `k`: `Ok(None)` when it
/// holds, otherwise a violating lasso re-checked by unrolling.
pub fn oracle_ltl(phi: &Ltl, k: &Kripke, values: &dyn AtomValues, max_len: usize) -> Result<Option<Lasso>, OracleError> {
    if let Some(l) = enumerate(k, max_len, LASSO_BUDGET, |l| !holds_on_lasso(phi, l, values)) {
        return Ok(Some(l));
    }
    let found = labelled_search(phi, k, values)?;
    if let Some(l) = &found {
        assert!(!holds_on_lasso(phi, l, values), "labelled search produced a run satisfying the formula");
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volang::parse_ltl;

    fn lift() -> Kripke {
        let e = |t| Edge { target: t, transition: Some(t) };
        Kripke {
            initial: vec![0],
            edges: vec![vec![e(1)], vec![e(2), e(0)], vec![e(1)]],
        }
    }

    fn floor_is(phi: &Ltl) -> impl Fn(usize, usize, usize) -> bool {
        let atoms = Atoms::of(phi);
        move |a, from, to| match &atoms.list[a] {
            Ltl::State(e) => e.to_string() == format!("floor = {from}") || e.to_string() == "TRUE",
            Ltl::Ba(_) => from != to,
            _ => unreachable!(),
        }
    }

    fn labelled_only(src: &str) -> Option<Lasso> {
        let phi = parse_ltl(src).unwrap();
        labelled_search(&phi, &lift(), &floor_is(&phi)).unwrap()
    }

    #[test]
    fn unrolling_semantics() {
        let phi = parse_ltl("FG({floor = 1})").unwrap();
        let v = floor_is(&phi);
        let e = |t| Edge { target: t, transition: None };
        let stay = Lasso {
            states: vec![0, 1],
            edges: vec![e(1), e(1)],
            loop_start: 1,
        };
        assert!(holds_on_lasso(&phi, &stay, &v));
        let bounce = Lasso {
            states: vec![0, 1],
            edges: vec![e(1), e(0)],
            loop_start: 0,
        };
        assert!(!holds_on_lasso(&phi, &bounce, &v));
    }

    #[test]
    fn lift_verdicts() {
        let phi = parse_ltl("FG({floor = 1})").unwrap();
        let l = oracle_ltl(&phi, &lift(), &floor_is(&phi), 6).unwrap().unwrap();
        assert!(l.is_path_of(&lift()));
        let phi = parse_ltl("G({TRUE})").unwrap();
        assert_eq!(oracle_ltl(&phi, &lift(), &floor_is(&phi), 6).unwrap(), None);
    }

    #[test]
    fn labelled_search_alone_is_complete() {
        assert!(labelled_only("FG({floor = 1})").is_some());
        assert!(labelled_only("F({floor = 2})").is_some());
        assert!(labelled_only("GF({floor = 1})").is_none());
        assert!(labelled_only("G(BA(floor /= floor$0))").is_none());
        assert!(labelled_only("{floor = 0} U {floor = 1}").is_none());
        assert!(labelled_only("X(X({floor = 2}))").is_some());
        assert!(labelled_only("G({TRUE})").is_none());
    }

    #[test]
    fn single_self_loop() {
        let k = Kripke {
            initial: vec![0],
            edges: vec![vec![Edge { target: 0, transition: None }]],
        };
        for (src, holds) in [("G({floor = 0})", true), ("G({floor = 1})", false)] {
            let phi = parse_ltl(src).unwrap();
            assert_eq!(oracle_ltl(&phi, &k, &floor_is(&phi), 3).unwrap().is_none(), holds);
        }
    }
}
