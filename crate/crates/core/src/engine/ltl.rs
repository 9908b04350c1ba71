//! Explicit-state LTL checking.
//!
//! The negated formula is put in negation normal form. A product node pairs a
//! state with the set of obligations that must hold at that position. Leaving
//! a node picks an edge of the graph and a cover of the obligations: literals
//! that must hold on the edge, and the obligations handed to the next
//! position. A run violates the formula iff some reachable strongly connected
//! component contains, for every until-obligation, an edge on which it is not
//! pending.

use super::graph::{AtomValues, Atoms, Edge, Kripke, Lasso};
use crate::volang::Ltl;
use std::collections::{BTreeSet, HashMap, VecDeque};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LtlError {
    #[error("formula has {0} until-subformulas; at most 64 are supported")]
    TooManyEventualities(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Node {
    True,
    False,
    Lit(usize, bool),
    And(u32, u32),
    Or(u32, u32),
    Next(u32),
    Until(u32, u32),
    Release(u32, u32),
}

#[derive(Default)]
struct Arena {
    nodes: Vec<Node>,
    index: HashMap<Node, u32>,
}

impl Arena {
    fn add(&mut self, n: Node) -> u32 {
        if let Some(&i) = self.index.get(&n) {
            return i;
        }
        let i = self.nodes.len() as u32;
        self.nodes.push(n);
        self.index.insert(n, i);
        i
    }

    fn nnf(&mut self, phi: &Ltl, neg: bool, atoms: &Atoms) -> u32 {
        let node = match phi {
            Ltl::State(_) | Ltl::Ba(_) => Node::Lit(atoms.id(phi), !neg),
            Ltl::Not(a) => return self.nnf(a, !neg, atoms),
            Ltl::And(a, b) | Ltl::Or(a, b) => {
                let (x, y) = (self.nnf(a, neg, atoms), self.nnf(b, neg, atoms));
                if matches!(phi, Ltl::And(..)) != neg {
                    Node::And(x, y)
                } else {
                    Node::Or(x, y)
                }
            }
            Ltl::Implies(a, b) => {
                let (x, y) = (self.nnf(a, !neg, atoms), self.nnf(b, neg, atoms));
                if neg {
                    Node::And(x, y)
                } else {
                    Node::Or(x, y)
                }
            }
            Ltl::Iff(a, b) => {
                let (pa, na) = (self.nnf(a, false, atoms), self.nnf(a, true, atoms));
                let (pb, nb) = (self.nnf(b, false, atoms), self.nnf(b, true, atoms));
                let (l, r) = if neg {
                    (self.add(Node::And(pa, nb)), self.add(Node::And(na, pb)))
                } else {
                    (self.add(Node::And(pa, pb)), self.add(Node::And(na, nb)))
                };
                Node::Or(l, r)
            }
            Ltl::Next(a) => Node::Next(self.nnf(a, neg, atoms)),
            Ltl::Globally(a) => {
                let x = self.nnf(a, neg, atoms);
                if neg {
                    Node::Until(self.add(Node::True), x)
                } else {
                    Node::Release(self.add(Node::False), x)
                }
            }
            Ltl::Finally(a) => {
                let x = self.nnf(a, neg, atoms);
                if neg {
                    Node::Release(self.add(Node::False), x)
                } else {
                    Node::Until(self.add(Node::True), x)
                }
            }
            Ltl::Until(a, b) => {
                let (x, y) = (self.nnf(a, neg, atoms), self.nnf(b, neg, atoms));
                if neg {
                    Node::Release(x, y)
                } else {
                    Node::Until(x, y)
                }
            }
        };
        self.add(node)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Cover {
    lits: Vec<(usize, bool)>,
    next: Vec<u32>,
}

fn expand(arena: &Arena, todo: &mut Vec<u32>, seen: &mut BTreeSet<u32>, lits: &mut BTreeSet<(usize, bool)>, next: &mut BTreeSet<u32>, out: &mut Vec<Cover>) {
    let Some(f) = todo.pop() else {
        out.push(Cover {
            lits: lits.iter().copied().collect(),
            next: next.iter().copied().collect(),
        });
        return;
    };
    if !seen.insert(f) {
        expand(arena, todo, seen, lits, next, out);
        todo.push(f);
        return;
    }
    // each branch works on copies so the caller's state is untouched
    let mut branch = |adds: &[u32], lit: Option<(usize, bool)>, nexts: &[u32]| {
        if let Some((a, v)) = lit {
            if lits.contains(&(a, !v)) {
                return;
            }
        }
        let (mut t, mut s, mut l, mut n) = (todo.clone(), seen.clone(), lits.clone(), next.clone());
        t.extend_from_slice(adds);
        if let Some(x) = lit {
            l.insert(x);
        }
        n.extend(nexts.iter().copied());
        expand(arena, &mut t, &mut s, &mut l, &mut n, out);
    };
    match arena.nodes[f as usize] {
        Node::True => branch(&[], None, &[]),
        Node::False => {}
        Node::Lit(a, v) => branch(&[], Some((a, v)), &[]),
        Node::And(x, y) => branch(&[x, y], None, &[]),
        Node::Or(x, y) => {
            branch(&[x], None, &[]);
            branch(&[y], None, &[]);
        }
        Node::Next(x) => branch(&[], None, &[x]),
        Node::Until(x, y) => {
            branch(&[y], None, &[]);
            branch(&[x], None, &[f]);
        }
        Node::Release(x, y) => {
            branch(&[x, y], None, &[]);
            branch(&[y], None, &[f]);
        }
    }
}

struct ProductEdge {
    target: usize,
    edge: Edge,
    /// Bit `k` set: the k-th until is not pending after this step.
    accept: u64,
}

struct Product {
    nodes: Vec<(usize, usize)>,
    edges: Vec<Vec<ProductEdge>>,
    parent: Vec<Option<(usize, usize)>>,
    full: u64,
}

fn build_product(phi: &Ltl, k: &Kripke, values: &dyn AtomValues) -> Result<Product, LtlError> {
    let atoms = Atoms::of(phi);
    let mut arena = Arena::default();
    let root = arena.nnf(phi, true, &atoms);
    let untils: Vec<u32> = (0..arena.nodes.len() as u32)
        .filter(|&i| matches!(arena.nodes[i as usize], Node::Until(..)))
        .collect();
    if untils.len() > 64 {
        return Err(LtlError::TooManyEventualities(untils.len()));
    }
    let full = if untils.len() == 64 { u64::MAX } else { (1u64 << untils.len()) - 1 };

    let mut gammas: Vec<Vec<u32>> = Vec::new();
    let mut gamma_index: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut covers: Vec<Vec<Cover>> = Vec::new();
    let mut intern = |g: Vec<u32>, gammas: &mut Vec<Vec<u32>>, covers: &mut Vec<Vec<Cover>>| -> usize {
        if let Some(&i) = gamma_index.get(&g) {
            return i;
        }
        let mut out = Vec::new();
        let mut todo: Vec<u32> = g.iter().rev().copied().collect();
        expand(&arena, &mut todo, &mut BTreeSet::new(), &mut BTreeSet::new(), &mut BTreeSet::new(), &mut out);
        out.sort();
        out.dedup();
        let i = gammas.len();
        gamma_index.insert(g.clone(), i);
        gammas.push(g);
        covers.push(out);
        i
    };

    let mut p = Product {
        nodes: Vec::new(),
        edges: Vec::new(),
        parent: Vec::new(),
        full,
    };
    let mut node_index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut queue = VecDeque::new();
    let g0 = intern(vec![root], &mut gammas, &mut covers);
    for &s in &k.initial {
        if let std::collections::hash_map::Entry::Vacant(v) = node_index.entry((s, g0)) {
            v.insert(p.nodes.len());
            queue.push_back(p.nodes.len());
            p.nodes.push((s, g0));
            p.edges.push(Vec::new());
            p.parent.push(None);
        }
    }
    while let Some(n) = queue.pop_front() {
        let (s, g) = p.nodes[n];
        let mut out = Vec::new();
        for ci in 0..covers[g].len() {
            for &e in &k.edges[s] {
                let cover = &covers[g][ci];
                if !cover.lits.iter().all(|&(a, v)| values.holds(a, s, e.target) == v) {
                    continue;
                }
                let accept = untils
                    .iter()
                    .enumerate()
                    .filter(|(_, u)| cover.next.binary_search(u).is_err())
                    .fold(0u64, |m, (i, _)| m | (1 << i));
                let next = cover.next.clone();
                let g2 = intern(next, &mut gammas, &mut covers);
                let key = (e.target, g2);
                let target = match node_index.get(&key) {
                    Some(&t) => t,
                    None => {
                        let t = p.nodes.len();
                        node_index.insert(key, t);
                        p.nodes.push(key);
                        p.edges.push(Vec::new());
                        p.parent.push(Some((n, out.len())));
                        queue.push_back(t);
                        t
                    }
                };
                out.push(ProductEdge { target, edge: e, accept });
            }
        }
        p.edges[n] = out;
    }
    Ok(p)
}

/// Strongly connected components, iteratively (Tarjan).
fn components(p: &Product) -> Vec<usize> {
    let n = p.nodes.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![usize::MAX; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut next_comp = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut i)) = call.last_mut() {
            if *i < p.edges[v].len() {
                let w = p.edges[v][*i].target;
                *i += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}

/// Shortest sequence of edges inside component `c` from `from`, ending with an
/// edge accepted by `goal`. Returns (node, edge index) pairs.
fn path_in(p: &Product, comp: &[usize], c: usize, from: usize, goal: impl Fn(&ProductEdge) -> bool) -> Option<Vec<(usize, usize)>> {
    let mut via: HashMap<usize, Option<(usize, usize)>> = HashMap::new();
    via.insert(from, None);
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        for (i, e) in p.edges[v].iter().enumerate() {
            if comp[e.target] != c {
                continue;
            }
            if goal(e) {
                let mut path = vec![(v, i)];
                let mut cur = v;
                while let Some(Some((u, j))) = via.get(&cur) {
                    path.push((*u, *j));
                    cur = *u;
                }
                path.reverse();
                return Some(path);
            }
            if let std::collections::hash_map::Entry::Vacant(slot) = via.entry(e.target) {
                slot.insert(Some((v, i)));
                queue.push_back(e.target);
            }
        }
    }
    None
}

/// Checks `phi` on every run of `k`. `Ok(None)` means it holds; otherwise the
/// returned lasso is a run violating it, with a shortest stem in the product.
pub fn check(phi: &Ltl, k: &Kripke, values: &dyn AtomValues) -> Result<Option<Lasso>, LtlError> {
    let p = build_product(phi, k, values)?;
    let comp = components(&p);
    let ncomp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut accepting = vec![0u64; ncomp];
    let mut cyclic = vec![false; ncomp];
    for (v, out) in p.edges.iter().enumerate() {
        for e in out.iter().filter(|e| comp[e.target] == comp[v]) {
            cyclic[comp[v]] = true;
            accepting[comp[v]] |= e.accept;
        }
    }
    // nodes are numbered in BFS order, so the first hit has a shortest stem
    let Some(start) = (0..p.nodes.len()).find(|&v| cyclic[comp[v]] && accepting[comp[v]] == p.full) else {
        return Ok(None);
    };
    let c = comp[start];

    let mut stem = Vec::new();
    let mut cur = start;
    while let Some((u, i)) = p.parent[cur] {
        stem.push((u, i));
        cur = u;
    }
    stem.reverse();

    let mut cycle: Vec<(usize, usize)> = Vec::new();
    let mut at = start;
    let mut seen = 0u64;
    for bit in 0..64 {
        let mask = 1u64 << bit;
        if p.full & mask == 0 || seen & mask != 0 {
            continue;
        }
        let leg = path_in(&p, &comp, c, at, |e| e.accept & mask != 0).expect("accepting component");
        for &(v, i) in &leg {
            seen |= p.edges[v][i].accept;
        }
        at = p.edges[leg.last().expect("nonempty").0][leg.last().expect("nonempty").1].target;
        cycle.extend(leg);
    }
    if at != start || cycle.is_empty() {
        let leg = path_in(&p, &comp, c, at, |e| e.target == start).expect("strongly connected");
        cycle.extend(leg);
    }

    let mut lasso = Lasso {
        states: Vec::new(),
        edges: Vec::new(),
        loop_start: stem.len(),
    };
    for &(v, i) in stem.iter().chain(&cycle) {
        lasso.states.push(p.nodes[v].0);
        lasso.edges.push(p.edges[v][i].edge);
    }
    Ok(Some(lasso))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volang::parse_ltl;

    /// Three floors 0..2 with free up/down moves; atom `{x = n}` true on state n.
    fn lift() -> Kripke {
        let e = |t| Edge { target: t, transition: Some(t) };
        Kripke {
            initial: vec![0],
            edges: vec![vec![e(1)], vec![e(2), e(0)], vec![e(1)]],
        }
    }

    fn values_for(phi: &Ltl) -> impl Fn(usize, usize, usize) -> bool {
        let atoms = Atoms::of(phi);
        move |a, from, to| {
            let text = match &atoms.list[a] {
                Ltl::State(e) | Ltl::Ba(e) => e.to_string(),
                _ => unreachable!(),
            };
            match text.as_str() {
                "x = 0" => from == 0,
                "x = 1" => from == 1,
                "x = 2" => from == 2,
                "x /= x$0" => from != to,
                "TRUE" => true,
                other => panic!("unexpected atom {other}"),
            }
        }
    }

    fn run(src: &str) -> Option<Lasso> {
        let phi = parse_ltl(src).unwrap();
        let k = lift();
        let lasso = check(&phi, &k, &values_for(&phi)).unwrap();
        if let Some(l) = &lasso {
            assert!(l.is_path_of(&k));
        }
        lasso
    }

    #[test]
    fn verdicts_on_lift() {
        assert!(run("FG({x = 1})").is_some());
        assert!(run("G({TRUE})").is_none());
        assert!(run("GF({x = 1})").is_none());
        assert!(run("F({x = 2})").is_some());
        assert!(run("G({x = 0} => X({x = 1}))").is_none());
        assert!(run("G(BA(x /= x$0))").is_none());
        assert!(run("{x = 0} U {x = 1}").is_none());
        assert!(run("X(X({x = 2}))").is_some());
    }

    #[test]
    fn lasso_shape() {
        let l = run("F({x = 2})").unwrap();
        // the shortest counterexample bounces between floors 0 and 1 forever
        assert_eq!(l.states, vec![0, 1]);
        assert_eq!(l.loop_start, 0);
    }
}
