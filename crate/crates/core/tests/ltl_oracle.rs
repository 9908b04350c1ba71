//! The automaton checker against the brute-force oracle on random graphs.

use proptest::prelude::*;
use vdd_core::engine::oracle::{holds_on_lasso, oracle_ltl};
use vdd_core::engine::{ltl, Atoms, Edge, Kripke};
use vdd_core::expr::parse_expr_str;
use vdd_core::volang::Ltl;

const STATE_ATOMS: usize = 3;
const STEP_ATOMS: usize = 2;

fn atom() -> impl Strategy<Value = Ltl> {
    prop_oneof![
        (0..STATE_ATOMS).prop_map(|i| Ltl::State(parse_expr_str(&format!("p{i}")).unwrap())),
        (0..STEP_ATOMS).prop_map(|i| Ltl::Ba(parse_expr_str(&format!("b{i}")).unwrap())),
    ]
}

fn formula() -> impl Strategy<Value = Ltl> {
    atom()
        .prop_recursive(4, 16, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(Ltl::not),
                inner.clone().prop_map(Ltl::next),
                inner.clone().prop_map(Ltl::globally),
                inner.clone().prop_map(Ltl::finally),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Ltl::and(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Ltl::or(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Ltl::implies(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Ltl::Iff(Box::new(a), Box::new(b))),
                (inner.clone(), inner).prop_map(|(a, b)| Ltl::until(a, b)),
            ]
        })
        .prop_filter("depth at most 4", |f| f.depth() <= 4)
}

/// A graph with at least one edge per state, and atom truth tables.
#[derive(Debug, Clone)]
struct Space {
    k: Kripke,
    labels: Vec<[bool; STATE_ATOMS]>,
    steps: Vec<Vec<[bool; STEP_ATOMS]>>,
}

fn space() -> impl Strategy<Value = Space> {
    (1..=15usize)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec((0..n, any::<[bool; STEP_ATOMS]>()), 1..=3), n),
                prop::collection::vec(any::<[bool; STATE_ATOMS]>(), n),
                prop::collection::btree_set(0..n, 1..=2),
            )
        })
        .prop_map(|(out, labels, initial)| {
            let mut edges = Vec::new();
            let mut steps = Vec::new();
            for list in out {
                let mut es: Vec<Edge> = Vec::new();
                let mut bs = Vec::new();
                for (t, b) in list {
                    if es.iter().all(|e| e.target != t) {
                        es.push(Edge { target: t, transition: Some(t) });
                        bs.push(b);
                    }
                }
                edges.push(es);
                steps.push(bs);
            }
            Space {
                k: Kripke { initial: initial.into_iter().collect(), edges },
                labels,
                steps,
            }
        })
}

fn values<'a>(phi: &Ltl, sp: &'a Space) -> impl Fn(usize, usize, usize) -> bool + 'a {
    let names: Vec<(bool, usize)> = Atoms::of(phi)
        .list
        .iter()
        .map(|a| match a {
            Ltl::State(e) => (false, e.to_string()[1..].parse().unwrap()),
            Ltl::Ba(e) => (true, e.to_string()[1..].parse().unwrap()),
            _ => unreachable!(),
        })
        .collect();
    move |a, from, to| {
        let (step, i) = names[a];
        if step {
            let e = sp.k.edges[from].iter().position(|e| e.target == to).unwrap();
            sp.steps[from][e][i]
        } else {
            sp.labels[from][i]
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn checker_agrees_with_oracle(phi in formula(), sp in space()) {
        let v = values(&phi, &sp);
        let fast = ltl::check(&phi, &sp.k, &v).unwrap();
        let slow = oracle_ltl(&phi, &sp.k, &v, 6).unwrap();
        prop_assert_eq!(fast.is_none(), slow.is_none(), "formula {}", phi);
        for lasso in fast.iter().chain(slow.iter()) {
            prop_assert!(lasso.is_path_of(&sp.k));
            prop_assert!(!holds_on_lasso(&phi, lasso, &v));
        }
    }
}
