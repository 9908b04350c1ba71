use proptest::prelude::*;
use vdd_core::engine::{eval_exists, eval_vo, replay, Verdict};
use vdd_core::expr::parse_expr_str;
use vdd_core::specml::{explore, parse_machine, Model, ModelOptions, StateSpace, DEFAULT_CAP};
use vdd_core::volang::{parse_ltl, parse_vo, Ltl, VoExpr};

/// A lift over floors 0..4 whose upward moves stop at `limit`.
fn lift(limit: i64) -> (Model, StateSpace) {
    let src = format!(
        "machine L variables floor : 0..4 events
         event INITIALISATION then floor := 0 end
         event inc when floor < {limit} then floor := floor + 1 end
         event dec when floor > 0 then floor := floor - 1 end
         event reset when floor = 4 then floor := 0 end end"
    );
    let m = Model::compile(&parse_machine(&src).unwrap(), &[], &ModelOptions::default()).unwrap();
    let sp = explore(&m, DEFAULT_CAP).unwrap();
    (m, sp)
}

fn verdict() -> impl Strategy<Value = Verdict> {
    prop_oneof![Just(Verdict::Pass), Just(Verdict::Fail), Just(Verdict::Inconclusive)]
}

/// Truth value on the order FAIL < INCONCLUSIVE < PASS.
fn rank(v: Verdict) -> u8 {
    match v {
        Verdict::Fail => 0,
        Verdict::Inconclusive => 1,
        Verdict::Pass => 2,
    }
}

fn task_src() -> impl Strategy<Value = String> {
    prop_oneof![
        (0..5i64).prop_map(|n| format!("INV(floor <= {n})")),
        (0..5i64).prop_map(|n| format!("EXISTS(floor = {n})")),
        (0..5i64).prop_map(|n| format!("EXISTS(floor >= {n})")),
        (0..3usize, prop::option::of(0..5i64)).prop_map(|(k, fin)| {
            let steps = vec!["inc"; k].join("; ");
            match fin {
                Some(n) => format!("TRACE({steps} | floor >= {n})"),
                None => format!("TRACE({steps})"),
            }
        }),
        (0..5i64).prop_map(|n| format!("LTL(F({{floor = {n}}}))")),
        (0..5i64).prop_map(|n| format!("LTL(G({{floor < {n}}} => X({{floor <= {n}}})))")),
    ]
}

fn state_atom() -> impl Strategy<Value = Ltl> {
    prop_oneof![
        (0..5i64).prop_map(|n| parse_ltl(&format!("{{floor = {n}}}")).unwrap()),
        (0..5i64).prop_map(|n| parse_ltl(&format!("{{floor < {n}}}")).unwrap()),
        Just(parse_ltl("BA(floor = floor$0 + 1)").unwrap()),
        Just(parse_ltl("BA(floor$0 = 4)").unwrap()),
    ]
}

fn formula() -> impl Strategy<Value = Ltl> {
    state_atom()
        .prop_recursive(4, 12, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(Ltl::not),
                inner.clone().prop_map(Ltl::next),
                inner.clone().prop_map(Ltl::globally),
                inner.clone().prop_map(Ltl::finally),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Ltl::and(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Ltl::or(a, b)),
                (inner.clone(), inner).prop_map(|(a, b)| Ltl::until(a, b)),
            ]
        })
        .prop_filter("depth at most 4", |f| f.depth() <= 4)
}

proptest! {
    #[test]
    fn kleene_tables(a in verdict(), b in verdict()) {
        prop_assert_eq!(rank(a.and(b)), rank(a).min(rank(b)));
        prop_assert_eq!(rank(a.or(b)), rank(a).max(rank(b)));
    }

    #[test]
    fn and_or_follow_their_children(a in task_src(), b in task_src(), limit in 1..5i64) {
        let (m, sp) = lift(limit);
        for op in ["&", "or"] {
            let vo = parse_vo(&format!("R/L: ({a}) {op} ({b})")).unwrap();
            let (VoExpr::And(x, y) | VoExpr::Or(x, y)) = &vo.expr else { unreachable!() };
            let whole = eval_vo(&vo.expr, &m, &sp).verdict;
            let (l, r) = (eval_vo(x, &m, &sp).verdict, eval_vo(y, &m, &sp).verdict);
            prop_assert_eq!(whole, if op == "&" { l.and(r) } else { l.or(r) });
        }
    }

    #[test]
    fn sequence_is_associative(a in task_src(), b in task_src(), c in task_src(), limit in 1..5i64) {
        let (m, sp) = lift(limit);
        let left = parse_vo(&format!("R/L: ({a} ; {b}) ; {c}")).unwrap();
        let right = parse_vo(&format!("R/L: {a} ; ({b} ; {c})")).unwrap();
        let (x, y) = (eval_vo(&left.expr, &m, &sp), eval_vo(&right.expr, &m, &sp));
        prop_assert_eq!(x.verdict, y.verdict);
        prop_assert_eq!(x.carrier, y.carrier);
    }

    #[test]
    fn exists_is_monotone_in_transitions(n in 0..5i64, lo in 1..5i64, extra in 0..3i64) {
        let hi = (lo + extra).min(4);
        let p = parse_expr_str(&format!("floor = {n}")).unwrap();
        let (m, sp) = lift(lo);
        let (m2, sp2) = lift(hi);
        if eval_exists(&p, &m, &sp, None).verdict == Verdict::Pass {
            prop_assert_eq!(eval_exists(&p, &m2, &sp2, None).verdict, Verdict::Pass);
        }
    }

    #[test]
    fn evidence_replays(phi in formula(), a in task_src(), limit in 1..5i64) {
        let (m, sp) = lift(limit);
        for src in [format!("LTL({phi})"), format!("{a} ; LTL({phi})"), a.clone()] {
            let vo = parse_vo(&format!("R/L: {src}")).unwrap();
            let r = eval_vo(&vo.expr, &m, &sp);
            prop_assert!(replay(&vo.expr, &r, &m, &sp).is_ok(), "{}: {:?}", src, replay(&vo.expr, &r, &m, &sp));
        }
    }
}
