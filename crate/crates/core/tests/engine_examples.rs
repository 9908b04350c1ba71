use std::path::PathBuf;
use vdd_core::engine::oracle::oracle_ltl;
use vdd_core::engine::{
    eval_exists, eval_inv, eval_ltl, eval_trace, eval_vo, ltl, replay, AtomTable, Atoms, Evidence, Kripke, Verdict,
    VoNode,
};
use vdd_core::expr::parse_expr_str;
use vdd_core::specml::{explore, parse_context, parse_machine, Model, ModelOptions, StateSpace, DEFAULT_CAP};
use vdd_core::volang::{parse_ltl, parse_vo, Scenario, TaskKind, VoExpr};

fn corpus(path: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(path);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn load(machine: &str, ctx: Option<&str>) -> (Model, StateSpace) {
    let ctxs: Vec<_> = ctx.map(|c| parse_context(&corpus(c)).unwrap()).into_iter().collect();
    let model = Model::compile(&parse_machine(&corpus(machine)).unwrap(), &ctxs, &ModelOptions::default()).unwrap();
    let space = explore(&model, DEFAULT_CAP).unwrap();
    (model, space)
}

fn lift() -> (Model, StateSpace) {
    load("lift/M0.mch", None)
}

fn pred(s: &str) -> vdd_core::expr::Expr {
    parse_expr_str(s).unwrap()
}

fn scenario(src: &str) -> Scenario {
    let vo = parse_vo(&format!("R/M: TRACE({src})")).unwrap();
    match vo.expr {
        VoExpr::Task(t) => match t.kind {
            TaskKind::Trace(s) => s,
            _ => unreachable!(),
        },
        _ => unreachable!(),
    }
}

fn oracle_verdict(src: &str, model: &Model, space: &StateSpace) -> Verdict {
    let phi = parse_ltl(src).unwrap();
    let k = Kripke::from_space(space);
    let table = AtomTable::build(&Atoms::of(&phi), model, space, &k).unwrap();
    match oracle_ltl(&phi, &k, &table, 8).unwrap() {
        None => Verdict::Pass,
        Some(_) => Verdict::Fail,
    }
}

#[test]
fn lift_eventually_always_first_floor_fails() {
    let (m, sp) = lift();
    let r = eval_ltl(&parse_ltl("FG({floor = 1})").unwrap(), &m, &sp, None);
    assert_eq!(r.verdict, Verdict::Fail);
    let Some(Evidence::Lasso(l)) = &r.evidence else { panic!("{r:?}") };
    // the cycle must leave floor 1 somewhere
    assert!(l.cycle().iter().any(|e| sp.states[e.target].render(&sp.var_names) != "floor=1"));
    assert_eq!(oracle_verdict("FG({floor = 1})", &m, &sp), Verdict::Fail);
}

#[test]
fn tautology_passes() {
    for (m, sp) in [lift(), load("aman/M0.mch", Some("aman/AmanCtx.ctx"))] {
        assert_eq!(eval_ltl(&parse_ltl("G({TRUE})").unwrap(), &m, &sp, None).verdict, Verdict::Pass);
        assert_eq!(eval_inv(&pred("TRUE"), &m, &sp, None).verdict, Verdict::Pass);
        assert_eq!(eval_exists(&pred("FALSE"), &m, &sp, None).verdict, Verdict::Fail);
    }
}

#[test]
fn req1_passes_on_add_only_schedule() {
    let (m, sp) = load("aman/M0.mch", Some("aman/AmanCtx.ctx"));
    let vo = corpus("aman/aman.vo");
    let line = vo.lines().find(|l| l.starts_with("REQ1/")).unwrap();
    let vo = parse_vo(line).unwrap();
    let r = eval_vo(&vo.expr, &m, &sp);
    assert_eq!(r.verdict, Verdict::Pass);
    let VoExpr::Task(t) = &vo.expr else { panic!() };
    let TaskKind::Ltl(phi) = &t.kind else { panic!() };
    assert_eq!(oracle_verdict(&phi.to_string(), &m, &sp), Verdict::Pass);
}

#[test]
fn req5_on_compliant_and_gap_variants() {
    let (m, sp) = load("aman/M1.mch", Some("aman/AmanCtx.ctx"));
    let vo = corpus("aman/aman.vo");
    let vo = parse_vo(vo.lines().find(|l| l.starts_with("REQ5/")).unwrap()).unwrap();
    assert_eq!(eval_vo(&vo.expr, &m, &sp).verdict, Verdict::Pass);

    let (m, sp) = load("aman/variants/M1.gap2.mch", Some("aman/AmanCtx.ctx"));
    let r = eval_vo(&vo.expr, &m, &sp);
    assert_eq!(r.verdict, Verdict::Fail);
    let VoNode::Task { result, .. } = &r.node else { panic!() };
    let Some(Evidence::Trace { transitions, .. }) = &result.evidence else { panic!() };
    assert!(transitions.is_empty());
    assert_eq!(replay(&vo.expr, &r, &m, &sp).unwrap(), 1);
}

#[test]
fn lift_scenarios() {
    let (m, sp) = lift();
    let r = eval_trace(&scenario("inc; inc | floor = 2"), &m, &sp, None);
    assert_eq!(r.verdict, Verdict::Pass);
    assert_eq!(r.carrier.len(), 1);
    assert_eq!(sp.render_state(r.carrier[0]), "floor=2");

    let r = eval_trace(&scenario("| TRUE"), &m, &sp, None);
    assert_eq!(r.verdict, Verdict::Pass);
    assert_eq!(r.carrier, sp.initial);

    let r = eval_exists(&pred("floor = 2"), &m, &sp, None);
    assert_eq!(r.verdict, Verdict::Pass);
    let Some(Evidence::Trace { transitions, .. }) = &r.evidence else { panic!() };
    let events: Vec<_> = transitions.iter().map(|&t| sp.transitions[t].event.as_str()).collect();
    assert_eq!(events, ["inc", "inc"]);
}

#[test]
fn adding_the_same_airplane_twice_is_blocked() {
    let (m, sp) = load("aman/M0.mch", Some("aman/AmanCtx.ctx"));
    let r = eval_trace(&scenario("addAirplane(a); addAirplane(a)"), &m, &sp, None);
    assert_eq!(r.verdict, Verdict::Fail);
    assert_eq!(r.error.as_ref().unwrap().code(), "E-ENG-010");
    assert!(r.error.as_ref().unwrap().to_string().starts_with("step 2 "));
    let r = eval_exists(&pred("card(scheduledAirplanes) = 3"), &m, &sp, None);
    assert_eq!(r.verdict, Verdict::Pass);
}

#[test]
fn sequence_checks_the_invariant_on_the_carrier_only() {
    let (m, sp) = lift();
    let vo = parse_vo("REQ2/M0: T1 := TRACE(inc; inc | floor = 2) ; INV(floor = 2)").unwrap();
    let r = eval_vo(&vo.expr, &m, &sp);
    assert_eq!(r.verdict, Verdict::Pass);
    assert_eq!(eval_inv(&pred("floor = 2"), &m, &sp, None).verdict, Verdict::Fail);
    replay(&vo.expr, &r, &m, &sp).unwrap();
}

#[test]
fn and_or_evaluate_both_sides() {
    let (m, sp) = lift();
    let vo = parse_vo("R/M0: INV(floor >= 0) & INV(floor = 0)").unwrap();
    let r = eval_vo(&vo.expr, &m, &sp);
    assert_eq!(r.verdict, Verdict::Fail);
    let VoNode::And { left, right } = &r.node else { panic!() };
    assert_eq!((left.verdict, right.verdict), (Verdict::Pass, Verdict::Fail));
    let vo = parse_vo("R/M0: INV(floor = 0) or INV(floor >= 0)").unwrap();
    assert_eq!(eval_vo(&vo.expr, &m, &sp).verdict, Verdict::Pass);
}

#[test]
fn empty_carrier_is_reported() {
    let (m, sp) = lift();
    let vo = parse_vo("R/M0: (EXISTS(floor = 0) & EXISTS(floor = 1)) ; INV(TRUE)").unwrap();
    let r = eval_vo(&vo.expr, &m, &sp);
    assert_eq!(r.verdict, Verdict::Inconclusive);
    assert_eq!(r.error.unwrap().code(), "E-ENG-020");
}

#[test]
fn unknown_variable_is_reported() {
    let (m, sp) = lift();
    let r = eval_ltl(&parse_ltl("G({height = 1})").unwrap(), &m, &sp, None);
    assert_eq!(r.verdict, Verdict::Inconclusive);
    assert_eq!(r.error.unwrap().code(), "E-ENG-001");
}

#[test]
fn lift_counterexamples_replay() {
    let (m, sp) = lift();
    for src in ["FG({floor = 1})", "F({floor = 2})", "G(BA(floor = floor$0 + 1))", "X({floor = 0})"] {
        let vo = parse_vo(&format!("R/M0: LTL({src})")).unwrap();
        let r = eval_vo(&vo.expr, &m, &sp);
        assert_eq!(r.verdict, Verdict::Fail, "{src}");
        assert_eq!(replay(&vo.expr, &r, &m, &sp).unwrap(), 1);
        assert_eq!(oracle_verdict(src, &m, &sp), Verdict::Fail);
    }
}

#[test]
fn deadlocks_stutter() {
    let (m, sp) = load("aman/M0.mch", Some("aman/AmanCtx.ctx"));
    // the full schedule is a deadlock, so every run eventually stops changing
    let phi = parse_ltl("FG(BA(scheduledAirplanes = scheduledAirplanes$0))").unwrap();
    assert_eq!(eval_ltl(&phi, &m, &sp, None).verdict, Verdict::Pass);
    let k = Kripke::from_space(&sp);
    let table = AtomTable::build(&Atoms::of(&phi), &m, &sp, &k).unwrap();
    assert!(ltl::check(&phi, &k, &table).unwrap().is_none());
}
