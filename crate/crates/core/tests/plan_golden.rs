use std::path::Path;
use vdd_core::frame::{parse_frame, Choices, Expansion, SubframeChoice};
use vdd_core::plan::{derive_plan, StepKind};

fn corpus(rel: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(rel);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn aman_choices() -> Choices {
    let mut schedule = SubframeChoice::uniform(Expansion::Deferred);
    schedule.overrides.insert("Aircraft".into(), Expansion::Immediate);
    [
        ("ScheduleSub".to_string(), schedule),
        ("UserSub".to_string(), SubframeChoice::uniform(Expansion::Immediate)),
    ]
    .into()
}

#[test]
fn aman_plan_matches_golden() {
    let main = parse_frame(&corpus("aman/aman.frame")).unwrap();
    let subs = [
        parse_frame(&corpus("aman/schedule.frame")).unwrap(),
        parse_frame(&corpus("aman/user.frame")).unwrap(),
    ];
    let plan = derive_plan(&main, &subs, &aman_choices()).unwrap();
    assert_eq!(plan.to_string(), corpus("golden/aman.plan"));
    let steps: Vec<(Vec<&str>, Vec<&str>)> = plan
        .steps
        .iter()
        .map(|s| {
            (
                s.domains.iter().map(|d| d.name.as_str()).collect(),
                s.justification.iter().map(|g| g.as_str()).collect(),
            )
        })
        .collect();
    assert_eq!(
        steps,
        vec![
            (vec!["Schedule", "Aircraft"], vec!["2", "3a"]),
            (vec!["Time"], vec!["3a", "4"]),
            (vec!["Interaction"], vec!["1", "3a"]),
            (vec!["HoldUnhold", "Move", "Zoom"], vec!["1"]),
            (vec!["Display"], vec!["5"]),
        ]
    );
    let kinds: Vec<StepKind> = plan.steps.iter().map(|s| s.kind).collect();
    assert_eq!(
        kinds,
        [
            StepKind::Introduce,
            StepKind::VerticalRefine,
            StepKind::HorizontalRefine,
            StepKind::HorizontalRefine,
            StepKind::HorizontalRefine
        ]
    );
}

#[test]
fn lift_plan_matches_golden() {
    let main = parse_frame(&corpus("lift/lift.frame")).unwrap();
    let subs = [parse_frame(&corpus("lift/doors.frame")).unwrap()];
    let choices: Choices = [("DoorsSub".to_string(), SubframeChoice::uniform(Expansion::Deferred))].into();
    let plan = derive_plan(&main, &subs, &choices).unwrap();
    assert_eq!(plan.to_string(), corpus("golden/lift.plan"));
    let order: Vec<&str> = plan.steps.iter().flat_map(|s| s.domains.iter().map(|d| d.name.as_str())).collect();
    assert_eq!(order[..3], ["Floors", "Doors", "Buttons"]);
}
