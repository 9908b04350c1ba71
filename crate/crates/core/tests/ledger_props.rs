use proptest::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::OnceLock;
use vdd_core::engine::Verdict;
use vdd_core::ledger::{
    impact, Change, Discipline, Freshness, ImpactOptions, Ledger, MachineInfo, Matrix, Reason, Record, ResultEntry,
    ScopeIndex, Snapshot, Stage, StageEntry,
};
use vdd_core::project::Project;
use vdd_core::specml::parse_machine;
use vdd_core::volang::VoId;

fn corpus(dir: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(dir)
}

#[derive(Clone)]
struct Aman {
    project: Project,
    index: ScopeIndex,
}

fn aman() -> Aman {
    static BASE: OnceLock<Aman> = OnceLock::new();
    BASE.get_or_init(|| {
        let project = Project::load(&corpus("aman")).unwrap();
        let checked = project.check();
        let index = project.scope_index(&checked.scopes);
        Aman { project, index }
    })
    .clone()
}

fn stale(a: &Aman, change: &Change, opts: ImpactOptions) -> BTreeSet<VoId> {
    impact(change, &a.index, &a.project.frame_items(), opts).unwrap().into_keys().collect()
}

fn subset<T: Clone + Ord + std::fmt::Debug>(items: Vec<T>) -> impl Strategy<Value = BTreeSet<T>> {
    let n = items.len();
    prop::collection::vec(any::<bool>(), n).prop_map(move |bits| items.iter().zip(bits).filter(|(_, b)| *b).map(|(x, _)| x.clone()).collect())
}

fn change_pair() -> impl Strategy<Value = (Change, Change)> {
    let a = aman();
    let machines: Vec<String> = a.project.machine_names();
    let domains: Vec<String> = a.project.domains().into_iter().collect();
    (subset(machines.clone()), subset(machines), subset(domains.clone()), subset(domains)).prop_map(|(m1, m2, d1, d2)| {
        let small = Change {
            modified: m1.clone(),
            domains: d1.clone(),
            ..Default::default()
        };
        let big = Change {
            modified: &m1 | &m2,
            domains: &d1 | &d2,
            ..Default::default()
        };
        (small, big)
    })
}

fn options() -> impl Strategy<Value = ImpactOptions> {
    (any::<bool>(), any::<bool>()).prop_map(|(liberal, transitive)| ImpactOptions {
        discipline: if liberal { Discipline::Liberal } else { Discipline::Strict },
        transitive,
    })
}

fn verdict() -> impl Strategy<Value = Verdict> {
    prop_oneof![Just(Verdict::Pass), Just(Verdict::Fail), Just(Verdict::Inconclusive)]
}

fn freshness() -> impl Strategy<Value = Freshness> {
    prop_oneof![
        Just(Freshness::NotRun),
        verdict().prop_map(|verdict| Freshness::Fresh { verdict }),
        verdict().prop_map(|verdict| Freshness::Stale {
            verdict,
            reason: Reason::TargetChanged { machine: "M0".into() }
        }),
    ]
}

fn vo_id() -> impl Strategy<Value = VoId> {
    (0..4usize, 0..3usize).prop_map(|(r, m)| VoId {
        requirement: format!("REQ{r}"),
        model: format!("M{m}"),
    })
}

fn record() -> impl Strategy<Value = Record> {
    prop_oneof![
        (vo_id(), verdict(), any::<u64>()).prop_map(|(vo, verdict, t)| Record::Result(ResultEntry {
            vo,
            verdict,
            machine_hash: format!("{t:x}"),
            frame_hash: "f".into(),
            vo_hash: "v".into(),
            timestamp: Some(t),
            snapshot: Snapshot::default(),
        })),
        (vo_id(), 0..5usize).prop_map(|(vo, s)| Record::Stage(StageEntry {
            requirement: vo.requirement,
            machine: vo.model,
            stage: Stage::ALL[s],
            machine_hash: "h".into(),
            timestamp: None,
        })),
    ]
}

/// Re-spaces a source text without touching its tokens.
fn respace(src: &str, seps: &[u8]) -> String {
    let mut out = String::new();
    let mut k = 0;
    for line in src.lines().filter(|l| !l.trim_start().starts_with('#')) {
        for word in line.split_whitespace() {
            out.push_str(word);
            out.push_str(match seps[k % seps.len()] % 4 {
                0 => " ",
                1 => "  ",
                2 => "\n",
                _ => "\t\n  ",
            });
            k += 1;
        }
        out.push('\n');
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn impact_is_monotone((small, big) in change_pair(), opts in options()) {
        let a = aman();
        let s = stale(&a, &small, opts);
        let b = stale(&a, &big, opts);
        prop_assert!(s.is_subset(&b), "{:?} not within {:?}", s, b);
        let wide = stale(&a, &big, ImpactOptions { transitive: true, ..opts });
        prop_assert!(b.is_subset(&wide));
    }

    #[test]
    fn strict_vertical_refinement_stales_nothing(parent in 0..2usize, keep in prop::collection::vec(any::<bool>(), 3)) {
        let mut a = aman();
        let parent = ["M0", "M1"][parent].to_string();
        let implements: BTreeSet<String> = a.index.machines[&parent].implements.iter().zip(keep.iter().cycle()).filter(|(_, k)| **k).map(|(d, _)| d.clone()).collect();
        a.index.machines.insert("M9".into(), MachineInfo { refines: Some(parent), implements });
        let change = Change { added: ["M9".to_string()].into(), ..Default::default() };
        let strict = ImpactOptions { discipline: Discipline::Strict, transitive: false };
        prop_assert!(stale(&a, &change, strict).is_empty());
        let transitive = ImpactOptions { transitive: true, ..strict };
        prop_assert!(stale(&a, &change, transitive).is_empty());
    }

    #[test]
    fn matrix_is_a_pure_function(entries in prop::collection::vec((vo_id(), freshness()), 0..12)) {
        let reqs: Vec<String> = (0..4).map(|r| format!("REQ{r}")).collect();
        let machines: Vec<String> = (0..3).map(|m| format!("M{m}")).collect();
        let fresh: BTreeMap<VoId, Freshness> = entries.iter().cloned().collect();
        let reversed: BTreeMap<VoId, Freshness> = entries.iter().rev().cloned().collect::<Vec<_>>().into_iter().rev().collect();
        let x = Matrix::build(&reqs, &machines, &fresh);
        prop_assert_eq!(x.to_csv(), Matrix::build(&reqs, &machines, &fresh).to_csv());
        prop_assert_eq!(x.to_table(), Matrix::build(&reqs, &machines, &reversed).to_table());
        prop_assert_eq!(x.to_csv().lines().count(), reqs.len() + 1);
    }

    #[test]
    fn history_is_append_only(records in prop::collection::vec(record(), 1..10)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vdd.ledger");
        let mut ledger = Ledger::load(&path).unwrap();
        let mut previous = String::new();
        for r in records {
            ledger.append(&path, r).unwrap();
            let text = std::fs::read_to_string(&path).unwrap();
            prop_assert!(text.starts_with(&previous));
            prop_assert_eq!(&Ledger::load(&path).unwrap(), &ledger);
            previous = text;
        }
    }

    #[test]
    fn reformatting_keeps_the_machine_hash(seps in prop::collection::vec(any::<u8>(), 1..16)) {
        let a = aman();
        for m in &a.project.machines {
            let src = std::fs::read_to_string(corpus("aman").join(&m.path)).unwrap();
            let spec = parse_machine(&respace(&src, &seps)).unwrap();
            prop_assert_eq!(a.project.machine_hash(&spec), a.project.machine_hash(&m.item));
        }
    }
}

#[test]
fn renaming_an_event_changes_the_hash() {
    let a = aman();
    let m0 = &a.project.machine("M0").unwrap().item;
    let src = std::fs::read_to_string(corpus("aman/M0.mch")).unwrap();
    let renamed = parse_machine(&src.replace("addAirplane", "insertAirplane")).unwrap();
    assert_ne!(a.project.machine_hash(&renamed), a.project.machine_hash(m0));
}

#[test]
fn a_new_invariant_changes_only_its_machine() {
    let tmp = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(corpus("aman")).unwrap() {
        let p = entry.unwrap().path();
        if p.is_file() {
            std::fs::copy(&p, tmp.path().join(p.file_name().unwrap())).unwrap();
        }
    }
    let before = Project::load(tmp.path()).unwrap().snapshot();
    std::fs::copy(corpus("aman/variants/M1.inv3.mch"), tmp.path().join("M1.mch")).unwrap();
    let after = Project::load(tmp.path()).unwrap().snapshot();
    let change = Change::between(&before, &after);
    assert_eq!(change.modified, BTreeSet::from(["M1".to_string()]));
    assert!(change.added.is_empty() && change.removed.is_empty() && change.domains.is_empty());
}
