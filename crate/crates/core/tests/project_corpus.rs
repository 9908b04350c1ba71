use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use vdd_core::ledger::{impact, Change, Discipline, ImpactOptions};
use vdd_core::project::Project;

fn corpus(dir: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(dir)
}

/// Copies the top-level files of a corpus project into a fresh directory.
fn copy(dir: &str) -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(corpus(dir)).unwrap() {
        let p = entry.unwrap().path();
        if p.is_file() {
            std::fs::copy(&p, tmp.path().join(p.file_name().unwrap())).unwrap();
        }
    }
    tmp
}

fn variant(name: &str) -> String {
    std::fs::read_to_string(corpus("aman/variants").join(name)).unwrap()
}

fn stale_after(root: &Path, edit: impl FnOnce(&Path), discipline: Discipline) -> BTreeSet<String> {
    let before = Project::load(root).unwrap();
    let checked = before.check();
    assert!(checked.is_clean(), "{:?}", checked.diagnostics);
    let old = before.snapshot();
    edit(root);
    let after = Project::load(root).unwrap();
    let checked = after.check();
    assert!(!checked.has_errors(), "{:?}", checked.diagnostics);
    let new = after.snapshot();
    let index = after.scope_index(&checked.scopes);
    let opts = ImpactOptions {
        discipline,
        transitive: false,
    };
    impact(&Change::between(&old, &new), &index, &after.frame_items(), opts)
        .unwrap()
        .keys()
        .map(|id| id.to_string())
        .collect()
}

#[test]
fn corpora_check_clean() {
    for dir in ["aman", "lift"] {
        let p = Project::load(&corpus(dir)).unwrap();
        let c = p.check();
        assert!(c.is_clean(), "{dir}: {:?} {:?} {:?}", c.diagnostics, c.runtime, c.violations);
        assert_eq!(c.scopes.len(), p.vos.len());
    }
    let p = Project::load(&corpus("aman")).unwrap();
    assert_eq!(p.plan().unwrap().to_string(), std::fs::read_to_string(corpus("golden/aman.plan")).unwrap());
}

#[test]
fn scopes_follow_declaring_machines() {
    let p = Project::load(&corpus("aman")).unwrap();
    let c = p.check();
    let scope = |id: &str| c.scopes.iter().find(|(k, _)| k.to_string() == id).unwrap().1.clone();
    assert_eq!(scope("REQ1/M0"), BTreeSet::from(["Aircraft".to_string(), "Schedule".to_string()]));
    assert!(scope("REQ5/M1").contains("Time"));
}

#[test]
fn two_machine_domains_are_rejected() {
    let tmp = copy("aman");
    std::fs::write(tmp.path().join("aman.frame"), variant("two-machines.frame")).unwrap();
    let c = Project::load(tmp.path()).unwrap().check();
    assert!(c.diagnostics.iter().any(|d| d.diagnostic.code == "E-FRAME-001"), "{:?}", c.diagnostics);
}

fn codes_with_m1_refining(target: &str) -> Vec<String> {
    let tmp = copy("aman");
    let m1 = std::fs::read_to_string(tmp.path().join("M1.mch")).unwrap();
    std::fs::write(tmp.path().join("M1.mch"), m1.replace("refines M0", &format!("refines {target}"))).unwrap();
    let c = Project::load(tmp.path()).unwrap().check_static();
    c.diagnostics.iter().map(|d| d.diagnostic.code.to_string()).collect()
}

#[test]
fn refinement_targets_are_checked() {
    let unknown = codes_with_m1_refining("M9");
    assert!(unknown.iter().any(|c| c == "E-TYPE-014"), "{unknown:?}");
    let cycle = codes_with_m1_refining("M1");
    assert!(cycle.iter().any(|c| c == "E-TYPE-015"), "{cycle:?}");
}

#[test]
fn seeded_separation_violation_is_found() {
    let tmp = copy("aman");
    std::fs::write(tmp.path().join("M1.mch"), variant("M1.gap2-inv.mch")).unwrap();
    let c = Project::load(tmp.path()).unwrap().check();
    assert!(!c.has_errors(), "{:?}", c.diagnostics);
    assert!(!c.violations.is_empty());
    assert!(c.violations.iter().all(|v| v.machine == "M1"));
    // the seeded start state itself violates, so its trace is empty
    assert!(c.violations.iter().any(|v| v.trace.is_empty()));
}

#[test]
fn reformatting_keeps_hashes() {
    let tmp = copy("aman");
    let before = Project::load(tmp.path()).unwrap();
    let src = std::fs::read_to_string(tmp.path().join("M1.mch")).unwrap();
    let reformatted: String = src.lines().map(|l| format!("   {}  \n\n", l.trim())).collect();
    std::fs::write(tmp.path().join("M1.mch"), reformatted).unwrap();
    let after = Project::load(tmp.path()).unwrap();
    assert_eq!(before.snapshot(), after.snapshot());
    assert_eq!(before.hash_artifacts(), after.hash_artifacts());
}

#[test]
fn editing_the_schedule_stales_both_schedule_vos() {
    let tmp = copy("aman");
    let stale = stale_after(
        tmp.path(),
        |root| std::fs::write(root.join("M0.mch"), variant("M0.remove.mch")).unwrap(),
        Discipline::Strict,
    );
    assert_eq!(stale, BTreeSet::from(["REQ1/M0".to_string(), "REQ5/M1".to_string()]));
}

#[test]
fn horizontal_user_machine_stales_nothing() {
    let tmp = copy("aman");
    let stale = stale_after(
        tmp.path(),
        |root| std::fs::write(root.join("M2.mch"), variant("M2.user.mch")).unwrap(),
        Discipline::Strict,
    );
    assert!(stale.is_empty(), "{stale:?}");
}

#[test]
fn vertical_machine_depends_on_discipline() {
    let add = |root: &Path| std::fs::write(root.join("M2.mch"), variant("M2.vertical.mch")).unwrap();
    let tmp = copy("aman");
    assert!(stale_after(tmp.path(), add, Discipline::Strict).is_empty());
    let tmp = copy("aman");
    assert_eq!(
        stale_after(tmp.path(), add, Discipline::Liberal),
        BTreeSet::from(["REQ1/M0".to_string(), "REQ5/M1".to_string()])
    );
}
