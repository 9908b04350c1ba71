//! Refinement plans derived from problem frames by the structuring guidelines:
//!
//! 1. domains sharing an interface refine each other horizontally;
//! 2. the domain with the most incoming interfaces comes first;
//! 3. a sub-problem is introduced immediately (3a) or later by vertical refinement (3b);
//! 4. domains that share an interface but are otherwise unconnected relate vertically;
//! 5. domains not connected to the machine are of secondary concern.

use crate::frame::{self, incoming_degree, Choices, Expansion, FlowRole, Interface, ProblemFrame};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StepKind {
    Introduce,
    HorizontalRefine,
    VerticalRefine,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Introduce => "INTRODUCE",
            StepKind::HorizontalRefine => "HORIZONTAL_REFINE",
            StepKind::VerticalRefine => "VERTICAL_REFINE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Guideline {
    G1,
    G2,
    G3a,
    G3b,
    G4,
    G5,
}

impl Guideline {
    pub fn as_str(self) -> &'static str {
        match self {
            Guideline::G1 => "1",
            Guideline::G2 => "2",
            Guideline::G3a => "3a",
            Guideline::G3b => "3b",
            Guideline::G4 => "4",
            Guideline::G5 => "5",
        }
    }

    fn parse(s: &str) -> Option<Guideline> {
        Some(match s {
            "1" => Guideline::G1,
            "2" => Guideline::G2,
            "3a" => Guideline::G3a,
            "3b" => Guideline::G3b,
            "4" => Guideline::G4,
            "5" => Guideline::G5,
            _ => return None,
        })
    }

    fn gloss(self) -> &'static str {
        match self {
            Guideline::G1 => "it shares an interface with an already specified domain, so they refine each other horizontally",
            Guideline::G2 => "domains are taken in order of incoming interfaces, most first",
            Guideline::G3a => "the sub-problem's domains are introduced immediately in place of the abstract domain",
            Guideline::G3b => "the sub-problem is deferred to a vertical refinement that keeps the abstract domain",
            Guideline::G4 => "domains sharing an interface but otherwise unconnected are related by vertical refinement",
            Guideline::G5 => "it has no interface with the machine domain and is of secondary concern",
        }
    }
}

impl fmt::Display for Guideline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedDomain {
    pub name: String,
    /// Incoming degree in the frame the domain was declared in.
    pub degree: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinementStep {
    pub kind: StepKind,
    pub domains: Vec<PlannedDomain>,
    pub justification: Vec<Guideline>,
    pub slot: String,
    /// The frame the domains come from.
    pub origin: String,
    /// Already specified domains this step shares an interface with.
    pub touches: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinementPlan {
    pub frame: String,
    pub steps: Vec<RefinementStep>,
    /// Domains introduced by vertical refinement, with their sub-frame.
    pub deferred: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct PlanError {
    pub code: &'static str,
    pub message: String,
}

impl PlanError {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        PlanError {
            code,
            message: message.into(),
        }
    }
}

struct Planner<'a> {
    /// Interfaces of the main frame and every sub-frame.
    interfaces: Vec<&'a Interface>,
    introduced: BTreeSet<String>,
    steps: Vec<RefinementStep>,
}

impl Planner<'_> {
    fn touches(&self, domains: &[PlannedDomain]) -> Vec<String> {
        let mut out = BTreeSet::new();
        for d in domains {
            for i in self.interfaces.iter().filter(|i| i.touches(&d.name)) {
                for e in &i.endpoints {
                    if e.domain != d.name && self.introduced.contains(&e.domain) && !domains.iter().any(|x| x.name == e.domain) {
                        out.insert(e.domain.clone());
                    }
                }
            }
        }
        out.into_iter().collect()
    }

    fn push(&mut self, vertical: bool, domains: Vec<PlannedDomain>, mut justification: Vec<Guideline>, origin: &str) {
        let touches = self.touches(&domains);
        let kind = if vertical {
            StepKind::VerticalRefine
        } else if self.steps.is_empty() || touches.is_empty() {
            StepKind::Introduce
        } else {
            StepKind::HorizontalRefine
        };
        justification.sort();
        justification.dedup();
        for d in &domains {
            self.introduced.insert(d.name.clone());
        }
        let slot = format!("M{}", self.steps.len());
        self.steps.push(RefinementStep {
            kind,
            domains,
            justification,
            slot,
            origin: origin.to_string(),
            touches,
        });
    }

    /// Guideline for a step that is not the first tier's 3a/3b marker.
    fn ordering_guideline(&self, adjacent: bool, domains: &[PlannedDomain]) -> Guideline {
        if !adjacent {
            Guideline::G5
        } else if self.steps.is_empty() || self.touches(domains).is_empty() {
            Guideline::G2
        } else {
            Guideline::G1
        }
    }
}

fn planned(frame: &ProblemFrame, name: &str) -> PlannedDomain {
    PlannedDomain {
        name: name.to_string(),
        degree: incoming_degree(frame, name).unwrap_or(0),
    }
}

/// Groups sub-domains joined by an internal bidirectional interface, then
/// tiers the groups by descending degree.
fn tiers(sub: &ProblemFrame, domains: &[String]) -> Vec<Vec<PlannedDomain>> {
    let mut group: BTreeMap<&str, usize> = domains.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
    let internal = |i: &Interface| i.endpoints.iter().all(|e| domains.contains(&e.domain));
    for i in sub.interfaces.iter().filter(|i| internal(i)) {
        if i.endpoints.iter().all(|e| e.role == FlowRole::Both) {
            let ids: Vec<usize> = i.endpoints.iter().map(|e| group[e.domain.as_str()]).collect();
            let target = *ids.iter().min().expect("at least two endpoints");
            for g in group.values_mut() {
                if ids.contains(g) {
                    *g = target;
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<PlannedDomain>> = BTreeMap::new();
    for d in domains {
        groups.entry(group[d.as_str()]).or_default().push(planned(sub, d));
    }
    let mut by_degree: BTreeMap<std::cmp::Reverse<usize>, Vec<PlannedDomain>> = BTreeMap::new();
    for members in groups.into_values() {
        let deg = members.iter().map(|d| d.degree).max().unwrap_or(0);
        by_degree.entry(std::cmp::Reverse(deg)).or_default().extend(members);
    }
    by_degree
        .into_values()
        .map(|mut t| {
            t.sort_by(|a, b| a.name.cmp(&b.name));
            t
        })
        .collect()
}

fn shares_internal_interface(sub: &ProblemFrame, parent: &ProblemFrame, domains: &[String]) -> bool {
    frame::internal_interfaces(parent, sub)
        .iter()
        .any(|i| i.endpoints.iter().any(|e| domains.contains(&e.domain)))
}

/// Derives the refinement plan for `main` and its sub-frames.
pub fn derive_plan(main: &ProblemFrame, subs: &[ProblemFrame], choices: &Choices) -> Result<RefinementPlan, PlanError> {
    let machine = main
        .machine()
        .ok_or_else(|| PlanError::new("E-FRAME-001", format!("frame `{}` has no machine domain", main.name)))?;

    let mut by_target: BTreeMap<&str, &ProblemFrame> = BTreeMap::new();
    for sub in subs {
        let Some(target) = sub.refines.as_deref() else { continue };
        if main.domain(target).is_some() {
            by_target.entry(target).or_insert(sub);
            continue;
        }
        // the sub-frame details a domain of another sub-frame
        let owner = subs.iter().find(|s| s.name != sub.name && s.domain(target).is_some());
        let cyclic = owner.is_some_and(|o| {
            o.refines
                .as_deref()
                .is_some_and(|t| sub.domain(t).is_some() && main.domain(t).is_none())
        });
        return Err(if cyclic {
            PlanError::new(
                "E-PLAN-001",
                format!("sub-frames `{}` and `{}` detail each other", sub.name, owner.map(|o| o.name.as_str()).unwrap_or("?")),
            )
        } else {
            PlanError::new(
                "E-FRAME-011",
                format!("sub-frame `{}` details `{target}`, which is not a domain of `{}`", sub.name, main.name),
            )
        });
    }

    for d in &main.domains {
        if d.kind != frame::DomainKind::Machine && !main.interfaces.iter().any(|i| i.touches(&d.name)) {
            return Err(PlanError::new(
                "E-PLAN-002",
                format!("domain `{}` has no interfaces and cannot be placed in the plan", d.name),
            ));
        }
    }

    let adjacent = main.neighbours(&machine.name);
    let mut order: Vec<PlannedDomain> = main
        .domains
        .iter()
        .filter(|d| d.kind != frame::DomainKind::Machine)
        .map(|d| planned(main, &d.name))
        .collect();
    order.sort_by(|a, b| {
        let aa = adjacent.contains(a.name.as_str());
        let ba = adjacent.contains(b.name.as_str());
        ba.cmp(&aa).then(b.degree.cmp(&a.degree)).then(a.name.cmp(&b.name))
    });

    let mut planner = Planner {
        interfaces: main
            .interfaces
            .iter()
            .chain(subs.iter().flat_map(|s| s.interfaces.iter()))
            .collect(),
        introduced: BTreeSet::new(),
        steps: Vec::new(),
    };
    let mut deferred = BTreeMap::new();
    let mut late: Vec<(Vec<PlannedDomain>, Vec<Guideline>, String)> = Vec::new();

    for d in order {
        let is_adjacent = adjacent.contains(d.name.as_str());
        let Some(sub) = by_target.get(d.name.as_str()) else {
            let g = planner.ordering_guideline(is_adjacent, std::slice::from_ref(&d));
            planner.push(false, vec![d], vec![g], &main.name);
            continue;
        };
        let choice = choices.get(&sub.name).cloned().unwrap_or_default();
        let added: Vec<String> = frame::sub_domains(main, sub).iter().map(|x| x.name.clone()).collect();
        let (immediate, later): (Vec<String>, Vec<String>) =
            added.iter().cloned().partition(|x| choice.for_domain(x) == Expansion::Immediate);

        if immediate.is_empty() {
            let g = planner.ordering_guideline(is_adjacent, std::slice::from_ref(&d));
            planner.push(false, vec![d], vec![g], &main.name);
            if !later.is_empty() {
                let mut just = vec![Guideline::G3b];
                if shares_internal_interface(sub, main, &later) {
                    just.push(Guideline::G4);
                }
                let doms = later.iter().map(|x| planned(sub, x)).collect();
                for x in &later {
                    deferred.insert(x.clone(), sub.name.clone());
                }
                late.push((doms, just, sub.name.clone()));
            }
            continue;
        }

        for (t, mut tier) in tiers(sub, &immediate).into_iter().enumerate() {
            if t == 0 {
                if !later.is_empty() {
                    // the abstract domain stays and is specified alongside
                    tier.insert(0, d.clone());
                }
                let g = planner.ordering_guideline(is_adjacent, &tier);
                planner.push(false, tier, vec![g, Guideline::G3a], &sub.name);
            } else {
                let g = if planner.touches(&tier).is_empty() { Guideline::G2 } else { Guideline::G1 };
                planner.push(false, tier, vec![g], &sub.name);
            }
        }
        if !later.is_empty() {
            let mut just = vec![Guideline::G3a];
            if shares_internal_interface(sub, main, &later) {
                just.push(Guideline::G4);
            }
            for x in &later {
                deferred.insert(x.clone(), sub.name.clone());
            }
            let doms = later.iter().map(|x| planned(sub, x)).collect();
            planner.push(true, doms, just, &sub.name);
        }
    }
    for (doms, just, origin) in late {
        planner.push(true, doms, just, &origin);
    }

    Ok(RefinementPlan {
        frame: main.name.clone(),
        steps: planner.steps,
        deferred,
    })
}

/// A sentence explaining why step `index` is where it is.
pub fn explain_step(plan: &RefinementPlan, index: usize) -> Result<String, PlanError> {
    let step = plan.steps.get(index).ok_or_else(|| {
        PlanError::new(
            "E-PLAN-003",
            format!("step {index} is out of range; the plan has {} steps", plan.steps.len()),
        )
    })?;
    let verb = match step.kind {
        StepKind::Introduce => "introduces",
        StepKind::HorizontalRefine => "horizontally refines the specification with",
        StepKind::VerticalRefine => "vertically refines the specification with",
    };
    let domains: Vec<String> = step
        .domains
        .iter()
        .map(|d| format!("{} (incoming degree {})", d.name, d.degree))
        .collect();
    let mut text = format!("Step {index} ({}) {verb} {}.", step.slot, join_and(&domains));
    if !step.touches.is_empty() {
        text.push_str(&format!(" It shares interfaces with {}.", join_and(&step.touches)));
    }
    for g in &step.justification {
        text.push_str(&format!(" Guideline {g}: {}.", g.gloss()));
    }
    Ok(text)
}

fn join_and(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

impl fmt::Display for RefinementPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "plan {}", self.frame)?;
        for (i, s) in self.steps.iter().enumerate() {
            let just: Vec<&str> = s.justification.iter().map(|g| g.as_str()).collect();
            let doms: Vec<String> = s.domains.iter().map(|d| format!("{}:{}", d.name, d.degree)).collect();
            let touches = if s.touches.is_empty() { "-".to_string() } else { s.touches.join(",") };
            writeln!(
                f,
                "step {i} {} slot={} guidelines={} origin={} touches={touches} domains={}",
                s.kind.as_str(),
                s.slot,
                just.join(","),
                s.origin,
                doms.join(",")
            )?;
        }
        for (d, sub) in &self.deferred {
            writeln!(f, "deferred {d} {sub}")?;
        }
        Ok(())
    }
}

impl FromStr for RefinementPlan {
    type Err = PlanError;

    fn from_str(text: &str) -> Result<Self, PlanError> {
        let bad = |line: usize, what: &str| PlanError::new("E-SYNTAX-001", format!("line {}: {what}", line + 1));
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (_, head) = lines.next().ok_or_else(|| bad(0, "empty plan"))?;
        let frame = head.strip_prefix("plan ").ok_or_else(|| bad(0, "expected `plan NAME`"))?.trim().to_string();
        let mut plan = RefinementPlan {
            frame,
            steps: Vec::new(),
            deferred: BTreeMap::new(),
        };
        for (n, line) in lines {
            let words: Vec<&str> = line.split_whitespace().collect();
            match words.as_slice() {
                ["deferred", d, sub] => {
                    plan.deferred.insert(d.to_string(), sub.to_string());
                }
                ["step", idx, kind, fields @ ..] => {
                    if idx.parse::<usize>().ok() != Some(plan.steps.len()) {
                        return Err(bad(n, "steps must be numbered consecutively from 0"));
                    }
                    let kind = match *kind {
                        "INTRODUCE" => StepKind::Introduce,
                        "HORIZONTAL_REFINE" => StepKind::HorizontalRefine,
                        "VERTICAL_REFINE" => StepKind::VerticalRefine,
                        _ => return Err(bad(n, "unknown step kind")),
                    };
                    let mut map = BTreeMap::new();
                    for fld in fields {
                        let (k, v) = fld.split_once('=').ok_or_else(|| bad(n, "expected key=value"))?;
                        map.insert(k, v);
                    }
                    let get = |k: &str| map.get(k).copied().ok_or_else(|| bad(n, &format!("missing `{k}`")));
                    let justification = get("guidelines")?
                        .split(',')
                        .map(|g| Guideline::parse(g).ok_or_else(|| bad(n, "unknown guideline")))
                        .collect::<Result<Vec<_>, _>>()?;
                    let domains = get("domains")?
                        .split(',')
                        .map(|d| {
                            let (name, deg) = d.split_once(':').ok_or_else(|| bad(n, "expected Name:degree"))?;
                            Ok(PlannedDomain {
                                name: name.to_string(),
                                degree: deg.parse().map_err(|_| bad(n, "bad degree"))?,
                            })
                        })
                        .collect::<Result<Vec<_>, PlanError>>()?;
                    let touches = match get("touches")? {
                        "-" => Vec::new(),
                        t => t.split(',').map(str::to_string).collect(),
                    };
                    plan.steps.push(RefinementStep {
                        kind,
                        domains,
                        justification,
                        slot: get("slot")?.to_string(),
                        origin: get("origin")?.to_string(),
                        touches,
                    });
                }
                _ => return Err(bad(n, "expected `step` or `deferred`")),
            }
        }
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{parse_frame, SubframeChoice};

    const LIFT: &str = "frame Lift
domain LiftSpec machine
domain Floors given
domain Doors designed
domain Buttons designed
interface position: LiftSpec -> Floors
interface doorfloor: Doors <-> Floors
interface call: Buttons -> Floors
interface openclose: LiftSpec -> Doors
interface request: Buttons <-> LiftSpec";

    const DOORS: &str = "frame DoorsSub refines Doors
domain LiftSpec machine
domain Floors given
domain OuterDoors designed
domain InnerDoor designed
interface openclose: LiftSpec -> OuterDoors, InnerDoor
interface doorfloor: OuterDoors <-> Floors
interface sync: OuterDoors <-> InnerDoor";

    fn names(s: &RefinementStep) -> Vec<&str> {
        s.domains.iter().map(|d| d.name.as_str()).collect()
    }

    fn choice(sub: &str, e: Expansion) -> Choices {
        [(sub.to_string(), SubframeChoice::uniform(e))].into()
    }

    #[test]
    fn lift_immediate() {
        let plan = derive_plan(
            &parse_frame(LIFT).unwrap(),
            &[parse_frame(DOORS).unwrap()],
            &choice("DoorsSub", Expansion::Immediate),
        )
        .unwrap();
        let steps: Vec<_> = plan.steps.iter().map(names).collect();
        assert_eq!(steps, vec![vec!["Floors"], vec!["InnerDoor", "OuterDoors"], vec!["Buttons"]]);
        assert_eq!(plan.steps[0].justification, [Guideline::G2]);
        assert_eq!(plan.steps[1].justification, [Guideline::G1, Guideline::G3a]);
        assert_eq!(plan.steps[1].kind, StepKind::HorizontalRefine);
        assert!(explain_step(&plan, 1).unwrap().contains("Guideline 3a"));
    }

    #[test]
    fn lift_deferred() {
        let plan = derive_plan(
            &parse_frame(LIFT).unwrap(),
            &[parse_frame(DOORS).unwrap()],
            &choice("DoorsSub", Expansion::Deferred),
        )
        .unwrap();
        let steps: Vec<_> = plan.steps.iter().map(names).collect();
        assert_eq!(
            steps,
            vec![vec!["Floors"], vec!["Doors"], vec!["Buttons"], vec!["OuterDoors", "InnerDoor"]]
        );
        assert_eq!(plan.steps[3].kind, StepKind::VerticalRefine);
        assert_eq!(plan.steps[3].justification, [Guideline::G3b, Guideline::G4]);
        assert_eq!(plan.deferred.len(), 2);
    }

    #[test]
    fn minimal_frame() {
        let f = parse_frame("frame F domain M machine domain G given interface i: M -> G").unwrap();
        let plan = derive_plan(&f, &[], &Choices::new()).unwrap();
        assert_eq!(plan.steps.len(), 1);
        assert_eq!(plan.steps[0].kind, StepKind::Introduce);
        assert!(!explain_step(&plan, 0).unwrap().is_empty());
        assert_eq!(explain_step(&plan, 1).unwrap_err().code, "E-PLAN-003");
    }

    #[test]
    fn orphan_and_cycles() {
        let f = parse_frame("frame F domain M machine domain G given domain X given interface i: M -> G").unwrap();
        assert_eq!(derive_plan(&f, &[], &Choices::new()).unwrap_err().code, "E-PLAN-002");
        let main = parse_frame("frame F domain M machine domain G designed interface i: M -> G").unwrap();
        let a = parse_frame("frame A refines Y domain X designed").unwrap();
        let b = parse_frame("frame B refines X domain Y designed").unwrap();
        assert_eq!(derive_plan(&main, &[a, b], &Choices::new()).unwrap_err().code, "E-PLAN-001");
    }

    #[test]
    fn text_round_trip() {
        let plan = derive_plan(
            &parse_frame(LIFT).unwrap(),
            &[parse_frame(DOORS).unwrap()],
            &choice("DoorsSub", Expansion::Deferred),
        )
        .unwrap();
        let text = plan.to_string();
        assert_eq!(text.parse::<RefinementPlan>().unwrap(), plan);
    }
}
