//! Problem frames: domains, shared interfaces with information-flow roles,
//! and sub-problem frames that detail a designed domain.

use crate::diag::{Diagnostic, ParseError, Span};
use crate::lex::{tokenize, Cursor, Sym};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DomainKind {
    Machine,
    Designed,
    Given,
}

impl DomainKind {
    fn keyword(self) -> &'static str {
        match self {
            DomainKind::Machine => "machine",
            DomainKind::Designed => "designed",
            DomainKind::Given => "given",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    pub name: String,
    pub kind: DomainKind,
    pub requirements: Vec<String>,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowRole {
    Producer,
    Consumer,
    Both,
}

impl FlowRole {
    pub fn produces(self) -> bool {
        self != FlowRole::Consumer
    }

    pub fn consumes(self) -> bool {
        self != FlowRole::Producer
    }

    fn merge(self, other: FlowRole) -> FlowRole {
        if self == other {
            self
        } else {
            FlowRole::Both
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub domain: String,
    pub role: FlowRole,
}

/// A shared interface. Endpoints are kept sorted by domain name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interface {
    pub name: String,
    pub endpoints: Vec<Endpoint>,
    pub span: Span,
}

impl Interface {
    pub fn new(name: &str, mut endpoints: Vec<Endpoint>) -> Self {
        endpoints.sort_by(|a, b| a.domain.cmp(&b.domain));
        Interface {
            name: name.to_string(),
            endpoints,
            span: Span::default(),
        }
    }

    pub fn role_of(&self, domain: &str) -> Option<FlowRole> {
        self.endpoints.iter().find(|e| e.domain == domain).map(|e| e.role)
    }

    pub fn touches(&self, domain: &str) -> bool {
        self.role_of(domain).is_some()
    }

    /// Whether some endpoint other than `domain` produces toward it.
    pub fn flows_into(&self, domain: &str) -> bool {
        match self.role_of(domain) {
            Some(r) if r.consumes() => self.endpoints.iter().any(|e| e.domain != domain && e.role.produces()),
            _ => false,
        }
    }

    /// Whether `consumer` consumes information that `producer` produces here.
    pub fn flows_from_to(&self, producer: &str, consumer: &str) -> bool {
        producer != consumer
            && self.role_of(producer).is_some_and(FlowRole::produces)
            && self.role_of(consumer).is_some_and(FlowRole::consumes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemFrame {
    pub name: String,
    /// The designed domain of the parent frame that this sub-problem details.
    pub refines: Option<String>,
    pub domains: Vec<Domain>,
    pub interfaces: Vec<Interface>,
    pub span: Span,
}

impl ProblemFrame {
    pub fn domain(&self, name: &str) -> Option<&Domain> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn interface(&self, name: &str) -> Option<&Interface> {
        self.interfaces.iter().find(|i| i.name == name)
    }

    pub fn machine(&self) -> Option<&Domain> {
        self.domains.iter().find(|d| d.kind == DomainKind::Machine)
    }

    pub fn is_subframe(&self) -> bool {
        self.refines.is_some()
    }

    /// Domains sharing at least one interface with `domain`, sorted.
    pub fn neighbours(&self, domain: &str) -> BTreeSet<&str> {
        self.interfaces
            .iter()
            .filter(|i| i.touches(domain))
            .flat_map(|i| i.endpoints.iter().map(|e| e.domain.as_str()))
            .filter(|d| *d != domain)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{span}: {message}")]
pub struct FrameError {
    pub code: &'static str,
    pub message: String,
    pub span: Span,
}

impl FrameError {
    fn new(code: &'static str, message: impl Into<String>, span: Span) -> Self {
        FrameError {
            code,
            message: message.into(),
            span,
        }
    }

    pub fn to_diagnostic(&self) -> Diagnostic {
        Diagnostic::error(self.code, self.message.clone(), Some(self.span))
    }
}

impl From<ParseError> for FrameError {
    fn from(e: ParseError) -> Self {
        FrameError::new(SYNTAX, e.message, e.span)
    }
}

pub const SYNTAX: &str = "E-SYNTAX-001";

fn endpoint_list(cur: &mut Cursor) -> Result<Vec<(String, Span)>, ParseError> {
    let mut out = vec![cur.expect_ident()?];
    while cur.eat_sym(Sym::Comma) {
        out.push(cur.expect_ident()?);
    }
    Ok(out)
}

/// An interface name and its `(domain, role)` endpoints.
type RawInterface = (String, Span, Vec<(String, Span, FlowRole)>);

fn parse_interface(cur: &mut Cursor) -> Result<RawInterface, ParseError> {
    let (name, span) = cur.expect_ident()?;
    cur.expect_sym(Sym::Colon)?;
    let lhs = endpoint_list(cur)?;
    let (lrole, rrole, rhs) = if cur.eat_sym(Sym::Arrow) {
        (FlowRole::Producer, FlowRole::Consumer, endpoint_list(cur)?)
    } else if cur.eat_sym(Sym::LeftArrow) {
        (FlowRole::Consumer, FlowRole::Producer, endpoint_list(cur)?)
    } else if cur.eat_sym(Sym::BiArrow) {
        (FlowRole::Both, FlowRole::Both, endpoint_list(cur)?)
    } else {
        (FlowRole::Both, FlowRole::Both, Vec::new())
    };
    let mut eps: Vec<(String, Span, FlowRole)> = Vec::new();
    for ((d, s), role) in lhs.into_iter().map(|x| (x, lrole)).chain(rhs.into_iter().map(|x| (x, rrole))) {
        match eps.iter_mut().find(|(n, _, _)| *n == d) {
            Some(e) => e.2 = e.2.merge(role),
            None => eps.push((d, s, role)),
        }
    }
    Ok((name, span, eps))
}

/// Parses a `.frame` source. Syntax errors, duplicate domains and unknown
/// endpoints are reported here; everything else is left to [`check_frame`].
pub fn parse_frame(src: &str) -> Result<ProblemFrame, FrameError> {
    let mut cur = Cursor::new(tokenize(src)?);
    let span = cur.expect_keyword("frame")?;
    let (name, _) = cur.expect_ident()?;
    let refines = if cur.eat_ident("refines") {
        Some(cur.expect_ident()?.0)
    } else {
        None
    };
    let mut frame = ProblemFrame {
        name,
        refines,
        domains: Vec::new(),
        interfaces: Vec::new(),
        span,
    };
    let mut pending = Vec::new();
    while !cur.at_eof() {
        if cur.eat_ident("domain") {
            let (dname, dspan) = cur.expect_ident()?;
            let kind = if cur.eat_ident("machine") {
                DomainKind::Machine
            } else if cur.eat_ident("designed") {
                DomainKind::Designed
            } else if cur.eat_ident("given") {
                DomainKind::Given
            } else {
                return Err(cur.unexpected("`machine`, `designed` or `given`").into());
            };
            let mut requirements = Vec::new();
            while cur.eat_sym(Sym::At) {
                requirements.push(cur.expect_ident()?.0);
            }
            if frame.domain(&dname).is_some() {
                return Err(FrameError::new("E-FRAME-004", format!("duplicate domain `{dname}`"), dspan));
            }
            frame.domains.push(Domain {
                name: dname,
                kind,
                requirements,
                span: dspan,
            });
        } else if cur.eat_ident("interface") {
            pending.push(parse_interface(&mut cur)?);
        } else {
            return Err(cur.unexpected("`domain` or `interface`").into());
        }
    }
    for (iname, ispan, eps) in pending {
        let mut endpoints = Vec::new();
        for (d, s, role) in eps {
            if frame.domain(&d).is_none() {
                return Err(FrameError::new(
                    "E-FRAME-005",
                    format!("interface `{iname}` names unknown domain `{d}`"),
                    s,
                ));
            }
            endpoints.push(Endpoint { domain: d, role });
        }
        let mut i = Interface::new(&iname, endpoints);
        i.span = ispan;
        frame.interfaces.push(i);
    }
    Ok(frame)
}

impl fmt::Display for ProblemFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "frame {}", self.name)?;
        if let Some(r) = &self.refines {
            write!(f, " refines {r}")?;
        }
        writeln!(f)?;
        for d in &self.domains {
            write!(f, "domain {} {}", d.name, d.kind.keyword())?;
            for r in &d.requirements {
                write!(f, " @{r}")?;
            }
            writeln!(f)?;
        }
        for i in &self.interfaces {
            writeln!(f, "interface {}: {}", i.name, endpoints_text(&i.endpoints))?;
        }
        Ok(())
    }
}

fn endpoints_text(eps: &[Endpoint]) -> String {
    let names = |pred: fn(FlowRole) -> bool| -> String {
        eps.iter()
            .filter(|e| pred(e.role))
            .map(|e| e.domain.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    };
    if eps.iter().all(|e| e.role == FlowRole::Both) {
        let all: Vec<&str> = eps.iter().map(|e| e.domain.as_str()).collect();
        return match all.split_first() {
            Some((first, rest)) if !rest.is_empty() => format!("{first} <-> {}", rest.join(", ")),
            _ => all.join(", "),
        };
    }
    let lhs = names(FlowRole::produces);
    let rhs = names(FlowRole::consumes);
    match (lhs.is_empty(), rhs.is_empty()) {
        (false, false) => format!("{lhs} -> {rhs}"),
        (true, _) => format!("{rhs} <- "),
        (_, true) => format!("{lhs} -> "),
    }
}

/// Checks the structural rules of a frame. `requirements`, when given, is the
/// set of known requirement ids; `parent` is the frame a sub-frame details.
pub fn check_frame(
    frame: &ProblemFrame,
    requirements: Option<&BTreeSet<String>>,
    parent: Option<&ProblemFrame>,
) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let err = |code, msg: String, span| Diagnostic::error(code, msg, Some(span));

    let mut names = BTreeSet::new();
    for d in &frame.domains {
        if !names.insert(d.name.as_str()) {
            out.push(err("E-FRAME-004", format!("duplicate domain `{}`", d.name), d.span));
        }
        if let Some(reqs) = requirements {
            for r in &d.requirements {
                if !reqs.contains(r) {
                    out.push(err(
                        "E-FRAME-008",
                        format!("domain `{}` is annotated with unknown requirement `{r}`", d.name),
                        d.span,
                    ));
                }
            }
        }
    }

    let machines = frame.domains.iter().filter(|d| d.kind == DomainKind::Machine).count();
    match &frame.refines {
        None if machines != 1 => out.push(err(
            "E-FRAME-001",
            format!("frame `{}` must contain exactly one machine domain, found {machines}", frame.name),
            frame.span,
        )),
        None => {}
        Some(target) => {
            if machines > 1 {
                out.push(err(
                    "E-FRAME-003",
                    format!("sub-frame `{}` contains {machines} machine domains", frame.name),
                    frame.span,
                ));
            }
            match parent {
                Some(p) if p.is_subframe() => out.push(err(
                    "E-FRAME-011",
                    format!(
                        "sub-frame `{}` details `{target}` of sub-frame `{}`; only one level of nesting is supported",
                        frame.name, p.name
                    ),
                    frame.span,
                )),
                Some(p) if p.domain(target).map(|d| d.kind) == Some(DomainKind::Designed) => {}
                _ => out.push(err(
                    "E-FRAME-002",
                    format!(
                        "sub-frame `{}` refines `{target}`, which is not a designed domain of its parent",
                        frame.name
                    ),
                    frame.span,
                )),
            }
        }
    }

    let mut inames = BTreeSet::new();
    for i in &frame.interfaces {
        if !inames.insert(i.name.as_str()) {
            out.push(err("E-FRAME-009", format!("duplicate interface `{}`", i.name), i.span));
        }
        for e in &i.endpoints {
            if !names.contains(e.domain.as_str()) {
                out.push(err(
                    "E-FRAME-005",
                    format!("interface `{}` names unknown domain `{}`", i.name, e.domain),
                    i.span,
                ));
            }
        }
        if i.endpoints.len() < 2 {
            out.push(err(
                "E-FRAME-007",
                format!("interface `{}` needs at least two endpoints", i.name),
                i.span,
            ));
        } else if !i.endpoints.iter().any(|e| e.role.produces()) || !i.endpoints.iter().any(|e| e.role.consumes()) {
            out.push(err(
                "E-FRAME-006",
                format!("interface `{}` needs a producer and a consumer", i.name),
                i.span,
            ));
        }
    }
    out
}

/// Number of interfaces through which some other endpoint produces toward
/// `domain`. Each interface counts at most once.
pub fn incoming_degree(frame: &ProblemFrame, domain: &str) -> Result<usize, FrameError> {
    if frame.domain(domain).is_none() {
        return Err(FrameError::new("E-FRAME-005", format!("unknown domain `{domain}`"), frame.span));
    }
    Ok(frame.interfaces.iter().filter(|i| i.flows_into(domain)).count())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Expansion {
    Immediate,
    Deferred,
}

/// How one sub-frame is introduced: a default for all its domains plus
/// per-domain overrides.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SubframeChoice {
    pub default: Option<Expansion>,
    pub overrides: BTreeMap<String, Expansion>,
}

impl SubframeChoice {
    pub fn uniform(e: Expansion) -> Self {
        SubframeChoice {
            default: Some(e),
            overrides: BTreeMap::new(),
        }
    }

    pub fn for_domain(&self, domain: &str) -> Expansion {
        self.overrides
            .get(domain)
            .copied()
            .or(self.default)
            .unwrap_or(Expansion::Deferred)
    }
}

/// Sub-frame name to choice. Missing entries mean deferred.
pub type Choices = BTreeMap<String, SubframeChoice>;

/// The domains a sub-frame adds: those not already in the parent, in sub-frame order.
pub fn sub_domains<'a>(parent: &ProblemFrame, sub: &'a ProblemFrame) -> Vec<&'a Domain> {
    sub.domains
        .iter()
        .filter(|d| parent.domain(&d.name).is_none() && d.kind != DomainKind::Machine)
        .collect()
}

/// Interfaces of `sub` whose endpoints are all sub-domains (none in the parent).
pub fn internal_interfaces<'a>(parent: &ProblemFrame, sub: &'a ProblemFrame) -> Vec<&'a Interface> {
    sub.interfaces
        .iter()
        .filter(|i| parent.interface(&i.name).is_none())
        .filter(|i| i.endpoints.iter().all(|e| parent.domain(&e.domain).is_none()))
        .collect()
}

/// Substitutes immediately-expanded sub-frames into the main frame.
pub fn flatten(main: &ProblemFrame, subs: &[ProblemFrame], choices: &Choices) -> Result<ProblemFrame, FrameError> {
    let mut out = main.clone();
    for sub in subs {
        let Some(target) = &sub.refines else { continue };
        if main.domain(target).is_none() {
            return Err(FrameError::new(
                "E-FRAME-002",
                format!("sub-frame `{}` refines unknown domain `{target}`", sub.name),
                sub.span,
            ));
        }
        let choice = choices.get(&sub.name).cloned().unwrap_or_default();
        let added = sub_domains(main, sub);
        let immediate: Vec<&Domain> = added
            .iter()
            .copied()
            .filter(|d| choice.for_domain(&d.name) == Expansion::Immediate)
            .collect();
        if immediate.is_empty() {
            continue;
        }
        let replace = immediate.len() == added.len();
        let present = |name: &str| immediate.iter().any(|d| d.name == name);

        if replace {
            for iface in out.interfaces.iter_mut().filter(|i| i.touches(target)) {
                let carried: Vec<Endpoint> = sub
                    .interface(&iface.name)
                    .map(|si| si.endpoints.iter().filter(|e| present(&e.domain)).cloned().collect())
                    .unwrap_or_default();
                if carried.is_empty() {
                    return Err(FrameError::new(
                        "E-FRAME-010",
                        format!(
                            "interface `{}` touches `{target}`, but no domain of sub-frame `{}` carries it",
                            iface.name, sub.name
                        ),
                        sub.span,
                    ));
                }
                let mut eps: Vec<Endpoint> = iface.endpoints.iter().filter(|e| &e.domain != target).cloned().collect();
                eps.extend(carried);
                *iface = Interface {
                    span: iface.span,
                    ..Interface::new(&iface.name, eps)
                };
            }
            let pos = out.domains.iter().position(|d| &d.name == target).expect("checked above");
            out.domains.splice(pos..=pos, immediate.iter().map(|d| (*d).clone()));
        } else {
            out.domains.extend(immediate.iter().map(|d| (*d).clone()));
        }

        for si in &sub.interfaces {
            if main.interface(&si.name).is_some() {
                continue;
            }
            let eps: Vec<Endpoint> = si
                .endpoints
                .iter()
                .filter(|e| present(&e.domain) || out.domain(&e.domain).is_some())
                .cloned()
                .collect();
            if eps.len() >= 2 && out.interface(&si.name).is_none() {
                out.interfaces.push(Interface {
                    span: si.span,
                    ..Interface::new(&si.name, eps)
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const LIFT: &str = "
# main frame
frame Lift
domain LiftSpec machine
domain Floors given
domain Doors designed
domain Buttons designed
interface position: LiftSpec -> Floors
interface doorfloor: Doors <-> Floors
interface call: Buttons -> Floors
interface openclose: LiftSpec -> Doors
interface request: Buttons <-> LiftSpec
";

    pub(crate) const DOORS: &str = "
frame DoorsSub refines Doors
domain LiftSpec machine
domain Floors given
domain OuterDoors designed
domain InnerDoor designed
interface openclose: LiftSpec -> OuterDoors, InnerDoor
interface doorfloor: OuterDoors <-> Floors
interface sync: OuterDoors <-> InnerDoor
";

    fn codes(d: &[Diagnostic]) -> Vec<&'static str> {
        d.iter().map(|d| d.code).collect()
    }

    #[test]
    fn lift_parses_and_checks() {
        let f = parse_frame(LIFT).unwrap();
        assert_eq!(f.domains.len(), 4);
        assert!(check_frame(&f, None, None).is_empty());
        let sub = parse_frame(DOORS).unwrap();
        assert!(check_frame(&sub, None, Some(&f)).is_empty());
    }

    #[test]
    fn degrees() {
        let f = parse_frame(LIFT).unwrap();
        let deg = |d| incoming_degree(&f, d).unwrap();
        assert_eq!(deg("Floors"), 3);
        assert_eq!(deg("Doors"), 2);
        assert_eq!(deg("Buttons"), 1);
        assert!(incoming_degree(&f, "Nope").is_err());
    }

    #[test]
    fn multi_endpoint_counts_once() {
        let f = parse_frame("frame F domain M machine domain A given domain B given domain C given
            interface x: A, B -> C interface y: M -> C").unwrap();
        assert_eq!(incoming_degree(&f, "C").unwrap(), 2);
        assert_eq!(incoming_degree(&f, "A").unwrap(), 0);
    }

    #[test]
    fn structural_errors() {
        let two = parse_frame("frame F domain A machine domain B machine interface i: A -> B").unwrap();
        assert_eq!(codes(&check_frame(&two, None, None)), ["E-FRAME-001"]);
        let empty = parse_frame("frame F").unwrap();
        assert_eq!(codes(&check_frame(&empty, None, None)), ["E-FRAME-001"]);
        let main = parse_frame(LIFT).unwrap();
        let bad = parse_frame("frame S refines Floors domain X given").unwrap();
        assert_eq!(codes(&check_frame(&bad, None, Some(&main))), ["E-FRAME-002"]);
        let lonely = parse_frame("frame F domain M machine domain A given interface i: A").unwrap();
        assert_eq!(codes(&check_frame(&lonely, None, None)), ["E-FRAME-007"]);
        let reqs: BTreeSet<String> = ["REQ1".to_string()].into();
        let ann = parse_frame("frame F domain M machine @REQ1 @REQ9").unwrap();
        assert_eq!(codes(&check_frame(&ann, Some(&reqs), None)), ["E-FRAME-008"]);
        assert_eq!(parse_frame("frame F domain A given domain A given").unwrap_err().code, "E-FRAME-004");
        assert_eq!(parse_frame("frame F domain A given interface i: A -> B").unwrap_err().code, "E-FRAME-005");
        assert_eq!(parse_frame("frame F domain A blue").unwrap_err().code, SYNTAX);
    }

    #[test]
    fn direction_syntax() {
        let f = parse_frame("frame F domain A given domain B given domain C given
            interface l: A <- B interface u: A, C interface s: A, B -> B, C").unwrap();
        assert_eq!(f.interfaces[0].role_of("A"), Some(FlowRole::Consumer));
        assert_eq!(f.interfaces[0].role_of("B"), Some(FlowRole::Producer));
        assert_eq!(f.interfaces[1].role_of("C"), Some(FlowRole::Both));
        assert_eq!(f.interfaces[2].role_of("B"), Some(FlowRole::Both));
        assert_eq!(parse_frame(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn flatten_lift_doors() {
        let main = parse_frame(LIFT).unwrap();
        let sub = parse_frame(DOORS).unwrap();
        let choices: Choices = [("DoorsSub".to_string(), SubframeChoice::uniform(Expansion::Immediate))].into();
        let flat = flatten(&main, std::slice::from_ref(&sub), &choices).unwrap();
        let names: Vec<&str> = flat.domains.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, ["LiftSpec", "Floors", "OuterDoors", "InnerDoor", "Buttons"]);
        let oc = flat.interface("openclose").unwrap();
        assert!(oc.touches("OuterDoors") && oc.touches("InnerDoor") && !oc.touches("Doors"));
        assert!(flat.interface("sync").is_some());
        assert!(check_frame(&flat, None, None).is_empty());

        let deferred: Choices = [("DoorsSub".to_string(), SubframeChoice::uniform(Expansion::Deferred))].into();
        assert_eq!(flatten(&main, &[sub], &deferred).unwrap(), main);
        assert_eq!(flatten(&main, &[], &Choices::new()).unwrap(), main);
    }

    #[test]
    fn flatten_reports_missing_reattachment() {
        let main = parse_frame(LIFT).unwrap();
        let sub = parse_frame("frame DoorsSub refines Doors domain OuterDoors designed domain InnerDoor designed
            interface sync: OuterDoors <-> InnerDoor").unwrap();
        let choices: Choices = [("DoorsSub".to_string(), SubframeChoice::uniform(Expansion::Immediate))].into();
        assert_eq!(flatten(&main, &[sub], &choices).unwrap_err().code, "E-FRAME-010");
    }
}
