//! A project on disk: the `vdd.project` manifest, the files it names, and
//! the checks that must pass before any VO is run.

use crate::diag::{Diagnostic, FileDiagnostic, Span};
use crate::frame::{check_frame, parse_frame, Choices, Expansion, ProblemFrame};
use crate::ledger::{digest, domain_hashes, Discipline, ImpactOptions, MachineInfo, ScopeIndex, Snapshot};
use crate::plan::{derive_plan, PlanError, RefinementPlan};
use crate::specml::{
    check_gluing, check_invariants, explore, parse_context, parse_machine, ContextSpec, MachineSpec, Model, ModelOptions,
    StateSpace, DEFAULT_CAP,
};
use crate::volang::{parse_requirements, parse_vo_file, resolve, Requirement, Vo, VoId};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "vdd.project";

#[derive(Debug, thiserror::Error)]
pub enum ProjectError {
    #[error("E-PROJ-001: cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("E-PROJ-002: {path}:{line}: {message}")]
    Manifest { path: PathBuf, line: usize, message: String },
    #[error("E-PROJ-003: bad file pattern `{pattern}`: {message}")]
    Pattern { pattern: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub name: String,
    pub frames: Vec<String>,
    pub requirements: Vec<String>,
    pub vos: Vec<String>,
    pub machines: Vec<String>,
    pub contexts: Vec<String>,
    pub cap: usize,
    pub discipline: Discipline,
    pub transitive_impact: bool,
    pub choices: Choices,
}

impl Manifest {
    pub fn new(name: &str) -> Manifest {
        Manifest {
            name: name.to_string(),
            frames: vec!["*.frame".into()],
            requirements: vec!["*.req".into()],
            vos: vec!["*.vo".into()],
            machines: vec!["*.mch".into()],
            contexts: vec!["*.ctx".into()],
            cap: DEFAULT_CAP,
            discipline: Discipline::Strict,
            transitive_impact: false,
            choices: Choices::new(),
        }
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(src: &str) -> Result<Manifest, (usize, String)> {
        let mut m = Manifest::new("");
        let mut named = false;
        for (i, raw) in src.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let n = i + 1;
            let (key, value) = line.split_once('=').ok_or((n, format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let globs = || value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            match key {
                "name" => {
                    m.name = value.to_string();
                    named = true;
                }
                "frames" => m.frames = globs(),
                "requirements" => m.requirements = globs(),
                "vos" => m.vos = globs(),
                "machines" => m.machines = globs(),
                "contexts" => m.contexts = globs(),
                "cap" => {
                    m.cap = value.parse().map_err(|_| (n, format!("`cap` must be a positive integer, found `{value}`")))?;
                    if m.cap == 0 {
                        return Err((n, "`cap` must be at least 1".into()));
                    }
                }
                "refinement_discipline" => m.discipline = value.parse().map_err(|e| (n, e))?,
                "transitive_impact" => {
                    m.transitive_impact = value.parse().map_err(|_| (n, format!("`transitive_impact` must be true or false, found `{value}`")))?
                }
                _ if key.starts_with("choice.") => {
                    let e = match value.to_ascii_lowercase().as_str() {
                        "immediate" => Expansion::Immediate,
                        "deferred" => Expansion::Deferred,
                        _ => return Err((n, format!("choice must be `immediate` or `deferred`, found `{value}`"))),
                    };
                    let rest = &key["choice.".len()..];
                    let entry = |sub: &str, m: &mut Manifest| m.choices.entry(sub.to_string()).or_default().clone();
                    match rest.split_once('.') {
                        None if !rest.is_empty() => {
                            let mut c = entry(rest, &mut m);
                            c.default = Some(e);
                            m.choices.insert(rest.to_string(), c);
                        }
                        Some((sub, dom)) if !sub.is_empty() && !dom.is_empty() => {
                            let mut c = entry(sub, &mut m);
                            c.overrides.insert(dom.to_string(), e);
                            m.choices.insert(sub.to_string(), c);
                        }
                        _ => return Err((n, format!("malformed choice key `{key}`"))),
                    }
                }
                _ => return Err((n, format!("unknown key `{key}`"))),
            }
        }
        if !named || m.name.is_empty() {
            return Err((0, "missing `name`".into()));
        }
        Ok(m)
    }

    pub fn impact_options(&self) -> ImpactOptions {
        ImpactOptions {
            discipline: self.discipline,
            transitive: self.transitive_impact,
        }
    }
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "name = {}", self.name)?;
        writeln!(f, "frames = {}", self.frames.join(", "))?;
        writeln!(f, "requirements = {}", self.requirements.join(", "))?;
        writeln!(f, "vos = {}", self.vos.join(", "))?;
        writeln!(f, "machines = {}", self.machines.join(", "))?;
        writeln!(f, "contexts = {}", self.contexts.join(", "))?;
        writeln!(f, "cap = {}", self.cap)?;
        writeln!(f, "refinement_discipline = {}", if self.discipline == Discipline::Strict { "STRICT" } else { "LIBERAL" })?;
        if self.transitive_impact {
            writeln!(f, "transitive_impact = true")?;
        }
        let word = |e: Expansion| if e == Expansion::Immediate { "immediate" } else { "deferred" };
        for (sub, c) in &self.choices {
            if let Some(d) = c.default {
                writeln!(f, "choice.{sub} = {}", word(d))?;
            }
            for (dom, e) in &c.overrides {
                writeln!(f, "choice.{sub}.{dom} = {}", word(*e))?;
            }
        }
        Ok(())
    }
}

/// A parsed item and the file it came from, relative to the project root.
#[derive(Debug, Clone)]
pub struct Sourced<T> {
    pub path: PathBuf,
    pub item: T,
}

#[derive(Debug, Clone)]
pub struct Project {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub frames: Vec<Sourced<ProblemFrame>>,
    pub requirements: Vec<Sourced<Requirement>>,
    pub vos: Vec<Sourced<Vo>>,
    pub machines: Vec<Sourced<MachineSpec>>,
    pub contexts: Vec<Sourced<ContextSpec>>,
    /// Comment lines directly above a VO declaration.
    pub notes: BTreeMap<VoId, String>,
    /// Syntax errors found while loading.
    pub diagnostics: Vec<FileDiagnostic>,
}

/// The `#` comment block ending on the line before `line` (1-based).
fn comment_above(src: &str, line: u32) -> Option<String> {
    let lines: Vec<&str> = src.lines().take((line as usize).saturating_sub(1)).collect();
    let block: Vec<&str> = lines
        .iter()
        .rev()
        .take_while(|l| l.trim_start().starts_with('#'))
        .map(|l| l.trim_start().trim_start_matches('#').trim())
        .collect();
    (!block.is_empty()).then(|| block.into_iter().rev().collect::<Vec<_>>().join(" "))
}

fn file_diag(path: &Path, diagnostic: Diagnostic) -> FileDiagnostic {
    FileDiagnostic {
        path: path.to_path_buf(),
        diagnostic,
    }
}

fn read(path: &Path) -> Result<String, ProjectError> {
    std::fs::read_to_string(path).map_err(|source| ProjectError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Files under `root` matching any of `patterns`, sorted and deduplicated.
fn expand(root: &Path, patterns: &[String]) -> Result<Vec<PathBuf>, ProjectError> {
    let mut out = BTreeSet::new();
    for p in patterns {
        let full = root.join(p);
        let paths = glob::glob(&full.to_string_lossy()).map_err(|e| ProjectError::Pattern {
            pattern: p.clone(),
            message: e.to_string(),
        })?;
        for entry in paths {
            let path = entry.map_err(|e| ProjectError::Pattern {
                pattern: p.clone(),
                message: e.to_string(),
            })?;
            if path.is_file() {
                out.insert(path.strip_prefix(root).map(Path::to_path_buf).unwrap_or(path));
            }
        }
    }
    Ok(out.into_iter().collect())
}

impl Project {
    /// Reads the manifest in `root` and parses every file it names.
    pub fn load(root: &Path) -> Result<Project, ProjectError> {
        let mpath = root.join(MANIFEST_FILE);
        let manifest = Manifest::parse(&read(&mpath)?).map_err(|(line, message)| ProjectError::Manifest {
            path: mpath.clone(),
            line,
            message,
        })?;
        let mut p = Project {
            root: root.to_path_buf(),
            manifest,
            frames: Vec::new(),
            requirements: Vec::new(),
            vos: Vec::new(),
            machines: Vec::new(),
            contexts: Vec::new(),
            notes: BTreeMap::new(),
            diagnostics: Vec::new(),
        };
        for path in expand(root, &p.manifest.frames)? {
            match parse_frame(&read(&root.join(&path))?) {
                Ok(item) => p.frames.push(Sourced { path, item }),
                Err(e) => p.diagnostics.push(file_diag(&path, e.to_diagnostic())),
            }
        }
        for path in expand(root, &p.manifest.requirements)? {
            match parse_requirements(&read(&root.join(&path))?) {
                Ok(reqs) => p.requirements.extend(reqs.into_iter().map(|item| Sourced { path: path.clone(), item })),
                Err(ds) => p.diagnostics.extend(ds.into_iter().map(|d| file_diag(&path, d))),
            }
        }
        for path in expand(root, &p.manifest.vos)? {
            let src = read(&root.join(&path))?;
            match parse_vo_file(&src) {
                Ok(vos) => {
                    for item in vos {
                        if let Some(note) = comment_above(&src, item.span.line) {
                            p.notes.insert(item.id.clone(), note);
                        }
                        p.vos.push(Sourced { path: path.clone(), item });
                    }
                }
                Err(e) => p.diagnostics.push(file_diag(&path, e.into_diagnostic("E-SYNTAX-001"))),
            }
        }
        for path in expand(root, &p.manifest.machines)? {
            match parse_machine(&read(&root.join(&path))?) {
                Ok(item) => p.machines.push(Sourced { path, item }),
                Err(e) => p.diagnostics.push(file_diag(&path, e.into_diagnostic("E-SYNTAX-001"))),
            }
        }
        for path in expand(root, &p.manifest.contexts)? {
            match parse_context(&read(&root.join(&path))?) {
                Ok(item) => p.contexts.push(Sourced { path, item }),
                Err(e) => p.diagnostics.push(file_diag(&path, e.into_diagnostic("E-SYNTAX-001"))),
            }
        }
        Ok(p)
    }

    pub fn machine(&self, name: &str) -> Option<&Sourced<MachineSpec>> {
        self.machines.iter().find(|m| m.item.name == name)
    }

    pub fn main_frame(&self) -> Option<&ProblemFrame> {
        self.frames.iter().map(|f| &f.item).find(|f| f.refines.is_none())
    }

    pub fn sub_frames(&self) -> Vec<ProblemFrame> {
        self.frames.iter().filter(|f| f.item.refines.is_some()).map(|f| f.item.clone()).collect()
    }

    pub fn frame_items(&self) -> Vec<ProblemFrame> {
        self.frames.iter().map(|f| f.item.clone()).collect()
    }

    /// Every domain named in any frame.
    pub fn domains(&self) -> BTreeSet<String> {
        self.frames.iter().flat_map(|f| f.item.domains.iter().map(|d| d.name.clone())).collect()
    }

    pub fn requirement_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.requirements.iter().map(|r| r.item.id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn machine_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.machines.iter().map(|m| m.item.name.clone()).collect();
        names.sort();
        names.dedup();
        names
    }

    /// The contexts `m` sees that exist in the project.
    pub fn contexts_of(&self, m: &MachineSpec) -> Vec<ContextSpec> {
        m.sees
            .iter()
            .filter_map(|s| self.contexts.iter().find(|c| c.item.name == *s))
            .map(|c| c.item.clone())
            .collect()
    }

    /// `m` followed by the machines it refines, most concrete first.
    pub fn chain(&self, m: &str) -> Vec<&MachineSpec> {
        let mut out: Vec<&MachineSpec> = Vec::new();
        let mut cur = self.machine(m).map(|s| &s.item);
        while let Some(spec) = cur {
            if out.iter().any(|x| x.name == spec.name) {
                break;
            }
            out.push(spec);
            cur = spec.refines.as_deref().and_then(|r| self.machine(r)).map(|s| &s.item);
        }
        out
    }

    pub fn plan(&self) -> Result<RefinementPlan, PlanError> {
        let main = self.main_frame().ok_or_else(|| PlanError {
            code: "E-PLAN-004",
            message: "project has no main frame".into(),
        })?;
        derive_plan(main, &self.sub_frames(), &self.manifest.choices)
    }

    /// Hash of a machine's canonical text together with the contexts it sees.
    pub fn machine_hash(&self, m: &MachineSpec) -> String {
        let mut text = m.to_string();
        let mut ctxs = self.contexts_of(m);
        ctxs.sort_by(|a, b| a.name.cmp(&b.name));
        for c in ctxs {
            text.push_str(&c.to_string());
        }
        digest(&text)
    }

    pub fn frames_hash(&self) -> String {
        let mut texts: Vec<String> = self.frames.iter().map(|f| f.item.to_string()).collect();
        texts.sort();
        digest(&texts.concat())
    }

    pub fn vo_hash(vo: &Vo) -> String {
        digest(&vo.to_string())
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            machines: self.machines.iter().map(|m| (m.item.name.clone(), self.machine_hash(&m.item))).collect(),
            domains: domain_hashes(&self.frame_items()),
            frames: self.frames_hash(),
        }
    }

    /// Hash of each file's canonical printed content, keyed by path.
    pub fn hash_artifacts(&self) -> BTreeMap<PathBuf, String> {
        let mut text: BTreeMap<PathBuf, String> = BTreeMap::new();
        let mut add = |p: &Path, s: String| text.entry(p.to_path_buf()).or_default().push_str(&s);
        for f in &self.frames {
            add(&f.path, f.item.to_string());
        }
        for r in &self.requirements {
            add(&r.path, format!("{}: {}\n", r.item.id, r.item.text));
        }
        for v in &self.vos {
            add(&v.path, format!("{}\n", v.item));
        }
        for m in &self.machines {
            add(&m.path, m.item.to_string());
        }
        for c in &self.contexts {
            add(&c.path, c.item.to_string());
        }
        text.into_iter().map(|(p, t)| (p, digest(&t))).collect()
    }

    pub fn vo_hashes(&self) -> BTreeMap<VoId, String> {
        self.vos.iter().map(|v| (v.item.id.clone(), Project::vo_hash(&v.item))).collect()
    }

    /// Runs every static check and, when they pass, explores each machine and
    /// checks its invariants.
    pub fn check(&self) -> Checked {
        let mut c = self.check_static();
        if c.has_errors() {
            return c;
        }
        for m in &self.machines {
            let Some(model) = c.models.get(&m.item.name) else { continue };
            match explore(model, self.manifest.cap) {
                Ok(space) => {
                    match check_invariants(&space, model) {
                        Ok(vs) => c.violations.extend(vs.into_iter().map(|v| InvariantViolation {
                            machine: m.item.name.clone(),
                            path: m.path.clone(),
                            label: v.label,
                            state: space.render_state(v.state),
                            trace: v.trace.iter().map(|&t| space.render_transition(t)).collect(),
                        })),
                        Err((s, e)) => c.runtime.push(file_diag(
                            &m.path,
                            Diagnostic::error(e.code(), format!("{e} (in state {})", space.render_state(s)), Some(m.item.span)),
                        )),
                    }
                    c.spaces.insert(m.item.name.clone(), space);
                }
                Err(e) => c.runtime.push(file_diag(&m.path, Diagnostic::error(e.code(), e.to_string(), Some(m.item.span)))),
            }
        }
        c
    }

    /// Frame, syntax, type and resolution checks, without exploring.
    pub fn check_static(&self) -> Checked {
        let mut c = Checked {
            diagnostics: self.diagnostics.clone(),
            ..Default::default()
        };
        self.check_frames(&mut c);
        self.check_requirements(&mut c);
        self.check_machines(&mut c);
        self.check_vos(&mut c);
        c
    }

    fn check_frames(&self, c: &mut Checked) {
        let reqs: BTreeSet<String> = self.requirement_ids().into_iter().collect();
        let mains: Vec<&Sourced<ProblemFrame>> = self.frames.iter().filter(|f| f.item.refines.is_none()).collect();
        if mains.len() > 1 || (mains.is_empty() && !self.frames.is_empty()) {
            let path = mains.get(1).map_or_else(|| PathBuf::from(MANIFEST_FILE), |f| f.path.clone());
            c.diagnostics.push(file_diag(
                &path,
                Diagnostic::error("E-PROJ-004", format!("project needs exactly one main frame, found {}", mains.len()), None),
            ));
        }
        let main = mains.first().map(|f| &f.item);
        for f in &self.frames {
            let parent = f.item.refines.as_ref().and(main);
            for d in check_frame(&f.item, Some(&reqs), parent) {
                c.diagnostics.push(file_diag(&f.path, d));
            }
        }
        let subs: BTreeSet<&str> = self.frames.iter().filter(|f| f.item.refines.is_some()).map(|f| f.item.name.as_str()).collect();
        for s in &subs {
            if !self.manifest.choices.contains_key(*s) {
                c.diagnostics.push(file_diag(
                    Path::new(MANIFEST_FILE),
                    Diagnostic::error("E-PROJ-005", format!("no `choice.{s}` for sub-frame {s}"), None),
                ));
            }
        }
        for s in self.manifest.choices.keys() {
            if !subs.contains(s.as_str()) {
                c.diagnostics.push(file_diag(
                    Path::new(MANIFEST_FILE),
                    Diagnostic::error("E-PROJ-005", format!("`choice.{s}` names no sub-frame"), None),
                ));
            }
        }
    }

    fn check_requirements(&self, c: &mut Checked) {
        let mut seen = BTreeSet::new();
        for r in &self.requirements {
            if !seen.insert(&r.item.id) {
                c.diagnostics.push(file_diag(
                    &r.path,
                    Diagnostic::error("E-VO-001", format!("duplicate requirement `{}`", r.item.id), Some(Span::new(r.item.line, 1))),
                ));
            }
        }
    }

    fn check_machines(&self, c: &mut Checked) {
        let domains = self.domains();
        let options = ModelOptions::default();
        let mut seen = BTreeSet::new();
        for m in &self.machines {
            let spec = &m.item;
            let mut diags = Vec::new();
            if !seen.insert(&spec.name) {
                diags.push(Diagnostic::error("E-PROJ-006", format!("duplicate machine `{}`", spec.name), Some(spec.span)));
            }
            for d in &spec.implements {
                if !domains.contains(d) {
                    diags.push(Diagnostic::error(
                        "E-PROJ-007",
                        format!("{} implements `{d}`, which is not a domain of any frame", spec.name),
                        Some(spec.span),
                    ));
                }
            }
            if let Some(r) = &spec.refines {
                match self.machine(r) {
                    Some(a) => diags.extend(check_gluing(spec, &a.item)),
                    None => diags.push(Diagnostic::error(
                        "E-TYPE-014",
                        format!("{} refines unknown machine `{r}`", spec.name),
                        Some(spec.span),
                    )),
                }
                if self.chain(&spec.name).len() <= self.chain(r).len() {
                    diags.push(Diagnostic::error("E-TYPE-015", format!("refinement cycle through {}", spec.name), Some(spec.span)));
                }
            }
            match Model::compile(spec, &self.contexts_of(spec), &options) {
                Ok(model) => {
                    c.models.entry(spec.name.clone()).or_insert(model);
                }
                Err(ds) => diags.extend(ds),
            }
            c.diagnostics.extend(diags.into_iter().map(|d| file_diag(&m.path, d)));
        }
    }

    fn check_vos(&self, c: &mut Checked) {
        let reqs: BTreeSet<String> = self.requirement_ids().into_iter().collect();
        let domains = self.domains();
        let mut seen = BTreeSet::new();
        for v in &self.vos {
            let vo = &v.item;
            let mut diags = Vec::new();
            if !seen.insert(vo.id.clone()) {
                diags.push(Diagnostic::error("E-VO-009", format!("duplicate VO `{}`", vo.id), Some(vo.span)));
            }
            if !reqs.contains(&vo.id.requirement) {
                diags.push(Diagnostic::error("E-VO-010", format!("unknown requirement `{}`", vo.id.requirement), Some(vo.span)));
            }
            match c.models.get(&vo.id.model) {
                Some(model) => {
                    let r = resolve(vo, model, &self.chain(&vo.id.model), &domains);
                    diags.extend(r.diagnostics.iter().cloned());
                    if r.diagnostics.is_empty() {
                        c.scopes.insert(vo.id.clone(), r.scope());
                    }
                }
                None if self.machine(&vo.id.model).is_none() => {
                    diags.push(Diagnostic::error("E-VO-002", format!("unknown machine `{}`", vo.id.model), Some(vo.span)))
                }
                None => {}
            }
            c.diagnostics.extend(diags.into_iter().map(|d| file_diag(&v.path, d)));
        }
    }

    pub fn scope_index(&self, scopes: &BTreeMap<VoId, BTreeSet<String>>) -> ScopeIndex {
        ScopeIndex {
            vos: scopes.clone(),
            machines: self
                .machines
                .iter()
                .map(|m| {
                    (
                        m.item.name.clone(),
                        MachineInfo {
                            refines: m.item.refines.clone(),
                            implements: m.item.implements.iter().cloned().collect(),
                        },
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct InvariantViolation {
    pub machine: String,
    pub path: PathBuf,
    pub label: String,
    pub state: String,
    pub trace: Vec<String>,
}

/// Outcome of [`Project::check`].
#[derive(Debug, Default)]
pub struct Checked {
    /// Syntax, frame, type and resolution errors.
    pub diagnostics: Vec<FileDiagnostic>,
    /// Evaluation errors raised while exploring.
    pub runtime: Vec<FileDiagnostic>,
    pub violations: Vec<InvariantViolation>,
    pub models: BTreeMap<String, Model>,
    pub spaces: BTreeMap<String, StateSpace>,
    /// Domain scope of every resolved VO.
    pub scopes: BTreeMap<VoId, BTreeSet<String>>,
}

impl Checked {
    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(|d| d.diagnostic.is_error())
    }

    /// Static checks passed, but exploration found a problem.
    pub fn has_violations(&self) -> bool {
        !self.violations.is_empty() || !self.runtime.is_empty()
    }

    pub fn is_clean(&self) -> bool {
        !self.has_errors() && !self.has_violations()
    }
}
