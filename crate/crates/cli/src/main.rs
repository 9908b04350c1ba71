mod animate;
mod render;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value as Json};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vdd_core::diag::FileDiagnostic;
use vdd_core::engine::{eval_vo, Verdict};
use vdd_core::ledger::{
    advance_all, freshness, reset_stage, Freshness, Ledger, Matrix, Record, ResultEntry, Stage, StageEntry, StageFacts,
    LEDGER_FILE,
};
use vdd_core::plan::explain_step;
use vdd_core::project::{Checked, Manifest, Project, ProjectError, MANIFEST_FILE};
use vdd_core::volang::VoId;

const EXIT_IO: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_VIOLATION: u8 = 3;
const EXIT_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "vdd", version, about = "Validation-driven development of formal specifications")]
struct Cli {
    /// Project directory holding `vdd.project`.
    #[arg(long, global = true, default_value = ".")]
    project: PathBuf,
    /// Suppress timestamps so that output depends only on the project files.
    #[arg(long, global = true)]
    reproducible: bool,
    /// Line-delimited JSON on standard output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a `vdd.project` manifest.
    Init {
        #[arg(long)]
        name: Option<String>,
    },
    /// Check frames, parse and typecheck everything, then check invariants.
    Check,
    /// Print the refinement plan derived from the frames.
    Plan {
        /// Also explain each step.
        #[arg(long)]
        explain: bool,
    },
    /// Evaluate VOs and record the results.
    Run(RunArgs),
    /// List recorded VOs made stale by changes since they ran.
    Impact {
        /// Follow consumer chains beyond one interface.
        #[arg(long)]
        transitive_impact: bool,
    },
    /// Workflow stage of every requirement.
    Status,
    /// Traceability matrix of current verdicts.
    Report {
        #[arg(long)]
        csv: bool,
    },
    /// Step through a machine interactively.
    Animate { machine: String },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct RunArgs {
    /// Run one VO, e.g. `REQ1/M0`.
    #[arg(long)]
    vo: Option<String>,
    /// Run every VO.
    #[arg(long)]
    all: bool,
}

/// Where command output goes.
struct Out {
    json: bool,
    stdout: std::io::StdoutLock<'static>,
}

impl Out {
    fn text(&mut self, s: &str) {
        if !self.json {
            let _ = writeln!(self.stdout, "{s}");
        }
    }

    fn record(&mut self, kind: &str, mut value: Json) {
        if self.json {
            if let Json::Object(m) = &mut value {
                m.insert("type".into(), kind.into());
            }
            let _ = writeln!(self.stdout, "{value}");
        }
    }

    fn diagnostic(&mut self, root: &Path, d: &FileDiagnostic) {
        let shown = FileDiagnostic {
            path: root.join(&d.path),
            diagnostic: d.diagnostic.clone(),
        };
        if self.json {
            self.record("diagnostic", json!({"path": shown.path, "diagnostic": d.diagnostic}));
        } else {
            eprintln!("{shown}");
        }
    }
}

struct Ctx {
    root: PathBuf,
    reproducible: bool,
}

impl Ctx {
    fn timestamp(&self) -> Option<u64> {
        if self.reproducible {
            return None;
        }
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).ok().map(|d| d.as_secs())
    }

    fn ledger_path(&self) -> PathBuf {
        self.root.join(LEDGER_FILE)
    }

    fn load(&self, out: &mut Out) -> Result<Project, u8> {
        Project::load(&self.root).map_err(|e| {
            let code = match e {
                ProjectError::Io { .. } => EXIT_IO,
                _ => EXIT_INVALID,
            };
            if out.json {
                out.record("error", json!({"message": e.to_string()}));
            } else {
                eprintln!("error: {e}");
            }
            code
        })
    }

    fn ledger(&self, out: &mut Out) -> Result<Ledger, u8> {
        Ledger::load(&self.ledger_path()).map_err(|e| fail(out, &e.to_string(), EXIT_IO))
    }
}

fn fail(out: &mut Out, message: &str, code: u8) -> u8 {
    if out.json {
        out.record("error", json!({"message": message}));
    } else {
        eprintln!("error: {message}");
    }
    code
}

/// Prints the outcome of `check` and returns its exit code.
fn report_check(root: &Path, checked: &Checked, out: &mut Out) -> u8 {
    for d in checked.diagnostics.iter().chain(&checked.runtime) {
        out.diagnostic(root, d);
    }
    for v in &checked.violations {
        let path = root.join(&v.path);
        if out.json {
            out.record("violation", json!({"path": path, "code": "E-INV-001", "violation": v}));
        } else {
            eprintln!("{}: error[E-INV-001]: {} violates {} in state {}", path.display(), v.machine, v.label, v.state);
            if v.trace.is_empty() {
                eprintln!("  reached by: INITIALISATION");
            } else {
                eprintln!("  reached by: INITIALISATION; {}", v.trace.join("; "));
            }
        }
    }
    if checked.has_errors() {
        EXIT_INVALID
    } else if checked.has_violations() {
        EXIT_VIOLATION
    } else {
        0
    }
}

fn cmd_init(ctx: &Ctx, name: Option<String>, out: &mut Out) -> u8 {
    let path = ctx.root.join(MANIFEST_FILE);
    if path.exists() {
        return fail(out, &format!("{} already exists", path.display()), EXIT_IO);
    }
    let name = name.unwrap_or_else(|| {
        std::fs::canonicalize(&ctx.root)
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "project".into())
    });
    let manifest = Manifest::new(&name);
    if let Err(e) = std::fs::create_dir_all(&ctx.root).and_then(|_| std::fs::write(&path, manifest.to_string())) {
        return fail(out, &format!("cannot write {}: {e}", path.display()), EXIT_IO);
    }
    out.text(&format!("created {}", path.display()));
    out.record("init", json!({"path": path, "name": name}));
    0
}

fn cmd_check(ctx: &Ctx, out: &mut Out) -> u8 {
    let project = match ctx.load(out) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let checked = project.check();
    let code = report_check(&ctx.root, &checked, out);
    let states: usize = checked.spaces.values().map(|s| s.states.len()).sum();
    if code == 0 {
        out.text(&format!(
            "ok: {} frames, {} requirements, {} VOs, {} machines, {} states explored",
            project.frames.len(),
            project.requirement_ids().len(),
            project.vos.len(),
            project.machines.len(),
            states
        ));
    }
    out.record("check", json!({"exit": code, "states": states}));
    code
}

fn cmd_plan(ctx: &Ctx, explain: bool, out: &mut Out) -> u8 {
    let project = match ctx.load(out) {
        Ok(p) => p,
        Err(code) => return code,
    };
    for d in &project.diagnostics {
        out.diagnostic(&ctx.root, d);
    }
    if !project.diagnostics.is_empty() {
        return EXIT_INVALID;
    }
    let plan = match project.plan() {
        Ok(p) => p,
        Err(e) => return fail(out, &format!("{}: {}", e.code, e.message), EXIT_INVALID),
    };
    if out.json {
        for (i, line) in plan.to_string().lines().enumerate() {
            let explanation = (explain && i > 0 && i <= plan.steps.len()).then(|| explain_step(&plan, i - 1).ok()).flatten();
            out.record("plan", json!({"line": line, "explanation": explanation}));
        }
    } else {
        print!("{plan}");
        if explain {
            println!();
            for i in 0..plan.steps.len() {
                if let Ok(text) = explain_step(&plan, i) {
                    println!("{text}");
                }
            }
        }
    }
    0
}

fn cmd_run(ctx: &Ctx, args: RunArgs, out: &mut Out) -> u8 {
    let project = match ctx.load(out) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let checked = project.check();
    let code = report_check(&ctx.root, &checked, out);
    if code != 0 {
        return fail(out, "the project does not check; nothing was run or recorded", code);
    }
    let selected: Vec<_> = match &args.vo {
        Some(id) => match project.vos.iter().find(|v| v.item.id.to_string() == *id) {
            Some(v) => vec![v],
            None => return fail(out, &format!("E-CLI-001: unknown VO `{id}`"), EXIT_INVALID),
        },
        None => project.vos.iter().collect(),
    };
    let mut ledger = match ctx.ledger(out) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let snapshot = project.snapshot();
    let mut any_failed = false;
    for v in selected {
        let vo = &v.item;
        let model = &checked.models[&vo.id.model];
        let space = &checked.spaces[&vo.id.model];
        let result = eval_vo(&vo.expr, model, space);
        any_failed |= result.verdict == Verdict::Fail;
        if out.json {
            out.record("result", json!({"vo": vo.id.to_string(), "verdict": result.verdict, "result": result}));
        } else {
            println!("{}: {}", vo.id, result.verdict);
            print!("{}", render::vo_result(&result, space));
        }
        let vo_hash = Project::vo_hash(vo);
        let machine_hash = snapshot.machines[&vo.id.model].clone();
        let entry = ResultEntry {
            vo: vo.id.clone(),
            verdict: result.verdict,
            machine_hash: machine_hash.clone(),
            frame_hash: snapshot.frames.clone(),
            vo_hash: vo_hash.clone(),
            timestamp: ctx.timestamp(),
            snapshot: snapshot.clone(),
        };
        if let Err(e) = ledger.record(&ctx.ledger_path(), entry, &snapshot, &vo_hash) {
            return fail(out, &e.to_string(), EXIT_IO);
        }
        let previous = ledger.latest_stage(&vo.id.requirement, &vo.id.model).cloned();
        let current = previous
            .as_ref()
            .map_or(Stage::Selected, |s| reset_stage(s.stage, &s.machine_hash, Some(&machine_hash)));
        let facts = StageFacts {
            vo_parsed: true,
            typechecks: true,
            invariants_pass: true,
            vo_passes: result.verdict == Verdict::Pass,
        };
        let (stage, _) = advance_all(&vo.id.requirement, &vo.id.model, current, &facts);
        let changed = previous.as_ref().is_none_or(|p| p.stage != stage || p.machine_hash != machine_hash);
        if changed {
            let entry = StageEntry {
                requirement: vo.id.requirement.clone(),
                machine: vo.id.model.clone(),
                stage,
                machine_hash,
                timestamp: ctx.timestamp(),
            };
            if let Err(e) = ledger.append(&ctx.ledger_path(), Record::Stage(entry)) {
                return fail(out, &e.to_string(), EXIT_IO);
            }
        }
    }
    if any_failed {
        EXIT_FAILED
    } else {
        0
    }
}

/// Loads the project and ledger and computes the freshness of every VO.
fn current_freshness(ctx: &Ctx, transitive: bool, explore: bool, out: &mut Out) -> Result<(Project, Checked, BTreeMap<VoId, Freshness>), u8> {
    let project = ctx.load(out)?;
    let checked = if explore { project.check() } else { project.check_static() };
    if checked.has_errors() {
        report_check(&ctx.root, &checked, out);
        return Err(EXIT_INVALID);
    }
    let ledger = ctx.ledger(out)?;
    let index = project.scope_index(&checked.scopes);
    let mut opts = project.manifest.impact_options();
    opts.transitive |= transitive;
    let fresh = freshness(&ledger, &project.vo_hashes(), &project.snapshot(), &index, &project.frame_items(), opts)
        .map_err(|e| fail(out, &e.to_string(), EXIT_INVALID))?;
    Ok((project, checked, fresh))
}

fn cmd_impact(ctx: &Ctx, transitive: bool, out: &mut Out) -> u8 {
    let (_, _, fresh) = match current_freshness(ctx, transitive, false, out) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let mut n = 0;
    for (id, f) in &fresh {
        if let Freshness::Stale { verdict, reason } = f {
            n += 1;
            out.text(&format!("{id}: STALE (was {verdict}): {reason}"));
            out.record("stale", json!({"vo": id.to_string(), "verdict": verdict, "reason": reason, "explanation": reason.to_string()}));
        }
    }
    if n == 0 {
        out.text("no stale VOs");
    }
    0
}

fn cmd_status(ctx: &Ctx, out: &mut Out) -> u8 {
    let (project, checked, fresh) = match current_freshness(ctx, false, true, out) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let ledger = match ctx.ledger(out) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let snapshot = project.snapshot();
    let failing: BTreeSet<&str> = checked.violations.iter().map(|v| v.machine.as_str()).collect();
    let mut rows: Vec<[String; 4]> = Vec::new();
    for req in project.requirement_ids() {
        let vos: Vec<&VoId> = fresh.keys().filter(|id| id.requirement == req).collect();
        if vos.is_empty() {
            rows.push([req.clone(), "-".into(), Stage::Selected.to_string(), "no VO".into()]);
        }
        for id in vos {
            let hash = snapshot.machines.get(&id.model).map(String::as_str);
            let recorded = ledger
                .latest_stage(&id.requirement, &id.model)
                .map_or(Stage::Selected, |s| reset_stage(s.stage, &s.machine_hash, hash));
            let facts = StageFacts {
                vo_parsed: true,
                typechecks: checked.models.contains_key(&id.model),
                invariants_pass: checked.spaces.contains_key(&id.model) && !failing.contains(id.model.as_str()),
                vo_passes: matches!(fresh[id], Freshness::Fresh { verdict: Verdict::Pass }),
            };
            let (stage, blocked) = advance_all(&id.requirement, &id.model, recorded, &facts);
            let note = match (&fresh[id], blocked) {
                (Freshness::Stale { reason, .. }, _) => format!("stale: {reason}"),
                (_, Some(e)) => match e {
                    vdd_core::ledger::LedgerError::Prerequisite { missing, .. } => missing,
                    other => other.to_string(),
                },
                (_, None) => "done".into(),
            };
            rows.push([req.clone(), id.model.clone(), stage.to_string(), note]);
        }
    }
    if out.json {
        for [requirement, machine, stage, note] in &rows {
            out.record("status", json!({"requirement": requirement, "machine": machine, "stage": stage, "note": note}));
        }
    } else {
        print!("{}", render::table(&["requirement", "machine", "stage", "next"], &rows));
    }
    0
}

fn cmd_report(ctx: &Ctx, csv: bool, out: &mut Out) -> u8 {
    let (project, _, fresh) = match current_freshness(ctx, false, false, out) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let matrix = Matrix::build(&project.requirement_ids(), &project.machine_names(), &fresh);
    if out.json {
        out.record("matrix", json!({"matrix": matrix}));
        for (id, note) in &project.notes {
            out.record("note", json!({"vo": id.to_string(), "note": note}));
        }
    } else if csv {
        print!("{}", matrix.to_csv());
    } else {
        print!("{}", matrix.to_table());
        if !project.notes.is_empty() {
            println!();
            println!("notes:");
            for (id, note) in &project.notes {
                println!("  {id}: {note}");
            }
        }
    }
    if !ctx.reproducible && !out.json && !csv {
        if let Some(t) = ctx.timestamp() {
            println!();
            println!("generated at {t} (seconds since the Unix epoch)");
        }
    }
    0
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        root: cli.project,
        reproducible: cli.reproducible,
    };
    let mut out = Out {
        json: cli.json,
        stdout: std::io::stdout().lock(),
    };
    let code = match cli.command {
        Command::Init { name } => cmd_init(&ctx, name, &mut out),
        Command::Check => cmd_check(&ctx, &mut out),
        Command::Plan { explain } => cmd_plan(&ctx, explain, &mut out),
        Command::Run(args) => cmd_run(&ctx, args, &mut out),
        Command::Impact { transitive_impact } => cmd_impact(&ctx, transitive_impact, &mut out),
        Command::Status => cmd_status(&ctx, &mut out),
        Command::Report { csv } => cmd_report(&ctx, csv, &mut out),
        Command::Animate { machine } => animate::run(&ctx.root, &machine, &mut out),
    };
    let _ = out.stdout.flush();
    ExitCode::from(code)
}
