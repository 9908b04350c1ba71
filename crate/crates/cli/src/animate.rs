//! Interactive animation of one machine on standard input and output.

use crate::{fail, Out, EXIT_INVALID};
use serde_json::json;
use std::io::BufRead;
use std::path::Path;
use vdd_core::specml::{Firing, Model, ModelOptions, State};
use vdd_core::project::Project;

fn positional(model: &Model, f: &Firing) -> String {
    let name = model.event_name(f.event);
    if f.binding.is_empty() {
        name.to_string()
    } else {
        let args: Vec<String> = f.binding.iter().map(|v| v.to_string()).collect();
        format!("{name}({})", args.join(", "))
    }
}

fn named(model: &Model, f: &Firing) -> String {
    let name = model.event_name(f.event);
    if f.binding.is_empty() {
        name.to_string()
    } else {
        let args: Vec<String> = model.named_binding(f.event, &f.binding).iter().map(|(n, v)| format!("{n} := {v}")).collect();
        format!("{name}({})", args.join(", "))
    }
}

/// The steps taken so far as a TRACE task.
fn scenario(model: &Model, steps: &[Firing]) -> String {
    if steps.is_empty() {
        return "TRACE(| TRUE)".into();
    }
    let s: Vec<String> = steps.iter().map(|f| positional(model, f)).collect();
    format!("TRACE({})", s.join("; "))
}

struct Session<'a> {
    model: &'a Model,
    start: State,
    steps: Vec<Firing>,
}

impl Session<'_> {
    fn current(&self) -> &State {
        self.steps.last().map_or(&self.start, |f| &f.target)
    }
}

fn show(out: &mut Out, model: &Model, state: &State, enabled: &[Firing]) {
    if out.json {
        let events: Vec<String> = enabled.iter().map(|f| named(model, f)).collect();
        out.record("state", json!({"state": model.render(state), "enabled": events}));
        return;
    }
    out.text(&format!("state: {}", model.render(state)));
    if enabled.is_empty() {
        out.text("  no enabled events (deadlock)");
    }
    for (i, f) in enabled.iter().enumerate() {
        out.text(&format!("  [{}] {}", i + 1, named(model, f)));
    }
}

fn say(out: &mut Out, kind: &str, message: &str) {
    out.text(message);
    out.record(kind, json!({"message": message}));
}

pub fn run(root: &Path, machine: &str, out: &mut Out) -> u8 {
    let project = match Project::load(root) {
        Ok(p) => p,
        Err(e) => return fail(out, &e.to_string(), crate::EXIT_IO),
    };
    let Some(spec) = project.machine(machine) else {
        return fail(out, &format!("unknown machine `{machine}`"), EXIT_INVALID);
    };
    let model = match Model::compile(&spec.item, &project.contexts_of(&spec.item), &ModelOptions::default()) {
        Ok(m) => m,
        Err(ds) => {
            for d in ds {
                out.diagnostic(
                    root,
                    &vdd_core::diag::FileDiagnostic {
                        path: spec.path.clone(),
                        diagnostic: d,
                    },
                );
            }
            return EXIT_INVALID;
        }
    };
    let initial = match model.initial_states() {
        Ok(s) if !s.is_empty() => s,
        Ok(_) => return fail(out, "the machine has no initial state", EXIT_INVALID),
        Err(e) => return fail(out, &format!("{}: {e}", e.code()), EXIT_INVALID),
    };
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();

    // Several initial states: pick one first.
    let mut start = (initial.len() == 1).then(|| initial[0].clone());
    while start.is_none() {
        out.text("initial states:");
        for (i, s) in initial.iter().enumerate() {
            out.text(&format!("  [{}] {}", i + 1, model.render(s)));
        }
        out.record("initial", json!({"states": initial.iter().map(|s| model.render(s)).collect::<Vec<_>>()}));
        prompt(out);
        let Some(Ok(line)) = lines.next() else { return 0 };
        match line.trim() {
            "quit" | "q" => return 0,
            t => match t.parse::<usize>() {
                Ok(n) if (1..=initial.len()).contains(&n) => start = Some(initial[n - 1].clone()),
                _ => say(out, "invalid", "invalid selection"),
            },
        }
    }
    let start = start.expect("chosen above");
    let mut s = Session {
        model: &model,
        start,
        steps: Vec::new(),
    };
    loop {
        let enabled = match model.successors(s.current()) {
            Ok(e) => e,
            Err(e) => return fail(out, &format!("{}: {e}", e.code()), crate::EXIT_VIOLATION),
        };
        show(out, &model, s.current(), &enabled);
        prompt(out);
        let Some(Ok(line)) = lines.next() else { return 0 };
        let line = line.trim();
        let (cmd, arg) = line.split_once(char::is_whitespace).map_or((line, ""), |(c, a)| (c, a.trim()));
        match cmd {
            "" => {}
            "quit" | "q" => return 0,
            "help" => out.text("commands: <number> fires an event; undo; reset; save <file>; quit"),
            "undo" => {
                if s.steps.pop().is_none() {
                    say(out, "invalid", "nothing to undo");
                }
            }
            "reset" => s.steps.clear(),
            "save" if !arg.is_empty() => {
                let text = scenario(s.model, &s.steps);
                match std::fs::write(arg, format!("{text}\n")) {
                    Ok(()) => {
                        out.text(&format!("saved {text} to {arg}"));
                        out.record("saved", json!({"path": arg, "scenario": text}));
                    }
                    Err(e) => say(out, "error", &format!("cannot write {arg}: {e}")),
                }
            }
            _ => match cmd.parse::<usize>() {
                Ok(n) if (1..=enabled.len()).contains(&n) => s.steps.push(enabled[n - 1].clone()),
                _ => say(out, "invalid", "invalid selection"),
            },
        }
    }
}

fn prompt(out: &mut Out) {
    use std::io::Write;
    if !out.json {
        let _ = write!(out.stdout, "> ");
        let _ = out.stdout.flush();
    }
}
