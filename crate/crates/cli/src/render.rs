//! Plain-text rendering of results.

use std::fmt::Write;
use vdd_core::engine::{Evidence, VoNode, VoResult, VtResult};
use vdd_core::specml::StateSpace;

/// The result tree below a VO headline, indented by two spaces per level.
pub fn vo_result(r: &VoResult, space: &StateSpace) -> String {
    let mut out = String::new();
    node(r, space, 1, &mut out);
    out
}

fn node(r: &VoResult, space: &StateSpace, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match &r.node {
        VoNode::Task { label, task, result, .. } => {
            let name = label.as_ref().map_or_else(|| task.to_string(), |l| format!("{l} ({task})"));
            let _ = writeln!(out, "{pad}{name}: {}", r.verdict);
            task_detail(result, space, &pad, out);
        }
        VoNode::And { left, right } | VoNode::Or { left, right } => {
            let op = if matches!(r.node, VoNode::And { .. }) { "AND" } else { "OR" };
            let _ = writeln!(out, "{pad}{op}: {}", r.verdict);
            node(left, space, depth + 1, out);
            node(right, space, depth + 1, out);
        }
        VoNode::Seq { left, right } => {
            let _ = writeln!(out, "{pad}SEQ: {}", r.verdict);
            if let Some(e) = &r.error {
                let _ = writeln!(out, "{pad}  error[{}]: {e}", e.code());
            }
            node(left, space, depth + 1, out);
            match right {
                Some(right) => node(right, space, depth + 1, out),
                None => {
                    let _ = writeln!(out, "{pad}  (not evaluated: the left side did not pass)");
                }
            }
        }
    }
}

fn task_detail(r: &VtResult, space: &StateSpace, pad: &str, out: &mut String) {
    if let Some(e) = &r.error {
        let _ = writeln!(out, "{pad}  error[{}]: {e}", e.code());
    }
    match &r.evidence {
        None => {}
        Some(Evidence::Trace { start, transitions }) => {
            let _ = writeln!(out, "{pad}  trace of {} steps:", transitions.len());
            let _ = writeln!(out, "{pad}    start  {}", space.render_state(*start));
            for &t in transitions {
                let _ = writeln!(
                    out,
                    "{pad}    {}  ->  {}",
                    space.render_transition(t),
                    space.render_state(space.transitions[t].target)
                );
            }
        }
        Some(Evidence::Lasso(l)) => {
            let _ = writeln!(out, "{pad}  lasso with stem {} and cycle {}:", l.stem().len(), l.cycle().len());
            let _ = writeln!(out, "{pad}    start  {}", space.render_state(l.states[0]));
            for (i, e) in l.edges.iter().enumerate() {
                if i == l.loop_start {
                    let _ = writeln!(out, "{pad}    loop from {}", space.render_state(l.states[i]));
                }
                let step = e.transition.map_or_else(|| "(deadlock, stays)".to_string(), |t| space.render_transition(t));
                let _ = writeln!(out, "{pad}    {step}  ->  {}", space.render_state(e.target));
            }
        }
    }
}

/// Left-aligned columns separated by two spaces.
pub fn table<const N: usize>(header: &[&str; N], rows: &[[String; N]]) -> String {
    let mut widths = header.map(str::len);
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let s: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(s.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
    out
}
