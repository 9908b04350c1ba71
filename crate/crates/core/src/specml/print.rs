//! Canonical printers. The output re-parses to an equal AST and is the input
//! to change-detection hashing, so its layout must stay stable.

use super::*;
use std::fmt;

impl fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeExpr::Bool => write!(f, "BOOL"),
            TypeExpr::Unbounded(w) => write!(f, "{w}"),
            TypeExpr::Range(lo, hi) => write!(f, "{lo}..{hi}"),
            TypeExpr::Named(n) => write!(f, "{n}"),
            TypeExpr::SetOf(t) => write!(f, "set of {t}"),
            TypeExpr::Map { total, dom, ran } => {
                let kw = if *total { "total" } else { "partial" };
                match **dom {
                    TypeExpr::Map { .. } => write!(f, "{kw} map ({dom}) -> {ran}"),
                    _ => write!(f, "{kw} map {dom} -> {ran}"),
                }
            }
        }
    }
}

impl fmt::Display for EventSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "  event {}", self.name)?;
        if !self.params.is_empty() {
            let params: Vec<String> = self.params.iter().map(|p| format!("{} : {}", p.name, p.ty)).collect();
            writeln!(f, "  any {}", params.join(", "))?;
        }
        if !self.guards.is_empty() {
            writeln!(f, "  where")?;
            for g in &self.guards {
                writeln!(f, "    {}: {}", g.label, g.pred)?;
            }
        }
        if !self.actions.is_empty() {
            writeln!(f, "  then")?;
            for a in &self.actions {
                writeln!(f, "    {} := {}", a.var, a.value)?;
            }
        }
        writeln!(f, "  end")
    }
}

impl fmt::Display for MachineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "machine {}", self.name)?;
        if let Some(r) = &self.refines {
            writeln!(f, "refines {r}")?;
        }
        if !self.sees.is_empty() {
            writeln!(f, "sees {}", self.sees.join(", "))?;
        }
        if !self.implements.is_empty() {
            writeln!(f, "implements {}", self.implements.join(", "))?;
        }
        for g in &self.gluing {
            writeln!(f, "glue {}: {}", g.variable, g.pred)?;
        }
        if !self.variables.is_empty() {
            writeln!(f, "variables")?;
            for v in &self.variables {
                writeln!(f, "  {} : {}", v.name, v.ty)?;
            }
        }
        if !self.invariants.is_empty() {
            writeln!(f, "invariants")?;
            for i in &self.invariants {
                writeln!(f, "  {}: {}", i.label, i.pred)?;
            }
        }
        if !self.events.is_empty() {
            writeln!(f, "events")?;
            for e in &self.events {
                write!(f, "{e}")?;
            }
        }
        writeln!(f, "end")
    }
}

impl fmt::Display for ContextSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "context {}", self.name)?;
        if !self.sets.is_empty() {
            writeln!(f, "sets")?;
            for s in &self.sets {
                writeln!(f, "  {} = {{{}}}", s.name, s.elements.join(", "))?;
            }
        }
        if !self.constants.is_empty() {
            writeln!(f, "constants")?;
            for c in &self.constants {
                writeln!(f, "  {} = {}", c.name, c.value)?;
            }
        }
        writeln!(f, "end")
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_context, parse_machine};

    #[test]
    fn machine_round_trips_and_ignores_layout() {
        let src = "machine M  sees C implements D
variables x : 0..2   s : set of E  f : partial map E -> 0..3
invariants inv1: x >= 0 # comment
events
 event INITIALISATION then x := 0 s := {} f := {} end
 event go any e : E when grd1: e /: s then act1: s := s \\/ {e} f := f <+ {e |-> x} end
end";
        let m = parse_machine(src).unwrap();
        let printed = m.to_string();
        let again = parse_machine(&printed).unwrap();
        assert_eq!(again, m);
        assert_eq!(again.to_string(), printed);
    }

    #[test]
    fn context_round_trips() {
        let c = parse_context("context C sets E = {a,b} constants K = 3 S = {a |-> 1} end").unwrap();
        assert_eq!(parse_context(&c.to_string()).unwrap(), c);
    }
}
