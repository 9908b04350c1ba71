use super::*;
use crate::diag::ParseError;
use crate::expr::{parse_expr, parse_expr_min};
use crate::lex::{tokenize, Cursor, Sym, Tok};

const KEYWORDS: &[&str] = &[
    "machine",
    "context",
    "refines",
    "sees",
    "implements",
    "glue",
    "variables",
    "invariants",
    "events",
    "event",
    "any",
    "where",
    "when",
    "then",
    "end",
    "sets",
    "constants",
];

fn is_keyword(cur: &Cursor) -> bool {
    matches!(cur.peek(), Tok::Ident(w) if KEYWORDS.contains(&w.as_str()))
}

fn expect_name(cur: &mut Cursor) -> Result<(String, crate::diag::Span), ParseError> {
    if is_keyword(cur) {
        return Err(cur.unexpected("a name"));
    }
    cur.expect_ident()
}

fn name_list(cur: &mut Cursor) -> Result<Vec<String>, ParseError> {
    let mut names = vec![expect_name(cur)?.0];
    while cur.eat_sym(Sym::Comma) {
        names.push(expect_name(cur)?.0);
    }
    Ok(names)
}

/// `label :` lookahead: an identifier that is not a keyword, then a colon.
fn at_label(cur: &Cursor) -> bool {
    !is_keyword(cur)
        && matches!(cur.peek(), Tok::Ident(_))
        && matches!(cur.peek_at(1), Tok::Sym(Sym::Colon))
}

/// Predicates with optional `label:` prefixes; unlabeled ones are numbered
/// `{prefix}1`, `{prefix}2`, ... by position.
fn labeled_list(cur: &mut Cursor, prefix: &str) -> Result<Vec<Labeled>, ParseError> {
    let mut out = Vec::new();
    loop {
        let span = cur.span();
        let label = if at_label(cur) {
            let (label, _) = cur.expect_ident()?;
            cur.expect_sym(Sym::Colon)?;
            label
        } else if is_keyword(cur) || cur.at_eof() {
            break;
        } else {
            format!("{prefix}{}", out.len() + 1)
        };
        let pred = parse_expr(cur)?;
        out.push(Labeled { label, pred, span });
    }
    Ok(out)
}

pub(crate) fn parse_type(cur: &mut Cursor) -> Result<TypeExpr, ParseError> {
    let base = parse_type_base(cur)?;
    if cur.eat_sym(Sym::PartialArrow) {
        let ran = parse_type(cur)?;
        return Ok(TypeExpr::Map {
            total: false,
            dom: Box::new(base),
            ran: Box::new(ran),
        });
    }
    if cur.eat_sym(Sym::TotalArrow) {
        let ran = parse_type(cur)?;
        return Ok(TypeExpr::Map {
            total: true,
            dom: Box::new(base),
            ran: Box::new(ran),
        });
    }
    Ok(base)
}

fn parse_type_base(cur: &mut Cursor) -> Result<TypeExpr, ParseError> {
    if let Tok::Ident(word) = cur.peek().clone() {
        match word.as_str() {
            "BOOL" => {
                cur.bump();
                return Ok(TypeExpr::Bool);
            }
            "INT" | "NAT" => {
                cur.bump();
                return Ok(TypeExpr::Unbounded(word));
            }
            "set" if matches!(cur.peek_at(1), Tok::Ident(w) if w == "of") => {
                cur.bump();
                cur.bump();
                return Ok(TypeExpr::SetOf(Box::new(parse_type(cur)?)));
            }
            "POW" => {
                cur.bump();
                cur.expect_sym(Sym::LParen)?;
                let inner = parse_type(cur)?;
                cur.expect_sym(Sym::RParen)?;
                return Ok(TypeExpr::SetOf(Box::new(inner)));
            }
            "partial" | "total" if matches!(cur.peek_at(1), Tok::Ident(w) if w == "map") => {
                cur.bump();
                cur.bump();
                let dom = parse_type_base(cur)?;
                cur.expect_sym(Sym::Arrow)?;
                let ran = parse_type(cur)?;
                return Ok(TypeExpr::Map {
                    total: word == "total",
                    dom: Box::new(dom),
                    ran: Box::new(ran),
                });
            }
            _ => {
                let continues = matches!(
                    cur.peek_at(1),
                    Tok::Sym(Sym::DotDot | Sym::Plus | Sym::Minus | Sym::Star | Sym::Slash | Sym::Mod)
                );
                if !continues {
                    cur.bump();
                    return Ok(TypeExpr::Named(word));
                }
            }
        }
    }
    if cur.eat_sym(Sym::LParen) {
        let t = parse_type(cur)?;
        cur.expect_sym(Sym::RParen)?;
        return Ok(t);
    }
    let lo = parse_expr_min(cur, 9)?;
    cur.expect_sym(Sym::DotDot)?;
    let hi = parse_expr_min(cur, 9)?;
    Ok(TypeExpr::Range(lo, hi))
}

fn typed_decls(cur: &mut Cursor) -> Result<Vec<VarDecl>, ParseError> {
    let mut out = Vec::new();
    while at_label(cur) {
        let (name, span) = cur.expect_ident()?;
        cur.expect_sym(Sym::Colon)?;
        let ty = parse_type(cur)?;
        out.push(VarDecl { name, ty, span });
    }
    Ok(out)
}

fn parse_event(cur: &mut Cursor) -> Result<EventSpec, ParseError> {
    let span = cur.expect_keyword("event")?;
    let (name, _) = expect_name(cur)?;
    let mut params = Vec::new();
    if cur.eat_ident("any") {
        loop {
            let (pname, pspan) = expect_name(cur)?;
            cur.expect_sym(Sym::Colon)?;
            let ty = parse_type(cur)?;
            params.push(VarDecl {
                name: pname,
                ty,
                span: pspan,
            });
            if !cur.eat_sym(Sym::Comma) {
                break;
            }
        }
    }
    let mut guards = Vec::new();
    if cur.eat_ident("where") || cur.eat_ident("when") {
        guards = labeled_list(cur, "grd")?;
    }
    let mut actions = Vec::new();
    if cur.eat_ident("then") {
        loop {
            if is_keyword(cur) || !matches!(cur.peek(), Tok::Ident(_)) {
                break;
            }
            // optional `act1:` label
            if matches!(cur.peek_at(1), Tok::Sym(Sym::Colon))
                && matches!(cur.peek_at(2), Tok::Ident(_))
                && matches!(cur.peek_at(3), Tok::Sym(Sym::Assign))
            {
                cur.bump();
                cur.bump();
            }
            let (var, vspan) = expect_name(cur)?;
            cur.expect_sym(Sym::Assign)?;
            let value = parse_expr(cur)?;
            actions.push(Action {
                var,
                value,
                span: vspan,
            });
        }
    }
    cur.expect_keyword("end")?;
    Ok(EventSpec {
        name,
        params,
        guards,
        actions,
        span,
    })
}

/// Parses a `.mch` source file.
pub fn parse_machine(src: &str) -> Result<MachineSpec, ParseError> {
    let mut cur = Cursor::new(tokenize(src)?);
    let span = cur.expect_keyword("machine")?;
    let (name, _) = expect_name(&mut cur)?;
    let mut m = MachineSpec {
        name,
        refines: None,
        sees: Vec::new(),
        implements: Vec::new(),
        gluing: Vec::new(),
        variables: Vec::new(),
        invariants: Vec::new(),
        events: Vec::new(),
        span,
    };
    loop {
        let clause_span = cur.span();
        let Tok::Ident(word) = cur.peek().clone() else {
            return Err(cur.unexpected("a machine clause or `end`"));
        };
        match word.as_str() {
            "refines" => {
                cur.bump();
                if m.refines.is_some() {
                    return Err(ParseError::new(clause_span, "duplicate `refines` clause"));
                }
                m.refines = Some(expect_name(&mut cur)?.0);
            }
            "sees" => {
                cur.bump();
                m.sees.extend(name_list(&mut cur)?);
            }
            "implements" => {
                cur.bump();
                m.implements.extend(name_list(&mut cur)?);
            }
            "glue" => {
                cur.bump();
                let (variable, gspan) = expect_name(&mut cur)?;
                cur.expect_sym(Sym::Colon)?;
                let pred = parse_expr(&mut cur)?;
                m.gluing.push(Gluing {
                    variable,
                    pred,
                    span: gspan,
                });
            }
            "variables" => {
                cur.bump();
                m.variables.extend(typed_decls(&mut cur)?);
            }
            "invariants" => {
                cur.bump();
                m.invariants.extend(labeled_list(&mut cur, "inv")?);
            }
            "events" => {
                cur.bump();
                while cur.is_ident("event") {
                    m.events.push(parse_event(&mut cur)?);
                }
            }
            "end" => {
                cur.bump();
                break;
            }
            _ => return Err(cur.unexpected("a machine clause or `end`")),
        }
    }
    if !cur.at_eof() {
        return Err(cur.unexpected("end of file"));
    }
    Ok(m)
}

/// Parses a `.ctx` source file.
pub fn parse_context(src: &str) -> Result<ContextSpec, ParseError> {
    let mut cur = Cursor::new(tokenize(src)?);
    let span = cur.expect_keyword("context")?;
    let (name, _) = expect_name(&mut cur)?;
    let mut ctx = ContextSpec {
        name,
        sets: Vec::new(),
        constants: Vec::new(),
        span,
    };
    loop {
        if cur.eat_ident("sets") {
            while !is_keyword(&cur) && matches!(cur.peek(), Tok::Ident(_)) {
                let (sname, sspan) = cur.expect_ident()?;
                cur.expect_sym(Sym::Eq)?;
                cur.expect_sym(Sym::LBrace)?;
                let elements = if cur.is_sym(Sym::RBrace) {
                    Vec::new()
                } else {
                    name_list(&mut cur)?
                };
                cur.expect_sym(Sym::RBrace)?;
                ctx.sets.push(CarrierSet {
                    name: sname,
                    elements,
                    span: sspan,
                });
            }
        } else if cur.eat_ident("constants") {
            while !is_keyword(&cur) && matches!(cur.peek(), Tok::Ident(_)) {
                let (cname, cspan) = cur.expect_ident()?;
                cur.expect_sym(Sym::Eq)?;
                let value = parse_expr(&mut cur)?;
                ctx.constants.push(ConstantDef {
                    name: cname,
                    value,
                    span: cspan,
                });
            }
        } else if cur.eat_ident("end") {
            break;
        } else {
            return Err(cur.unexpected("`sets`, `constants` or `end`"));
        }
    }
    if !cur.at_eof() {
        return Err(cur.unexpected("end of file"));
    }
    Ok(ctx)
}

#[cfg(test)]
mod tests {
    use super::*;

    const M0: &str = "
machine M0
sees AmanCtx
implements Schedule, Aircraft
variables
  scheduledAirplanes : set of AIRPLANE
invariants
  inv1: scheduledAirplanes <: AIRPLANE
events
  event INITIALISATION
  then
    scheduledAirplanes := {}
  end
  event addAirplane
  any p : AIRPLANE
  where
    grd1: p /: scheduledAirplanes
  then
    act1: scheduledAirplanes := scheduledAirplanes \\/ {p}
  end
end
";

    #[test]
    fn parses_schedule_machine() {
        let m = parse_machine(M0).unwrap();
        assert_eq!(m.name, "M0");
        assert_eq!(m.sees, vec!["AmanCtx"]);
        assert_eq!(m.implements, vec!["Schedule", "Aircraft"]);
        assert_eq!(m.variables.len(), 1);
        assert_eq!(
            m.variables[0].ty,
            TypeExpr::SetOf(Box::new(TypeExpr::Named("AIRPLANE".into())))
        );
        assert_eq!(m.events.len(), 2);
        let add = m.event("addAirplane").unwrap();
        assert_eq!(add.params[0].name, "p");
        assert_eq!(add.guards[0].label, "grd1");
        assert_eq!(add.actions[0].var, "scheduledAirplanes");
    }

    #[test]
    fn parses_map_types_and_refinement_header() {
        let src = "
machine M1 refines M0 sees AmanCtx
glue scheduledAirplanes: scheduledAirplanes = dom(landing_sequence)
variables
  landing_sequence : partial map AIRPLANE -> 0..MAXTIME
  other : AIRPLANE --> BOOL
  n : 0..MAXTIME - 1
end";
        let m = parse_machine(src).unwrap();
        assert_eq!(m.refines.as_deref(), Some("M0"));
        assert_eq!(m.gluing[0].variable, "scheduledAirplanes");
        let TypeExpr::Map { total, ran, .. } = &m.variables[0].ty else {
            panic!()
        };
        assert!(!total);
        assert!(matches!(**ran, TypeExpr::Range(..)));
        assert!(matches!(&m.variables[1].ty, TypeExpr::Map { total: true, .. }));
        assert!(matches!(&m.variables[2].ty, TypeExpr::Range(..)));
    }

    #[test]
    fn machine_without_events_parses() {
        let m = parse_machine("machine Empty variables x : BOOL end").unwrap();
        assert!(m.events.is_empty());
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_machine("machine M\nvariables\n  x : \nend").unwrap_err();
        assert_eq!(err.span.line, 4);
        let err = parse_machine("machine M\nevents\n  event e then x = 1 end\nend").unwrap_err();
        assert_eq!(err.span.line, 3);
    }

    #[test]
    fn parses_context() {
        let c = parse_context(
            "context AmanCtx\nsets\n  AIRPLANE = {a, b, c}\nconstants\n  MAXTIME = 10\n  SEP = 3\nend",
        )
        .unwrap();
        assert_eq!(c.sets[0].elements, vec!["a", "b", "c"]);
        assert_eq!(c.constants.len(), 2);
        assert_eq!(c.constants[1].value.to_string(), "3");
    }
}
