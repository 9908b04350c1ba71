//! Tokenizer shared by the frame, machine and obligation languages.
//!
//! ASCII operators are canonical; the usual mathematical Unicode symbols are
//! accepted as aliases and produce the same tokens.

use crate::diag::{ParseError, Span};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    Sym(Sym),
    Eof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sym {
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    Dot,
    DotDot,
    Assign,
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    NotIn,
    Subset,
    NotSubset,
    Union,
    Inter,
    Backslash,
    Plus,
    Minus,
    Star,
    Slash,
    Mod,
    Maplet,
    Override,
    Arrow,
    LeftArrow,
    BiArrow,
    PartialArrow,
    TotalArrow,
    Implies,
    Iff,
    And,
    Or,
    Not,
    Forall,
    Exists,
    Bar,
    At,
}

impl Sym {
    pub fn text(self) -> &'static str {
        use Sym::*;
        match self {
            LParen => "(",
            RParen => ")",
            LBrace => "{",
            RBrace => "}",
            LBracket => "[",
            RBracket => "]",
            Comma => ",",
            Semi => ";",
            Colon => ":",
            Dot => ".",
            DotDot => "..",
            Assign => ":=",
            Eq => "=",
            Neq => "/=",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            In => ":",
            NotIn => "/:",
            Subset => "<:",
            NotSubset => "/<:",
            Union => "\\/",
            Inter => "/\\",
            Backslash => "\\",
            Plus => "+",
            Minus => "-",
            Star => "*",
            Slash => "/",
            Mod => "mod",
            Maplet => "|->",
            Override => "<+",
            Arrow => "->",
            LeftArrow => "<-",
            BiArrow => "<->",
            PartialArrow => "+->",
            TotalArrow => "-->",
            Implies => "=>",
            Iff => "<=>",
            And => "&",
            Or => "or",
            Not => "not",
            Forall => "forall",
            Exists => "exists",
            Bar => "|",
            At => "@",
        }
    }
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Str(s) => write!(f, "\"{s}\""),
            Tok::Sym(s) => write!(f, "`{}`", s.text()),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

// Longest match first.
const ASCII_SYMS: &[(&str, Sym)] = &[
    ("+->", Sym::PartialArrow),
    ("-->", Sym::TotalArrow),
    ("<->", Sym::BiArrow),
    ("<=>", Sym::Iff),
    ("/<:", Sym::NotSubset),
    ("|->", Sym::Maplet),
    (":=", Sym::Assign),
    ("/:", Sym::NotIn),
    ("<:", Sym::Subset),
    ("<+", Sym::Override),
    ("<=", Sym::Le),
    (">=", Sym::Ge),
    ("->", Sym::Arrow),
    ("<-", Sym::LeftArrow),
    ("=>", Sym::Implies),
    ("/=", Sym::Neq),
    ("/\\", Sym::Inter),
    ("\\/", Sym::Union),
    ("..", Sym::DotDot),
    ("(", Sym::LParen),
    (")", Sym::RParen),
    ("{", Sym::LBrace),
    ("}", Sym::RBrace),
    ("[", Sym::LBracket),
    ("]", Sym::RBracket),
    (",", Sym::Comma),
    (";", Sym::Semi),
    (":", Sym::Colon),
    (".", Sym::Dot),
    ("=", Sym::Eq),
    ("<", Sym::Lt),
    (">", Sym::Gt),
    ("\\", Sym::Backslash),
    ("+", Sym::Plus),
    ("-", Sym::Minus),
    ("*", Sym::Star),
    ("/", Sym::Slash),
    ("&", Sym::And),
    ("|", Sym::Bar),
    ("@", Sym::At),
];

fn unicode_sym(c: char) -> Option<Sym> {
    Some(match c {
        '∧' => Sym::And,
        '∨' => Sym::Or,
        '¬' => Sym::Not,
        '⟹' | '⇒' => Sym::Implies,
        '⇔' => Sym::Iff,
        '∈' => Sym::In,
        '∉' => Sym::NotIn,
        '⊆' => Sym::Subset,
        '⊈' => Sym::NotSubset,
        '∪' => Sym::Union,
        '∩' => Sym::Inter,
        '↦' => Sym::Maplet,
        '≠' => Sym::Neq,
        '≤' => Sym::Le,
        '≥' => Sym::Ge,
        '∀' => Sym::Forall,
        '∃' => Sym::Exists,
        '·' => Sym::Dot,
        '≔' => Sym::Assign,
        '×' => Sym::Star,
        '÷' => Sym::Slash,
        '−' => Sym::Minus,
        '→' => Sym::Arrow,
        '←' => Sym::LeftArrow,
        '↔' => Sym::BiArrow,
        '⇸' => Sym::PartialArrow,
        '\u{E100}' => Sym::Override,
        _ => return None,
    })
}

fn keyword_sym(word: &str) -> Option<Sym> {
    Some(match word {
        "or" => Sym::Or,
        "not" => Sym::Not,
        "mod" => Sym::Mod,
        "forall" => Sym::Forall,
        "exists" => Sym::Exists,
        _ => return None,
    })
}

/// Tokenizes `src`. `#` starts a comment running to the end of the line.
pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    tokenize_at(src, 1)
}

/// Tokenizes a fragment that begins on `first_line` of its file.
pub fn tokenize_at(src: &str, first_line: u32) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut line = first_line;
    let mut col = 1u32;
    while i < chars.len() {
        let c = chars[i];
        let span = Span::new(line, col);
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            // `x$0` names the pre-state value of `x`
            if i + 1 < chars.len() && chars[i] == '$' && chars[i + 1] == '0' {
                i += 2;
            }
            let word: String = chars[start..i].iter().collect();
            col += (i - start) as u32;
            let tok = match keyword_sym(&word) {
                Some(sym) => Tok::Sym(sym),
                None => Tok::Ident(word),
            };
            out.push(Token { tok, span });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            col += (i - start) as u32;
            let n = text
                .parse::<i64>()
                .map_err(|_| ParseError::new(span, format!("integer literal `{text}` out of range")))?;
            out.push(Token { tok: Tok::Int(n), span });
            continue;
        }
        if c == '"' {
            let mut s = String::new();
            i += 1;
            col += 1;
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(ParseError::new(span, "unterminated string literal")),
                    Some('"') => {
                        i += 1;
                        col += 1;
                        break;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                        col += 1;
                    }
                }
            }
            out.push(Token { tok: Tok::Str(s), span });
            continue;
        }
        if let Some(sym) = unicode_sym(c) {
            out.push(Token { tok: Tok::Sym(sym), span });
            i += 1;
            col += 1;
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        match ASCII_SYMS.iter().find(|(text, _)| rest.starts_with(text)) {
            Some((text, sym)) => {
                out.push(Token { tok: Tok::Sym(*sym), span });
                i += text.len();
                col += text.len() as u32;
            }
            None => return Err(ParseError::new(span, format!("unexpected character `{c}`"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(line, col),
    });
    Ok(out)
}

/// Cursor over a token vector with the lookahead helpers every parser needs.
#[derive(Debug, Clone)]
pub struct Cursor {
    toks: Vec<Token>,
    pos: usize,
}

impl Cursor {
    pub fn new(toks: Vec<Token>) -> Self {
        Cursor { toks, pos: 0 }
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub fn peek_at(&self, n: usize) -> &Tok {
        let idx = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[idx].tok
    }

    pub fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn reset(&mut self, pos: usize) {
        self.pos = pos;
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn is_sym(&self, sym: Sym) -> bool {
        matches!(self.peek(), Tok::Sym(s) if *s == sym)
    }

    pub fn is_ident(&self, word: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == word)
    }

    pub fn eat_sym(&mut self, sym: Sym) -> bool {
        if self.is_sym(sym) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn eat_ident(&mut self, word: &str) -> bool {
        if self.is_ident(word) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect_sym(&mut self, sym: Sym) -> Result<Span, ParseError> {
        let span = self.span();
        if self.eat_sym(sym) {
            Ok(span)
        } else {
            Err(self.unexpected(&format!("`{}`", sym.text())))
        }
    }

    pub fn expect_keyword(&mut self, word: &str) -> Result<Span, ParseError> {
        let span = self.span();
        if self.eat_ident(word) {
            Ok(span)
        } else {
            Err(self.unexpected(&format!("`{word}`")))
        }
    }

    pub fn expect_ident(&mut self) -> Result<(String, Span), ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok((name, span))
            }
            _ => Err(self.unexpected("an identifier")),
        }
    }

    pub fn unexpected(&self, wanted: &str) -> ParseError {
        ParseError::new(self.span(), format!("expected {wanted}, found {}", self.peek()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn unicode_aliases_match_ascii() {
        assert_eq!(kinds("a ∉ S ∧ b ≠ c"), kinds("a /: S & b /= c"));
        assert_eq!(kinds("∀x·x ↦ 1"), kinds("forall x . x |-> 1"));
    }

    #[test]
    fn pre_state_suffix_is_part_of_identifier() {
        assert_eq!(
            kinds("s /= s$0"),
            vec![
                Tok::Ident("s".into()),
                Tok::Sym(Sym::Neq),
                Tok::Ident("s$0".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn positions_and_comments() {
        let toks = tokenize("# header\n  x := 1 # trailing\ny").unwrap();
        assert_eq!(toks[0].span, Span::new(2, 3));
        assert_eq!((toks[0].span.line, toks[0].span.col), (2, 3));
        assert_eq!((toks[3].span.line, toks[3].span.col), (3, 1));
    }

    #[test]
    fn longest_match_wins() {
        assert_eq!(
            kinds("<-> <- <= <+ +-> -->"),
            vec![
                Tok::Sym(Sym::BiArrow),
                Tok::Sym(Sym::LeftArrow),
                Tok::Sym(Sym::Le),
                Tok::Sym(Sym::Override),
                Tok::Sym(Sym::PartialArrow),
                Tok::Sym(Sym::TotalArrow),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn bad_character_reports_position() {
        let err = tokenize("a\n  ?").unwrap_err();
        assert_eq!((err.span.line, err.span.col), (2, 3));
    }
}
