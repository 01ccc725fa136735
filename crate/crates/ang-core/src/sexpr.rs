//! Tokenizer and reader for the directive language.
//!
//! Grammar:
//!   program   := form*
//!   form      := atom | "(" form* ")" | "[" form* "]"
//!   atom      := number | boolean | string | symbol
//!   boolean   := "true" | "false" | "#t" | "#f"
//!   comment   := ";" to end of line (dropped)
//!
//! Brackets and parens both delimit lists; the reader marks bracketed
//! top-level forms as directive forms. Print -> read round-trips to a
//! structurally equal tree.

use std::fmt;

// ---------------------------------------------------------------------------
// positions and errors
// ---------------------------------------------------------------------------

/// 1-based line and column of a source location.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} at {pos}")]
pub struct SyntaxError {
    pub message: String,
    pub pos: Pos,
}

impl SyntaxError {
    fn at(message: impl Into<String>, pos: Pos) -> Self {
        SyntaxError { message: message.into(), pos }
    }
}

// ---------------------------------------------------------------------------
// tokens
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    LBracket,
    RBracket,
    LParen,
    RParen,
    Symbol,
    Number,
    Boolean,
    Str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub pos: Pos,
}

struct Scanner<'a> {
    src: &'a [u8],
    at: usize,
    line: u32,
    col: u32,
}

impl<'a> Scanner<'a> {
    fn new(src: &'a str) -> Self {
        Scanner { src: src.as_bytes(), at: 0, line: 1, col: 1 }
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.at).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.at += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }
}

fn is_delimiter(b: u8) -> bool {
    matches!(b, b'(' | b')' | b'[' | b']' | b';' | b'"') || b.is_ascii_whitespace()
}

/// Whether an atom spelling is numeric: optional sign, digits, optional
/// decimal point with digits on at least one side, optional exponent.
fn looks_numeric(s: &str) -> bool {
    let rest = s.strip_prefix(['-', '+']).unwrap_or(s);
    !rest.is_empty() && rest.starts_with(|c: char| c.is_ascii_digit() || c == '.') && s.parse::<f64>().is_ok()
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut sc = Scanner::new(text);
    let mut out = Vec::new();
    loop {
        // Skip whitespace and comments.
        loop {
            match sc.peek() {
                Some(b) if b.is_ascii_whitespace() => {
                    sc.bump();
                }
                Some(b';') => {
                    while let Some(b) = sc.peek() {
                        if b == b'\n' {
                            break;
                        }
                        sc.bump();
                    }
                }
                _ => break,
            }
        }
        let pos = sc.pos();
        let Some(b) = sc.peek() else { break };
        match b {
            b'[' => {
                sc.bump();
                out.push(Token { kind: TokenKind::LBracket, text: "[".into(), pos });
            }
            b']' => {
                sc.bump();
                out.push(Token { kind: TokenKind::RBracket, text: "]".into(), pos });
            }
            b'(' => {
                sc.bump();
                out.push(Token { kind: TokenKind::LParen, text: "(".into(), pos });
            }
            b')' => {
                sc.bump();
                out.push(Token { kind: TokenKind::RParen, text: ")".into(), pos });
            }
            b'"' => {
                sc.bump();
                let mut text = String::new();
                loop {
                    match sc.bump() {
                        None => return Err(SyntaxError::at("unterminated string", pos)),
                        Some(b'"') => break,
                        Some(b'\\') => match sc.bump() {
                            Some(b'n') => text.push('\n'),
                            Some(b't') => text.push('\t'),
                            Some(b'"') => text.push('"'),
                            Some(b'\\') => text.push('\\'),
                            other => {
                                return Err(SyntaxError::at(
                                    format!("bad string escape {:?}", other.map(char::from)),
                                    pos,
                                ))
                            }
                        },
                        Some(c) => text.push(char::from(c)),
                    }
                }
                out.push(Token { kind: TokenKind::Str, text, pos });
            }
            _ if b.is_ascii_control() => {
                return Err(SyntaxError::at(format!("illegal character 0x{b:02x}"), pos));
            }
            _ => {
                let mut text = String::new();
                while let Some(c) = sc.peek() {
                    if is_delimiter(c) {
                        break;
                    }
                    if c.is_ascii_control() {
                        return Err(SyntaxError::at(format!("illegal character 0x{c:02x}"), sc.pos()));
                    }
                    text.push(char::from(c));
                    sc.bump();
                }
                let kind = if text == "true" || text == "false" || text == "#t" || text == "#f" {
                    TokenKind::Boolean
                } else if looks_numeric(&text) {
                    if text.parse::<f64>().map(f64::is_finite) != Ok(true) {
                        return Err(SyntaxError::at(format!("non-finite number literal `{text}`"), pos));
                    }
                    TokenKind::Number
                } else {
                    TokenKind::Symbol
                };
                out.push(Token { kind, text, pos });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// s-expressions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum SExpr {
    Symbol(String),
    Number(f64),
    Boolean(bool),
    Str(String),
    List(Vec<SExpr>),
}

impl SExpr {
    pub fn sym(s: &str) -> SExpr {
        SExpr::Symbol(s.to_string())
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            SExpr::Symbol(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(items) => Some(items),
            _ => None,
        }
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Symbol(s) => write!(f, "{s}"),
            SExpr::Number(x) => write!(f, "{}", format_num(*x)),
            SExpr::Boolean(b) => write!(f, "{b}"),
            SExpr::Str(s) => write!(f, "{s:?}"),
            SExpr::List(items) => {
                write!(f, "(")?;
                for (i, e) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Shortest round-trip decimal spelling; integral values print without ".0".
pub fn format_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// A top-level form: the expression plus whether it was bracket-delimited
/// (brackets mark directives).
#[derive(Debug, Clone, PartialEq)]
pub struct TopForm {
    pub expr: SExpr,
    pub directive: bool,
    pub pos: Pos,
}

/// Parse a token stream into top-level forms.
pub fn read(tokens: &[Token]) -> Result<Vec<TopForm>, SyntaxError> {
    let mut at = 0;
    let mut out = Vec::new();
    while at < tokens.len() {
        let tok = &tokens[at];
        let directive = tok.kind == TokenKind::LBracket;
        let (expr, next) = read_form(tokens, at)?;
        out.push(TopForm { expr, directive, pos: tok.pos });
        at = next;
    }
    Ok(out)
}

fn read_form(tokens: &[Token], at: usize) -> Result<(SExpr, usize), SyntaxError> {
    let tok = tokens
        .get(at)
        .ok_or_else(|| SyntaxError::at("unexpected end of input", end_pos(tokens)))?;
    match tok.kind {
        TokenKind::Number => Ok((SExpr::Number(tok.text.parse().unwrap()), at + 1)),
        TokenKind::Boolean => Ok((SExpr::Boolean(tok.text == "true" || tok.text == "#t"), at + 1)),
        TokenKind::Str => Ok((SExpr::Str(tok.text.clone()), at + 1)),
        TokenKind::Symbol => Ok((SExpr::Symbol(tok.text.clone()), at + 1)),
        TokenKind::LParen | TokenKind::LBracket => {
            let close = if tok.kind == TokenKind::LParen { TokenKind::RParen } else { TokenKind::RBracket };
            let mut items = Vec::new();
            let mut at = at + 1;
            loop {
                let next = tokens.get(at).ok_or_else(|| {
                    SyntaxError::at(
                        format!("unclosed `{}`", if close == TokenKind::RParen { "(" } else { "[" }),
                        tok.pos,
                    )
                })?;
                if next.kind == close {
                    return Ok((SExpr::List(items), at + 1));
                }
                if next.kind == TokenKind::RParen || next.kind == TokenKind::RBracket {
                    return Err(SyntaxError::at(
                        format!("mismatched `{}` closing `{}`", next.text, tok.text),
                        next.pos,
                    ));
                }
                let (item, n) = read_form(tokens, at)?;
                items.push(item);
                at = n;
            }
        }
        TokenKind::RParen | TokenKind::RBracket => {
            Err(SyntaxError::at(format!("unexpected `{}`", tok.text), tok.pos))
        }
    }
}

fn end_pos(tokens: &[Token]) -> Pos {
    tokens.last().map(|t| t.pos).unwrap_or(Pos { line: 1, col: 1 })
}

/// Convenience: tokenize + read.
pub fn read_source(text: &str) -> Result<Vec<TopForm>, SyntaxError> {
    read(&tokenize(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn test_tokenize_directive() {
        use TokenKind::*;
        assert_eq!(kinds("[assume x 1]"), vec![LBracket, Symbol, Symbol, Number, RBracket]);
    }

    #[test]
    fn test_tokenize_division_form() {
        use TokenKind::*;
        assert_eq!(kinds("(/ 1 3)"), vec![LParen, Symbol, Number, Number, RParen]);
        assert_eq!(kinds("(< 4 r)"), vec![LParen, Symbol, Number, Symbol, RParen]);
    }

    #[test]
    fn test_tokenize_numbers_and_signs() {
        let toks = tokenize("-1 .5 -.025 +2 1e3 - -x").unwrap();
        let spell: Vec<(TokenKind, &str)> = toks.iter().map(|t| (t.kind, t.text.as_str())).collect();
        use TokenKind::*;
        assert_eq!(
            spell,
            vec![
                (Number, "-1"),
                (Number, ".5"),
                (Number, "-.025"),
                (Number, "+2"),
                (Number, "1e3"),
                (Symbol, "-"),
                (Symbol, "-x"),
            ]
        );
    }

    #[test]
    fn test_tokenize_comments_dropped() {
        assert_eq!(kinds("; a comment\n1 ; trailing\n"), vec![TokenKind::Number]);
    }

    #[test]
    fn test_tokenize_positions() {
        let toks = tokenize("(a\n  b)").unwrap();
        assert_eq!(toks[1].pos, Pos { line: 1, col: 2 });
        assert_eq!(toks[2].pos, Pos { line: 2, col: 3 });
        let mut last = Pos { line: 0, col: 0 };
        for t in &toks {
            assert!(t.pos.line > last.line || (t.pos.line == last.line && t.pos.col > last.col));
            last = t.pos;
        }
    }

    #[test]
    fn test_tokenize_unterminated_string() {
        let err = tokenize("\"abc").unwrap_err();
        assert!(err.message.contains("unterminated"));
        assert_eq!(err.pos, Pos { line: 1, col: 1 });
    }

    #[test]
    fn test_read_nested() {
        let forms = read_source("((lambda (x) x) 3)").unwrap();
        assert_eq!(forms.len(), 1);
        assert!(!forms[0].directive);
        let SExpr::List(items) = &forms[0].expr else { panic!() };
        assert_eq!(items.len(), 2);
        assert_eq!(items[1], SExpr::Number(3.0));
    }

    #[test]
    fn test_read_directive_flag() {
        let forms = read_source("[predict r]").unwrap();
        assert!(forms[0].directive);
        assert_eq!(forms[0].expr, SExpr::List(vec![SExpr::sym("predict"), SExpr::sym("r")]));
    }

    #[test]
    fn test_read_reports_opener_position() {
        let err = read_source("(+ 1 (  2").unwrap_err();
        assert_eq!(err.pos, Pos { line: 1, col: 6 });
        let err = read_source("(]").unwrap_err();
        assert!(err.message.contains("mismatched"));
    }

    #[test]
    fn test_print_read_roundtrip() {
        let srcs = [
            "(+ 1 2)",
            "(lambda (x) (* x x))",
            "(cond ((= s 0) (list .1 .5 .4)) (else 7))",
            "(a (b (c (d))) true false \"s\")",
        ];
        for src in srcs {
            let forms = read_source(src).unwrap();
            let printed = forms[0].expr.to_string();
            let reread = read_source(&printed).unwrap();
            assert_eq!(forms[0].expr, reread[0].expr, "{src}");
        }
    }
}
