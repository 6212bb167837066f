//! Lexer and token cursor shared by the model and query formats.
//!
//! A document is a sequence of statements `keyword args… ;` or
//! `keyword args… { statements }`. `#` starts a comment.

use std::fmt;

use thiserror::Error;

use crate::tensor::C64;

/// Source position (1-based). Compares equal to every other span so that
/// documents compare by content only.
#[derive(Debug, Clone, Copy, Default, Eq)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    Syntax,
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub span: Span,
    pub message: String,
    pub expected: Option<String>,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            DiagnosticKind::Syntax => "syntax error",
            DiagnosticKind::Semantic => "semantic error",
        };
        write!(f, "{}:{}: {kind}: {}", self.span.line, self.span.col, self.message)?;
        if let Some(e) = &self.expected {
            write!(f, " (expected {e})")?;
        }
        Ok(())
    }
}

impl Diagnostic {
    pub fn syntax(span: Span, message: impl Into<String>, expected: impl Into<String>) -> Self {
        Diagnostic {
            kind: DiagnosticKind::Syntax,
            span,
            message: message.into(),
            expected: Some(expected.into()),
        }
    }

    pub fn semantic(span: Span, message: impl Into<String>) -> Self {
        Diagnostic {
            kind: DiagnosticKind::Semantic,
            span,
            message: message.into(),
            expected: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    Arrow,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Num(x) => write!(f, "number {x}"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Arrow => write!(f, "`->`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

pub fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(is_ident_start) && chars.all(is_ident_char)
}

pub fn lex(text: &str) -> Result<Vec<Token>, Diagnostic> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        let single = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            ';' => Some(Tok::Semi),
            ':' => Some(Tok::Colon),
            _ => None,
        };
        if let Some(tok) = single {
            bump!();
            toks.push(Token { tok, span });
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'>') {
            bump!();
            bump!();
            toks.push(Token { tok: Tok::Arrow, span });
            continue;
        }
        if is_ident_start(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                bump!();
            }
            toks.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                span,
            });
            continue;
        }
        if c == '"' {
            bump!();
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(Diagnostic::syntax(span, "unterminated string", "closing `\"`")),
                    Some('"') => {
                        bump!();
                        break;
                    }
                    Some('\\') => {
                        let esc = match chars.get(i + 1) {
                            Some('"') => '"',
                            Some('\\') => '\\',
                            Some('n') => '\n',
                            Some('t') => '\t',
                            _ => {
                                return Err(Diagnostic::syntax(
                                    Span { line, col },
                                    "unknown escape",
                                    "one of \\\" \\\\ \\n \\t",
                                ))
                            }
                        };
                        bump!();
                        bump!();
                        s.push(esc);
                    }
                    Some(&ch) => {
                        s.push(ch);
                        bump!();
                    }
                }
            }
            toks.push(Token { tok: Tok::Str(s), span });
            continue;
        }
        if c.is_ascii_digit() || ((c == '-' || c == '+' || c == '.') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.')) {
            let start = i;
            bump!();
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    bump!();
                } else {
                    break;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let x: f64 = s
                .parse()
                .map_err(|_| Diagnostic::syntax(span, format!("malformed number `{s}`"), "a decimal number"))?;
            if !x.is_finite() {
                return Err(Diagnostic::syntax(span, format!("number `{s}` out of range"), "a finite number"));
            }
            toks.push(Token { tok: Tok::Num(x), span });
            continue;
        }
        return Err(Diagnostic::syntax(span, format!("unexpected character {c:?}"), "a keyword, name, string, number or punctuation"));
    }
    toks.push(Token {
        tok: Tok::Eof,
        span: Span { line, col },
    });
    Ok(toks)
}

pub struct Cursor {
    toks: Vec<Token>,
    pos: usize,
}

impl Cursor {
    pub fn new(text: &str) -> Result<Cursor, Diagnostic> {
        Ok(Cursor { toks: lex(text)?, pos: 0 })
    }

    pub fn peek(&self) -> &Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    pub fn span(&self) -> Span {
        self.peek().span
    }

    pub fn at_eof(&self) -> bool {
        self.peek().tok == Tok::Eof
    }

    pub fn advance(&mut self) -> Token {
        let t = self.peek().clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    pub fn error(&self, expected: impl Into<String>) -> Diagnostic {
        let t = self.peek();
        Diagnostic::syntax(t.span, format!("unexpected {}", t.tok), expected)
    }

    pub fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek().tok == *tok {
            self.advance();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, tok: Tok) -> Result<Span, Diagnostic> {
        if self.peek().tok == tok {
            Ok(self.advance().span)
        } else {
            Err(self.error(tok.to_string()))
        }
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    pub fn keyword(&mut self, kw: &str) -> Result<Span, Diagnostic> {
        if self.is_keyword(kw) {
            Ok(self.advance().span)
        } else {
            Err(self.error(format!("`{kw}`")))
        }
    }

    pub fn ident(&mut self, what: &str) -> Result<(String, Span), Diagnostic> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                Ok((s, self.advance().span))
            }
            _ => Err(self.error(what.to_string())),
        }
    }

    pub fn string(&mut self, what: &str) -> Result<String, Diagnostic> {
        match &self.peek().tok {
            Tok::Str(s) => {
                let s = s.clone();
                self.advance();
                Ok(s)
            }
            _ => Err(self.error(what.to_string())),
        }
    }

    pub fn number(&mut self, what: &str) -> Result<f64, Diagnostic> {
        match self.peek().tok {
            Tok::Num(x) => {
                self.advance();
                Ok(x)
            }
            _ => Err(self.error(what.to_string())),
        }
    }

    pub fn count(&mut self, what: &str) -> Result<usize, Diagnostic> {
        let span = self.span();
        let x = self.number(what)?;
        if x < 0.0 || x.fract() != 0.0 || x > u32::MAX as f64 {
            return Err(Diagnostic::syntax(span, format!("`{x}` is not a non-negative integer"), what.to_string()));
        }
        Ok(x as usize)
    }

    /// `[ item, item, … ]`, trailing comma allowed.
    pub fn list<T>(&mut self, mut item: impl FnMut(&mut Cursor) -> Result<T, Diagnostic>) -> Result<Vec<T>, Diagnostic> {
        self.expect(Tok::LBracket)?;
        let mut out = Vec::new();
        while !self.eat(&Tok::RBracket) {
            out.push(item(self)?);
            if !self.eat(&Tok::Comma) {
                self.expect(Tok::RBracket)?;
                break;
            }
        }
        Ok(out)
    }

    /// `[re, im]` or a bare real number.
    pub fn complex(&mut self) -> Result<C64, Diagnostic> {
        if let Tok::Num(x) = self.peek().tok {
            self.advance();
            return Ok(C64::new(x, 0.0));
        }
        let span = self.span();
        let parts = self.list(|c| c.number("a number"))?;
        match parts.as_slice() {
            [re, im] => Ok(C64::new(*re, *im)),
            _ => Err(Diagnostic::syntax(span, format!("complex entry has {} parts", parts.len()), "`[re, im]`")),
        }
    }
}

/// Writes a string literal that [`lex`] reads back unchanged.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn fmt_num(x: f64) -> String {
    format!("{x}")
}

pub fn fmt_complex(c: C64) -> String {
    format!("[{}, {}]", fmt_num(c.re), fmt_num(c.im))
}
