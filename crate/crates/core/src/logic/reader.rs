//! Tokenizer and operator-precedence term reader for Prolog-style text.

use thiserror::Error;

use super::ops;
use super::term::Term;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// A term read from source, with the position of its first token.
#[derive(Debug, Clone)]
pub struct ReadTerm {
    pub term: Term,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Name { text: String, quoted: bool },
    Var(String),
    Int(i64),
    Punct(char),
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
    layout_before: bool,
}

const SYMBOL_CHARS: &str = "+-*/\\^<>=~:.?@#&$";

fn ends_clause(next: Option<char>) -> bool {
    next.is_none_or(|c| c.is_whitespace() || c == '%')
}

struct Lexer<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    column: usize,
    _src: &'a str,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.chars().collect(),
            pos: 0,
            line: 1,
            column: 1,
            _src: src,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, line: usize, column: usize, message: impl Into<String>) -> SyntaxError {
        SyntaxError {
            line,
            column,
            message: message.into(),
        }
    }

    /// Skips whitespace and comments; returns whether anything was skipped.
    fn skip_layout(&mut self) -> Result<bool, SyntaxError> {
        let mut skipped = false;
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                    skipped = true;
                }
                Some('%') => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                    skipped = true;
                }
                Some('/') if self.peek_at(1) == Some('*') => {
                    let (line, column) = (self.line, self.column);
                    self.bump();
                    self.bump();
                    loop {
                        match self.bump() {
                            Some('*') if self.peek() == Some('/') => {
                                self.bump();
                                break;
                            }
                            Some(_) => {}
                            None => return Err(self.error(line, column, "unterminated block comment")),
                        }
                    }
                    skipped = true;
                }
                _ => return Ok(skipped),
            }
        }
    }

    fn tokenize(mut self) -> Result<Vec<Token>, SyntaxError> {
        let mut out = Vec::new();
        loop {
            let layout_before = self.skip_layout()? || out.is_empty();
            let (line, column) = (self.line, self.column);
            let Some(c) = self.peek() else { break };
            let tok = if c.is_ascii_digit() {
                let mut digits = String::new();
                while let Some(d) = self.peek().filter(|d| d.is_ascii_digit() || *d == '_') {
                    self.bump();
                    if d != '_' {
                        digits.push(d);
                    }
                }
                if self.peek() == Some('.') && self.peek_at(1).is_some_and(|d| d.is_ascii_digit()) {
                    // Floats only occur as option values; they read as opaque constants.
                    digits.push('.');
                    self.bump();
                    while let Some(d) = self.peek().filter(|d| d.is_ascii_digit()) {
                        self.bump();
                        digits.push(d);
                    }
                    Tok::Name { text: digits, quoted: true }
                } else {
                    let value = digits
                        .parse::<i64>()
                        .map_err(|_| self.error(line, column, format!("integer literal {digits} out of range")))?;
                    Tok::Int(value)
                }
            } else if c == '_' || c.is_uppercase() {
                let mut name = String::new();
                while let Some(d) = self.peek().filter(|d| d.is_alphanumeric() || *d == '_') {
                    self.bump();
                    name.push(d);
                }
                Tok::Var(name)
            } else if c.is_alphabetic() {
                let mut name = String::new();
                while let Some(d) = self.peek().filter(|d| d.is_alphanumeric() || *d == '_') {
                    self.bump();
                    name.push(d);
                }
                Tok::Name { text: name, quoted: false }
            } else if c == '\'' {
                self.bump();
                let mut name = String::new();
                loop {
                    match self.bump() {
                        None => return Err(self.error(line, column, "unterminated quoted atom")),
                        Some('\'') if self.peek() == Some('\'') => {
                            self.bump();
                            name.push('\'');
                        }
                        Some('\'') => break,
                        Some('\\') => match self.bump() {
                            Some('n') => name.push('\n'),
                            Some('t') => name.push('\t'),
                            Some('\\') => name.push('\\'),
                            Some('\'') => name.push('\''),
                            Some(other) => {
                                return Err(self.error(line, column, format!("unsupported escape \\{other}")))
                            }
                            None => return Err(self.error(line, column, "unterminated quoted atom")),
                        },
                        Some(ch) => name.push(ch),
                    }
                }
                Tok::Name { text: name, quoted: true }
            } else if c == '"' {
                return Err(self.error(line, column, "string literals are not supported"));
            } else if "()[]{},|".contains(c) {
                self.bump();
                Tok::Punct(c)
            } else if c == '!' || c == ';' {
                self.bump();
                Tok::Name {
                    text: c.to_string(),
                    quoted: false,
                }
            } else if SYMBOL_CHARS.contains(c) {
                if c == '.' && ends_clause(self.peek_at(1)) {
                    self.bump();
                    Tok::End
                } else {
                    let mut text = String::new();
                    while let Some(d) = self.peek().filter(|d| SYMBOL_CHARS.contains(*d)) {
                        if d == '.' && !text.is_empty() && ends_clause(self.peek_at(1)) {
                            break;
                        }
                        self.bump();
                        text.push(d);
                    }
                    Tok::Name { text, quoted: false }
                }
            } else {
                return Err(self.error(line, column, format!("unexpected character {c:?}")));
            };
            out.push(Token {
                tok,
                line,
                column,
                layout_before,
            });
        }
        Ok(out)
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    anon: usize,
    eof: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Result<Token, SyntaxError> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.error_at(self.eof, "unexpected end of input (missing '.'?)"))?;
        self.pos += 1;
        Ok(tok)
    }

    fn error_at(&self, (line, column): (usize, usize), message: impl Into<String>) -> SyntaxError {
        SyntaxError {
            line,
            column,
            message: message.into(),
        }
    }

    fn error_tok(&self, tok: &Token, message: impl Into<String>) -> SyntaxError {
        self.error_at((tok.line, tok.column), message)
    }

    fn expect_punct(&mut self, c: char) -> Result<(), SyntaxError> {
        let tok = self.next()?;
        if tok.tok == Tok::Punct(c) {
            Ok(())
        } else {
            Err(self.error_tok(&tok, format!("expected '{c}', found {}", describe(&tok.tok))))
        }
    }

    fn peek_infix(&self) -> Option<(String, ops::InfixOp)> {
        let name = match &self.peek()?.tok {
            Tok::Name { text, quoted: false } => text.as_str(),
            Tok::Punct(',') => ",",
            _ => return None,
        };
        ops::infix(name).map(|op| (name.to_string(), op))
    }

    fn starts_term(tok: Option<&Token>) -> bool {
        match tok.map(|t| &t.tok) {
            None | Some(Tok::End) => false,
            Some(Tok::Punct(c)) => matches!(c, '(' | '[' | '{'),
            Some(Tok::Name { text, quoted: false }) => {
                ops::infix(text).is_none() || ops::prefix(text).is_some()
            }
            _ => true,
        }
    }

    fn parse(&mut self, max_prec: u16) -> Result<(Term, u16), SyntaxError> {
        let (mut left, mut left_prec) = self.parse_primary(max_prec)?;
        while let Some((name, op)) = self.peek_infix() {
            if op.prec > max_prec {
                break;
            }
            let (lmax, rmax) = match op.assoc {
                ops::Assoc::Xfx => (op.prec - 1, op.prec - 1),
                ops::Assoc::Xfy => (op.prec - 1, op.prec),
                ops::Assoc::Yfx => (op.prec, op.prec - 1),
            };
            if left_prec > lmax {
                break;
            }
            self.pos += 1;
            let (right, _) = self.parse(rmax)?;
            left = Term::Compound(name, vec![left, right]);
            left_prec = op.prec;
        }
        Ok((left, left_prec))
    }

    fn parse_args(&mut self) -> Result<Vec<Term>, SyntaxError> {
        let mut args = vec![self.parse(999)?.0];
        loop {
            let tok = self.next()?;
            let at = (tok.line, tok.column);
            match tok.tok {
                Tok::Punct(',') => args.push(self.parse(999)?.0),
                Tok::Punct(')') => return Ok(args),
                other => return Err(self.error_at(at, format!("expected ',' or ')', found {}", describe(&other)))),
            }
        }
    }

    fn parse_list(&mut self) -> Result<Term, SyntaxError> {
        if matches!(self.peek().map(|t| &t.tok), Some(Tok::Punct(']'))) {
            self.pos += 1;
            return Ok(Term::atom("[]"));
        }
        let mut items = vec![self.parse(999)?.0];
        let tail = loop {
            let tok = self.next()?;
            let at = (tok.line, tok.column);
            match tok.tok {
                Tok::Punct(',') => items.push(self.parse(999)?.0),
                Tok::Punct('|') => {
                    let tail = self.parse(999)?.0;
                    self.expect_punct(']')?;
                    break tail;
                }
                Tok::Punct(']') => break Term::atom("[]"),
                other => return Err(self.error_at(at, format!("expected ',', '|' or ']', found {}", describe(&other)))),
            }
        };
        Ok(items
            .into_iter()
            .rev()
            .fold(tail, |acc, item| Term::Compound("[|]".into(), vec![item, acc])))
    }

    fn parse_primary(&mut self, max_prec: u16) -> Result<(Term, u16), SyntaxError> {
        let tok = self.next()?;
        let at = (tok.line, tok.column);
        match tok.tok {
            Tok::Int(n) => Ok((Term::Int(n), 0)),
            Tok::Var(v) => {
                if v == "_" {
                    self.anon += 1;
                    Ok((Term::Var(format!("__{}", self.anon)), 0))
                } else {
                    Ok((Term::Var(v), 0))
                }
            }
            Tok::Punct('(') => {
                let (t, _) = self.parse(1200)?;
                self.expect_punct(')')?;
                Ok((t, 0))
            }
            Tok::Punct('[') => Ok((self.parse_list()?, 0)),
            Tok::Punct('{') => Err(self.error_at(at, "curly-brace terms are not supported")),
            Tok::Name { text, quoted } => {
                let next = self.peek();
                if let Some(next) = next {
                    if next.tok == Tok::Punct('(') && !next.layout_before {
                        self.pos += 1;
                        let args = self.parse_args()?;
                        return Ok((Term::Compound(text, args), 0));
                    }
                    if !quoted && text == "-" && !next.layout_before {
                        if let Tok::Int(n) = next.tok {
                            self.pos += 1;
                            return Ok((Term::Int(-n), 0));
                        }
                    }
                }
                if !quoted {
                    if let Some((prec, arg_max)) = ops::prefix(&text) {
                        if Self::starts_term(self.peek()) {
                            if prec > max_prec {
                                return Err(self.error_at(
                                    at,
                                    format!("operator '{text}' (priority {prec}) needs parentheses here"),
                                ));
                            }
                            let (arg, _) = self.parse(arg_max)?;
                            return Ok((Term::Compound(text, vec![arg]), prec));
                        }
                    }
                }
                Ok((Term::Atom(text), 0))
            }
            other => Err(self.error_at(at, format!("unexpected {}", describe(&other)))),
        }
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Name { text, .. } => format!("'{text}'"),
        Tok::Var(v) => format!("variable {v}"),
        Tok::Int(n) => format!("integer {n}"),
        Tok::Punct(c) => format!("'{c}'"),
        Tok::End => "end of clause".to_string(),
    }
}

/// Reads every `.`-terminated term in `text`.
pub fn read_terms(text: &str) -> Result<Vec<ReadTerm>, SyntaxError> {
    let lexer = Lexer::new(text);
    let eof = {
        let line = text.lines().count().max(1);
        let column = text.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
        (line, column)
    };
    let tokens = lexer.tokenize()?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        anon: 0,
        eof,
    };
    let mut out = Vec::new();
    while let Some(first) = parser.peek().cloned() {
        if first.tok == Tok::End {
            return Err(parser.error_tok(&first, "empty clause"));
        }
        let (term, _) = parser.parse(1200)?;
        let end = parser.next()?;
        if end.tok != Tok::End {
            return Err(parser.error_tok(&end, format!("expected operator or '.', found {}", describe(&end.tok))));
        }
        out.push(ReadTerm {
            term,
            line: first.line,
            column: first.column,
        });
    }
    Ok(out)
}

/// Reads exactly one term; a trailing `.` is optional.
pub fn read_term(text: &str) -> Result<Term, SyntaxError> {
    let trimmed = text.trim_end();
    let owned;
    let src = if trimmed.ends_with('.') && !trimmed.ends_with("..") {
        trimmed
    } else {
        owned = format!("{trimmed} .");
        &owned
    };
    let mut terms = read_terms(src)?;
    match terms.len() {
        1 => Ok(terms.pop().unwrap().term),
        0 => Err(SyntaxError {
            line: 1,
            column: 1,
            message: "expected a term".into(),
        }),
        _ => Err(SyntaxError {
            line: terms[1].line,
            column: terms[1].column,
            message: "expected a single term".into(),
        }),
    }
}
