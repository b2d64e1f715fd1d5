//! Boolean keyword queries for selecting notes.
//!
//! Grammar (operators are the upper-case words `AND` and `OR`; `AND` binds
//! tighter):
//!
//! ```text
//! expr   := term ("OR" term)*
//! term   := factor ("AND" factor)*
//! factor := "(" expr ")" | phrase
//! phrase := quoted string | one or more adjacent bare words
//! ```
//!
//! A phrase matches case-insensitively when its words occur in order,
//! separated by whitespace, and bounded on both sides by a non-alphanumeric
//! character or the ends of the text.

use std::fmt;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("query syntax error at {position}: {message}")]
pub struct QuerySyntaxError {
    /// Char offset into the query string.
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub enum Query {
    Phrase(Phrase),
    And(Vec<Query>),
    Or(Vec<Query>),
}

#[derive(Debug, Clone)]
pub struct Phrase {
    words: Vec<String>,
    regex: Regex,
}

impl Phrase {
    pub fn new(words: Vec<String>) -> Self {
        let body = words.iter().map(|w| regex::escape(w)).collect::<Vec<_>>().join(r"\s+");
        let regex = Regex::new(&format!(r"(?i)(?:^|[^A-Za-z0-9]){body}(?:$|[^A-Za-z0-9])"))
            .expect("escaped phrase is a valid regex");
        Phrase { words, regex }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn matches(&self, text: &str) -> bool {
        self.regex.is_match(text)
    }
}

impl Query {
    pub fn parse(input: &str) -> Result<Query, QuerySyntaxError> {
        let tokens = lex(input)?;
        let mut parser = Parser { tokens, pos: 0, input_len: input.chars().count() };
        let query = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(parser.error_at(tok.position, "unexpected token after expression"));
        }
        Ok(query)
    }

    pub fn matches(&self, text: &str) -> bool {
        match self {
            Query::Phrase(p) => p.matches(text),
            Query::And(parts) => parts.iter().all(|q| q.matches(text)),
            Query::Or(parts) => parts.iter().any(|q| q.matches(text)),
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, parts: &[Query], op: &str| {
            write!(f, "(")?;
            for (i, q) in parts.iter().enumerate() {
                if i > 0 {
                    write!(f, " {op} ")?;
                }
                write!(f, "{q}")?;
            }
            write!(f, ")")
        };
        match self {
            Query::Phrase(p) => write!(f, "\"{}\"", p.words.join(" ")),
            Query::And(parts) => join(f, parts, "AND"),
            Query::Or(parts) => join(f, parts, "OR"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    LParen,
    RParen,
    And,
    Or,
    Word(String),
    Quoted(String),
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    position: usize,
}

fn lex(input: &str) -> Result<Vec<Token>, QuerySyntaxError> {
    let chars: Vec<char> = input.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '(' || c == ')' {
            let kind = if c == '(' { TokenKind::LParen } else { TokenKind::RParen };
            tokens.push(Token { kind, position: i });
            i += 1;
        } else if c == '"' {
            let close = chars[i + 1..].iter().position(|&c| c == '"').ok_or_else(|| QuerySyntaxError {
                position: i,
                message: "unterminated quoted phrase".into(),
            })?;
            let text: String = chars[i + 1..i + 1 + close].iter().collect();
            if text.split_whitespace().next().is_none() {
                return Err(QuerySyntaxError { position: i, message: "empty quoted phrase".into() });
            }
            tokens.push(Token { kind: TokenKind::Quoted(text), position: i });
            i += close + 2;
        } else {
            let start = i;
            while i < chars.len() && !chars[i].is_whitespace() && !matches!(chars[i], '(' | ')' | '"') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let kind = match word.as_str() {
                "AND" => TokenKind::And,
                "OR" => TokenKind::Or,
                _ => TokenKind::Word(word),
            };
            tokens.push(Token { kind, position: start });
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    input_len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn error_at(&self, position: usize, message: &str) -> QuerySyntaxError {
        QuerySyntaxError { position, message: message.to_string() }
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek().is_some_and(|t| &t.kind == kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Query, QuerySyntaxError> {
        let mut parts = vec![self.term()?];
        while self.eat(&TokenKind::Or) {
            parts.push(self.term()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Query::Or(parts) })
    }

    fn term(&mut self) -> Result<Query, QuerySyntaxError> {
        let mut parts = vec![self.factor()?];
        while self.eat(&TokenKind::And) {
            parts.push(self.factor()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Query::And(parts) })
    }

    fn factor(&mut self) -> Result<Query, QuerySyntaxError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.error_at(self.input_len, "expected a keyword or '('"));
        };
        match tok.kind {
            TokenKind::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(&TokenKind::RParen) {
                    let at = self.peek().map_or(self.input_len, |t| t.position);
                    return Err(self.error_at(at, "expected ')'"));
                }
                Ok(inner)
            }
            TokenKind::Quoted(text) => {
                self.pos += 1;
                let words = text.split_whitespace().map(str::to_string).collect();
                Ok(Query::Phrase(Phrase::new(words)))
            }
            TokenKind::Word(_) => {
                let mut words = Vec::new();
                while let Some(Token { kind: TokenKind::Word(w), .. }) = self.peek() {
                    words.push(w.clone());
                    self.pos += 1;
                }
                Ok(Query::Phrase(Phrase::new(words)))
            }
            TokenKind::RParen | TokenKind::And | TokenKind::Or => {
                Err(self.error_at(tok.position, "expected a keyword or '('"))
            }
        }
    }
}
