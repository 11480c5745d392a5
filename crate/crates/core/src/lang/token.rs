//! Lexer.

use crate::diag::{codes, Diagnostic};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TokenKind {
    // keywords
    Class,
    State,
    Effects,
    Update,
    Constraints,
    Run,
    On,
    When,
    Restart,
    This,
    Let,
    If,
    Else,
    Accum,
    With,
    Over,
    From,
    In,
    Atomic,
    WaitNextTick,
    Spawn,
    Destroy,
    True,
    False,
    Null,
    Number,
    Int,
    Bool,
    String,
    Ref,
    Set,
    // literals
    Ident,
    IntLit,
    NumLit,
    StrLit,
    // punctuation
    LBrace,
    RBrace,
    LParen,
    RParen,
    Colon,
    Semicolon,
    Comma,
    Dot,
    /// `<-`
    EffectAssign,
    /// `<=`, either a comparison or a set insert depending on position
    Le,
    Lt,
    Gt,
    Ge,
    EqEq,
    Ne,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    AndAnd,
    OrOr,
    Bang,
    Eof,
}

const KEYWORDS: &[(&str, TokenKind)] = &[
    ("class", TokenKind::Class),
    ("state", TokenKind::State),
    ("effects", TokenKind::Effects),
    ("update", TokenKind::Update),
    ("constraints", TokenKind::Constraints),
    ("run", TokenKind::Run),
    ("on", TokenKind::On),
    ("when", TokenKind::When),
    ("restart", TokenKind::Restart),
    ("this", TokenKind::This),
    ("let", TokenKind::Let),
    ("if", TokenKind::If),
    ("else", TokenKind::Else),
    ("accum", TokenKind::Accum),
    ("with", TokenKind::With),
    ("over", TokenKind::Over),
    ("from", TokenKind::From),
    ("in", TokenKind::In),
    ("atomic", TokenKind::Atomic),
    ("waitNextTick", TokenKind::WaitNextTick),
    ("spawn", TokenKind::Spawn),
    ("destroy", TokenKind::Destroy),
    ("true", TokenKind::True),
    ("false", TokenKind::False),
    ("null", TokenKind::Null),
    ("number", TokenKind::Number),
    ("int", TokenKind::Int),
    ("bool", TokenKind::Bool),
    ("string", TokenKind::String),
    ("ref", TokenKind::Ref),
    ("set", TokenKind::Set),
];

pub fn keyword(s: &str) -> Option<TokenKind> {
    KEYWORDS.iter().find(|(k, _)| *k == s).map(|(_, t)| *t)
}

pub fn is_keyword(s: &str) -> bool {
    keyword(s).is_some()
}

impl TokenKind {
    /// Human-readable description used in "expected ..." messages.
    pub fn describe(self) -> &'static str {
        use TokenKind::*;
        if let Some((k, _)) = KEYWORDS.iter().find(|(_, t)| *t == self) {
            return k;
        }
        match self {
            Ident => "identifier",
            IntLit => "integer literal",
            NumLit => "number literal",
            StrLit => "string literal",
            LBrace => "'{'",
            RBrace => "'}'",
            LParen => "'('",
            RParen => "')'",
            Colon => "':'",
            Semicolon => "';'",
            Comma => "','",
            Dot => "'.'",
            EffectAssign => "'<-'",
            Le => "'<='",
            Lt => "'<'",
            Gt => "'>'",
            Ge => "'>='",
            EqEq => "'=='",
            Ne => "'!='",
            Assign => "'='",
            Plus => "'+'",
            Minus => "'-'",
            Star => "'*'",
            Slash => "'/'",
            Percent => "'%'",
            AndAnd => "'&&'",
            OrOr => "'||'",
            Bang => "'!'",
            Eof => "end of input",
            _ => "keyword",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub line: u32,
    pub column: u32,
    /// Whitespace and comments immediately preceding the lexeme.
    pub trivia: String,
}

/// Splits `source` into tokens. The stream always ends with an `Eof` token
/// whose trivia holds any trailing whitespace, so concatenating
/// `trivia + lexeme` over all tokens reproduces the source exactly.
pub fn tokenize(source: &str) -> Result<Vec<Token>, Diagnostic> {
    Lexer::new(source).run()
}

struct Lexer<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    i: usize,
    line: u32,
    column: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            chars: src.char_indices().collect(),
            i: 0,
            line: 1,
            column: 1,
        }
    }

    fn peek(&self, k: usize) -> Option<char> {
        self.chars.get(self.i + k).map(|(_, c)| *c)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.i).map(|(o, _)| *o).unwrap_or(self.src.len())
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek(0)?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, message: impl Into<String>, line: u32, column: u32) -> Diagnostic {
        Diagnostic::error(codes::E_LEX, message, line, column)
    }

    fn run(mut self) -> Result<Vec<Token>, Diagnostic> {
        let mut out = Vec::new();
        loop {
            let trivia_start = self.offset();
            self.skip_trivia();
            let trivia = self.src[trivia_start..self.offset()].to_string();
            let (line, column) = (self.line, self.column);
            let start = self.offset();
            let Some(c) = self.peek(0) else {
                out.push(Token {
                    kind: TokenKind::Eof,
                    lexeme: String::new(),
                    line,
                    column,
                    trivia,
                });
                return Ok(out);
            };
            let kind = if c.is_ascii_alphabetic() {
                while matches!(self.peek(0), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                    self.bump();
                }
                keyword(&self.src[start..self.offset()]).unwrap_or(TokenKind::Ident)
            } else if c.is_ascii_digit() {
                self.number(line, column)?
            } else if c == '"' {
                self.string(line, column)?
            } else {
                self.punct(c, line, column)?
            };
            out.push(Token {
                kind,
                lexeme: self.src[start..self.offset()].to_string(),
                line,
                column,
                trivia,
            });
        }
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek(0) {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('/') if self.peek(1) == Some('/') => {
                    while !matches!(self.peek(0), None | Some('\n')) {
                        self.bump();
                    }
                }
                _ => return,
            }
        }
    }

    fn number(&mut self, line: u32, column: u32) -> Result<TokenKind, Diagnostic> {
        let start = self.offset();
        let mut float = false;
        while matches!(self.peek(0), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        if self.peek(0) == Some('.') && matches!(self.peek(1), Some(c) if c.is_ascii_digit()) {
            float = true;
            self.bump();
            while matches!(self.peek(0), Some(c) if c.is_ascii_digit()) {
                self.bump();
            }
        }
        if matches!(self.peek(0), Some('e') | Some('E')) {
            let sign = matches!(self.peek(1), Some('+') | Some('-'));
            let digit_at = if sign { 2 } else { 1 };
            if matches!(self.peek(digit_at), Some(c) if c.is_ascii_digit()) {
                float = true;
                for _ in 0..digit_at {
                    self.bump();
                }
                while matches!(self.peek(0), Some(c) if c.is_ascii_digit()) {
                    self.bump();
                }
            }
        }
        if matches!(self.peek(0), Some(c) if c.is_ascii_alphabetic() || c == '_') {
            return Err(self.error("malformed number literal", line, column));
        }
        let text = &self.src[start..self.offset()];
        if float {
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(TokenKind::NumLit),
                _ => Err(self.error(format!("number literal out of range: {text}"), line, column)),
            }
        } else {
            match text.parse::<i64>() {
                Ok(_) => Ok(TokenKind::IntLit),
                Err(_) => Err(self.error(format!("integer literal out of range: {text}"), line, column)),
            }
        }
    }

    fn string(&mut self, line: u32, column: u32) -> Result<TokenKind, Diagnostic> {
        self.bump();
        loop {
            match self.bump() {
                None | Some('\n') => {
                    return Err(self.error("unterminated string literal", line, column))
                }
                Some('"') => return Ok(TokenKind::StrLit),
                Some('\\') => match self.bump() {
                    Some('"') | Some('\\') | Some('n') | Some('t') => {}
                    _ => {
                        return Err(self.error(
                            "invalid escape in string literal",
                            self.line,
                            self.column.saturating_sub(1).max(1),
                        ))
                    }
                },
                Some(_) => {}
            }
        }
    }

    fn punct(&mut self, c: char, line: u32, column: u32) -> Result<TokenKind, Diagnostic> {
        use TokenKind::*;
        let next = self.peek(1);
        let (kind, len) = match (c, next) {
            ('<', Some('-')) => (EffectAssign, 2),
            ('<', Some('=')) => (Le, 2),
            ('>', Some('=')) => (Ge, 2),
            ('=', Some('=')) => (EqEq, 2),
            ('!', Some('=')) => (Ne, 2),
            ('&', Some('&')) => (AndAnd, 2),
            ('|', Some('|')) => (OrOr, 2),
            ('<', _) => (Lt, 1),
            ('>', _) => (Gt, 1),
            ('=', _) => (Assign, 1),
            ('!', _) => (Bang, 1),
            ('{', _) => (LBrace, 1),
            ('}', _) => (RBrace, 1),
            ('(', _) => (LParen, 1),
            (')', _) => (RParen, 1),
            (':', _) => (Colon, 1),
            (';', _) => (Semicolon, 1),
            (',', _) => (Comma, 1),
            ('.', _) => (Dot, 1),
            ('+', _) => (Plus, 1),
            ('-', _) => (Minus, 1),
            ('*', _) => (Star, 1),
            ('/', _) => (Slash, 1),
            ('%', _) => (Percent, 1),
            _ => {
                return Err(self.error(format!("unexpected character {c:?}"), line, column));
            }
        };
        for _ in 0..len {
            self.bump();
        }
        Ok(kind)
    }
}

/// Decodes the contents of a string literal lexeme (including quotes).
pub fn unescape(lexeme: &str) -> String {
    let inner = &lexeme[1..lexeme.len() - 1];
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some(other) => out.push(other),
                None => {}
            }
        } else {
            out.push(c);
        }
    }
    out
}
