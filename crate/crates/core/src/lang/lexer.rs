use num_bigint::BigUint;

use super::{LangError, Location};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Keyword {
    Symbols,
    Local,
    Id,
    If,
    EndIf,
    Multiply,
    Print,
    Degree,
}

impl Keyword {
    fn lookup(word: &str) -> Option<Keyword> {
        let kw = match word.to_ascii_lowercase().as_str() {
            "symbols" | "symbol" => Keyword::Symbols,
            "local" => Keyword::Local,
            "id" => Keyword::Id,
            "if" => Keyword::If,
            "endif" => Keyword::EndIf,
            "multiply" => Keyword::Multiply,
            "print" => Keyword::Print,
            "degree" => Keyword::Degree,
            _ => return None,
        };
        Some(kw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DotInstruction {
    Sort,
    End,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Keyword(Keyword),
    Ident(String),
    Int(BigUint),
    Dot(DotInstruction),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Semi,
    Assign,
    EqEq,
    NotEq,
    Less,
    LessEq,
    Greater,
    GreaterEq,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub loc: Location,
}

/// Splits source text into tokens. Lines whose first column is `*` are
/// comments.
pub fn lex(source: &str) -> Result<Vec<Token>, LangError> {
    let mut tokens = Vec::new();
    for (lineno, line) in source.lines().enumerate() {
        let line_no = lineno + 1;
        if line.starts_with('*') {
            continue;
        }
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let loc = Location { line: line_no, col: i + 1 };
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            let start = i;
            let kind = if c.is_ascii_alphabetic() || c == '_' {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                match Keyword::lookup(&word) {
                    Some(kw) => TokenKind::Keyword(kw),
                    None => TokenKind::Ident(word),
                }
            } else if c.is_ascii_digit() {
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let digits: String = chars[start..i].iter().collect();
                TokenKind::Int(digits.parse().expect("ascii digits"))
            } else if c == '.' {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_alphabetic() {
                    i += 1;
                }
                let word: String = chars[start + 1..i].iter().collect();
                match word.to_ascii_lowercase().as_str() {
                    "sort" => TokenKind::Dot(DotInstruction::Sort),
                    "end" => TokenKind::Dot(DotInstruction::End),
                    _ => {
                        return Err(LangError::new(loc, format!("unknown dot-instruction '.{word}'")))
                    }
                }
            } else {
                let next = chars.get(i + 1).copied();
                let (kind, width) = match (c, next) {
                    ('=', Some('=')) => (TokenKind::EqEq, 2),
                    ('!', Some('=')) => (TokenKind::NotEq, 2),
                    ('<', Some('=')) => (TokenKind::LessEq, 2),
                    ('>', Some('=')) => (TokenKind::GreaterEq, 2),
                    ('<', _) => (TokenKind::Less, 1),
                    ('>', _) => (TokenKind::Greater, 1),
                    ('=', _) => (TokenKind::Assign, 1),
                    ('+', _) => (TokenKind::Plus, 1),
                    ('-', _) => (TokenKind::Minus, 1),
                    ('*', _) => (TokenKind::Star, 1),
                    ('/', _) => (TokenKind::Slash, 1),
                    ('^', _) => (TokenKind::Caret, 1),
                    ('(', _) => (TokenKind::LParen, 1),
                    (')', _) => (TokenKind::RParen, 1),
                    (',', _) => (TokenKind::Comma, 1),
                    (';', _) => (TokenKind::Semi, 1),
                    _ => return Err(LangError::new(loc, format!("illegal character '{c}'"))),
                };
                i += width;
                kind
            };
            tokens.push(Token { kind, loc });
        }
    }
    Ok(tokens)
}
