//! Tokenizer for the SQL-subset query language.

use super::QueryError;
use crate::expr::CompOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Select,
    From,
    Where,
    For,
    Timestamp,
    As,
    Of,
    Limit,
    Subscribe,
    To,
    And,
    Or,
    Not,
    True,
    False,
}

impl Keyword {
    fn from_ident(word: &str) -> Option<Keyword> {
        // Keywords are case-insensitive.
        match word.to_ascii_uppercase().as_str() {
            "SELECT" => Some(Keyword::Select),
            "FROM" => Some(Keyword::From),
            "WHERE" => Some(Keyword::Where),
            "FOR" => Some(Keyword::For),
            "TIMESTAMP" => Some(Keyword::Timestamp),
            "AS" => Some(Keyword::As),
            "OF" => Some(Keyword::Of),
            "LIMIT" => Some(Keyword::Limit),
            "SUBSCRIBE" => Some(Keyword::Subscribe),
            "TO" => Some(Keyword::To),
            "AND" => Some(Keyword::And),
            "OR" => Some(Keyword::Or),
            "NOT" => Some(Keyword::Not),
            "TRUE" => Some(Keyword::True),
            "FALSE" => Some(Keyword::False),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Keyword(Keyword),
    Ident(String),
    Str(String),
    Int(i64),
    Float(f64),
    Star,
    Comma,
    Dot,
    Semi,
    LParen,
    RParen,
    Op(CompOp),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    /// Byte position in the input, for error reporting.
    pub pos: usize,
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, QueryError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;

    while i < bytes.len() {
        let c = bytes[i] as char;
        let pos = i;
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                i += 1;
            }
            '*' => {
                tokens.push(Token { tok: Tok::Star, pos });
                i += 1;
            }
            ',' => {
                tokens.push(Token { tok: Tok::Comma, pos });
                i += 1;
            }
            '.' => {
                tokens.push(Token { tok: Tok::Dot, pos });
                i += 1;
            }
            ';' => {
                tokens.push(Token { tok: Tok::Semi, pos });
                i += 1;
            }
            '(' => {
                tokens.push(Token { tok: Tok::LParen, pos });
                i += 1;
            }
            ')' => {
                tokens.push(Token { tok: Tok::RParen, pos });
                i += 1;
            }
            '=' => {
                tokens.push(Token { tok: Tok::Op(CompOp::Eq), pos });
                i += 1;
            }
            '!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push(Token { tok: Tok::Op(CompOp::Ne), pos });
                    i += 2;
                } else {
                    return Err(QueryError::LexError {
                        pos,
                        message: "expected '=' after '!'".into(),
                    });
                }
            }
            '<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push(Token { tok: Tok::Op(CompOp::Le), pos });
                    i += 2;
                } else {
                    tokens.push(Token { tok: Tok::Op(CompOp::Lt), pos });
                    i += 1;
                }
            }
            '>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    tokens.push(Token { tok: Tok::Op(CompOp::Ge), pos });
                    i += 2;
                } else {
                    tokens.push(Token { tok: Tok::Op(CompOp::Gt), pos });
                    i += 1;
                }
            }
            '\'' => {
                let (s, next) = lex_string(text, i)?;
                tokens.push(Token { tok: Tok::Str(s), pos });
                i = next;
            }
            '-' => {
                if bytes.get(i + 1).map(|b| b.is_ascii_digit()).unwrap_or(false) {
                    let (tok, next) = lex_number(text, i)?;
                    tokens.push(Token { tok, pos });
                    i = next;
                } else {
                    return Err(QueryError::LexError {
                        pos,
                        message: "expected digit after '-'".into(),
                    });
                }
            }
            _ if c.is_ascii_digit() => {
                let (tok, next) = lex_number(text, i)?;
                tokens.push(Token { tok, pos });
                i = next;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                let word = &text[start..i];
                let tok = match Keyword::from_ident(word) {
                    Some(kw) => Tok::Keyword(kw),
                    None => Tok::Ident(word.to_string()),
                };
                tokens.push(Token { tok, pos });
            }
            other => {
                return Err(QueryError::LexError {
                    pos,
                    message: format!("unrecognized character {other:?}"),
                });
            }
        }
    }
    Ok(tokens)
}

/// Single-quoted string with `''` as the escape for a literal quote.
fn lex_string(text: &str, start: usize) -> Result<(String, usize), QueryError> {
    let bytes = text.as_bytes();
    let mut out = String::new();
    let mut i = start + 1;
    while i < bytes.len() {
        if bytes[i] == b'\'' {
            if bytes.get(i + 1) == Some(&b'\'') {
                out.push('\'');
                i += 2;
            } else {
                return Ok((out, i + 1));
            }
        } else {
            let ch_start = i;
            let mut end = i + 1;
            while end < bytes.len() && !text.is_char_boundary(end) {
                end += 1;
            }
            out.push_str(&text[ch_start..end]);
            i = end;
        }
    }
    Err(QueryError::LexError {
        pos: start,
        message: "unterminated string literal".into(),
    })
}

fn lex_number(text: &str, start: usize) -> Result<(Tok, usize), QueryError> {
    let bytes = text.as_bytes();
    let mut i = start;
    if bytes[i] == b'-' {
        i += 1;
    }
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    let mut is_float = false;
    if i < bytes.len()
        && bytes[i] == b'.'
        && bytes.get(i + 1).map(|b| b.is_ascii_digit()).unwrap_or(false)
    {
        is_float = true;
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    let slice = &text[start..i];
    let tok = if is_float {
        Tok::Float(slice.parse().map_err(|e| QueryError::LexError {
            pos: start,
            message: format!("bad float literal: {e}"),
        })?)
    } else {
        Tok::Int(slice.parse().map_err(|e| QueryError::LexError {
            pos: start,
            message: format!("bad integer literal: {e}"),
        })?)
    };
    Ok((tok, i))
}
