//! Formula tokenizer.

use super::parser::ParseError;
use crate::addr::{letters_to_col, MAX_ROW};

#[derive(Debug, Clone, PartialEq)]
pub(super) enum Token {
    Number(f64),
    Text(String),
    Ident(String),
    CellRef { col: u32, row: u32, abs_col: bool, abs_row: bool },
    QuotedSheet(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Amp,
    Percent,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    LParen,
    RParen,
    Comma,
    Colon,
    Bang,
}

#[derive(Debug, Clone)]
pub(super) struct Spanned {
    pub token: Token,
    pub offset: usize,
}

pub(super) fn lex(text: &str, base_offset: usize) -> Result<Vec<Spanned>, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let c = bytes[i];
        let err = |msg: String, at: usize| ParseError { message: msg, offset: base_offset + at };
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'+' => push(&mut tokens, Token::Plus, start, base_offset, &mut i),
            b'-' => push(&mut tokens, Token::Minus, start, base_offset, &mut i),
            b'*' => push(&mut tokens, Token::Star, start, base_offset, &mut i),
            b'/' => push(&mut tokens, Token::Slash, start, base_offset, &mut i),
            b'^' => push(&mut tokens, Token::Caret, start, base_offset, &mut i),
            b'&' => push(&mut tokens, Token::Amp, start, base_offset, &mut i),
            b'%' => push(&mut tokens, Token::Percent, start, base_offset, &mut i),
            b'(' => push(&mut tokens, Token::LParen, start, base_offset, &mut i),
            b')' => push(&mut tokens, Token::RParen, start, base_offset, &mut i),
            b',' => push(&mut tokens, Token::Comma, start, base_offset, &mut i),
            b':' => push(&mut tokens, Token::Colon, start, base_offset, &mut i),
            b'!' => push(&mut tokens, Token::Bang, start, base_offset, &mut i),
            b'=' => push(&mut tokens, Token::Eq, start, base_offset, &mut i),
            b'<' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    i += 2;
                    tokens.push(Spanned { token: Token::Ne, offset: base_offset + start });
                } else if bytes.get(i + 1) == Some(&b'=') {
                    i += 2;
                    tokens.push(Spanned { token: Token::Le, offset: base_offset + start });
                } else {
                    push(&mut tokens, Token::Lt, start, base_offset, &mut i);
                }
            }
            b'>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 2;
                    tokens.push(Spanned { token: Token::Ge, offset: base_offset + start });
                } else {
                    push(&mut tokens, Token::Gt, start, base_offset, &mut i);
                }
            }
            b'"' => {
                let mut out = String::new();
                i += 1;
                loop {
                    match bytes.get(i) {
                        Some(b'"') => {
                            if bytes.get(i + 1) == Some(&b'"') {
                                out.push('"');
                                i += 2;
                            } else {
                                i += 1;
                                break;
                            }
                        }
                        Some(_) => {
                            let ch = text[i..].chars().next().expect("in bounds");
                            out.push(ch);
                            i += ch.len_utf8();
                        }
                        None => return Err(err("unterminated text literal".into(), start)),
                    }
                }
                tokens.push(Spanned { token: Token::Text(out), offset: base_offset + start });
            }
            b'\'' => {
                let mut out = String::new();
                i += 1;
                loop {
                    match bytes.get(i) {
                        Some(b'\'') => {
                            if bytes.get(i + 1) == Some(&b'\'') {
                                out.push('\'');
                                i += 2;
                            } else {
                                i += 1;
                                break;
                            }
                        }
                        Some(_) => {
                            let ch = text[i..].chars().next().expect("in bounds");
                            out.push(ch);
                            i += ch.len_utf8();
                        }
                        None => return Err(err("unterminated sheet name".into(), start)),
                    }
                }
                if out.is_empty() {
                    return Err(err("empty sheet name".into(), start));
                }
                tokens.push(Spanned { token: Token::QuotedSheet(out), offset: base_offset + start });
            }
            b'0'..=b'9' | b'.' => {
                let tok = lex_number(text, &mut i).map_err(|msg| err(msg, start))?;
                tokens.push(Spanned { token: tok, offset: base_offset + start });
            }
            b'$' | b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let tok = lex_word(text, &mut i).map_err(|msg| err(msg, start))?;
                tokens.push(Spanned { token: tok, offset: base_offset + start });
            }
            _ => {
                let ch = text[i..].chars().next().expect("in bounds");
                return Err(err(format!("unknown token `{ch}`"), start));
            }
        }
    }
    Ok(tokens)
}

fn push(tokens: &mut Vec<Spanned>, token: Token, start: usize, base: usize, i: &mut usize) {
    *i += 1;
    tokens.push(Spanned { token, offset: base + start });
}

fn lex_number(text: &str, i: &mut usize) -> Result<Token, String> {
    let bytes = text.as_bytes();
    let start = *i;
    let mut j = *i;
    while j < bytes.len() && bytes[j].is_ascii_digit() {
        j += 1;
    }
    if j < bytes.len() && bytes[j] == b'.' {
        j += 1;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
    }
    if &text[start..j] == "." {
        return Err("unknown token `.`".into());
    }
    if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
        let mut k = j + 1;
        if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
            k += 1;
        }
        if k < bytes.len() && bytes[k].is_ascii_digit() {
            while k < bytes.len() && bytes[k].is_ascii_digit() {
                k += 1;
            }
            j = k;
        }
    }
    let raw = &text[start..j];
    let value: f64 = raw.parse().map_err(|_| format!("invalid number `{raw}`"))?;
    *i = j;
    Ok(Token::Number(value))
}

/// Lex something starting with a letter, `_`, or `$`: a cell reference when it
/// matches `$?letters$?digits` (and is not a function name like `LOG10(`),
/// otherwise an identifier.
fn lex_word(text: &str, i: &mut usize) -> Result<Token, String> {
    let bytes = text.as_bytes();
    let start = *i;

    // Try the reference shape first.
    let mut j = start;
    let abs_col = bytes[j] == b'$';
    if abs_col {
        j += 1;
    }
    let letters_start = j;
    while j < bytes.len() && bytes[j].is_ascii_alphabetic() {
        j += 1;
    }
    let letters = &text[letters_start..j];
    let mut abs_row = false;
    if j < bytes.len() && bytes[j] == b'$' {
        abs_row = true;
        j += 1;
    }
    let digits_start = j;
    while j < bytes.len() && bytes[j].is_ascii_digit() {
        j += 1;
    }
    let digits = &text[digits_start..j];
    let followed_by_ident = j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_' || bytes[j] == b'.');
    let followed_by_call = j < bytes.len() && bytes[j] == b'(';
    if !letters.is_empty() && !digits.is_empty() && !followed_by_ident && !followed_by_call {
        let col = letters_to_col(letters)
            .ok_or_else(|| format!("cell reference out of range `{}`", &text[start..j]))?;
        let row: u32 = digits.parse().map_err(|_| format!("invalid row `{digits}`"))?;
        if !(1..=MAX_ROW).contains(&row) {
            return Err(format!("cell reference out of range `{}`", &text[start..j]));
        }
        *i = j;
        return Ok(Token::CellRef { col, row, abs_col, abs_row });
    }

    if abs_col || abs_row {
        // `$B` (absolute whole-column endpoint) is accepted; other `$` uses are not.
        if abs_col && !abs_row && !letters.is_empty() && digits.is_empty() && !followed_by_ident && !followed_by_call {
            *i = letters_start + letters.len();
            return Ok(Token::Ident(format!("${letters}")));
        }
        return Err("unexpected `$`".into());
    }

    // Plain identifier: function name, sheet name, column letters, TRUE/FALSE.
    let mut j = start;
    while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_' || bytes[j] == b'.') {
        j += 1;
    }
    if j == start {
        return Err(format!("unknown token `{}`", &text[start..start + 1]));
    }
    *i = j;
    Ok(Token::Ident(text[start..j].to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<Token> {
        lex(text, 0).unwrap().into_iter().map(|s| s.token).collect()
    }

    #[test]
    fn lexes_references_and_idents() {
        assert_eq!(
            kinds("B67"),
            vec![Token::CellRef { col: 2, row: 67, abs_col: false, abs_row: false }]
        );
        assert_eq!(
            kinds("$H$10"),
            vec![Token::CellRef { col: 8, row: 10, abs_col: true, abs_row: true }]
        );
        assert_eq!(kinds("SUM("), vec![Token::Ident("SUM".into()), Token::LParen]);
        // A name followed by `(` is a call even when it looks like a reference.
        assert_eq!(kinds("LOG10(")[0], Token::Ident("LOG10".into()));
    }

    #[test]
    fn lexes_numbers() {
        assert_eq!(kinds("1.5"), vec![Token::Number(1.5)]);
        assert_eq!(kinds("5E-13"), vec![Token::Number(5e-13)]);
        assert_eq!(kinds(".5"), vec![Token::Number(0.5)]);
        // 1E3 is a number, not a reference to E3.
        assert_eq!(kinds("1E3"), vec![Token::Number(1000.0)]);
    }

    #[test]
    fn lexes_strings_with_doubled_quotes() {
        assert_eq!(kinds("\"a\"\"b\""), vec![Token::Text("a\"b".into())]);
    }

    #[test]
    fn rejects_unknown_tokens() {
        assert!(lex("#", 0).is_err());
        assert!(lex("\"open", 0).is_err());
    }
}
