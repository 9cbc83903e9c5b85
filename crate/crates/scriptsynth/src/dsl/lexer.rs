use super::ParseError;
use crate::json::JsonValue;

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    Slot(usize),
    Int(i64),
    Float(String),
    Str(String),
    Punct(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

// Longest first so that "==" wins over "=".
const PUNCTS: &[&str] = &[
    ":=", "->", "==", "!=", ">=", "<=", "&&", "||", "++", "..", "(", ")", "{", "}", "[", "]", ",",
    ".", ":", "=", "!", "?", ">", "<", "+",
];

pub fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| ParseError { line, col, message: msg };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
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
        let (start_line, start_col) = (line, col);
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c == '$' {
            i += 1;
            let ds = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let digits: String = chars[ds..i].iter().collect();
            if digits.is_empty() {
                Tok::Slot(0)
            } else {
                Tok::Slot(digits.parse().map_err(|_| err(line, col, "slot index too large".into()))?)
            }
        } else if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_float = false;
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                is_float = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    is_float = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            match text.parse::<i64>() {
                Ok(n) if !is_float => Tok::Int(n),
                _ => match JsonValue::parse(&text) {
                    Ok(_) => Tok::Float(text),
                    Err(_) => return Err(err(line, col, format!("bad number {text}"))),
                },
            }
        } else if c == '"' {
            i += 1;
            while i < chars.len() && chars[i] != '"' {
                if chars[i] == '\\' {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '\n' {
                    return Err(err(line, col, "newline in string literal".into()));
                }
                i += 1;
            }
            if i >= chars.len() {
                return Err(err(line, col, "unterminated string literal".into()));
            }
            i += 1;
            let raw: String = chars[start..i].iter().collect();
            match serde_json::from_str::<String>(&raw) {
                Ok(s) => Tok::Str(s),
                Err(e) => return Err(err(line, col, format!("bad string literal: {e}"))),
            }
        } else {
            let rest: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
                Some(p) => {
                    i += p.chars().count();
                    Tok::Punct(p)
                }
                None => return Err(err(line, col, format!("unexpected character {c:?}"))),
            }
        };
        col += i - start;
        out.push(Token { tok, line: start_line, col: start_col });
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}
