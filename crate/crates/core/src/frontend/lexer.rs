use std::collections::HashMap;

use super::ParseError;

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Float(f32),
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

const PUNCTS: &[&str] = &[
    "<<=", ">>=", "++", "--", "+=", "-=", "*=", "/=", "%=", "<=", ">=", "==", "!=", "&&", "||", "->", "<<",
    ">>", "::", "(", ")", "[", "]", "{", "}", ";", ",", "=", "+", "-", "*", "/", "%", "<", ">", "!", "&", "?",
    ":", "|", "^", "~", ".",
];

pub fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = vec![];
    let mut macros: HashMap<String, Tok> = HashMap::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let mut at_line_start = true;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            at_line_start = true;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' && at_line_start {
            let start = i;
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let words: Vec<&str> = text[1..].split_whitespace().collect();
            if words.first() == Some(&"define") && words.len() >= 3 {
                let sub = lex(&words[2..].join(" "))?;
                if sub.len() == 2 {
                    macros.insert(words[1].to_string(), sub[0].tok.clone());
                }
            }
            continue;
        }
        at_line_start = false;
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            col += 2;
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                if chars[i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                i += 1;
            }
            i += 2;
            col += 2;
            continue;
        }
        let (tl, tc) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            col += i - start;
            let tok = macros.get(&word).cloned().unwrap_or(Tok::Ident(word));
            out.push(Token { tok, line: tl, col: tc });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).map_or(false, |d| d.is_ascii_digit())) {
            let start = i;
            let mut is_float = false;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                is_float |= chars[i] == '.';
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                is_float = true;
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let mut suffix_f = false;
            while i < chars.len() && matches!(chars[i], 'f' | 'F' | 'u' | 'U' | 'l' | 'L') {
                suffix_f |= matches!(chars[i], 'f' | 'F');
                i += 1;
            }
            col += i - start;
            let err = || ParseError { line: tl, col: tc, msg: format!("bad number `{text}`") };
            let tok = if is_float || suffix_f {
                Tok::Float(text.parse::<f32>().map_err(|_| err())?)
            } else {
                Tok::Int(text.parse::<i64>().map_err(|_| err())?)
            };
            out.push(Token { tok, line: tl, col: tc });
            continue;
        }
        if c == '"' {
            let start = i + 1;
            i += 1;
            while i < chars.len() && chars[i] != '"' {
                i += 1;
            }
            let s: String = chars[start..i.min(chars.len())].iter().collect();
            i += 1;
            col += s.len() + 2;
            out.push(Token { tok: Tok::Str(s), line: tl, col: tc });
            continue;
        }
        match PUNCTS.iter().find(|p| {
            let pc: Vec<char> = p.chars().collect();
            chars[i..].starts_with(&pc)
        }) {
            Some(p) => {
                i += p.len();
                col += p.len();
                out.push(Token { tok: Tok::Punct(p), line: tl, col: tc });
            }
            None => return Err(ParseError { line: tl, col: tc, msg: format!("unexpected character `{c}`") }),
        }
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}
