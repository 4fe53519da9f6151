use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    /// Bare word; keywords are recognised by the parser.
    Word(String),
    /// `"x"`, `` `x` `` or `[x]`.
    QuotedIdent(String),
    /// Double-quoted text is kept apart: SQLite reads it as an identifier
    /// when one matches and as a string otherwise.
    DoubleQuoted(String),
    String(String),
    Integer(i64),
    Float(f64),
    LParen,
    RParen,
    Comma,
    Dot,
    Star,
    Plus,
    Minus,
    Slash,
    Percent,
    Concat,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Semicolon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.kind, TokenKind::Word(w) if w.eq_ignore_ascii_case(kw))
    }
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'-' && bytes.get(i + 1) == Some(&b'-') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let kind = match c {
            b'(' => simple(&mut i, TokenKind::LParen),
            b')' => simple(&mut i, TokenKind::RParen),
            b',' => simple(&mut i, TokenKind::Comma),
            b'*' => simple(&mut i, TokenKind::Star),
            b'+' => simple(&mut i, TokenKind::Plus),
            b'-' => simple(&mut i, TokenKind::Minus),
            b'/' => simple(&mut i, TokenKind::Slash),
            b'%' => simple(&mut i, TokenKind::Percent),
            b';' => simple(&mut i, TokenKind::Semicolon),
            b'=' => {
                i += if bytes.get(i + 1) == Some(&b'=') { 2 } else { 1 };
                TokenKind::Eq
            }
            b'!' if bytes.get(i + 1) == Some(&b'=') => {
                i += 2;
                TokenKind::NotEq
            }
            b'<' => match bytes.get(i + 1) {
                Some(b'=') => {
                    i += 2;
                    TokenKind::LtEq
                }
                Some(b'>') => {
                    i += 2;
                    TokenKind::NotEq
                }
                _ => simple(&mut i, TokenKind::Lt),
            },
            b'>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 2;
                    TokenKind::GtEq
                } else {
                    simple(&mut i, TokenKind::Gt)
                }
            }
            b'|' if bytes.get(i + 1) == Some(&b'|') => {
                i += 2;
                TokenKind::Concat
            }
            b'\'' => TokenKind::String(quoted(text, &mut i, b'\'')?),
            b'"' => TokenKind::DoubleQuoted(quoted(text, &mut i, b'"')?),
            b'`' => TokenKind::QuotedIdent(quoted(text, &mut i, b'`')?),
            b'[' => {
                let close =
                    text[i + 1..].find(']').ok_or_else(|| ParseError::new(start, "unterminated [identifier]"))?;
                let ident = text[i + 1..i + 1 + close].to_string();
                i += close + 2;
                TokenKind::QuotedIdent(ident)
            }
            b'.' if !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) => simple(&mut i, TokenKind::Dot),
            b'0'..=b'9' | b'.' => number(text, &mut i)?,
            c if c == b'_' || c.is_ascii_alphabetic() || c >= 0x80 => {
                while i < bytes.len()
                    && (bytes[i] == b'_' || bytes[i] == b'$' || bytes[i].is_ascii_alphanumeric() || bytes[i] >= 0x80)
                {
                    i += 1;
                }
                TokenKind::Word(text[start..i].to_string())
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(ParseError::new(start, format!("unexpected character {ch:?}")));
            }
        };
        tokens.push(Token { kind, start, end: i });
    }
    Ok(tokens)
}

fn simple(i: &mut usize, kind: TokenKind) -> TokenKind {
    *i += 1;
    kind
}

/// Reads a quoted run starting at `*i` (the opening quote); doubled quotes escape.
fn quoted(text: &str, i: &mut usize, quote: u8) -> Result<String, ParseError> {
    let bytes = text.as_bytes();
    let start = *i;
    let mut out = String::new();
    let mut j = *i + 1;
    loop {
        match bytes.get(j) {
            None => return Err(ParseError::new(start, "unterminated quoted text")),
            Some(&b) if b == quote => {
                if bytes.get(j + 1) == Some(&quote) {
                    out.push(quote as char);
                    j += 2;
                } else {
                    j += 1;
                    break;
                }
            }
            Some(_) => {
                let ch = text[j..].chars().next().expect("in bounds");
                out.push(ch);
                j += ch.len_utf8();
            }
        }
    }
    *i = j;
    Ok(out)
}

fn number(text: &str, i: &mut usize) -> Result<TokenKind, ParseError> {
    let bytes = text.as_bytes();
    let start = *i;
    let mut j = *i;
    let mut is_float = false;
    while j < bytes.len() && bytes[j].is_ascii_digit() {
        j += 1;
    }
    if j < bytes.len() && bytes[j] == b'.' {
        is_float = true;
        j += 1;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
    }
    if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
        let mut k = j + 1;
        if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
            k += 1;
        }
        if k < bytes.len() && bytes[k].is_ascii_digit() {
            is_float = true;
            j = k;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
        }
    }
    let lexeme = &text[start..j];
    *i = j;
    if !is_float {
        if let Ok(v) = lexeme.parse::<i64>() {
            return Ok(TokenKind::Integer(v));
        }
    }
    lexeme.parse::<f64>().map(TokenKind::Float).map_err(|_| ParseError::new(start, format!("bad number {lexeme}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(s: &str) -> Vec<TokenKind> {
        tokenize(s).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn strings_and_escapes() {
        assert_eq!(kinds("'it''s'"), vec![TokenKind::String("it's".into())]);
        assert_eq!(kinds("\"Aruba\""), vec![TokenKind::DoubleQuoted("Aruba".into())]);
    }

    #[test]
    fn numbers() {
        assert_eq!(
            kinds("12 1.5 .5 1e3"),
            vec![TokenKind::Integer(12), TokenKind::Float(1.5), TokenKind::Float(0.5), TokenKind::Float(1000.0),]
        );
    }

    #[test]
    fn operators_and_positions() {
        let toks = tokenize("a<>b >= 3").unwrap();
        assert_eq!(toks[1].kind, TokenKind::NotEq);
        assert_eq!(toks[3].kind, TokenKind::GtEq);
        assert_eq!((toks[3].start, toks[3].end), (5, 7));
    }

    #[test]
    fn unterminated_string_is_error() {
        let err = tokenize("select 'abc").unwrap_err();
        assert_eq!(err.position, 7);
    }

    #[test]
    fn non_ascii_identifiers() {
        assert_eq!(kinds("Tšelny"), vec![TokenKind::Word("Tšelny".into())]);
    }
}
