//! Tokenizer for the concrete syntax: parentheses, braces and commas (for
//! effect literals), integers, and identifiers. Comments run from `;` to the
//! end of the line.

use num_bigint::BigInt;

use super::Diagnostic;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Int(BigInt),
    Ident(String),
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::LParen => "'('".to_string(),
            TokenKind::RParen => "')'".to_string(),
            TokenKind::LBrace => "'{'".to_string(),
            TokenKind::RBrace => "'}'".to_string(),
            TokenKind::Comma => "','".to_string(),
            TokenKind::Int(i) => format!("integer {i}"),
            TokenKind::Ident(s) => format!("'{s}'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub col: usize,
}

pub fn lex(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut tokens = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = src.chars().peekable();

    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        let bump = |c: char, line: &mut usize, col: &mut usize| {
            if c == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
        };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                chars.next();
                bump(c, &mut line, &mut col);
            }
            ';' => {
                while let Some(&c) = chars.peek() {
                    chars.next();
                    bump(c, &mut line, &mut col);
                    if c == '\n' {
                        break;
                    }
                }
            }
            '(' | ')' | '{' | '}' | ',' => {
                chars.next();
                bump(c, &mut line, &mut col);
                let kind = match c {
                    '(' => TokenKind::LParen,
                    ')' => TokenKind::RParen,
                    '{' => TokenKind::LBrace,
                    '}' => TokenKind::RBrace,
                    _ => TokenKind::Comma,
                };
                tokens.push(Token {
                    kind,
                    line: tline,
                    col: tcol,
                });
            }
            '-' | '0'..='9' => {
                let mut text = String::new();
                text.push(c);
                chars.next();
                bump(c, &mut line, &mut col);
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        text.push(d);
                        chars.next();
                        bump(d, &mut line, &mut col);
                    } else {
                        break;
                    }
                }
                if text == "-" {
                    return Err(Diagnostic::new(tline, tcol, "expected digits after '-'"));
                }
                let value = text
                    .parse::<BigInt>()
                    .map_err(|_| Diagnostic::new(tline, tcol, format!("bad integer {text}")))?;
                tokens.push(Token {
                    kind: TokenKind::Int(value),
                    line: tline,
                    col: tcol,
                });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut text = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        text.push(d);
                        chars.next();
                        bump(d, &mut line, &mut col);
                    } else {
                        break;
                    }
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(text),
                    line: tline,
                    col: tcol,
                });
            }
            other => {
                return Err(Diagnostic::new(
                    tline,
                    tcol,
                    format!("unexpected character {other:?}"),
                ));
            }
        }
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_forms_and_positions() {
        let toks = lex("(let x 5\n  x) ; trailing comment").unwrap();
        assert_eq!(toks.len(), 6);
        assert_eq!(toks[0].kind, TokenKind::LParen);
        assert_eq!(toks[1].kind, TokenKind::Ident("let".into()));
        assert_eq!(toks[3].kind, TokenKind::Int(BigInt::from(5)));
        assert_eq!(toks[4].line, 2);
        assert_eq!(toks[4].col, 3);
    }

    #[test]
    fn lexes_negative_integers_and_effects() {
        let toks = lex("{P,IO} -42").unwrap();
        assert_eq!(toks[0].kind, TokenKind::LBrace);
        assert_eq!(toks[2].kind, TokenKind::Comma);
        assert_eq!(toks[5].kind, TokenKind::Int(BigInt::from(-42)));
    }

    #[test]
    fn rejects_stray_characters() {
        assert!(lex("(out 7) %x").is_err());
        assert!(lex("a # b").is_err());
        assert!(lex("-)").is_err());
    }
}
