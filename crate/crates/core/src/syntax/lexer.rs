use super::{ParseFailure, Pos};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TokenKind {
    LParen,
    RParen,
    Arrow,
    Assign,
    Ident(String),
    Number(f64),
    /// Raw interior of a `[...]` block; the token position is that of `[`.
    Block(String),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub pos: Pos,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

struct Cursor<'a> {
    text: &'a str,
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Cursor<'a> {
    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            column: self.column,
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn offset(&mut self) -> usize {
        self.chars.peek().map_or(self.text.len(), |&(i, _)| i)
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }
}

pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, ParseFailure> {
    let mut cur = Cursor {
        text,
        chars: text.char_indices().peekable(),
        line: 1,
        column: 1,
    };
    let mut tokens = Vec::new();
    while let Some(c) = cur.peek() {
        let pos = cur.pos();
        match c {
            c if c.is_whitespace() => {
                cur.bump();
            }
            ';' => {
                while cur.peek().is_some_and(|c| c != '\n') {
                    cur.bump();
                }
            }
            '(' => {
                cur.bump();
                tokens.push(Token {
                    kind: TokenKind::LParen,
                    pos,
                });
            }
            ')' => {
                cur.bump();
                tokens.push(Token {
                    kind: TokenKind::RParen,
                    pos,
                });
            }
            '[' => {
                cur.bump();
                let start = cur.offset();
                let mut depth = 1usize;
                loop {
                    match cur.peek() {
                        None => {
                            return Err(ParseFailure::new(pos, "unterminated action block `[`"))
                        }
                        Some('[') => depth += 1,
                        Some(']') => {
                            depth -= 1;
                            if depth == 0 {
                                break;
                            }
                        }
                        Some(_) => {}
                    }
                    cur.bump();
                }
                let end = cur.offset();
                cur.bump();
                tokens.push(Token {
                    kind: TokenKind::Block(text[start..end].to_string()),
                    pos,
                });
            }
            ']' => return Err(ParseFailure::new(pos, "unexpected `]`")),
            ':' => {
                cur.bump();
                if cur.peek() == Some('=') {
                    cur.bump();
                    tokens.push(Token {
                        kind: TokenKind::Assign,
                        pos,
                    });
                } else {
                    return Err(ParseFailure::new(pos, "expected `:=`"));
                }
            }
            '-' => {
                let start = cur.offset();
                cur.bump();
                match cur.peek() {
                    Some('>') => {
                        cur.bump();
                        tokens.push(Token {
                            kind: TokenKind::Arrow,
                            pos,
                        });
                    }
                    Some(d) if d.is_ascii_digit() => {
                        let number = lex_number(&mut cur, start, pos)?;
                        tokens.push(number);
                    }
                    _ => return Err(ParseFailure::new(pos, "unexpected `-`")),
                }
            }
            c if c.is_ascii_digit() => {
                let start = cur.offset();
                let number = lex_number(&mut cur, start, pos)?;
                tokens.push(number);
            }
            c if is_ident_start(c) => {
                let start = cur.offset();
                while cur.peek().is_some_and(is_ident_char) {
                    cur.bump();
                }
                let end = cur.offset();
                tokens.push(Token {
                    kind: TokenKind::Ident(text[start..end].to_string()),
                    pos,
                });
            }
            other => {
                return Err(ParseFailure::new(
                    pos,
                    format!("unexpected character `{}`", other.escape_debug()),
                ))
            }
        }
    }
    Ok(tokens)
}

fn lex_number(cur: &mut Cursor<'_>, start: usize, pos: Pos) -> Result<Token, ParseFailure> {
    while cur.peek().is_some_and(|c| c.is_ascii_digit() || c == '.') {
        cur.bump();
    }
    let end = cur.offset();
    let text = &cur.text[start..end];
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Token {
            kind: TokenKind::Number(v),
            pos,
        }),
        Ok(_) => Err(ParseFailure::new(pos, "number out of range")),
        Err(_) => Err(ParseFailure::new(pos, format!("malformed number `{text}`"))),
    }
}
