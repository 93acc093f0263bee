//! Line lexer for the experiment description language.

use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Word(String),
    Int(i64),
    Pipe,
    Ket,
    LParen,
    RParen,
    Equals,
    At,
    Amp,
    Plus,
    Minus,
    Slash,
    Arrow,
}

impl Tok {
    pub(crate) fn lexeme(&self) -> String {
        match self {
            Tok::Word(w) => w.clone(),
            Tok::Int(i) => i.to_string(),
            Tok::Pipe => "|".into(),
            Tok::Ket => ">".into(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::Equals => "=".into(),
            Tok::At => "@".into(),
            Tok::Amp => "&".into(),
            Tok::Plus => "+".into(),
            Tok::Minus => "-".into(),
            Tok::Slash => "/".into(),
            Tok::Arrow => "->".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    /// 1-based character column in the source line.
    pub column: usize,
}

/// Tokenize one source line; `#` starts a comment running to the end.
pub(crate) fn lex_line(line: &str, line_no: usize) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        match c {
            '#' => break,
            c if c.is_whitespace() => {
                i += 1;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || chars[i] == '_')
                {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                out.push(Token {
                    tok: Tok::Word(word),
                    column,
                });
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let digits: String = chars[start..i].iter().collect();
                let value = digits.parse::<i64>().map_err(|_| ParseError {
                    line: line_no,
                    column,
                    message: "number too large".into(),
                    token: digits.clone(),
                })?;
                out.push(Token {
                    tok: Tok::Int(value),
                    column,
                });
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                out.push(Token {
                    tok: Tok::Arrow,
                    column,
                });
                i += 2;
            }
            _ => {
                let tok = match c {
                    '|' => Tok::Pipe,
                    '>' => Tok::Ket,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '=' => Tok::Equals,
                    '@' => Tok::At,
                    '&' => Tok::Amp,
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '/' => Tok::Slash,
                    other => {
                        return Err(ParseError {
                            line: line_no,
                            column,
                            message: format!("unexpected character '{other}'"),
                            token: other.to_string(),
                        })
                    }
                };
                out.push(Token { tok, column });
                i += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_numbers_and_punctuation() {
        let toks = lex_line("at 3/2 measure S -> A", 1).unwrap();
        let kinds: Vec<Tok> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Word("at".into()),
                Tok::Int(3),
                Tok::Slash,
                Tok::Int(2),
                Tok::Word("measure".into()),
                Tok::Word("S".into()),
                Tok::Arrow,
                Tok::Word("A".into()),
            ]
        );
        assert_eq!(toks[1].column, 4);
        assert_eq!(toks[6].column, 18);
    }

    #[test]
    fn comments_are_dropped() {
        assert_eq!(lex_line("# whole line", 1).unwrap(), vec![]);
        let toks = lex_line("at 1 reset 1 # undo", 1).unwrap();
        assert_eq!(toks.len(), 4);
    }

    #[test]
    fn minus_vs_arrow() {
        let toks = lex_line("-1 ->", 1).unwrap();
        assert_eq!(toks[0].tok, Tok::Minus);
        assert_eq!(toks[1].tok, Tok::Int(1));
        assert_eq!(toks[2].tok, Tok::Arrow);
    }

    #[test]
    fn bad_character_is_located() {
        let err = lex_line("state 1*2", 7).unwrap_err();
        assert_eq!(err.line, 7);
        assert_eq!(err.column, 8);
        assert_eq!(err.token, "*");
    }
}
