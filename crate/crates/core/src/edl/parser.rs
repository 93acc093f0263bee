//! Recursive-descent parser: one statement per line, dispatched on the
//! leading keyword, with section order (declarations, state, events,
//! queries) enforced while reading.

use num_rational::Ratio;

use super::lexer::{lex_line, Tok, Token};
use super::{
    Coeff, EdlDocument, EventAction, ParseError, QueryAtom, StateTerm, Statement, StatementKind,
};
use crate::lab::Time;

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
    eol_column: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek2(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos + 1).map(|t| &t.tok)
    }

    fn advance(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, token: Option<&Token>, message: impl Into<String>) -> ParseError {
        match token {
            Some(t) => ParseError {
                line: self.line,
                column: t.column,
                message: message.into(),
                token: t.tok.lexeme(),
            },
            None => ParseError {
                line: self.line,
                column: self.eol_column,
                message: message.into(),
                token: "end of line".into(),
            },
        }
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        self.error_at(self.toks.get(self.pos), message)
    }

    fn take_word(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Word(w)) => {
                let w = w.clone();
                self.advance();
                Ok(w)
            }
            _ => Err(self.error_here(format!("expected {what}"))),
        }
    }

    fn take_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Word(w)) if w == kw => {
                self.advance();
                Ok(())
            }
            _ => Err(self.error_here(format!("expected '{kw}'"))),
        }
    }

    fn take_int(&mut self, what: &str) -> Result<i64, ParseError> {
        match self.peek() {
            Some(Tok::Int(i)) => {
                let i = *i;
                self.advance();
                Ok(i)
            }
            _ => Err(self.error_here(format!("expected {what}"))),
        }
    }

    /// A label atom: a bare word or a bare integer.
    fn take_label(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Word(w)) => {
                let w = w.clone();
                self.advance();
                Ok(w)
            }
            Some(Tok::Int(i)) => {
                let s = i.to_string();
                self.advance();
                Ok(s)
            }
            _ => Err(self.error_here(format!("expected {what}"))),
        }
    }

    fn take_tok(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.advance();
            Ok(())
        } else {
            Err(self.error_here(format!("expected {what}")))
        }
    }

    fn finish(&self) -> Result<(), ParseError> {
        if self.pos < self.toks.len() {
            Err(self.error_here("unexpected token"))
        } else {
            Ok(())
        }
    }
}

/// Parse a whole document. LF and CRLF line endings are both accepted;
/// `#` comments are dropped.
pub fn parse(text: &str) -> Result<EdlDocument, ParseError> {
    let mut statements = Vec::new();
    let mut have_state = false;
    // section rank: 0 declarations, 1 state, 2 events, 3 queries
    let mut rank = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let toks = lex_line(line, line_no)?;
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor {
            toks: &toks,
            pos: 0,
            line: line_no,
            eol_column: line.chars().count() + 1,
        };
        let head = match &toks[0].tok {
            Tok::Word(w) => w.clone(),
            _ => return Err(cur.error_here("expected a statement keyword")),
        };
        let kind = match head.as_str() {
            "system" | "pointer" => {
                if rank >= 1 {
                    return Err(cur.error_here("declarations must precede the state"));
                }
                if head == "system" {
                    parse_system(&mut cur)?
                } else {
                    parse_pointer(&mut cur)?
                }
            }
            "state" => {
                if have_state {
                    return Err(cur.error_here("state already declared"));
                }
                if rank >= 2 {
                    return Err(cur.error_here("state must precede events and queries"));
                }
                have_state = true;
                rank = 1;
                parse_state(&mut cur)?
            }
            "at" => {
                // syntax first, so a malformed time is reported at its own
                // column rather than as an ordering problem
                let kind = parse_event(&mut cur)?;
                let head_tok = Some(&toks[0]);
                if !have_state {
                    return Err(cur.error_at(head_tok, "state not declared before events"));
                }
                if rank >= 3 {
                    return Err(cur.error_at(head_tok, "events must precede queries"));
                }
                rank = 2;
                kind
            }
            "query" => {
                rank = 3;
                parse_query(&mut cur)?
            }
            "measure" | "reset" | "unitary" => {
                return Err(if !have_state {
                    cur.error_here("state not declared before events")
                } else {
                    cur.error_here(format!("expected 'at <time>' before '{head}'"))
                });
            }
            other => {
                return Err(cur.error_here(format!("unknown statement '{other}'")));
            }
        };
        statements.push(Statement {
            line: line_no,
            kind,
        });
    }
    Ok(EdlDocument {
        source: text.to_string(),
        statements,
    })
}

fn parse_system(cur: &mut Cursor) -> Result<StatementKind, ParseError> {
    cur.advance(); // `system`
    let name = cur.take_word("system name")?;
    cur.take_keyword("outcomes")?;
    let mut outcomes = Vec::new();
    while cur.peek().is_some() {
        outcomes.push(cur.take_label("outcome label")?);
    }
    if outcomes.is_empty() {
        return Err(cur.error_here("expected at least one outcome label"));
    }
    Ok(StatementKind::System { name, outcomes })
}

fn parse_pointer(cur: &mut Cursor) -> Result<StatementKind, ParseError> {
    cur.advance(); // `pointer`
    let name = cur.take_word("pointer name")?;
    cur.take_keyword("for")?;
    let observed = cur.take_word("system name")?;
    let mut companions = Vec::new();
    if cur.peek().is_some() {
        cur.take_keyword("with")?;
        while cur.peek().is_some() {
            companions.push(cur.take_word("companion pointer name")?);
        }
        if companions.is_empty() {
            return Err(cur.error_here("expected at least one companion pointer"));
        }
    }
    cur.finish()?;
    Ok(StatementKind::Pointer {
        name,
        observed,
        companions,
    })
}

fn parse_state(cur: &mut Cursor) -> Result<StatementKind, ParseError> {
    cur.advance(); // `state`
    let mut terms = vec![parse_term(cur)?];
    while cur.peek() == Some(&Tok::Plus) {
        cur.advance();
        terms.push(parse_term(cur)?);
    }
    cur.finish()?;
    Ok(StatementKind::State { terms })
}

fn parse_term(cur: &mut Cursor) -> Result<StateTerm, ParseError> {
    let coeff = parse_coeff(cur)?;
    cur.take_tok(Tok::Pipe, "'|'")?;
    let mut labels = Vec::new();
    while !matches!(cur.peek(), Some(Tok::Ket) | None) {
        labels.push(cur.take_label("basis label")?);
    }
    if labels.is_empty() {
        return Err(cur.error_here("expected at least one basis label"));
    }
    cur.take_tok(Tok::Ket, "'>'")?;
    Ok(StateTerm { coeff, labels })
}

fn parse_coeff(cur: &mut Cursor) -> Result<Coeff, ParseError> {
    let mut negative = false;
    while cur.peek() == Some(&Tok::Minus) {
        cur.advance();
        negative = !negative;
    }
    let numer = cur.take_int("coefficient")?;
    let mut denom = 1i64;
    let mut sqrt_divisor = 1i64;
    if cur.peek() == Some(&Tok::Slash) && matches!(cur.peek2(), Some(Tok::Int(_))) {
        cur.advance();
        let d_tok = cur.toks.get(cur.pos).cloned();
        denom = cur.take_int("denominator")?;
        if denom == 0 {
            return Err(cur.error_at(d_tok.as_ref(), "zero denominator"));
        }
    }
    if cur.peek() == Some(&Tok::Slash) {
        cur.advance();
        cur.take_keyword("sqrt")?;
        cur.take_tok(Tok::LParen, "'('")?;
        let a_tok = cur.toks.get(cur.pos).cloned();
        sqrt_divisor = cur.take_int("sqrt argument")?;
        if sqrt_divisor <= 0 {
            return Err(cur.error_at(a_tok.as_ref(), "sqrt argument must be positive"));
        }
        cur.take_tok(Tok::RParen, "')'")?;
    }
    let signed = if negative { -numer } else { numer };
    Ok(Coeff {
        rational: Ratio::new(signed, denom),
        sqrt_divisor,
    })
}

fn parse_time(cur: &mut Cursor) -> Result<Time, ParseError> {
    let mut negative = false;
    if cur.peek() == Some(&Tok::Minus) {
        cur.advance();
        negative = true;
    }
    let numer = cur.take_int("time")?;
    let mut denom = 1i64;
    if cur.peek() == Some(&Tok::Slash) {
        cur.advance();
        let d_tok = cur.toks.get(cur.pos).cloned();
        denom = cur.take_int("time denominator")?;
        if denom == 0 {
            return Err(cur.error_at(d_tok.as_ref(), "zero denominator"));
        }
    }
    let signed = if negative { -numer } else { numer };
    Ok(Ratio::new(signed, denom))
}

fn parse_event(cur: &mut Cursor) -> Result<StatementKind, ParseError> {
    cur.advance(); // `at`
    let time = parse_time(cur)?;
    let verb_tok = cur.toks.get(cur.pos).cloned();
    let verb = cur.take_word("event verb")?;
    let action = match verb.as_str() {
        "measure" => {
            let observed = cur.take_word("system name")?;
            cur.take_tok(Tok::Arrow, "'->'")?;
            let pointer = cur.take_word("pointer name")?;
            EventAction::Measure { observed, pointer }
        }
        "reset" => {
            let index = cur.take_int("event index")?;
            EventAction::Reset {
                index: index as usize,
            }
        }
        "unitary" => EventAction::Unitary {
            name: cur.take_word("unitary name")?,
        },
        _ => {
            return Err(cur.error_at(
                verb_tok.as_ref(),
                "expected 'measure', 'reset', or 'unitary'",
            ))
        }
    };
    cur.finish()?;
    Ok(StatementKind::Event { time, action })
}

fn parse_query(cur: &mut Cursor) -> Result<StatementKind, ParseError> {
    cur.advance(); // `query`
    match cur.peek() {
        Some(Tok::Word(w)) if w == "P" => {
            cur.advance();
        }
        _ => return Err(cur.error_here("expected 'P('")),
    }
    cur.take_tok(Tok::LParen, "'('")?;
    let mut atoms = vec![parse_atom(cur)?];
    while cur.peek() == Some(&Tok::Amp) {
        cur.advance();
        atoms.push(parse_atom(cur)?);
    }
    cur.take_tok(Tok::RParen, "')'")?;
    cur.finish()?;
    Ok(StatementKind::Query { atoms })
}

fn parse_atom(cur: &mut Cursor) -> Result<QueryAtom, ParseError> {
    let pointer = cur.take_word("pointer name")?;
    cur.take_tok(Tok::Equals, "'='")?;
    let outcome = cur.take_label("outcome label")?;
    cur.take_tok(Tok::At, "'@'")?;
    let at = parse_time(cur)?;
    Ok(QueryAtom {
        pointer,
        outcome,
        at,
    })
}
