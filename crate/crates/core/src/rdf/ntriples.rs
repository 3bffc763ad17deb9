//! N-Triples reader and canonical writer.
//!
//! Only the subset used on the wire here is accepted: `IRIREF` subjects and
//! predicates, and objects that are `IRIREF`s or `STRING_LITERAL_QUOTE`s with
//! an optional `^^IRIREF` datatype. Blank nodes and language tags are
//! rejected with a line-numbered error.

use super::{Graph, Iri, Literal, RdfError, Term, Triple};

pub const MEDIA_TYPE: &str = "application/n-triples";

pub fn parse_ntriples(text: &str) -> Result<Graph, RdfError> {
    let mut graph = Graph::new();
    for (idx, line) in text.lines().enumerate() {
        if let Some(triple) = parse_line(line, idx + 1)? {
            graph.insert(triple);
        }
    }
    Ok(graph)
}

/// Parses a single line. Returns `None` for blank and comment-only lines.
pub fn parse_line(line: &str, line_no: usize) -> Result<Option<Triple>, RdfError> {
    let mut cur = Cursor {
        chars: line.char_indices().peekable(),
        line: line_no,
    };
    cur.skip_ws();
    if cur.at_end_or_comment() {
        return Ok(None);
    }
    let subject = cur.subject()?;
    cur.skip_ws();
    let predicate = cur.iri_ref("predicate")?;
    cur.skip_ws();
    let object = cur.object()?;
    cur.skip_ws();
    cur.expect('.', "expected '.' terminating the triple")?;
    cur.skip_ws();
    if !cur.at_end_or_comment() {
        return Err(cur.error("unexpected content after '.'"));
    }
    Ok(Some(Triple {
        subject,
        predicate,
        object,
    }))
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    line: usize,
}

impl Cursor<'_> {
    fn error(&self, message: impl Into<String>) -> RdfError {
        RdfError::Syntax {
            line: self.line,
            message: message.into(),
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn bump(&mut self) -> Option<char> {
        self.chars.next().map(|(_, c)| c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(' ' | '\t' | '\r')) {
            self.bump();
        }
    }

    fn at_end_or_comment(&mut self) -> bool {
        matches!(self.peek(), None | Some('#'))
    }

    fn expect(&mut self, want: char, message: &str) -> Result<(), RdfError> {
        match self.bump() {
            Some(c) if c == want => Ok(()),
            _ => Err(self.error(message)),
        }
    }

    fn reject_blank_node(&mut self) -> Result<(), RdfError> {
        if self.peek() == Some('_') {
            return Err(RdfError::BlankNode { line: self.line });
        }
        Ok(())
    }

    fn subject(&mut self) -> Result<Iri, RdfError> {
        self.reject_blank_node()?;
        self.iri_ref("subject")
    }

    fn object(&mut self) -> Result<Term, RdfError> {
        self.reject_blank_node()?;
        match self.peek() {
            Some('<') => self.iri_ref("object").map(Term::Iri),
            Some('"') => self.literal().map(Term::Literal),
            _ => Err(self.error("expected IRI or literal as object")),
        }
    }

    fn iri_ref(&mut self, position: &str) -> Result<Iri, RdfError> {
        if self.peek() != Some('<') {
            return Err(self.error(format!("expected IRI as {position}")));
        }
        self.bump();
        let mut value = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error("unterminated IRI")),
                Some('>') => break,
                Some('\\') => match self.bump() {
                    Some('u') => value.push(self.hex_char(4)?),
                    Some('U') => value.push(self.hex_char(8)?),
                    _ => return Err(self.error("invalid escape in IRI")),
                },
                Some(c) if super::term::forbidden_in_iri(c) => {
                    return Err(self.error(format!("character {c:?} not allowed in IRI")))
                }
                Some(c) => value.push(c),
            }
        }
        Iri::new(&value).map_err(|e| self.error(e.to_string()))
    }

    fn literal(&mut self) -> Result<Literal, RdfError> {
        self.bump();
        let mut lexical = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error("unterminated string literal")),
                Some('"') => break,
                Some('\\') => {
                    let c = match self.bump() {
                        Some('t') => '\t',
                        Some('b') => '\u{8}',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('f') => '\u{c}',
                        Some('"') => '"',
                        Some('\'') => '\'',
                        Some('\\') => '\\',
                        Some('u') => self.hex_char(4)?,
                        Some('U') => self.hex_char(8)?,
                        _ => return Err(self.error("invalid escape in string literal")),
                    };
                    lexical.push(c);
                }
                Some('\n' | '\r') => return Err(self.error("raw line break in string literal")),
                Some(c) => lexical.push(c),
            }
        }
        match self.peek() {
            Some('^') => {
                self.bump();
                self.expect('^', "expected '^^' before datatype IRI")?;
                let datatype = self.iri_ref("datatype")?;
                Ok(Literal::typed(lexical, datatype))
            }
            Some('@') => Err(self.error("language-tagged literals unsupported")),
            _ => Ok(Literal::plain(lexical)),
        }
    }

    fn hex_char(&mut self, digits: usize) -> Result<char, RdfError> {
        let mut code = 0u32;
        for _ in 0..digits {
            let d = self
                .bump()
                .and_then(|c| c.to_digit(16))
                .ok_or_else(|| self.error("invalid hex digit in escape"))?;
            code = code * 16 + d;
        }
        char::from_u32(code).ok_or_else(|| self.error("escape is not a Unicode scalar value"))
    }
}

/// Canonical N-Triples: one triple per line, lines sorted, `\n` terminated.
pub fn serialize_ntriples(graph: &Graph) -> String {
    let mut lines: Vec<String> = graph.iter().map(triple_line).collect();
    lines.sort_unstable();
    let mut out = String::with_capacity(lines.iter().map(|l| l.len() + 1).sum());
    for line in lines {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// One triple in N-Triples syntax, without the trailing newline.
pub fn triple_line(triple: &Triple) -> String {
    let mut out = String::new();
    write_iri(&mut out, &triple.subject);
    out.push(' ');
    write_iri(&mut out, &triple.predicate);
    out.push(' ');
    write_term(&mut out, &triple.object);
    out.push_str(" .");
    out
}

pub(crate) fn write_iri(out: &mut String, iri: &Iri) {
    out.push('<');
    out.push_str(iri.as_str());
    out.push('>');
}

pub(crate) fn write_term(out: &mut String, term: &Term) {
    match term {
        Term::Iri(iri) => write_iri(out, iri),
        Term::Literal(lit) => {
            out.push('"');
            for c in lit.lexical().chars() {
                match c {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\r' => out.push_str("\\r"),
                    c => out.push(c),
                }
            }
            out.push('"');
            if let Some(dt) = lit.datatype() {
                out.push_str("^^");
                write_iri(out, dt);
            }
        }
    }
}

/// Renders a term the way it appears in N-Triples (used for sorting rows
/// and in diagnostics).
pub fn term_to_string(term: &Term) -> String {
    let mut s = String::new();
    write_term(&mut s, term);
    s
}
