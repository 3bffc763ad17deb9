use std::collections::BTreeMap;

use super::{
    CompareOp, Comparison, GroupPattern, PatternElement, Projection, Query, QueryError,
    TermPattern, TriplePattern, Variable,
};
use crate::rdf::{vocab, Iri, Literal, Term};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    IriRef(String),
    PName(String, String),
    Var(String),
    Str(String),
    DoubleCaret,
    Word(String),
    Number(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Dot,
    Semicolon,
    Comma,
    Star,
    Eq,
    Ne,
    /// Characters that only occur in constructs outside the subset.
    Other(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

/// Keywords outside the subset, rejected before any other parsing happens.
const UNSUPPORTED_KEYWORDS: &[&str] = &[
    "OPTIONAL", "SERVICE", "MINUS", "BIND", "VALUES", "GRAPH", "LIMIT", "OFFSET", "HAVING",
    "CONSTRUCT", "ASK", "DESCRIBE", "FROM", "INSERT", "DELETE", "LOAD", "CLEAR", "BASE",
    "REDUCED", "REGEX", "BOUND", "STR", "LANG", "COUNT",
];

pub fn parse_query(text: &str) -> Result<Query, QueryError> {
    let tokens = tokenize(text)?;
    reject_unsupported(&tokens)?;
    let mut parser = Parser {
        tokens,
        idx: 0,
        end: text.len(),
        prefixes: BTreeMap::new(),
    };
    parser.query()
}

fn syntax(pos: usize, message: impl Into<String>) -> QueryError {
    QueryError::Syntax {
        position: pos,
        message: message.into(),
    }
}

fn unsupported(pos: usize, construct: impl Into<String>) -> QueryError {
    QueryError::Unsupported {
        position: pos,
        construct: construct.into(),
    }
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-' || c == '.'
}

fn tokenize(text: &str) -> Result<Vec<Token>, QueryError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, pos });
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '#' => {
                while let Some((_, c)) = chars.next() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            '<' if text[pos + 1..]
                .chars()
                .next()
                .is_none_or(|c| c.is_whitespace() || c == '=') =>
            {
                chars.next();
                push(&mut out, Tok::Other('<'));
            }
            '<' => {
                chars.next();
                let mut iri = String::new();
                loop {
                    match chars.next() {
                        Some((_, '>')) => break,
                        Some((_, c)) if c.is_whitespace() => {
                            return Err(syntax(pos, "whitespace inside IRI"))
                        }
                        Some((_, c)) => iri.push(c),
                        None => return Err(syntax(pos, "unterminated IRI")),
                    }
                }
                push(&mut out, Tok::IriRef(iri));
            }
            '?' | '$' => {
                chars.next();
                let mut name = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        name.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                if name.is_empty() {
                    return Err(unsupported(pos, "property path"));
                }
                push(&mut out, Tok::Var(name));
            }
            '"' | '\'' => {
                let quote = c;
                chars.next();
                let mut value = String::new();
                loop {
                    match chars.next() {
                        Some((_, c)) if c == quote => break,
                        Some((_, '\\')) => {
                            let escaped = match chars.next() {
                                Some((_, 't')) => '\t',
                                Some((_, 'n')) => '\n',
                                Some((_, 'r')) => '\r',
                                Some((_, 'b')) => '\u{8}',
                                Some((_, 'f')) => '\u{c}',
                                Some((_, '"')) => '"',
                                Some((_, '\'')) => '\'',
                                Some((_, '\\')) => '\\',
                                _ => return Err(syntax(pos, "invalid escape in string")),
                            };
                            value.push(escaped);
                        }
                        Some((_, '\n')) | None => {
                            return Err(syntax(pos, "unterminated string literal"))
                        }
                        Some((_, c)) => value.push(c),
                    }
                }
                if let Some(&(at, '@')) = chars.peek() {
                    return Err(unsupported(at, "language tag"));
                }
                push(&mut out, Tok::Str(value));
            }
            '^' => {
                chars.next();
                if let Some(&(_, '^')) = chars.peek() {
                    chars.next();
                    push(&mut out, Tok::DoubleCaret);
                } else {
                    push(&mut out, Tok::Other('^'));
                }
            }
            '!' => {
                chars.next();
                if let Some(&(_, '=')) = chars.peek() {
                    chars.next();
                    push(&mut out, Tok::Ne);
                } else {
                    push(&mut out, Tok::Other('!'));
                }
            }
            '{' | '}' | '(' | ')' | '.' | ';' | ',' | '*' | '=' => {
                chars.next();
                let tok = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '.' => Tok::Dot,
                    ';' => Tok::Semicolon,
                    ',' => Tok::Comma,
                    '*' => Tok::Star,
                    _ => Tok::Eq,
                };
                push(&mut out, tok);
            }
            c if c.is_ascii_digit() || ((c == '-' || c == '+') && next_is_digit(text, pos)) => {
                let mut num = String::new();
                num.push(c);
                chars.next();
                while let Some(&(_, c)) = chars.peek() {
                    if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' {
                        num.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                push(&mut out, Tok::Number(num));
            }
            c if c.is_alphabetic() || c == '_' || c == ':' => {
                let mut word = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if is_name_char(c) || c == ':' {
                        word.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                // A trailing '.' ends the triple rather than the name.
                let mut trailing_dots = 0;
                while word.ends_with('.') {
                    word.pop();
                    trailing_dots += 1;
                }
                let tok = match word.split_once(':') {
                    Some((prefix, local)) => Tok::PName(prefix.to_owned(), local.to_owned()),
                    None => Tok::Word(word.clone()),
                };
                push(&mut out, tok);
                for i in 0..trailing_dots {
                    out.push(Token {
                        tok: Tok::Dot,
                        pos: pos + word.len() + i,
                    });
                }
            }
            other => {
                chars.next();
                push(&mut out, Tok::Other(other));
            }
        }
    }
    Ok(out)
}

fn next_is_digit(text: &str, pos: usize) -> bool {
    text[pos + 1..]
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_digit())
}

fn reject_unsupported(tokens: &[Token]) -> Result<(), QueryError> {
    for (i, token) in tokens.iter().enumerate() {
        let Tok::Word(word) = &token.tok else { continue };
        let upper = word.to_ascii_uppercase();
        let followed_by_by = matches!(
            tokens.get(i + 1).map(|t| &t.tok),
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("BY")
        );
        if (upper == "ORDER" || upper == "GROUP") && followed_by_by {
            return Err(unsupported(token.pos, format!("{upper} BY")));
        }
        if UNSUPPORTED_KEYWORDS.contains(&upper.as_str()) {
            return Err(unsupported(token.pos, upper));
        }
    }
    Ok(())
}

struct Parser {
    tokens: Vec<Token>,
    idx: usize,
    end: usize,
    prefixes: BTreeMap<String, Iri>,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.idx).map(|t| &t.tok)
    }

    fn pos(&self) -> usize {
        self.tokens.get(self.idx).map_or(self.end, |t| t.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let tok = self.tokens.get(self.idx).map(|t| t.tok.clone());
        self.idx += 1;
        tok
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_keyword(kw) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("expected {kw}")))
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), QueryError> {
        let pos = self.pos();
        match self.next() {
            Some(t) if t == want => Ok(()),
            _ => Err(syntax(pos, format!("expected {what}"))),
        }
    }

    fn query(&mut self) -> Result<Query, QueryError> {
        while self.eat_keyword("PREFIX") {
            let pos = self.pos();
            let prefix = match self.next() {
                Some(Tok::PName(prefix, local)) if local.is_empty() => prefix,
                _ => return Err(syntax(pos, "expected prefix name ending in ':'")),
            };
            let pos = self.pos();
            let iri = match self.next() {
                Some(Tok::IriRef(iri)) => self.iri(&iri, pos)?,
                _ => return Err(syntax(pos, "expected IRI after prefix name")),
            };
            self.prefixes.insert(prefix, iri);
        }

        self.expect_keyword("SELECT")?;
        let distinct = self.eat_keyword("DISTINCT");
        let projection = if self.peek() == Some(&Tok::Star) {
            self.idx += 1;
            Projection::All
        } else {
            let mut vars = Vec::new();
            while let Some(Tok::Var(name)) = self.peek() {
                let var = Variable::new(name);
                self.idx += 1;
                if !vars.contains(&var) {
                    vars.push(var);
                }
            }
            if vars.is_empty() {
                return Err(syntax(self.pos(), "expected '*' or at least one variable"));
            }
            Projection::Vars(vars)
        };
        self.eat_keyword("WHERE");
        let pattern = self.group()?;

        if self.idx < self.tokens.len() {
            return Err(syntax(self.pos(), "unexpected content after query"));
        }
        if let Projection::Vars(vars) = &projection {
            let mentioned = pattern.mentioned_variables();
            if let Some(missing) = vars.iter().find(|v| !mentioned.contains(v)) {
                return Err(syntax(
                    0,
                    format!("selected variable {missing} does not occur in WHERE"),
                ));
            }
        }
        Ok(Query {
            prefixes: std::mem::take(&mut self.prefixes),
            projection,
            distinct,
            pattern,
        })
    }

    fn group(&mut self) -> Result<GroupPattern, QueryError> {
        self.expect(Tok::LBrace, "'{'")?;
        let mut elements = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::RBrace) => {
                    self.idx += 1;
                    return Ok(GroupPattern::new(elements));
                }
                None => return Err(syntax(self.pos(), "unterminated group, expected '}'")),
                Some(Tok::Dot) => self.idx += 1,
                Some(Tok::LBrace) => {
                    let mut current = self.group()?;
                    let mut unioned = false;
                    while self.eat_keyword("UNION") {
                        let right = self.group()?;
                        current = GroupPattern::new(vec![PatternElement::Union(current, right)]);
                        unioned = true;
                    }
                    if unioned {
                        // `current` wraps the (left-nested) union in a one-element group.
                        elements.extend(current.elements);
                    } else {
                        elements.push(PatternElement::Group(current));
                    }
                }
                Some(Tok::Word(w)) if w.eq_ignore_ascii_case("FILTER") => {
                    self.idx += 1;
                    elements.push(self.filter()?);
                }
                Some(Tok::Word(w)) if w.eq_ignore_ascii_case("UNION") => {
                    return Err(syntax(self.pos(), "UNION must follow a braced group"));
                }
                _ => self.triples_block(&mut elements)?,
            }
        }
    }

    fn filter(&mut self) -> Result<PatternElement, QueryError> {
        if self.eat_keyword("NOT") {
            self.expect_keyword("EXISTS")?;
            return Ok(PatternElement::NotExists(self.group()?));
        }
        if self.peek_keyword("EXISTS") {
            return Err(unsupported(self.pos(), "FILTER EXISTS"));
        }
        self.expect(Tok::LParen, "'(' after FILTER")?;
        let lhs = self.operand()?;
        let pos = self.pos();
        let op = match self.next() {
            Some(Tok::Eq) => CompareOp::Eq,
            Some(Tok::Ne) => CompareOp::Ne,
            Some(Tok::Other(c)) if matches!(c, '<' | '>' | '&' | '|') => {
                return Err(unsupported(pos, format!("filter operator {c}")))
            }
            _ => return Err(syntax(pos, "expected '=' or '!=' in FILTER")),
        };
        let rhs = self.operand()?;
        self.expect(Tok::RParen, "')' closing FILTER")?;
        Ok(PatternElement::Compare(Comparison { lhs, op, rhs }))
    }

    fn operand(&mut self) -> Result<TermPattern, QueryError> {
        let pos = self.pos();
        match self.peek() {
            Some(Tok::Var(_)) | Some(Tok::IriRef(_)) | Some(Tok::PName(..)) | Some(Tok::Str(_)) => {
                self.term_pattern(Position::Object)
            }
            Some(Tok::Word(w)) => Err(unsupported(pos, format!("function {}", w.to_ascii_uppercase()))),
            _ => Err(syntax(pos, "expected variable, IRI or literal in FILTER")),
        }
    }

    fn triples_block(&mut self, elements: &mut Vec<PatternElement>) -> Result<(), QueryError> {
        let subject = self.term_pattern(Position::Subject)?;
        loop {
            let predicate = self.term_pattern(Position::Predicate)?;
            loop {
                let object = self.term_pattern(Position::Object)?;
                elements.push(PatternElement::Triple(TriplePattern {
                    subject: subject.clone(),
                    predicate: predicate.clone(),
                    object,
                }));
                if self.peek() == Some(&Tok::Comma) {
                    self.idx += 1;
                } else {
                    break;
                }
            }
            if self.peek() == Some(&Tok::Semicolon) {
                self.idx += 1;
                // Permit a dangling ';' before '.' or '}'.
                if matches!(self.peek(), Some(Tok::Dot) | Some(Tok::RBrace)) {
                    break;
                }
            } else {
                break;
            }
        }
        match self.peek() {
            Some(Tok::Dot) => {
                self.idx += 1;
                Ok(())
            }
            Some(Tok::RBrace) | Some(Tok::LBrace) => Ok(()),
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("FILTER") => Ok(()),
            _ => Err(syntax(self.pos(), "expected '.' after triple pattern")),
        }
    }

    fn term_pattern(&mut self, position: Position) -> Result<TermPattern, QueryError> {
        let pos = self.pos();
        let Some(tok) = self.next() else {
            return Err(syntax(pos, "unexpected end of query"));
        };
        let pattern = match tok {
            Tok::Var(name) => TermPattern::Var(Variable::new(name)),
            Tok::IriRef(iri) => TermPattern::Term(Term::Iri(self.iri(&iri, pos)?)),
            Tok::PName(prefix, local) => {
                TermPattern::Term(Term::Iri(self.prefixed(&prefix, &local, pos)?))
            }
            Tok::Word(w) if w == "a" && position == Position::Predicate => {
                TermPattern::Term(Term::Iri(Iri::new(vocab::RDF_TYPE).expect("valid IRI")))
            }
            Tok::Str(lexical) => {
                if position != Position::Object {
                    return Err(syntax(pos, "literal not allowed in subject or predicate position"));
                }
                let literal = if self.peek() == Some(&Tok::DoubleCaret) {
                    self.idx += 1;
                    let dt_pos = self.pos();
                    let datatype = match self.next() {
                        Some(Tok::IriRef(iri)) => self.iri(&iri, dt_pos)?,
                        Some(Tok::PName(prefix, local)) => self.prefixed(&prefix, &local, dt_pos)?,
                        _ => return Err(syntax(dt_pos, "expected datatype IRI after '^^'")),
                    };
                    Literal::typed(lexical, datatype)
                } else {
                    Literal::plain(lexical)
                };
                TermPattern::Term(Term::Literal(literal))
            }
            Tok::Number(_) => return Err(unsupported(pos, "numeric literal")),
            Tok::Word(w) if w.eq_ignore_ascii_case("true") || w.eq_ignore_ascii_case("false") => {
                return Err(unsupported(pos, "boolean literal"))
            }
            Tok::Other('[') => return Err(unsupported(pos, "blank node")),
            Tok::Word(w) if w.starts_with('_') => return Err(unsupported(pos, "blank node")),
            Tok::Other('/' | '|' | '^' | '+' | '!') | Tok::Star if position == Position::Predicate => {
                return Err(unsupported(pos, "property path"))
            }
            Tok::LParen => return Err(unsupported(pos, "collection or expression")),
            _ => return Err(syntax(pos, format!("unexpected token in {position:?} position"))),
        };
        // Path operators after a predicate also belong to property paths.
        if position == Position::Predicate
            && matches!(
                self.peek(),
                Some(Tok::Other('/' | '|' | '^' | '+')) | Some(Tok::Star)
            )
        {
            return Err(unsupported(self.pos(), "property path"));
        }
        Ok(pattern)
    }

    fn iri(&self, value: &str, pos: usize) -> Result<Iri, QueryError> {
        Iri::new(value).map_err(|e| syntax(pos, e.to_string()))
    }

    fn prefixed(&self, prefix: &str, local: &str, pos: usize) -> Result<Iri, QueryError> {
        let Some(ns) = self.prefixes.get(prefix) else {
            return Err(syntax(pos, format!("undeclared prefix '{prefix}:'")));
        };
        self.iri(&format!("{}{}", ns.as_str(), local), pos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Position {
    Subject,
    Predicate,
    Object,
}
