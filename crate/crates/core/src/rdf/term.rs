use std::fmt;
use std::sync::Arc;

use super::RdfError;

/// An absolute IRI. Construction validates the scheme and rejects characters
/// that cannot appear inside an N-Triples `IRIREF`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Iri(Arc<str>);

impl Iri {
    pub fn new(value: impl AsRef<str>) -> Result<Self, RdfError> {
        let value = value.as_ref();
        if !has_scheme(value) {
            return Err(RdfError::InvalidIri {
                iri: value.to_owned(),
                reason: "not absolute (missing scheme)",
            });
        }
        if value.chars().any(forbidden_in_iri) {
            return Err(RdfError::InvalidIri {
                iri: value.to_owned(),
                reason: "contains a character not allowed in an IRI",
            });
        }
        Ok(Iri(Arc::from(value)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}>", self.0)
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Iri {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl TryFrom<&str> for Iri {
    type Error = RdfError;

    fn try_from(value: &str) -> Result<Self, Self::Error> {
        Iri::new(value)
    }
}

impl serde::Serialize for Iri {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> serde::Deserialize<'de> for Iri {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let value = String::deserialize(d)?;
        Iri::new(&value).map_err(serde::de::Error::custom)
    }
}

fn has_scheme(value: &str) -> bool {
    let Some((scheme, _)) = value.split_once(':') else {
        return false;
    };
    let mut chars = scheme.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
}

pub(crate) fn forbidden_in_iri(c: char) -> bool {
    c <= ' ' || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\')
}

/// A plain or datatyped literal. Language tags are not supported.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    lexical: Arc<str>,
    datatype: Option<Iri>,
}

impl Literal {
    pub fn plain(lexical: impl AsRef<str>) -> Self {
        Literal {
            lexical: Arc::from(lexical.as_ref()),
            datatype: None,
        }
    }

    pub fn typed(lexical: impl AsRef<str>, datatype: Iri) -> Self {
        Literal {
            lexical: Arc::from(lexical.as_ref()),
            datatype: Some(datatype),
        }
    }

    pub fn lexical(&self) -> &str {
        &self.lexical
    }

    pub fn datatype(&self) -> Option<&Iri> {
        self.datatype.as_ref()
    }
}

impl fmt::Debug for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.lexical)?;
        if let Some(dt) = &self.datatype {
            write!(f, "^^{dt:?}")?;
        }
        Ok(())
    }
}

/// A ground RDF term as it may appear in a stored triple.
///
/// Query variables live in [`crate::sparql::TermPattern`]; keeping them out of
/// this type means a stored graph can never contain one.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Iri(Iri),
    Literal(Literal),
}

impl Term {
    pub fn iri(value: impl AsRef<str>) -> Result<Self, RdfError> {
        Iri::new(value).map(Term::Iri)
    }

    pub fn literal(lexical: impl AsRef<str>) -> Self {
        Term::Literal(Literal::plain(lexical))
    }

    pub fn as_iri(&self) -> Option<&Iri> {
        match self {
            Term::Iri(iri) => Some(iri),
            Term::Literal(_) => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Term::Literal(lit) => Some(lit),
            Term::Iri(_) => None,
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(iri) => iri.fmt(f),
            Term::Literal(lit) => lit.fmt(f),
        }
    }
}

impl From<Iri> for Term {
    fn from(iri: Iri) -> Self {
        Term::Iri(iri)
    }
}

impl From<Literal> for Term {
    fn from(lit: Literal) -> Self {
        Term::Literal(lit)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: Iri,
    pub predicate: Iri,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: Iri, predicate: Iri, object: impl Into<Term>) -> Self {
        Triple {
            subject,
            predicate,
            object: object.into(),
        }
    }
}

impl fmt::Debug for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} {:?} {:?} .",
            self.subject, self.predicate, self.object
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_absolute_iris() {
        for ok in [
            "http://ex/r1",
            "urn:uuid:1234",
            "mailto:a@b.c",
            "tag:x+y.z-1:foo",
        ] {
            assert!(Iri::new(ok).is_ok(), "{ok}");
        }
    }

    #[test]
    fn rejects_relative_and_malformed_iris() {
        for bad in [
            "p",
            "/relative/path",
            ":nope",
            "1http://x",
            "http://ex/a b",
            "http://ex/<x>",
            "",
        ] {
            assert!(Iri::new(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn literal_equality_includes_datatype() {
        let xsd_int = Iri::new("http://www.w3.org/2001/XMLSchema#integer").unwrap();
        assert_ne!(Literal::plain("1"), Literal::typed("1", xsd_int.clone()));
        assert_eq!(Literal::typed("1", xsd_int.clone()), Literal::typed("1", xsd_int));
    }
}
