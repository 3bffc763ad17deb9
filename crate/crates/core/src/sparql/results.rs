use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};

use super::{Solution, Variable};
use crate::rdf::{Iri, Literal, Term};

/// Tabular query solutions. Rows are kept in a canonical sorted order so that
/// result documents are deterministic; an unbound cell is `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BindingTable {
    columns: Vec<Variable>,
    rows: Vec<Vec<Option<Term>>>,
}

impl BindingTable {
    pub fn new(columns: Vec<Variable>, mut rows: Vec<Vec<Option<Term>>>, distinct: bool) -> Self {
        rows.sort();
        if distinct {
            rows.dedup();
        }
        BindingTable { columns, rows }
    }

    pub fn from_solutions(columns: Vec<Variable>, solutions: &[Solution], distinct: bool) -> Self {
        let rows = solutions
            .iter()
            .map(|s| columns.iter().map(|c| s.get(c).cloned()).collect())
            .collect();
        Self::new(columns, rows, distinct)
    }

    pub fn columns(&self) -> &[Variable] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Option<Term>>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Values bound to `column`, one per row, skipping unbound cells.
    pub fn column_values(&self, column: &str) -> Vec<&Term> {
        let Some(idx) = self.columns.iter().position(|c| c.name() == column) else {
            return Vec::new();
        };
        self.rows.iter().filter_map(|r| r[idx].as_ref()).collect()
    }

    /// SPARQL-results-style JSON, compact and byte-stable.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("binding tables always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let vars = value["head"]["vars"]
            .as_array()
            .ok_or("missing head.vars")?
            .iter()
            .map(|v| v.as_str().map(Variable::new).ok_or("non-string variable name"))
            .collect::<Result<Vec<_>, _>>()?;
        let bindings = value["results"]["bindings"]
            .as_array()
            .ok_or("missing results.bindings")?;
        let mut rows = Vec::with_capacity(bindings.len());
        for binding in bindings {
            let mut row = Vec::with_capacity(vars.len());
            for var in &vars {
                let cell = match binding.get(var.name()) {
                    None => None,
                    Some(cell) => Some(term_from_json(cell)?),
                };
                row.push(cell);
            }
            rows.push(row);
        }
        Ok(BindingTable::new(vars, rows, false))
    }
}

fn term_from_json(cell: &serde_json::Value) -> Result<Term, String> {
    let value = cell["value"].as_str().ok_or("binding without value")?;
    match cell["type"].as_str() {
        Some("uri") => Iri::new(value).map(Term::Iri).map_err(|e| e.to_string()),
        Some("literal") => match cell.get("datatype").and_then(|d| d.as_str()) {
            Some(dt) => {
                let dt = Iri::new(dt).map_err(|e| e.to_string())?;
                Ok(Term::Literal(Literal::typed(value, dt)))
            }
            None => Ok(Term::literal(value)),
        },
        other => Err(format!("unsupported binding type {other:?}")),
    }
}

struct Head<'a>(&'a [Variable]);

impl Serialize for Head<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let names: Vec<&str> = self.0.iter().map(Variable::name).collect();
        let mut st = s.serialize_struct("head", 1)?;
        st.serialize_field("vars", &names)?;
        st.end()
    }
}

struct Bindings<'a>(&'a BindingTable);

impl Serialize for Bindings<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Row<'_>> = self
            .0
            .rows
            .iter()
            .map(|r| Row(&self.0.columns, r))
            .collect();
        let mut st = s.serialize_struct("results", 1)?;
        st.serialize_field("bindings", &rows)?;
        st.end()
    }
}

struct Row<'a>(&'a [Variable], &'a [Option<Term>]);

impl Serialize for Row<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let bound = self.1.iter().filter(|c| c.is_some()).count();
        let mut map = s.serialize_map(Some(bound))?;
        for (var, cell) in self.0.iter().zip(self.1) {
            if let Some(term) = cell {
                map.serialize_entry(var.name(), &Cell(term))?;
            }
        }
        map.end()
    }
}

struct Cell<'a>(&'a Term);

impl Serialize for Cell<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Term::Iri(iri) => {
                let mut st = s.serialize_struct("cell", 2)?;
                st.serialize_field("type", "uri")?;
                st.serialize_field("value", iri.as_str())?;
                st.end()
            }
            Term::Literal(lit) => {
                let mut st = s.serialize_struct("cell", 3)?;
                st.serialize_field("type", "literal")?;
                st.serialize_field("value", lit.lexical())?;
                if let Some(dt) = lit.datatype() {
                    st.serialize_field("datatype", dt.as_str())?;
                }
                st.end()
            }
        }
    }
}

impl Serialize for BindingTable {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("results", 2)?;
        st.serialize_field("head", &Head(&self.columns))?;
        st.serialize_field("results", &Bindings(self))?;
        st.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape_and_unbound_cells() {
        let table = BindingTable::new(
            vec![Variable::new("s"), Variable::new("o")],
            vec![
                vec![Some(Term::iri("http://ex/a").unwrap()), Some(Term::literal("x\"y"))],
                vec![Some(Term::iri("http://ex/b").unwrap()), None],
            ],
            false,
        );
        assert_eq!(
            table.to_json(),
            r#"{"head":{"vars":["s","o"]},"results":{"bindings":[{"s":{"type":"uri","value":"http://ex/a"},"o":{"type":"literal","value":"x\"y"}},{"s":{"type":"uri","value":"http://ex/b"}}]}}"#
        );
        assert_eq!(BindingTable::from_json(&table.to_json()).unwrap(), table);
    }

    #[test]
    fn typed_literal_round_trips() {
        let dt = Iri::new("http://www.w3.org/2001/XMLSchema#integer").unwrap();
        let table = BindingTable::new(
            vec![Variable::new("n")],
            vec![vec![Some(Term::Literal(Literal::typed("5", dt)))]],
            false,
        );
        assert!(table.to_json().contains(r#""datatype":"http://www.w3.org/2001/XMLSchema#integer""#));
        assert_eq!(BindingTable::from_json(&table.to_json()).unwrap(), table);
    }
}
